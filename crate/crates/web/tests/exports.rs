use quadcorr_web::{local_factors_json, sigma_inf_curve_json, split_scan_json};
use serde_json::Value;
use std::f64::consts::PI;

#[test]
fn curve_runs_between_the_two_limits() {
    let v: Value = serde_json::from_str(&sigma_inf_curve_json(1000.0, 1e-6, 1e6, 50).unwrap()).unwrap();
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 50);
    let first = pts[0]["sigma_inf"].as_f64().unwrap();
    let last = pts[49]["sigma_inf"].as_f64().unwrap();
    assert!((first - 4.0 * PI * PI / 3.0).abs() < 1e-4);
    assert!((last - 16.0 * PI * PI / 9.0).abs() < 1e-2);
    let ys: Vec<f64> = pts.iter().map(|p| p["sigma_inf"].as_f64().unwrap()).collect();
    assert!(ys.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(sigma_inf_curve_json(1.0, 2.0, 1.0, 10).is_err());
}

#[test]
fn scan_has_zero_rows_at_two_mod_four() {
    let v: Value = serde_json::from_str(&split_scan_json(5000, 8, 50).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 9);
    for r in rows {
        let l = r["l"].as_u64().unwrap();
        if l % 8 == 2 || l % 8 == 6 {
            assert_eq!(r["empirical"].as_f64(), Some(0.0));
            assert!(r["ratio"].is_null());
        } else {
            let ratio = r["ratio"].as_f64().unwrap();
            assert!((ratio - 1.0).abs() < 0.15, "l={l} ratio={ratio}");
        }
    }
    assert!(split_scan_json(10_000_000, 1, 50).is_err());
}

#[test]
fn factor_table_lists_every_prime() {
    let v: Value = serde_json::from_str(&local_factors_json("split", 1, 30).unwrap()).unwrap();
    let f = v["factors"].as_array().unwrap();
    assert_eq!(f.len(), 10);
    assert_eq!(f[0]["factor"], "3/32");
    assert_eq!(f[1]["factor"], "56/81");
    let product: f64 = f.iter().map(|r| r["value"].as_f64().unwrap()).product();
    assert!((product - v["product"].as_f64().unwrap()).abs() < 1e-12);
    assert!(local_factors_json("bogus", 1, 30).is_err());
    assert!(local_factors_json("r2", 0, 30).is_err());
}
