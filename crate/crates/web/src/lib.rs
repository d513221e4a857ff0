//! Browser demo. Each export returns a JSON string; the plain functions below
//! do the work so they can be tested natively.

use quadcorr::constants::archimedean::sigma_inf;
use quadcorr::harness::predict::{predict_nonsplit, predict_r2, predict_split, FactorCache};
use quadcorr::quadcount;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest X the page will sieve.
pub const MAX_X: u64 = 200_000;
pub const MAX_SHIFT: u64 = 240;
pub const MAX_PMAX: u64 = 400;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// `sigma_inf(X, l)` at `points` shifts spaced evenly in `log(l / X)`.
pub fn sigma_inf_curve_json(x: f64, ratio_min: f64, ratio_max: f64, points: u32) -> Result<String, String> {
    if !(x > 0.0) || !(ratio_min > 0.0) || !(ratio_max > ratio_min) || !(2..=2000).contains(&points) {
        return Err("need X > 0, 0 < min < max and 2..2000 points".into());
    }
    let (a, b) = (ratio_min.ln(), ratio_max.ln());
    let mut out = Vec::with_capacity(points as usize);
    for i in 0..points {
        let r = (a + (b - a) * i as f64 / (points - 1) as f64).exp();
        out.push(json!({ "ratio": r, "sigma_inf": sigma_inf(x, r * x).map_err(err)? }));
    }
    Ok(Value::Array(out).to_string())
}

/// Empirical split correlation against its prediction for `l = 0..=l_max`.
pub fn split_scan_json(x: u64, l_max: u64, pmax: u64) -> Result<String, String> {
    if x == 0 || x > MAX_X || l_max > MAX_SHIFT || !(2..=MAX_PMAX).contains(&pmax) {
        return Err(format!("need 1 <= X <= {MAX_X}, l <= {MAX_SHIFT}, 2 <= P <= {MAX_PMAX}"));
    }
    let shifts: Vec<u64> = (0..=l_max).collect();
    let emp = quadcount::empirical_d_many(x, &shifts).map_err(err)?;
    let mut cache = FactorCache::in_memory();
    let mut out = Vec::new();
    for (&l, &e) in shifts.iter().zip(&emp) {
        let p = predict_split(&mut cache, x, l, pmax).map_err(err)?;
        let ratio = (p.main != 0.0).then(|| e as f64 / p.main);
        out.push(json!({ "l": l, "empirical": e as f64, "predicted": p.main, "ratio": ratio }));
    }
    Ok(Value::Array(out).to_string())
}

/// Local factors of one singular series, exact and as floats.
pub fn local_factors_json(kind: &str, shift: u64, pmax: u64) -> Result<String, String> {
    if !(2..=MAX_PMAX).contains(&pmax) {
        return Err(format!("need 2 <= P <= {MAX_PMAX}"));
    }
    let mut cache = FactorCache::in_memory();
    // X only scales the archimedean part, which is not shown
    let pred = match kind {
        "split" => predict_split(&mut cache, 1000, shift, pmax),
        "nonsplit" => predict_nonsplit(&mut cache, 1000, shift, pmax),
        "r2" => predict_r2(&mut cache, 1000, shift, pmax),
        _ => return Err(format!("unknown kind '{kind}'")),
    }
    .map_err(err)?;
    let rows: Vec<Value> = pred
        .euler
        .factors
        .iter()
        .map(|(p, f)| {
            let v = match f.split_once('/') {
                Some((n, d)) => n.parse::<f64>().unwrap_or(f64::NAN) / d.parse::<f64>().unwrap_or(f64::NAN),
                None => f.parse::<f64>().unwrap_or(f64::NAN),
            };
            json!({ "p": p, "factor": f, "value": v })
        })
        .collect();
    Ok(json!({ "kind": kind, "shift": shift, "product": pred.euler.value, "tail_bound": pred.euler.tail_bound, "factors": rows }).to_string())
}

#[wasm_bindgen]
pub fn sigma_inf_curve(x: f64, ratio_min: f64, ratio_max: f64, points: u32) -> Result<String, JsValue> {
    sigma_inf_curve_json(x, ratio_min, ratio_max, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn split_scan(x: u32, l_max: u32, pmax: u32) -> Result<String, JsValue> {
    split_scan_json(x as u64, l_max as u64, pmax as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn local_factors(kind: &str, shift: u32, pmax: u32) -> Result<String, JsValue> {
    local_factors_json(kind, shift as u64, pmax as u64).map_err(|e| JsValue::from_str(&e))
}
