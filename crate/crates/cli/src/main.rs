use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use quadcorr::harness::{self, fit, report, verify, ExperimentSpec, Kind, RunOptions, CACHE_ENV};

#[derive(Parser)]
#[command(name = "quadcorr", version, about = "Shifted correlations of class numbers and representation numbers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Empirical sums against predicted main terms, one CSV row per (X, shift).
    Correlate(CorrelateArgs),
    /// Run the self-check suites and print a JSON summary.
    Verify {
        /// Only suites whose name contains this.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Fit log(empirical) against log(X) for each (kind, shift) in a CSV.
    FitExponent {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(clap::Args)]
struct CorrelateArgs {
    /// key = value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    /// Comma separated, `1e5` accepted.
    #[arg(long = "X")]
    x: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    pmax: Option<u64>,
    /// Forms for `rq`, e.g. `squares:3`, `diag:1,2`, `upper:2:1,1,3`.
    #[arg(long)]
    q1: Option<String>,
    #[arg(long)]
    q2: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to $QUADCORR_CACHE.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Write 0 in the seconds column so reruns are byte-identical.
    #[arg(long)]
    no_timings: bool,
}

fn correlate(args: CorrelateArgs) -> Result<()> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut map = harness::parse_config(&text)?;
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("kind", args.kind);
    set("X", args.x);
    set("l", args.l);
    set("pmax", args.pmax.map(|v| v.to_string()));
    set("q1", args.q1);
    set("q2", args.q2);
    set("out", args.out.map(|p| p.display().to_string()));
    set("cache", args.cache.map(|p| p.display().to_string()));
    set("threads", args.threads.map(|v| v.to_string()));
    if args.no_timings {
        map.insert("timings".into(), "false".into());
    }
    let (spec, opts): (ExperimentSpec, RunOptions) = harness::from_config(&map)?;
    if spec.kind == Kind::Rq && (spec.q1.is_none() || spec.q2.is_none()) {
        bail!("--kind rq needs --q1 and --q2");
    }
    if opts.cache.is_none() {
        eprintln!("no cache directory (--cache or ${CACHE_ENV}); tables are recomputed");
    }
    let rows = harness::cmd_correlate(&spec, &opts)?;
    eprintln!("{} rows written to {}", rows.len(), opts.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Correlate(args) => correlate(args).map(|_| true),
        Cmd::Verify { filter } => {
            let summary = verify::run(filter.as_deref(), &verify::VerifyConfig::default())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(summary.pass)
        }
        Cmd::FitExponent { input } => {
            let f = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let rows = report::read_rows(BufReader::new(f))?;
            let fits = fit::fit_rows(&rows)?;
            println!("{}", serde_json::to_string_pretty(&fits)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
