//! `hwflow --config experiments/c05_density.toml`
//!
//! Exit codes: 0 all gates pass, 1 a gate failed (reports still written),
//! 2 config error, 3 runtime or i/o error.

mod config;
mod experiments;
mod report;

use clap::Parser;
use config::Config;
use experiments::{Ctx, RunError};
use report::{GateSettings, Judged, ManifestInfo};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(version, about = "Runs one experiment file and writes report.csv and manifest.json")]
struct Args {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the seed recorded in the config.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Replica threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long, env = "HWFLOW_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(RunError::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(args: &Args) -> Result<bool, RunError> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = Config::parse(&text)?;
    let gates = cfg.gates();
    gates.allow(&["sigma", "familywise", "enforce", "exact_tol", "identity_tol", "mass_tol", "rel_tol", "plateau_rel_tol"])?;
    let bool_key = |k: &str| match gates.table.get(k) {
        None => Ok(true),
        Some(v) => v.as_bool().ok_or_else(|| config::bad(&format!("gates.{k}"), "expected true or false")),
    };
    let settings = GateSettings { sigma: gates.f64("sigma", Some(3.0))?, familywise: bool_key("familywise")? };
    let enforce = bool_key("enforce")?;
    let seed = args.seed_override.unwrap_or(cfg.seed);
    let ctx = Ctx { cfg: &cfg, seed, run: cfg.run(), exact_tol: gates.f64("exact_tol", Some(1e-12))?, gates: gates.clone() };
    let out = hwflow::exec::with_threads(args.threads, || experiments::run(&ctx))?;

    let dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    std::fs::create_dir_all(&dir)?;
    let judged = Judged::new(out.rows, settings);
    let mut report = Vec::new();
    judged.write_csv(&mut report)?;
    std::fs::write(dir.join("report.csv"), report)?;
    let mut files = vec!["report.csv".to_string(), "manifest.json".to_string()];
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes)?;
        files.push(name.clone());
    }
    let mut table = cfg.table.clone();
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    let info = ManifestInfo {
        config: &table,
        name: &cfg.name,
        kind: &cfg.kind,
        seed,
        threads: args.threads,
        gates: settings,
        enforce,
        files: &files,
    };
    let manifest = serde_json::to_string_pretty(&report::manifest_json(&info, &judged)).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n")?;

    let failed = judged.failures();
    println!("{}: {} gates checked, {} failed; reports in {}", cfg.name, judged.gated(), failed.len(), dir.display());
    for f in &failed {
        println!("  FAIL {f}");
    }
    Ok(failed.is_empty() || !enforce)
}
