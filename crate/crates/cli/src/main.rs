//! `ctmdp`: solve and verify truncated continuous-time MDPs from a JSON
//! experiment config.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 usage or parse
//! error, 3 numerical failure.

mod config;
mod tasks;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "ctmdp", version, about = "CTMDP solver and verifier")]
struct Args {
    /// Path to the JSON experiment config (see schema/config.schema.json).
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON result document here (see schema/result.schema.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count (default 1; deterministic).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config's stopping/check tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg: config::Config = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: config parse failed: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(threads) = args.threads {
        cfg.threads = Some(threads);
    }
    if let Some(tol) = args.tol {
        cfg.tol = Some(tol);
    }
    cfg.resolve_defaults();

    let doc = match tasks::run(&cfg) {
        Ok(doc) => doc,
        Err(e) => {
            eprintln!("numerical failure: {e}");
            return ExitCode::from(3);
        }
    };
    tasks::print_table(&doc);
    if let Some(out) = &args.out {
        let mut body = serde_json::to_string_pretty(&doc).expect("result serializes");
        body.push('\n');
        if let Err(e) = fs::write(out, body) {
            eprintln!("error: cannot write {}: {e}", out.display());
            return ExitCode::from(2);
        }
    }
    if doc.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
