use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use krein_flow::point3d::{GreenState, PointConfig};
use krein_flow::scenario::{self, load_scenario, run_scenario, status_of};
use krein_flow::{Error, Result};

#[derive(Parser)]
#[command(name = "krein-flow", version, about = "Run nonlinear boundary-relation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory (default: out/<file stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a tolerance, e.g. --tol decay_rate=0.1.
        #[arg(long = "tol", value_parser = parse_tol)]
        tol: Vec<(String, f64)>,
    },
    /// Run every scenario in a directory.
    Suite {
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "tol", value_parser = parse_tol)]
        tol: Vec<(String, f64)>,
    },
    /// Sample a Green combination at probe points and write CSV.
    GreenEval {
        /// JSON file with `points`, `state` and `probes`.
        config: PathBuf,
        #[arg(long, default_value = "green_eval.csv")]
        out: PathBuf,
    },
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("bad value for {k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GreenEvalConfig {
    points: PointConfig,
    state: GreenState,
    probes: Vec<[f64; 3]>,
}

fn green_eval(config: &PathBuf, out: &PathBuf) -> Result<()> {
    let cfg: GreenEvalConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
    cfg.state.validate(cfg.points.len())?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["x", "y", "z", "value"])?;
    for x in &cfg.probes {
        let v = cfg.state.eval(&cfg.points, x)?;
        w.write_record([x[0], x[1], x[2], v].map(|c| format!("{c:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn code(status: i32) -> ExitCode {
    ExitCode::from(status as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            tol,
        } => {
            let out = out.unwrap_or_else(|| {
                PathBuf::from("out").join(scenario.file_stem().unwrap_or_default())
            });
            let result = load_scenario(&scenario).and_then(|mut s| {
                s.apply_overrides(seed, &tol)?;
                run_scenario(&s, &out)
            });
            match &result {
                Ok(r) => {
                    for c in &r.checks {
                        let tag = if c.pass { "pass" } else { "FAIL" };
                        println!("{tag} {:<32} {:.3e} (threshold {:.3e})", c.name, c.value, c.threshold);
                    }
                    println!("{} -> {} [{}]", r.name, out.display(), if r.pass { "pass" } else { "FAIL" });
                }
                Err(e) => eprintln!("error: {e}"),
            }
            code(status_of(&result))
        }
        Command::Suite { dir, out, seed, tol } => match scenario::run_suite(&dir, &out, seed, &tol) {
            Ok(entries) => {
                for e in &entries {
                    let tag = match e.status {
                        0 => "pass",
                        1 => "FAIL",
                        _ => "ERROR",
                    };
                    match &e.error {
                        Some(msg) => println!("{tag} {}: {msg}", e.file),
                        None => println!("{tag} {} {}", e.file, e.hash.as_deref().unwrap_or("")),
                    }
                }
                code(entries.iter().map(|e| e.status).max().unwrap_or(0))
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(2)
            }
        },
        Command::GreenEval { config, out } => match green_eval(&config, &out) {
            Ok(()) => code(0),
            Err(e @ Error::Tolerance { .. }) => {
                eprintln!("error: {e}");
                code(1)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(2)
            }
        },
    }
}
