//! Command-line front end. Exit codes: 0 pass, 1 verdict fail, 2 config
//! error, 3 numerical failure.

use anyhow::Context;
use chemoflow::harness::mms::{mms_convergence, MmsSuite};
use chemoflow::harness::oracle::uniform_equivalence_test;
use chemoflow::harness::output::write_json;
use chemoflow::harness::stabilize::{stabilization_experiment, Case};
use chemoflow::harness::sweep::eps_consistency_sweep;
use chemoflow::harness::{run_scenario, HarnessError, RunOptions, RunStatus, Scenario, ScenarioConfig};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chemoflow", version, about = "Two-species chemotaxis-fluid simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory for diagnostics.csv, summary.json and snapshots.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write field snapshots at every output time.
    #[arg(long, global = true)]
    snapshots: bool,
    /// Suppress progress lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Overrides of the form section.key=value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Compare a uniform scenario against the homogeneous ODE.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        dt_ode: f64,
        /// Largest acceptable relative deviation.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Manufactured-solution convergence study.
    Mms {
        /// diffusion, advection, chemotaxis, stokes, temporal, zero or all.
        suite: String,
    },
    /// Run one scenario across a decreasing list of eps.
    SweepEps {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Large-time experiment for the coexistence or exclusion case.
    Stabilize {
        case: String,
        /// Overrides of the form section.key=value.
        overrides: Vec<String>,
    },
    /// Parse a scenario and check its initial data without stepping.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

enum Failure {
    Verdict(String),
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Numerical(e.into())
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path, overrides)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Config)
}

fn save<T: serde::Serialize>(out: &Option<PathBuf>, name: &str, value: &T) -> Result<(), Failure> {
    if let Some(d) = out {
        std::fs::create_dir_all(d)
            .and_then(|_| write_json(&d.join(name), value))
            .with_context(|| format!("writing {}", d.join(name).display()))
            .map_err(Failure::Numerical)?;
    }
    Ok(())
}

fn verdict(ok: bool, what: &str) -> Result<(), Failure> {
    if ok {
        println!("PASS {what}");
        Ok(())
    } else {
        Err(Failure::Verdict(format!("FAIL {what}")))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let c = cli.common;
    let opts = RunOptions {
        out_dir: c.out.clone(),
        snapshots: c.snapshots,
        keep_frames: false,
        quiet: c.quiet,
    };
    match cli.command {
        Command::Run { config, set } => {
            let cfg = load(&config, &set)?;
            let out = run_scenario(&cfg, &opts)?;
            let s = &out.summary;
            println!("{}", serde_json::to_string_pretty(s).expect("summary serializes"));
            if !c.quiet {
                eprintln!("wall-clock {:.2} s", out.wall_seconds);
            }
            if s.status == RunStatus::BlowUp {
                return Err(Failure::Numerical(anyhow::anyhow!(
                    "numerical blow-up at t = {} (indicator above {:e})",
                    s.final_time,
                    cfg.run.blowup_ceiling
                )));
            }
            verdict(s.audit.passed(), "structural invariants held on every step")
        }
        Command::Oracle { config, dt_ode, tol } => {
            let cfg = load(&config, &[])?;
            let r = uniform_equivalence_test(&cfg, dt_ode)?;
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            save(&c.out, "oracle.json", &r)?;
            verdict(
                r.max_deviation <= tol && r.max_velocity <= 1e-12,
                &format!("deviation {:e} (tol {tol:e}), max|u| {:e}", r.max_deviation, r.max_velocity),
            )
        }
        Command::Mms { suite } => {
            let suites = if suite == "all" {
                MmsSuite::ALL.to_vec()
            } else {
                vec![suite.parse::<MmsSuite>().map_err(|e| Failure::Config(anyhow::anyhow!(e)))?]
            };
            let mut results = Vec::new();
            for s in suites {
                let r = mms_convergence(s)?;
                if r.levels.iter().all(|l| l.error == 0.0) {
                    println!("{s}: every level is exact");
                } else {
                    println!("{s}: observed order {:.3}", r.order);
                }
                for l in &r.levels {
                    println!("  cells {:>4}  dt {:<10.3e}  error {:.4e}", l.cells, l.dt, l.error);
                }
                results.push(r);
            }
            save(&c.out, "mms.json", &results)?;
            verdict(results.iter().all(|r| r.passed), "observed orders within bounds")
        }
        Command::SweepEps { config, eps } => {
            let cfg = load(&config, &[])?;
            let r = eps_consistency_sweep(&cfg, &eps, c.quiet)?;
            for p in &r.pairs {
                println!(
                    "eps {:e} vs {:e}: n1 {:.4e}  n2 {:.4e}  c {:.4e}  u {:.4e}",
                    p.eps_a, p.eps_b, p.distance[0], p.distance[1], p.distance[2], p.distance[3]
                );
            }
            save(&c.out, "sweep.json", &r)?;
            if let Some(why) = &r.aborted {
                return Err(Failure::Numerical(anyhow::anyhow!("sweep aborted: {why}")));
            }
            verdict(r.is_cauchy(), "consecutive distances decrease for every field")
        }
        Command::Stabilize { case, overrides } => {
            let case: Case = case.parse().map_err(|e: String| Failure::Config(anyhow::anyhow!(e)))?;
            let (report, _) = stabilization_experiment(case, &overrides, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            save(&c.out, "stabilization.json", &report)?;
            if report.summary.status == RunStatus::BlowUp {
                return Err(Failure::Numerical(anyhow::anyhow!("numerical blow-up")));
            }
            verdict(report.passed, &format!("{case} limit reached: {}", report.reasons.join("; ")))
        }
        Command::Validate { config, set } => {
            let cfg = load(&config, &set)?;
            let scn = Scenario::new(&cfg).map_err(|e| Failure::Config(e.into()))?;
            println!(
                "valid: {} cells, regime {:?}, min n1 {:.4e}, min n2 {:.4e}, min c {:.4e}, max|u| {:.4e}, hash {}",
                scn.grid.n_cells(),
                scn.target.regime,
                scn.initial.n1.min(),
                scn.initial.n2.min(),
                scn.initial.c.min(),
                scn.initial.u.max_abs(),
                cfg.hash()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            println!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}
