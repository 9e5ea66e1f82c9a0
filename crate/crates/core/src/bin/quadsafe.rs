use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quadsafe::harness::{self, Metrics, RunOutput, ScenarioConfig};
use quadsafe::mpc::ControllerKind;
use quadsafe::Error;

#[derive(Parser)]
#[command(name = "quadsafe", version, about = "Safe quadrotor MPC simulations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario with one controller.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory for log.csv, outer.csv and metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate several controllers on one scenario and print a table.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated controllers (default: all five).
        #[arg(long, value_delimiter = ',')]
        controllers: Vec<ControllerKind>,
        /// One sub-directory per controller is written here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the barrier gain `p` or the decay rate `lambda`.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// One sub-directory per value is written here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    P,
    Lambda,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario TOML file, or the name of a bundled scenario
    /// (circle_two_cylinders, narrow_gap, hover).
    #[arg(long)]
    scenario: String,
    /// Overrides the controller of the scenario file.
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Barrier gain of the continuous chain
    #[arg(long)]
    p: Option<f64>,
    /// Discrete decay rate in (0, 1]
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the simulated duration, s.
    #[arg(long)]
    duration: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let path = Path::new(&self.scenario);
        let mut cfg = if !path.exists() && harness::scenario::bundled_scenario(&self.scenario).is_some() {
            harness::bundled(&self.scenario)?
        } else {
            harness::load_scenario(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(format!(
                    "{e} (bundled scenarios: {})",
                    harness::BUNDLED_SCENARIOS.join(", ")
                )),
                e => e,
            })?
        };
        if let Some(k) = self.controller {
            cfg.controller.kind = k;
        }
        if let Some(p) = self.p {
            cfg.controller.p = p;
        }
        if let Some(l) = self.lambda {
            cfg.controller.lambda = l;
        }
        if let Some(d) = self.duration {
            cfg.sim.duration_s = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SIM: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidScenario(_) | Error::Parse { .. } => EXIT_CONFIG,
                _ => EXIT_SIM,
            })
        }
    }
}

fn execute(cmd: Cmd) -> Result<ExitCode, Error> {
    let (runs, out, labels) = match cmd {
        Cmd::Run { scenario, out } => {
            let cfg = scenario.load()?;
            let label = cfg.controller.kind.to_string();
            (vec![cfg], out.map(|o| (o, false)), vec![label])
        }
        Cmd::Compare { scenario, controllers, out } => {
            let base = scenario.load()?;
            let kinds = if controllers.is_empty() { ControllerKind::ALL.to_vec() } else { controllers };
            let cfgs: Vec<_> = kinds
                .iter()
                .map(|k| {
                    let mut c = base.clone();
                    c.controller.kind = *k;
                    c
                })
                .collect();
            (cfgs, out.map(|o| (o, true)), kinds.iter().map(|k| k.to_string()).collect())
        }
        Cmd::Sweep { scenario, param, values, out } => {
            let base = scenario.load()?;
            let mut cfgs = Vec::new();
            let mut labels = Vec::new();
            for v in values {
                let mut c = base.clone();
                let name = match param {
                    SweepParam::P => {
                        c.controller.p = v;
                        "p"
                    }
                    SweepParam::Lambda => {
                        c.controller.lambda = v;
                        "lambda"
                    }
                };
                c.validate()?;
                labels.push(format!("{}_{name}_{v}", c.controller.kind));
                cfgs.push(c);
            }
            (cfgs, out.map(|o| (o, true)), labels)
        }
    };
    let results = harness::run_many(&runs)?;
    if let Some((dir, nested)) = out {
        for (r, label) in results.iter().zip(&labels) {
            let d = if nested { dir.join(label) } else { dir.clone() };
            r.write(&d)?;
        }
    }
    print_table(&results, &labels);
    let failed = results.iter().any(|r| !r.metrics.completed);
    Ok(if failed { ExitCode::from(EXIT_SIM) } else { ExitCode::SUCCESS })
}

fn print_table(results: &[RunOutput], labels: &[String]) {
    println!(
        "{:<28} {:>9} {:>12} {:>10} {:>10} {:>11} {:>10} {:>6} {:>4}",
        "run", "completed", "min_h", "clearance", "rms_err", "mean_solve", "max_solve", "gap", "inf"
    );
    for (r, label) in results.iter().zip(labels) {
        let m: &Metrics = &r.metrics;
        println!(
            "{:<28} {:>9} {:>12} {:>10} {:>10.4} {:>9.2}ms {:>8.2}ms {:>6} {:>4}",
            label,
            m.completed,
            m.min_h_all.map_or("-".into(), |h| format!("{h:.5e}")),
            m.min_clearance_m.map_or("-".into(), |c| format!("{c:.4}")),
            m.rms_position_error_m,
            m.mean_solve_time_s * 1e3,
            m.max_solve_time_s * 1e3,
            m.gap_passed,
            m.infeasible_count
        );
        if let Some(f) = &m.failure {
            println!("    failure: {f}");
        }
    }
}
