use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use revshare::economics::{self, Engine};
use revshare::output;
use revshare::stochastic;
use revshare::{fluid, plot, validate, Regime, Result, Scenario};

#[derive(Parser)]
#[command(name = "revshare", version, about = "Revenue-sharing P2P content distribution models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the resolved scenario as TOML to this file.
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Fluid,
    Stochastic,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the fluid model and write its trajectory.
    Fluid {
        #[command(flatten)]
        io: ScenarioArg,
    },
    /// Run stochastic replications and write one row per replication.
    Stoch {
        #[command(flatten)]
        io: ScenarioArg,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        /// Also write the event log of replication 0 here.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Grid search over the share fraction.
    Sweep {
        #[command(flatten)]
        io: ScenarioArg,
        #[arg(long, value_enum, default_value = "fluid")]
        engine: EngineArg,
        #[arg(long, default_value_t = 0.025)]
        step: f64,
        #[arg(long, default_value_t = 0.5)]
        max: f64,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Required with the stochastic engine.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Market-size scaling experiment; prints a table and writes CSV.
    Scale {
        #[command(flatten)]
        io: ScenarioArg,
        #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
        sizes: Vec<f64>,
        /// Comma-separated regime names, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        regimes: Vec<String>,
        #[arg(long, default_value_t = 0.025)]
        step: f64,
        #[arg(long, default_value_t = 0.5)]
        max: f64,
        /// Also run the stochastic engine with this many replications.
        #[arg(long, requires = "seed")]
        stoch_reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a trajectory or sweep CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Validate,
    /// Print the resolved scenario as TOML.
    DumpConfig {
        #[command(flatten)]
        io: ScenarioArg,
    },
}

enum Failure {
    Usage(String),
    Runtime(revshare::Error),
}

impl From<revshare::Error> for Failure {
    fn from(e: revshare::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(io: &ScenarioArg) -> Result<Scenario> {
    let sc = match &io.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(path) = &io.dump_config {
        output::write_atomic(path, sc.to_toml_string().as_bytes())?;
    }
    Ok(sc)
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => output::write_atomic(p, bytes),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn regimes(names: &[String]) -> Result<Vec<Regime>> {
    if names.iter().any(|n| n == "all") {
        return Ok(Regime::ALL.to_vec());
    }
    names.iter().map(|n| Regime::parse(n.trim())).collect()
}

fn execute(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Fluid { io } => {
            let sc = load(&io)?;
            let traj = fluid::run(&sc)?;
            emit(&io.out, &output::trajectory_csv(&traj)?)?;
        }
        Command::Stoch { io, reps, seed, event_log } => {
            let sc = load(&io)?;
            let run = stochastic::simulate_ensemble(&sc, sc.horizon, seed, reps)?;
            emit(&io.out, &output::ensemble_csv(&run)?)?;
            if let Some(path) = event_log {
                let (_, _, events) =
                    stochastic::simulate_once_logged(&sc, sc.horizon, stochastic::mix_seed(seed, 0))?;
                output::write_atomic(&path, &output::event_log_csv(&events)?)?;
            }
            let m = run.summary.net_revenue;
            eprintln!(
                "net revenue: mean {:.4}, std error {:.4} over {} replications (seed {seed})",
                m.mean,
                m.std_error(),
                m.count
            );
        }
        Command::Sweep { io, engine, step, max, reps, seed } => {
            let sc = load(&io)?;
            let engine = match (engine, seed) {
                (EngineArg::Fluid, _) => Engine::Fluid,
                (EngineArg::Stochastic, Some(seed)) => Engine::Stochastic { reps, seed },
                (EngineArg::Stochastic, None) => {
                    return Err(Failure::Usage("--seed is required with --engine stochastic".into()))
                }
            };
            let sweep = economics::sweep_delta(&sc, &economics::delta_grid(step, max)?, engine)?;
            emit(&io.out, &output::sweep_csv(&sweep)?)?;
            eprintln!(
                "best share fraction {} (net {:.4}, gain {:.4} over no sharing)",
                sweep.best_delta, sweep.best_net, sweep.gain_ratio
            );
        }
        Command::Scale { io, sizes, regimes: names, step, max, stoch_reps, seed } => {
            let sc = load(&io)?;
            let stoch = match (stoch_reps, seed) {
                (Some(reps), Some(seed)) => Some(Engine::Stochastic { reps, seed }),
                _ => None,
            };
            let grid = economics::delta_grid(step, max)?;
            let report = economics::scaling_experiment(&sc, &sizes, &regimes(&names)?, &grid, stoch)?;
            print!("{}", output::experiment_table(&report));
            if let Some(path) = &io.out {
                output::write_atomic(path, &output::experiment_csv(&report)?)?;
            }
        }
        Command::Plot { input, out } => {
            let svg = plot::plot_csv(&input)?;
            emit(&out, svg.as_bytes())?;
        }
        Command::Validate => {
            let checks = validate::run_all();
            for c in &checks {
                println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Failure::Runtime(revshare::Error::Domain(format!("{failed} check(s) failed"))));
            }
        }
        Command::DumpConfig { io } => {
            let sc = load(&io)?;
            emit(&io.out, sc.to_toml_string().as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
