//! `front-lab`: travelling waves, front simulations, level-set graphs,
//! blow-down analysis and Hopf-Lax evaluation from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use frontlab::Error;

#[derive(Parser)]
#[command(
    name = "front-lab",
    version,
    about = "Travelling fronts of reaction-diffusion equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal speed, tail rates and the 1D wave profile.
    Wave {
        #[arg(long)]
        config: PathBuf,
        /// Profile CSV (t, g, g').
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the explicit scheme and write numbered snapshots plus a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract level-set graphs from a simulation directory or a snapshot.
    Levelset {
        /// Directory written by `simulate` (time-graphs).
        #[arg(long, conflicts_with = "snapshot")]
        run: Option<PathBuf>,
        /// Single snapshot file (space-graph along `--axis`).
        #[arg(long, requires = "axis")]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        axis: Option<usize>,
        /// Levels; defaults to the run's configured levels, then 0.5.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, rescale along an ε ladder and compare with the Hopf-Lax limit.
    Blowdown {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hopf-Lax evaluation and characteristics.
    Hj {
        #[command(subcommand)]
        command: HjCommand,
    },
    /// Run the acceptance suite; prints a JSON report.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        suite: SuiteArg,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum HjCommand {
    /// Evaluate a representation formula at every row of a points file.
    Eval {
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        setup: HjSetup,
        /// CSV rows: `x..., t` (forward, backward), `x', x_n` (tw) or `x...` (support).
        #[arg(long)]
        points: PathBuf,
        /// Side of the boundary for `tw`: 1 or -1.
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        region: i32,
        /// Drift speed for `tw`; defaults to the minimal speed.
        #[arg(long)]
        kappa: Option<f64>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Follow the backward characteristic from `(x0, t0)` to the boundary.
    Characteristic {
        #[command(flatten)]
        setup: HjSetup,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p0: Vec<f64>,
        /// Value of the solution at the start point.
        #[arg(long)]
        value: f64,
    },
}

#[derive(Args)]
pub struct HjSetup {
    /// `planar:ξ1,ξ2`, `support:a,b;c,d` or `graph:PATH` (CSV from `levelset`).
    #[arg(long, allow_hyphen_values = true)]
    boundary: String,
    /// Take κ*, β₊, β₋ from this config's nonlinearity.
    #[arg(long, conflicts_with = "params")]
    config: Option<PathBuf>,
    /// Explicit `κ*,β₊,β₋`.
    #[arg(long, value_delimiter = ',')]
    params: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Forward,
    Backward,
    Tw,
    Support,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Quick,
    Full,
}

/// Usage and configuration problems exit with 2; everything else with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Io(_)
        | Error::InvalidSpec(_)
        | Error::InvalidGrid(_)
        | Error::UnsupportedDimension(_)
        | Error::Cfl { .. }
        | Error::Invalid(_) => 2,
        _ => 1,
    }
}

fn init_workers() -> frontlab::Result<()> {
    match std::env::var("FRONTLAB_WORKERS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| {
                Error::Invalid(format!(
                    "FRONTLAB_WORKERS must be a positive integer, got '{v}'"
                ))
            })?;
            frontlab::rd_solver::init_global_workers(n)
        }
        Err(_) => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = init_workers().and_then(|()| match cli.command {
        Command::Wave { config, out } => commands::wave(&config, out.as_deref()),
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Levelset {
            run,
            snapshot,
            axis,
            lambda,
            out,
        } => match (run, snapshot, axis) {
            (Some(run), None, _) => commands::levelset_run(&run, &lambda, &out),
            (None, Some(snap), Some(axis)) => {
                commands::levelset_snapshot(&snap, axis, &lambda, &out)
            }
            _ => Err(Error::Invalid(
                "give either --run or --snapshot with --axis".into(),
            )),
        },
        Command::Blowdown { config, out } => commands::blowdown(&config, &out),
        Command::Hj { command } => match command {
            HjCommand::Eval {
                mode,
                setup,
                points,
                region,
                kappa,
                out,
            } => {
                let mode = match mode {
                    Mode::Forward => commands::EvalMode::Forward,
                    Mode::Backward => commands::EvalMode::Backward,
                    Mode::Tw => commands::EvalMode::Tw { region, kappa },
                    Mode::Support => commands::EvalMode::Support,
                };
                commands::hj_eval(mode, &setup, &points, out.as_deref())
            }
            HjCommand::Characteristic {
                setup,
                x0,
                t0,
                p0,
                value,
            } => commands::hj_characteristic(&setup, &x0, t0, &p0, value),
        },
        Command::Verify { suite, out } => {
            let suite = match suite {
                SuiteArg::Quick => frontlab::verify::Suite::Quick,
                SuiteArg::Full => frontlab::verify::Suite::Full,
            };
            commands::verify(suite, out.as_deref())
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
