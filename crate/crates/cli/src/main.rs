use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_crlb::experiments::{self, RunOptions, ScenarioConfig};
use ris_crlb::validation;
use ris_crlb::Error;

/// Position CRLB experiments for RIS-assisted mm-wave localization
#[derive(Parser, Debug)]
#[command(name = "ris-crlb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// GDM convergence traces, one row per iteration
    Convergence(Common),
    /// Seed-averaged optimized CRLB over slots, RIS size and SNR
    Sweep(Common),
    /// Seed-averaged optimized CRLB along MS x and y sweeps
    PositionSweep(Common),
    /// CRLB before and after optimization for a single realization
    Crlb {
        #[command(flatten)]
        common: Common,
        /// Alternate estimation and phase optimization instead of
        /// optimizing with known parameters
        #[arg(long)]
        alt_opt: bool,
    },
    /// Compare closed-form and finite-difference gradients on random instances
    GradCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON scenario config; defaults to the built-in scenario for the command
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of channel realizations per cell
    #[arg(long)]
    seeds: Option<usize>,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feed noiseless pilots to the estimator (--alt-opt only)
    #[arg(long)]
    no_noise: bool,
    /// Also write a matplotlib script next to the CSV (`<out>.py`)
    #[arg(long)]
    plot_script: bool,
    /// Fill the wall_ms column (output is then no longer reproducible)
    #[arg(long)]
    timing: bool,
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_config(
    common: &Common,
    default: fn() -> ScenarioConfig,
) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            ScenarioConfig::from_json(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(seeds) = common.seeds {
        cfg.seeds = seeds;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(common: &Common, rows: &[experiments::ResultRow]) -> Result<(), Failure> {
    match &common.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
            experiments::write_csv(rows, io::BufWriter::new(file))
                .map_err(|e| io_failure(path, e))?;
            if common.plot_script {
                let script = path.with_extension("py");
                fs::write(&script, experiments::plot_script(&path.to_string_lossy()))
                    .map_err(|e| io_failure(&script, e))?;
            }
            Ok(())
        }
        None if common.plot_script => Err(Failure::Config("--plot-script needs --out".into())),
        None => experiments::write_csv(rows, io::stdout().lock())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Convergence(common) => {
            let cfg = load_config(&common, ScenarioConfig::default_convergence)?;
            emit(
                &common,
                &experiments::run_convergence(
                    &cfg,
                    RunOptions {
                        timing: common.timing,
                    },
                )?,
            )
        }
        Command::Sweep(common) => {
            let cfg = load_config(&common, ScenarioConfig::default_sweep)?;
            emit(
                &common,
                &experiments::run_sweep(
                    &cfg,
                    RunOptions {
                        timing: common.timing,
                    },
                )?,
            )
        }
        Command::PositionSweep(common) => {
            let cfg = load_config(&common, ScenarioConfig::default_position)?;
            emit(
                &common,
                &experiments::run_position_sweep(
                    &cfg,
                    RunOptions {
                        timing: common.timing,
                    },
                )?,
            )
        }
        Command::Crlb { common, alt_opt } => {
            let cfg = load_config(&common, ScenarioConfig::default_convergence)?;
            let mut out = io::stdout().lock();
            let text = if alt_opt {
                let r = experiments::evaluate_alt_opt(&cfg, !common.no_noise)?;
                format!(
                    "initial_crlb={:.16e}\nfinal_crlb={:.16e}\nouter_iterations={}\nstatus={:?}\nestimate_error={:.16e}\n",
                    r.initial_crlb, r.final_crlb, r.outer_iterations, r.status, r.estimate_error
                )
            } else {
                let r = experiments::evaluate_crlb(&cfg)?;
                r.trace.check()?;
                format!(
                    "n={}\nslots={}\nsnr_db={}\ninitial_crlb={:.16e}\noptimized_crlb={:.16e}\niterations={}\nstatus={:?}\n",
                    r.n,
                    r.slots,
                    r.snr_db,
                    r.trace.initial_objective(),
                    r.trace.final_objective(),
                    r.trace.steps(),
                    r.trace.status
                )
            };
            out.write_all(text.as_bytes())
                .map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
        Command::GradCheck { instances, seed } => {
            let report = validation::gradient_check(instances, seed)?;
            println!(
                "instances={}\nmax_relative_error={:.3e}",
                report.instances, report.max_relative_error
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
