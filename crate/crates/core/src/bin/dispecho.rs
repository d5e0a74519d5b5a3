use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dispecho::classical::{benettin_lyapunov, DEFAULT_TRANSIENT};
use dispecho::experiment::oracle::{format_report, run_oracle_suite, OracleOptions};
use dispecho::experiment::output::{fmt_f64, Csv};
use dispecho::experiment::{
    load_config, run_echo_sweep, run_saturation_scan, run_theory_curve, ExperimentError, RunConfig,
    RunOutcome, OUTPUT_ROOT_ENV, WORKERS_ENV,
};
use dispecho::theory::lyapunov_rate;

/// Displacement echoes in the quantized kicked rotator.
#[derive(Debug, Parser)]
#[command(name = "dispecho", version)]
struct Cli {
    /// Directory under which `runs/` is created.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = ".")]
    output_root: PathBuf,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = WORKERS_ENV, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ensemble echo series, one CSV per (K, P), plus decay fits.
    EchoSweep { config: PathBuf },
    /// Long-time echo plateau against the freeze-term prediction.
    SaturationScan { config: PathBuf },
    /// Closed-form curves for the configured parameters.
    TheoryCurve { config: PathBuf },
    /// Benettin estimate of the standard-map Lyapunov exponent.
    Lyapunov {
        #[arg(long = "K")]
        k: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRANSIENT)]
        transient: usize,
    },
    /// Dense-matrix and unitarity self-checks.
    OracleSuite {
        /// Negative control: phase error per momentum index in the kinetic factor.
        #[arg(long, hide = true, default_value_t = 0.0)]
        corrupt_kinetic: f64,
    },
}

fn run_config(
    path: &Path,
    root: &Path,
    driver: fn(&RunConfig, &Path) -> Result<RunOutcome, ExperimentError>,
) -> Result<(), ExperimentError> {
    let cfg = load_config(path)?;
    let out = driver(&cfg, root)?;
    for w in &out.run.manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", out.run.dir.display());
    println!("checksum sha256:{}", out.run.checksum());
    if out.violations.is_empty() {
        Ok(())
    } else {
        Err(ExperimentError::Oracle(out.violations))
    }
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    let root = cli.output_root.as_path();
    match cli.command {
        Command::EchoSweep { config } => run_config(&config, root, run_echo_sweep),
        Command::SaturationScan { config } => run_config(&config, root, run_saturation_scan),
        Command::TheoryCurve { config } => run_config(&config, root, run_theory_curve),
        Command::Lyapunov {
            k,
            steps,
            seed,
            transient,
        } => {
            let est = benettin_lyapunov(k, steps, transient, seed)?;
            let mut csv = Csv::new(&["K", "steps", "seed", "estimate", "stderr", "ln_half_K"]);
            csv.row(&[
                format!("{k}"),
                est.steps.to_string(),
                seed.to_string(),
                fmt_f64(est.value),
                fmt_f64(est.stderr),
                fmt_f64(lyapunov_rate(k)?),
            ]);
            print!("{}", csv.as_str());
            Ok(())
        }
        Command::OracleSuite { corrupt_kinetic } => {
            let checks = run_oracle_suite(OracleOptions {
                kinetic_error: corrupt_kinetic,
            })?;
            print!("{}", format_report(&checks));
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| format!("{}: observed {} >= limit {}", c.name, c.observed, c.limit))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(ExperimentError::Oracle(failed))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the config-error status
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let ExperimentError::Oracle(items) = &e {
                for item in items {
                    eprintln!("  {item}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
