//! Config files, CSV output and run drivers.
//!
//! Each driver computes everything in memory first, then writes one run
//! directory (see [`output`]). Results depend only on the config, never on
//! the worker count, so reruns reproduce the output checksum exactly.

pub mod config;
pub mod oracle;
pub mod output;

use std::path::{Path, PathBuf};

use crate::analysis::{
    default_fit_window, fit_decay, lyapunov_window, tail_saturation, tail_saturation_values,
    DecayFit, FitWindow,
};
use crate::echo::{ensemble_echo, EchoSeries};
use crate::theory::{
    freeze_term, lyapunov_rate, predicted_echo, predicted_echo_raw, saturation_prediction,
    y_correlation_prediction, TheoryParams,
};

pub use config::{ConfigError, RateChoice, RunConfig};
pub use output::{FinishedRun, RunManifest};

/// Environment variable overriding the output root (default: current dir).
pub const OUTPUT_ROOT_ENV: &str = "DISPECHO_OUTPUT_ROOT";
/// Environment variable fixing the number of worker threads.
pub const WORKERS_ENV: &str = "DISPECHO_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Compute(#[from] crate::Error),
    #[error("{} check(s) failed", .0.len())]
    Oracle(Vec<String>),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 1 for config/input problems, 2 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Oracle(_) => 2,
            _ => 1,
        }
    }
}

/// Reads and parses a config file; I/O problems count as config errors.
pub fn load_config(path: &Path) -> Result<RunConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    Ok(RunConfig::parse(&text)?)
}

/// Completed run plus any invariant violations found in the data. The
/// outputs are kept either way; the CLI turns violations into exit code 2.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: FinishedRun,
    pub violations: Vec<String>,
}

fn theory_params(cfg: &RunConfig, k: f64, displacement: f64) -> TheoryParams {
    let grid = cfg.grid();
    TheoryParams::for_grid(grid, cfg.sigma.resolve(grid), displacement, k).with_alpha(cfg.alpha)
}

fn series_name(prefix: &str, k: f64, np: f64) -> String {
    format!("{prefix}_k{}_np{}.csv", output::label(k), output::label(np))
}

/// Fit in the configured window, or the default window when none is set.
fn primary_fit(cfg: &RunConfig, series: &EchoSeries) -> crate::Result<DecayFit> {
    let window = cfg.fit_window.unwrap_or_else(|| default_fit_window(series));
    fit_decay(series, window)
}

fn resolve_rate(choice: RateChoice, k: f64, fitted: Option<f64>) -> crate::Result<f64> {
    match (choice, fitted) {
        (RateChoice::Fixed(r), _) => Ok(r),
        (RateChoice::Fitted, Some(r)) => Ok(r),
        _ => lyapunov_rate(k),
    }
}

fn check_series(k: f64, s: &EchoSeries, out: &mut Vec<String>) {
    for v in s.invariant_violations(0) {
        out.push(format!("K={} NP/2pi={}: {v}", k, s.np_over_2pi()));
    }
}

const ECHO_COLUMNS: [&str; 8] = [
    "n",
    "mean_MD",
    "stderr_MD",
    "re_mean_I",
    "im_mean_I",
    "theory_decay",
    "theory_freeze",
    "mean_abs_I",
];

const FIT_COLUMNS: [&str; 11] = [
    "K",
    "NP_over_2pi",
    "method",
    "n_start",
    "n_end",
    "rate",
    "rate_stderr",
    "intercept",
    "residual",
    "touches_saturation",
    "ln_half_K",
];

fn fit_row(k: f64, np: f64, method: &str, fit: &DecayFit) -> crate::Result<Vec<String>> {
    use output::fmt_f64 as f;
    Ok(vec![
        output::label(k),
        output::label(np),
        method.to_string(),
        fit.window.start.to_string(),
        fit.window.end.to_string(),
        f(fit.rate),
        f(fit.rate_stderr),
        f(fit.intercept),
        f(fit.residual),
        fit.touches_saturation.to_string(),
        f(lyapunov_rate(k)?),
    ])
}

/// Data of an echo sweep, before anything is written.
#[derive(Debug, Clone)]
pub struct SweepData {
    pub kicks: Vec<f64>,
    /// `series[i][j]` belongs to `kicks[i]` and the `j`-th displacement.
    pub series: Vec<Vec<EchoSeries>>,
}

pub fn compute_sweep(cfg: &RunConfig) -> crate::Result<SweepData> {
    let series = cfg
        .kicks
        .iter()
        .map(|&k| ensemble_echo(&cfg.ensemble(k)))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(SweepData {
        kicks: cfg.kicks.clone(),
        series,
    })
}

/// One CSV per (K, P) plus `fits.csv`.
pub fn run_echo_sweep(cfg: &RunConfig, root: &Path) -> Result<RunOutcome, ExperimentError> {
    use output::fmt_f64 as f;
    let data = compute_sweep(cfg)?;
    let mut files = Vec::new();
    let mut fits = output::Csv::new(&FIT_COLUMNS);
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    for (&k, row) in data.kicks.iter().zip(&data.series) {
        for s in row {
            let np = s.np_over_2pi();
            check_series(k, s, &mut violations);
            let fit = primary_fit(cfg, s)?;
            fits.row(&fit_row(k, np, "window", &fit)?);
            if fit.touches_saturation && np != 0.0 {
                warnings.push(format!("K={k} NP/2pi={np}: fit window reaches the plateau"));
            }
            if let Some(w) = lyapunov_window(s) {
                fits.row(&fit_row(k, np, "lyapunov", &fit_decay(s, w)?)?);
            }

            let params = theory_params(cfg, k, s.displacement);
            let rate = resolve_rate(cfg.theory_rate, k, Some(fit.rate))?;
            let freeze = freeze_term(&params)?;
            let prefactor = (-params.p_sigma().powi(2) / 2.0).exp() * cfg.alpha;
            let mut csv = output::Csv::new(&ECHO_COLUMNS);
            for n in 0..s.len() {
                csv.row(&[
                    n.to_string(),
                    f(s.mean_md[n]),
                    f(s.stderr_md[n]),
                    f(s.mean_kernel[n].re),
                    f(s.mean_kernel[n].im),
                    f(prefactor * (-rate * n as f64).exp()),
                    f(freeze),
                    f(s.mean_abs_kernel[n]),
                ]);
            }
            files.push((series_name("echo", k, np), csv));
        }
    }
    files.push(("fits.csv".to_string(), fits));
    write_run(cfg, root, "echo-sweep", files, warnings, violations)
}

/// Default tail window: the last 60 % of the series.
pub fn default_tail_window(n_max: usize) -> FitWindow {
    FitWindow::new((2 * n_max).div_ceil(5).min(n_max - 1), n_max)
}

const SATURATION_COLUMNS: [&str; 8] = [
    "NP_over_2pi",
    "tail_mean",
    "tail_stderr",
    "theory",
    "abs_mean_I_tail",
    "mean_abs_I_tail",
    "y_theory",
    "still_decaying",
];

/// One row of a saturation scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationRow {
    pub np_over_2pi: f64,
    pub tail_mean: f64,
    pub tail_stderr: f64,
    pub theory: f64,
    /// Tail average of `|⟨I⟩|`.
    pub abs_mean_kernel: f64,
    /// Tail average of `⟨|I|⟩`.
    pub mean_abs_kernel: f64,
    pub y_theory: f64,
    pub still_decaying: bool,
}

/// Tail statistics of one series against the plateau predictions.
pub fn saturation_row(
    cfg: &RunConfig,
    k: f64,
    series: &EchoSeries,
    window: FitWindow,
) -> crate::Result<SaturationRow> {
    let tail = tail_saturation(series, window)?;
    let params = theory_params(cfg, k, series.displacement);
    let abs_mean: Vec<f64> = series.mean_kernel.iter().map(|c| c.norm()).collect();
    // per-point spread of |I| is unavailable; its error is not propagated
    let zeros = vec![0.0; series.len()];
    let abs_mean_kernel = tail_saturation_values(&abs_mean, &zeros, window)?.mean;
    let mean_abs_kernel = tail_saturation_values(&series.mean_abs_kernel, &zeros, window)?.mean;
    Ok(SaturationRow {
        np_over_2pi: series.np_over_2pi(),
        tail_mean: tail.mean,
        tail_stderr: tail.stderr,
        theory: saturation_prediction(&params)?,
        abs_mean_kernel,
        mean_abs_kernel,
        y_theory: y_correlation_prediction(&params)?,
        still_decaying: tail.still_decaying,
    })
}

/// Tail plateau per displacement; one CSV per K.
pub fn run_saturation_scan(cfg: &RunConfig, root: &Path) -> Result<RunOutcome, ExperimentError> {
    use output::fmt_f64 as f;
    let window = cfg
        .tail_window
        .unwrap_or_else(|| default_tail_window(cfg.n_max));
    let data = compute_sweep(cfg)?;
    let mut files = Vec::new();
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    for (&k, row) in data.kicks.iter().zip(&data.series) {
        let mut csv = output::Csv::new(&SATURATION_COLUMNS);
        for s in row {
            check_series(k, s, &mut violations);
            let r = saturation_row(cfg, k, s, window)?;
            if r.still_decaying {
                warnings.push(format!(
                    "K={k} NP/2pi={}: tail still decaying",
                    r.np_over_2pi
                ));
            }
            csv.row(&[
                output::label(r.np_over_2pi),
                f(r.tail_mean),
                f(r.tail_stderr),
                f(r.theory),
                f(r.abs_mean_kernel),
                f(r.mean_abs_kernel),
                f(r.y_theory),
                r.still_decaying.to_string(),
            ]);
        }
        files.push((format!("saturation_k{}.csv", output::label(k)), csv));
    }
    write_run(cfg, root, "saturation-scan", files, warnings, violations)
}

const THEORY_COLUMNS: [&str; 7] = [
    "n",
    "predicted_echo",
    "predicted_echo_raw",
    "freeze_term",
    "saturation",
    "y_correlation",
    "rate",
];

/// Closed-form curves only; no ensemble is run.
pub fn run_theory_curve(cfg: &RunConfig, root: &Path) -> Result<RunOutcome, ExperimentError> {
    use output::fmt_f64 as f;
    let mut files = Vec::new();
    for &k in &cfg.kicks {
        let rate = resolve_rate(cfg.theory_rate, k, None)?;
        for (&np, p) in cfg.np_over_2pi.iter().zip(cfg.displacements()) {
            let params = theory_params(cfg, k, p);
            let freeze = freeze_term(&params)?;
            let sat = saturation_prediction(&params)?;
            let y = y_correlation_prediction(&params)?;
            let mut csv = output::Csv::new(&THEORY_COLUMNS);
            for n in 0..=cfg.n_max {
                let t = n as f64;
                csv.row(&[
                    n.to_string(),
                    f(predicted_echo(&params, rate, t)?),
                    f(predicted_echo_raw(&params, rate, t)?),
                    f(freeze),
                    f(sat),
                    f(y),
                    f(rate),
                ]);
            }
            files.push((series_name("theory", k, np), csv));
        }
    }
    write_run(cfg, root, "theory-curve", files, Vec::new(), Vec::new())
}

fn write_run(
    cfg: &RunConfig,
    root: &Path,
    command: &str,
    files: Vec<(String, output::Csv)>,
    mut warnings: Vec<String>,
    violations: Vec<String>,
) -> Result<RunOutcome, ExperimentError> {
    let mut dir = output::RunDir::create(root, &cfg.tag)?;
    for (name, csv) in &files {
        dir.write_output(name, csv.as_str())?;
    }
    warnings.extend(
        violations
            .iter()
            .map(|v| format!("invariant violated: {v}")),
    );
    let run = dir.finish(command, cfg.seed, &cfg.source, warnings)?;
    Ok(RunOutcome { run, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const SMALL: &str = "\
[grid]
N = 256
[dynamics]
K = 10.09
[ensemble]
members = 8
n_max = 10
seed = 3
[displacements]
m = 0, 4
np_over_2pi = 0.5
[output]
tag = small
";

    fn cfg() -> RunConfig {
        RunConfig::parse(SMALL).unwrap()
    }

    #[test]
    fn sweep_writes_expected_files() {
        let root = tempfile::tempdir().unwrap();
        let out = run_echo_sweep(&cfg(), root.path()).unwrap();
        assert!(out.violations.is_empty(), "{:?}", out.violations);
        let mut names: Vec<String> = out
            .run
            .manifest
            .outputs
            .iter()
            .map(|o| o.name.clone())
            .collect();
        names.sort();
        assert_eq!(
            names,
            [
                "echo_k10.09_np0.5.csv",
                "echo_k10.09_np0.csv",
                "echo_k10.09_np4.csv",
                "fits.csv"
            ]
        );
        let zero = fs::read_to_string(out.run.dir.join("echo_k10.09_np0.csv")).unwrap();
        let mut lines = zero.lines();
        assert_eq!(lines.next().unwrap(), ECHO_COLUMNS.join(","));
        for line in lines {
            let md: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((md - 1.0).abs() < 1e-10);
        }
        assert!(!zero.contains('\r'));
        assert_eq!(zero.lines().count(), 12);
    }

    #[test]
    fn reruns_share_checksum() {
        let root = tempfile::tempdir().unwrap();
        let a = run_echo_sweep(&cfg(), root.path()).unwrap();
        let b = run_echo_sweep(&cfg(), root.path()).unwrap();
        assert_ne!(a.run.dir, b.run.dir);
        assert_eq!(a.run.checksum(), b.run.checksum());
    }

    #[test]
    fn saturation_scan_rows() {
        let root = tempfile::tempdir().unwrap();
        let out = run_saturation_scan(&cfg(), root.path()).unwrap();
        let text = fs::read_to_string(out.run.dir.join("saturation_k10.09.csv")).unwrap();
        let rows: Vec<Vec<&str>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0][0], "0");
        let tail0: f64 = rows[0][1].parse().unwrap();
        assert!((tail0 - 1.0).abs() < 1e-10);
        let theory_half: f64 = rows[2][3].parse().unwrap();
        assert!((theory_half - 0.4053).abs() < 0.01);
    }

    #[test]
    fn theory_curve_uses_lyapunov_rate_by_default() {
        let root = tempfile::tempdir().unwrap();
        let out = run_theory_curve(&cfg(), root.path()).unwrap();
        let text = fs::read_to_string(out.run.dir.join("theory_k10.09_np4.csv")).unwrap();
        let last = text.lines().last().unwrap();
        let rate: f64 = last.split(',').nth(6).unwrap().parse().unwrap();
        assert_eq!(rate, (10.09f64 / 2.0).ln());
    }

    #[test]
    fn default_tail_is_inside_series() {
        assert_eq!(default_tail_window(50), FitWindow::new(20, 50));
        assert_eq!(default_tail_window(1), FitWindow::new(0, 1));
    }

    #[test]
    fn exit_codes() {
        let cfg_err = ExperimentError::from(RunConfig::parse("[nope]").unwrap_err());
        assert_eq!(cfg_err.exit_code(), 1);
        assert_eq!(ExperimentError::Oracle(vec!["x".into()]).exit_code(), 2);
    }
}
