//! Decay rates and saturation plateaus extracted from echo series.

use crate::echo::EchoSeries;
use crate::{Error, Result};

/// Inclusive range of kicks `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitWindow {
    pub start: usize,
    pub end: usize,
}

impl FitWindow {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.start >= self.end || self.end >= len {
            return Err(Error::InvalidWindow {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }

    fn span(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Least-squares line through `(n, ln M_D(n))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Minus the fitted slope.
    pub rate: f64,
    pub intercept: f64,
    pub window: FitWindow,
    /// Standard error of `rate` propagated from per-point errors; zero when
    /// none were supplied.
    pub rate_stderr: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    /// Set when some point in the window is within a factor 5 of the plateau.
    pub touches_saturation: bool,
}

/// Plateau of a series over a tail window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSaturation {
    pub mean: f64,
    pub stderr: f64,
    /// Least-squares slope of the series over the window.
    pub slope: f64,
    /// Set when the tail still shows a clear downward trend.
    pub still_decaying: bool,
}

/// Ordinary least squares `y ≈ a + b·x`; returns `(a, b)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Fits an exponential decay to `values` over `window`.
///
/// `stderr`, when given, is propagated to `rate_stderr` through
/// `σ(ln M) = σ(M)/M`. `plateau`, when given, arms the saturation guard.
pub fn fit_decay_values(
    values: &[f64],
    stderr: Option<&[f64]>,
    window: FitWindow,
    plateau: Option<f64>,
) -> Result<DecayFit> {
    window.check(values.len())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in window.span() {
        let v = values[n];
        if !(v > 0.0) {
            return Err(Error::NonPositiveEcho { n, value: v });
        }
        xs.push(n as f64);
        ys.push(v.ln());
    }
    let (intercept, slope) = linear_fit(&xs, &ys);
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    let rate_stderr = stderr.map_or(0.0, |se| {
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        window
            .span()
            .zip(&xs)
            .map(|(n, x)| ((x - mx) / sxx * se[n] / values[n]).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    let touches_saturation = plateau.is_some_and(|p| window.span().any(|n| values[n] <= 5.0 * p));
    Ok(DecayFit {
        rate: -slope,
        intercept,
        window,
        rate_stderr,
        residual,
        touches_saturation,
    })
}

/// Fits the ensemble-mean echo over `window`, with the plateau estimated
/// from the last quarter of the series.
pub fn fit_decay(series: &EchoSeries, window: FitWindow) -> Result<DecayFit> {
    fit_decay_values(
        &series.mean_md,
        Some(&series.stderr_md),
        window,
        Some(plateau_estimate(series)),
    )
}

/// Mean of the last quarter (at least three points) of the series, bounded
/// below by `1/N`.
pub fn plateau_estimate(series: &EchoSeries) -> f64 {
    let len = series.len();
    let count = (len / 4).max(3).min(len);
    let tail = &series.mean_md[len - count..];
    let mean = tail.iter().sum::<f64>() / count as f64;
    mean.max(1.0 / series.dim as f64)
}

/// Last kick of the default decay window.
pub const DEFAULT_FIT_END: usize = 4;

/// Default decay window `[0, end]`.
///
/// `end` is the last kick, at most [`DEFAULT_FIT_END`], before the mean echo
/// first drops below ten times the plateau, and at least 1. The exact point
/// `M_D(0) = 1` anchors the fit: at strong kicking the echo reaches the
/// `1/N` floor within one or two kicks and would otherwise leave a single
/// usable point.
pub fn default_fit_window(series: &EchoSeries) -> FitWindow {
    let plateau = plateau_estimate(series);
    let limit = DEFAULT_FIT_END.min(series.n_max());
    let end = (1..=limit)
        .take_while(|&n| series.mean_md[n] >= 10.0 * plateau)
        .last()
        .unwrap_or(1);
    FitWindow::new(0, end)
}

/// Echo level below which the decay counts as under way.
pub const ONSET_LEVEL: f64 = 0.367_879_441_171_442_33;

/// Window covering only the established exponential regime: from the first
/// kick with `mean_MD ≤ 1/e` to the last consecutive kick still above ten
/// times the plateau. Returns `None` when fewer than two points qualify.
///
/// Small displacements need a few kicks of stretching before the boosted and
/// unboosted packets separate, so their echo starts late; the slope inside
/// this window is insensitive to that delay.
pub fn lyapunov_window(series: &EchoSeries) -> Option<FitWindow> {
    let plateau = plateau_estimate(series);
    let start = (1..series.len()).find(|&n| series.mean_md[n] <= ONSET_LEVEL)?;
    let end = (start..series.len())
        .take_while(|&n| series.mean_md[n] >= 10.0 * plateau)
        .last()?;
    (end > start).then(|| FitWindow::new(start, end))
}

/// Averages `values` over `window`; `stderr` holds per-point standard errors.
pub fn tail_saturation_values(
    values: &[f64],
    stderr: &[f64],
    window: FitWindow,
) -> Result<TailSaturation> {
    window.check(values.len())?;
    let count = window.span().count() as f64;
    let slice = &values[window.span()];
    let mean = slice.iter().sum::<f64>() / count;
    let se = (stderr[window.span()].iter().map(|s| s * s).sum::<f64>()).sqrt() / count;
    let xs: Vec<f64> = window.span().map(|n| n as f64).collect();
    let (_, slope) = linear_fit(&xs, slice);
    // total drift across the window against the noise level of a single point
    let drift = -slope * (window.end - window.start) as f64;
    let point_noise = stderr[window.span()].iter().sum::<f64>() / count;
    let still_decaying = drift > (3.0 * point_noise).max(0.1 * mean);
    Ok(TailSaturation {
        mean,
        stderr: se,
        slope,
        still_decaying,
    })
}

/// Plateau of the ensemble-mean echo over `window`.
pub fn tail_saturation(series: &EchoSeries, window: FitWindow) -> Result<TailSaturation> {
    tail_saturation_values(&series.mean_md, &series.stderr_md, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::TorusGrid;
    use crate::theory::{predicted_echo_raw, saturation_prediction, TheoryParams};
    use num_complex::Complex64;

    fn series(values: Vec<f64>, dim: usize) -> EchoSeries {
        let len = values.len();
        EchoSeries {
            displacement: 0.0,
            dim,
            ensemble_size: 1,
            stderr_md: vec![0.0; len],
            mean_kernel: vec![Complex64::new(0.0, 0.0); len],
            mean_abs_kernel: vec![0.0; len],
            mean_md: values,
        }
    }

    #[test]
    fn exact_exponential() {
        let s = series((0..20).map(|n| (-1.1 * n as f64).exp()).collect(), 1 << 20);
        let fit = fit_decay(&s, FitWindow::new(1, 4)).unwrap();
        assert!((fit.rate - 1.1).abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_rate_and_exact_plateau() {
        let s = series(vec![0.5; 12], 64);
        let fit = fit_decay(&s, FitWindow::new(1, 4)).unwrap();
        assert!(fit.rate.abs() < 1e-9);
        assert!(fit.touches_saturation);

        let s = series(vec![0.25; 60], 64);
        let t = tail_saturation(&s, FitWindow::new(20, 50)).unwrap();
        assert_eq!(t.mean, 0.25);
        assert!(!t.still_decaying);
    }

    #[test]
    fn invalid_windows() {
        let s = series(vec![1.0, 0.5, 0.25], 8);
        assert!(fit_decay(&s, FitWindow::new(2, 2)).is_err());
        assert!(fit_decay(&s, FitWindow::new(1, 3)).is_err());
        let z = series(vec![1.0, 0.0, 0.0], 8);
        assert_eq!(
            fit_decay(&z, FitWindow::new(1, 2)),
            Err(Error::NonPositiveEcho { n: 1, value: 0.0 })
        );
    }

    #[test]
    fn decaying_tail_is_flagged() {
        let s = series((0..60).map(|n| (-0.1 * n as f64).exp()).collect(), 1 << 20);
        assert!(
            tail_saturation(&s, FitWindow::new(20, 50))
                .unwrap()
                .still_decaying
        );
    }

    #[test]
    fn default_window_stops_before_plateau() {
        let dim = 1024;
        let s = series(
            (0..30)
                .map(|n| (-3.0 * n as f64).exp().max(1.0 / dim as f64))
                .collect(),
            dim,
        );
        // e^{-3} > 10/N > e^{-6}
        assert_eq!(default_fit_window(&s), FitWindow::new(0, 1));
        let fit = fit_decay(&s, default_fit_window(&s)).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-12);

        let slow = series((0..30).map(|n| (-0.2 * n as f64).exp()).collect(), 1 << 30);
        assert_eq!(default_fit_window(&slow), FitWindow::new(0, 4));

        let flat = series(vec![0.4; 30], 64);
        assert_eq!(default_fit_window(&flat), FitWindow::new(0, 1));
    }

    #[test]
    fn rate_error_propagation() {
        // two points: rate = ln(M0/M1), σ = sqrt((σ0/M0)² + (σ1/M1)²)
        let values = [0.5, 0.1];
        let se = [0.01, 0.004];
        let fit = fit_decay_values(&values, Some(&se), FitWindow::new(0, 1), None).unwrap();
        assert!((fit.rate - 5f64.ln()).abs() < 1e-14);
        let expected = (0.02f64.powi(2) + 0.04f64.powi(2)).sqrt();
        assert!((fit.rate_stderr - expected).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_theory_rate() {
        let g = TorusGrid::new(1 << 16).unwrap();
        // freeze term removed: P·L = 2π·3 makes g vanish
        let p = TheoryParams::for_grid(g, 0.0, g.displacement_for(3.0), 10.09);
        for rate in [0.7, 1.1, 2.5, 3.7] {
            let values: Vec<f64> = (0..10)
                .map(|n| predicted_echo_raw(&p, rate, n as f64).unwrap())
                .collect();
            let fit = fit_decay_values(&values, None, FitWindow::new(1, 6), None).unwrap();
            assert!((fit.rate - rate).abs() < 1e-6, "{rate}: {}", fit.rate);
        }
    }

    #[test]
    fn tail_of_theory_curve_is_saturation_value() {
        let g = TorusGrid::new(1024).unwrap();
        let rate = 1.1;
        for np in [0.25, 0.5, 0.75, 1.0, 1.5] {
            let p = TheoryParams::for_grid(g, g.default_sigma(), g.displacement_for(np), 10.09);
            let values: Vec<f64> = (0..80)
                .map(|n| crate::theory::predicted_echo(&p, rate, n as f64).unwrap())
                .collect();
            // start once e^{-λt} < 1e-8
            let start = (1e8f64.ln() / rate).ceil() as usize;
            let t =
                tail_saturation_values(&values, &vec![0.0; 80], FitWindow::new(start, 79)).unwrap();
            let expected = saturation_prediction(&p).unwrap();
            assert!(
                (t.mean - expected).abs() < 1e-6,
                "np={np}: {} vs {expected}",
                t.mean
            );
        }
    }

    #[test]
    fn lyapunov_window_skips_onset_and_plateau() {
        // flat for two kicks, then unit-rate decay onto a 1e-6 floor
        let floor = 1e-6;
        let values = (0..30)
            .map(|n| (1.5 * (-(n as f64 - 2.0)).exp()).min(1.0) + floor)
            .collect();
        let s = series(values, 1 << 20);
        let w = lyapunov_window(&s).unwrap();
        assert_eq!(w.start, 4);
        assert!(w.end >= 10 && w.end <= 14, "{w:?}");
        let fit = fit_decay(&s, w).unwrap();
        assert!((fit.rate - 1.0).abs() < 0.05, "{}", fit.rate);
        // the anchored default window sees the flat onset instead
        assert!(fit_decay(&s, default_fit_window(&s)).unwrap().rate < 0.9);
        assert!(lyapunov_window(&series(vec![0.5; 12], 64)).is_none());
    }
}
