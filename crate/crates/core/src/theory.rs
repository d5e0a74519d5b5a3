//! Closed-form predictions for the averaged displacement echo.
//!
//! ```text
//! ⟨M_D(t)⟩ = exp[−(Pσ)²/2] · (α e^{−λt} + g(PL)/(PL)²),   ⟨M_D⟩ ≥ 1/N
//! |Y|      ≃ exp[−(Pσ)²/4] · g^{1/2}(PL)/(PL)
//! ```
//!
//! with `g(z) = 4 sin²(z/2)` in one dimension and `g(z) = 4 J₁²(z)` in two.
//! On the torus `L = N` and `P` is measured per lattice site, so `PL = N·P`.
//! `σ` is the torus-position width of the wavepacket; the dimensionless
//! product entering the Gaussian prefactor is `P·σ/ħ` with `ħ = 2π/N`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use crate::state::TorusGrid;
use crate::{Error, Result};

/// Inputs to the closed-form curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub dim: usize,
    /// System length in lattice units; equals `dim` on the torus.
    pub length: f64,
    pub sigma: f64,
    pub displacement: f64,
    pub k: f64,
    pub alpha: f64,
    pub d: u32,
}

impl TheoryParams {
    /// One-dimensional parameters on `grid` with `L = N` and `α = 1`.
    pub fn for_grid(grid: TorusGrid, sigma: f64, displacement: f64, k: f64) -> Self {
        Self {
            dim: grid.dim(),
            length: grid.dim() as f64,
            sigma,
            displacement,
            k,
            alpha: 1.0,
            d: 1,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn with_dimension(self, d: u32) -> Self {
        Self { d, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        check_dimension(self.d)?;
        if self.dim == 0 {
            return Err(Error::InvalidArgument(
                "dimension N must be positive".into(),
            ));
        }
        for (name, v) in [
            ("L", self.length),
            ("sigma", self.sigma),
            ("P", self.displacement),
            ("K", self.k),
            ("alpha", self.alpha),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} is not finite"
                )));
            }
        }
        Ok(())
    }

    /// `|P|·L`.
    pub fn pl(&self) -> f64 {
        (self.displacement * self.length).abs()
    }

    /// `P·σ` in units where `ħ = 1`.
    pub fn p_sigma(&self) -> f64 {
        self.displacement * self.sigma * self.dim as f64 / TAU
    }

    /// `1/N`.
    pub fn floor(&self) -> f64 {
        1.0 / self.dim as f64
    }
}

fn check_dimension(d: u32) -> Result<()> {
    match d {
        1 | 2 => Ok(()),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

/// `λ = ln(K/2)`.
pub fn lyapunov_rate(k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidKick(k));
    }
    Ok((k / 2.0).ln())
}

/// Switch point between the power series and the Hankel expansion of `J₁`.
const J1_SERIES_LIMIT: f64 = 12.0;

/// Bessel function of the first kind, order one.
///
/// Power series below `|z| = 12`, Hankel asymptotic expansion above. Both
/// branches are accurate to about `1e-11` absolute.
pub fn bessel_j1(z: f64) -> f64 {
    let a = z.abs();
    let v = if a < J1_SERIES_LIMIT {
        j1_series(a)
    } else {
        j1_asymptotic(a)
    };
    if z < 0.0 {
        -v
    } else {
        v
    }
}

/// `J₁(z)/z`, finite at the origin (limit 1/2).
fn j1_over_z(z: f64) -> f64 {
    let a = z.abs();
    if a < J1_SERIES_LIMIT {
        j1_series_over_z(a)
    } else {
        j1_asymptotic(a) / a
    }
}

// Σ_k (−1)^k (z/2)^{2k} / (k!(k+1)!) / 2
fn j1_series_over_z(z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = 0.5;
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + 1.0));
        sum += term;
        if term.abs() <= f64::EPSILON * 1e-3 * sum.abs().max(1e-300) {
            break;
        }
        if k > 200.0 {
            break;
        }
    }
    sum
}

fn j1_series(z: f64) -> f64 {
    z * j1_series_over_z(z)
}

// J₁(z) ≈ √(2/πz) [P(z) cos χ − Q(z) sin χ], χ = z − 3π/4, μ = 4.
// Terms are summed until they stop decreasing.
fn j1_asymptotic(z: f64) -> f64 {
    let mu = 4.0;
    let eight_z = 8.0 * z;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        term *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * eight_z);
        if term.abs() >= last {
            break;
        }
        last = term.abs();
        // k odd → Q with sign (+,−,+,…); k even → P with sign (−,+,…)
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = z - 3.0 * FRAC_PI_4;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `g(z)`: `4 sin²(z/2)` for `d = 1`, `4 J₁²(z)` for `d = 2`.
pub fn g_function(d: u32, z: f64) -> Result<f64> {
    check_dimension(d)?;
    if !(z >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "g(z) needs z >= 0, got {z}"
        )));
    }
    Ok(match d {
        1 => 4.0 * (z / 2.0).sin().powi(2),
        _ => 4.0 * bessel_j1(z).powi(2),
    })
}

/// `g(z)/z²`, continuous through `z = 0` where it equals 1.
fn freeze_ratio(d: u32, z: f64) -> f64 {
    if d == 1 {
        let h = z / 2.0;
        if h == 0.0 {
            1.0
        } else {
            (h.sin() / h).powi(2)
        }
    } else {
        (2.0 * j1_over_z(z)).powi(2)
    }
}

/// `exp[−(Pσ)²/2] g(PL)/(PL)²`; equals 1 at `P = 0`.
pub fn freeze_term(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    Ok((-params.p_sigma().powi(2) / 2.0).exp() * freeze_ratio(params.d, params.pl()))
}

/// Raw closed-form echo `exp[−(Pσ)²/2](α e^{−λt} + g/(PL)²)` for a
/// caller-supplied decay rate. No floor or clamp is applied.
pub fn predicted_echo_raw(params: &TheoryParams, rate: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be >= 0, got {t}"
        )));
    }
    let prefactor = (-params.p_sigma().powi(2) / 2.0).exp();
    Ok(prefactor * (params.alpha * (-rate * t).exp() + freeze_ratio(params.d, params.pl())))
}

/// Closed-form echo clamped to `[1/N, 1]`.
///
/// With `α = 1` the raw value exceeds one at short times; the upper clamp
/// reflects `M_D(0) = 1`. Use [`predicted_echo_raw`] for the bare formula.
pub fn predicted_echo(params: &TheoryParams, rate: f64, t: f64) -> Result<f64> {
    let raw = predicted_echo_raw(params, rate, t)?;
    Ok(raw.clamp(params.floor(), 1.0))
}

/// Long-time plateau `max(freeze_term, 1/N)`.
pub fn saturation_prediction(params: &TheoryParams) -> Result<f64> {
    Ok(freeze_term(params)?.max(params.floor()))
}

/// `exp[−(Pσ)²/4] g^{1/2}(PL)/(PL)`; equals 1 at `P = 0`.
pub fn y_correlation_prediction(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    Ok((-params.p_sigma().powi(2) / 4.0).exp() * freeze_ratio(params.d, params.pl()).sqrt())
}
