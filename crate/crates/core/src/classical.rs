//! Chirikov standard map and its largest Lyapunov exponent.
//!
//! Convention: `p' = p + K sin x`, `x' = x + p'`, both reduced mod 2π.
//! For large `K` the exponent approaches `ln(K/2)`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::state::wrap_angle;
use crate::{Error, Result};

/// Number of blocks used for the standard error of a Lyapunov estimate.
pub const LYAPUNOV_BLOCKS: usize = 100;

/// Default number of discarded transient steps.
pub const DEFAULT_TRANSIENT: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        Self {
            x: wrap_angle(x),
            p: wrap_angle(p),
        }
    }
}

/// One kick period of the standard map.
pub fn standard_map_step(pt: PhasePoint, k: f64) -> PhasePoint {
    let p = wrap_angle(pt.p + k * pt.x.sin());
    let x = wrap_angle(pt.x + p);
    PhasePoint { x, p }
}

/// Exact inverse of [`standard_map_step`].
pub fn standard_map_inverse(pt: PhasePoint, k: f64) -> PhasePoint {
    let x = wrap_angle(pt.x - pt.p);
    let p = wrap_angle(pt.p - k * x.sin());
    PhasePoint { x, p }
}

/// Jacobian `∂(x', p')/∂(x, p)` at `pt`, rows `[x', p']`.
pub fn jacobian(pt: PhasePoint, k: f64) -> [[f64; 2]; 2] {
    let c = k * pt.x.cos();
    [[1.0 + c, 1.0], [c, 1.0]]
}

/// Orbit plus unit tangent vector, advanced together.
#[derive(Debug, Clone, Copy)]
pub struct TangentOrbit {
    pub point: PhasePoint,
    pub tangent: [f64; 2],
}

impl TangentOrbit {
    pub fn new(point: PhasePoint) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            point,
            tangent: [s, s],
        }
    }

    /// Advances one step, renormalises the tangent vector and returns the
    /// log of its stretch factor.
    pub fn step(&mut self, k: f64) -> f64 {
        let [[a, b], [c, d]] = jacobian(self.point, k);
        let [u, v] = self.tangent;
        let (nu, nv) = (a * u + b * v, c * u + d * v);
        let len = nu.hypot(nv);
        self.tangent = [nu / len, nv / len];
        self.point = standard_map_step(self.point, k);
        len.ln()
    }
}

/// Largest Lyapunov exponent with its block standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    pub steps: usize,
}

/// Benettin estimate of the largest Lyapunov exponent.
///
/// The start point is drawn from `seed`; `n_transient` steps are discarded,
/// then `n_steps` log-stretch factors are averaged. The error bar comes from
/// the spread of [`LYAPUNOV_BLOCKS`] equal blocks.
pub fn benettin_lyapunov(
    k: f64,
    n_steps: usize,
    n_transient: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if !k.is_finite() {
        return Err(Error::InvalidKick(k));
    }
    if n_steps < LYAPUNOV_BLOCKS {
        return Err(Error::InvalidArgument(format!(
            "need at least {LYAPUNOV_BLOCKS} steps, got {n_steps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = PhasePoint::new(rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
    let mut orbit = TangentOrbit::new(start);
    for _ in 0..n_transient {
        orbit.step(k);
    }

    let block_len = n_steps / LYAPUNOV_BLOCKS;
    let steps = block_len * LYAPUNOV_BLOCKS;
    let blocks: Vec<f64> = (0..LYAPUNOV_BLOCKS)
        .map(|_| (0..block_len).map(|_| orbit.step(k)).sum::<f64>() / block_len as f64)
        .collect();
    let mean = blocks.iter().sum::<f64>() / LYAPUNOV_BLOCKS as f64;
    let var = blocks.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (LYAPUNOV_BLOCKS - 1) as f64;
    Ok(LyapunovEstimate {
        value: mean,
        stderr: (var / LYAPUNOV_BLOCKS as f64).sqrt(),
        steps,
    })
}
