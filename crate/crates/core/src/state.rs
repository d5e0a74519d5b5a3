//! Torus phase space, wavefunctions on it, and the operations every other
//! module builds on.
//!
//! Positions and momenta both live on `[0, 2π)` with `N` lattice points and
//! an effective Planck constant `ħ = 2π/N`. States are stored in the position
//! basis; the momentum basis is reached through a unitary DFT.
//!
//! Displacements are momentum boosts `P` given in radians per lattice site:
//! `(D_P ψ)_l = exp(i P l) ψ_l`, so `P = m·2π/N` shifts momentum by exactly
//! `m` lattice quanta and the dimensionless product `P·L` is `N·P`.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Number of periodic images summed on each side when building a coherent state.
pub const IMAGE_WINDOW: i32 = 3;

/// Largest accepted wavepacket width, so that the packet fits on the torus.
pub const MAX_SIGMA: f64 = TAU / 8.0;

/// Discretisation of the unit torus with `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    /// Builds the lattice. `N` must be even: the split-step kinetic factor
    /// relies on the even-`N` quadratic Gauss sum.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidDimension(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Effective Planck constant `2π/N`.
    #[inline]
    pub fn h_eff(&self) -> f64 {
        TAU / self.n as f64
    }

    /// Position of lattice site `l`.
    #[inline]
    pub fn x(&self, l: usize) -> f64 {
        TAU * l as f64 / self.n as f64
    }

    /// Momentum of lattice site `m`.
    #[inline]
    pub fn p(&self, m: usize) -> f64 {
        TAU * m as f64 / self.n as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|l| self.x(l)).collect()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.p(m)).collect()
    }

    /// Default width `√ħ`: a symmetric minimal-uncertainty packet.
    pub fn default_sigma(&self) -> f64 {
        self.h_eff().sqrt()
    }

    /// Displacement that shifts momentum by `m` lattice quanta, `m·2π/N`.
    pub fn displacement_for(&self, m: f64) -> f64 {
        m * TAU / self.n as f64
    }
}

/// Centre and width of a Gaussian wavepacket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentParams {
    x0: f64,
    p0: f64,
    sigma: f64,
}

impl CoherentParams {
    /// Centres are reduced onto `[0, 2π)`; `sigma` must lie in `(0, 2π/8]`.
    pub fn new(x0: f64, p0: f64, sigma: f64) -> Result<Self> {
        if !x0.is_finite() || !p0.is_finite() {
            return Err(Error::InvalidCoherentParams(format!(
                "centre ({x0}, {p0}) is not finite"
            )));
        }
        if !(sigma > 0.0 && sigma <= MAX_SIGMA) {
            return Err(Error::InvalidCoherentParams(format!(
                "sigma = {sigma} outside (0, 2π/8]"
            )));
        }
        Ok(Self {
            x0: wrap_angle(x0),
            p0: wrap_angle(p0),
            sigma,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Reduces an angle onto `[0, 2π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A wavefunction in the position basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    grid: TorusGrid,
    amps: Vec<Complex64>,
}

/// Momentum-basis amplitudes, produced by [`to_momentum`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    grid: TorusGrid,
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// Wraps raw position amplitudes. The length must match the grid; the
    /// norm is left untouched (see [`QuantumState::normalized`]).
    pub fn from_amplitudes(grid: TorusGrid, amps: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, amps.len())?;
        Ok(Self { grid, amps })
    }

    /// Position eigenstate at site `l`.
    pub fn position_eigenstate(grid: TorusGrid, l: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.dim()];
        amps[l % grid.dim()] = Complex64::new(1.0, 0.0);
        Self { grid, amps }
    }

    /// Momentum eigenstate at site `m`, expressed in the position basis.
    pub fn momentum_eigenstate(grid: TorusGrid, m: usize) -> Self {
        let n = grid.dim();
        let scale = 1.0 / (n as f64).sqrt();
        let amps = (0..n)
            .map(|l| Complex64::from_polar(scale, TAU * ((m * l) % n) as f64 / n as f64))
            .collect();
        Self { grid, amps }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm. A zero vector is rejected.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize state with norm {norm}"
            )));
        }
        let inv = 1.0 / norm;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(self)
    }

    /// Multiplies every amplitude by the same unit phase.
    pub fn with_global_phase(mut self, phase: f64) -> Self {
        let c = Complex64::cis(phase);
        self.amps.iter_mut().for_each(|a| *a *= c);
        self
    }
}

impl MomentumState {
    pub fn from_amplitudes(grid: TorusGrid, amps: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, amps.len())?;
        Ok(Self { grid, amps })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn check_len(grid: &TorusGrid, len: usize) -> Result<()> {
    if len != grid.dim() {
        return Err(Error::LengthMismatch {
            expected: grid.dim(),
            found: len,
        });
    }
    Ok(())
}

/// Builds the periodised Gaussian wavepacket
///
/// `ψ(x_l) ∝ Σ_w exp[i (p0/ħ)(x_l + 2πw − x0) − (x_l + 2πw − x0)² / 2σ²]`
///
/// with `|w| ≤ IMAGE_WINDOW`, normalised on the lattice. The momentum phase
/// carries the `1/ħ` so that `p0` is a torus momentum in `[0, 2π)`.
pub fn coherent_state(grid: TorusGrid, params: &CoherentParams) -> QuantumState {
    // exp(-a) is exactly 0.0 in f64 for a > 745.2; such terms are skipped
    const UNDERFLOW: f64 = 746.0;
    let n = grid.dim();
    let k0 = params.p0 / grid.h_eff();
    let inv_two_var = 1.0 / (2.0 * params.sigma * params.sigma);
    let amps = (0..n)
        .map(|l| {
            let x = grid.x(l);
            (-IMAGE_WINDOW..=IMAGE_WINDOW)
                .filter_map(|w| {
                    let dx = x + TAU * w as f64 - params.x0;
                    let a = dx * dx * inv_two_var;
                    (a < UNDERFLOW).then(|| Complex64::from_polar((-a).exp(), k0 * dx))
                })
                .sum::<Complex64>()
        })
        .collect();
    QuantumState { grid, amps }
        .normalized()
        .expect("Gaussian with sigma > 0 has a non-zero lattice norm")
}

/// Forward/inverse FFT plans for dimension `n`, shared process-wide.
pub(crate) fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    type Plans = HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>;
    static PLANS: OnceLock<Mutex<(FftPlanner<f64>, Plans)>> = OnceLock::new();
    let mut guard = PLANS
        .get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())))
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    let (planner, plans) = &mut *guard;
    plans
        .entry(n)
        .or_insert_with(|| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
        .clone()
}

/// Unitary DFT `φ_m = N^{-1/2} Σ_l exp(−2πi m l / N) ψ_l`.
pub fn to_momentum(state: &QuantumState) -> MomentumState {
    let n = state.grid.dim();
    let (fwd, _) = plans(n);
    let mut amps = state.amps.clone();
    fwd.process(&mut amps);
    let scale = 1.0 / (n as f64).sqrt();
    amps.iter_mut().for_each(|a| *a *= scale);
    MomentumState {
        grid: state.grid,
        amps,
    }
}

/// Inverse of [`to_momentum`].
pub fn to_position(momentum: &MomentumState) -> QuantumState {
    let n = momentum.grid.dim();
    let (_, inv) = plans(n);
    let mut amps = momentum.amps.clone();
    inv.process(&mut amps);
    let scale = 1.0 / (n as f64).sqrt();
    amps.iter_mut().for_each(|a| *a *= scale);
    QuantumState {
        grid: momentum.grid,
        amps,
    }
}

/// Phase table `exp(i P l)` for `l = 0..N`.
pub fn displacement_phases(grid: TorusGrid, p: f64) -> Vec<Complex64> {
    (0..grid.dim())
        .map(|l| Complex64::cis(p * l as f64))
        .collect()
}

/// Applies the momentum boost `exp(i P x̂/ħ)`, i.e. multiplies site `l` by `exp(i P l)`.
pub fn displace(state: &QuantumState, p: f64) -> QuantumState {
    let mut out = state.clone();
    apply_phases(&mut out.amps, &displacement_phases(state.grid, p));
    out
}

#[inline]
pub(crate) fn apply_phases(amps: &mut [Complex64], phases: &[Complex64]) {
    debug_assert_eq!(amps.len(), phases.len());
    amps.iter_mut().zip(phases).for_each(|(a, ph)| *a *= ph);
}

/// `⟨a|b⟩ = Σ_l conj(a_l) b_l`.
pub fn inner_product(a: &QuantumState, b: &QuantumState) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch {
            left: a.grid.dim(),
            right: b.grid.dim(),
        });
    }
    Ok(dot(&a.amps, &b.amps))
}

#[inline]
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `|Δx|` on the circle, used by tests and diagnostics.
pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(grid: TorusGrid, seed: u64) -> QuantumState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..grid.dim())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        QuantumState::from_amplitudes(grid, amps)
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn grid_lattices() {
        let g = TorusGrid::new(8).unwrap();
        assert_abs_diff_eq!(g.x(3), 3.0 * PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.h_eff(), PI / 4.0, epsilon = 1e-15);

        let g2 = TorusGrid::new(2).unwrap();
        assert_eq!(g2.positions(), vec![0.0, PI]);
        assert_eq!(g2.momenta(), vec![0.0, PI]);
    }

    #[test]
    fn grid_rejects_odd_and_zero() {
        assert_eq!(TorusGrid::new(7), Err(Error::InvalidDimension(7)));
        assert_eq!(TorusGrid::new(0), Err(Error::InvalidDimension(0)));
        assert!(TorusGrid::new(1).is_err());
    }

    #[test]
    fn coherent_params_validation() {
        assert!(CoherentParams::new(0.0, 0.0, 0.0).is_err());
        assert!(CoherentParams::new(0.0, 0.0, -0.1).is_err());
        assert!(CoherentParams::new(0.0, 0.0, 1.0).is_err());
        assert!(CoherentParams::new(f64::NAN, 0.0, 0.1).is_err());
        let p = CoherentParams::new(-1.0, 7.0, 0.1).unwrap();
        assert!((0.0..TAU).contains(&p.x0()));
        assert_abs_diff_eq!(p.p0(), 7.0 - TAU, epsilon = 1e-15);
    }

    #[test]
    fn coherent_state_is_normalized_and_even() {
        let g = TorusGrid::new(256).unwrap();
        let params = CoherentParams::new(0.0, 0.0, g.default_sigma()).unwrap();
        let psi = coherent_state(g, &params);
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
        let a = psi.amplitudes();
        let peak = (0..256)
            .max_by(|&i, &j| a[i].norm().partial_cmp(&a[j].norm()).unwrap())
            .unwrap();
        assert_eq!(peak, 0);
        for l in 1..256 {
            assert_abs_diff_eq!(a[l].norm(), a[256 - l].norm(), epsilon = 1e-14);
        }
    }

    #[test]
    fn coherent_overlap_matches_continuum_gaussian() {
        let g = TorusGrid::new(256).unwrap();
        let sigma = g.default_sigma();
        let dx = 4.0 * sigma;
        let a = coherent_state(g, &CoherentParams::new(0.0, 0.0, sigma).unwrap());
        let b = coherent_state(g, &CoherentParams::new(dx, 0.0, sigma).unwrap());
        let overlap = inner_product(&a, &b).unwrap().norm();
        let expected = (-dx * dx / (4.0 * sigma * sigma)).exp();
        assert!(
            (overlap - expected).abs() < 1e-6,
            "overlap {overlap} vs {expected}"
        );
    }

    #[test]
    fn coherent_state_is_centred_in_momentum() {
        let g = TorusGrid::new(128).unwrap();
        let m0 = 37;
        let params = CoherentParams::new(1.0, g.p(m0), g.default_sigma()).unwrap();
        let phi = to_momentum(&coherent_state(g, &params));
        let a = phi.amplitudes();
        let peak = (0..128)
            .max_by(|&i, &j| a[i].norm().partial_cmp(&a[j].norm()).unwrap())
            .unwrap();
        assert_eq!(peak, m0);
    }

    #[test]
    fn delta_transforms_to_flat_momentum() {
        let g = TorusGrid::new(64).unwrap();
        let phi = to_momentum(&QuantumState::position_eigenstate(g, 0));
        for a in phi.amplitudes() {
            assert_abs_diff_eq!(a.norm(), 1.0 / 8.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn dft_round_trip_and_parseval() {
        let g = TorusGrid::new(96).unwrap();
        let psi = random_state(g, 3);
        let phi = to_momentum(&psi);
        assert_abs_diff_eq!(phi.norm(), psi.norm(), epsilon = 1e-12);
        let back = to_position(&phi);
        for (x, y) in back.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_sign_convention() {
        // exp(+2πi m0 l/N)/√N must land on momentum index m0
        let g = TorusGrid::new(32).unwrap();
        let phi = to_momentum(&QuantumState::momentum_eigenstate(g, 5));
        assert_abs_diff_eq!(phi.amplitudes()[5].norm(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn displacement_shifts_momentum_by_one_quantum() {
        let g = TorusGrid::new(32).unwrap();
        for m in [0, 5, 31] {
            let shifted = displace(
                &QuantumState::momentum_eigenstate(g, m),
                g.displacement_for(1.0),
            );
            let phi = to_momentum(&shifted);
            assert_abs_diff_eq!(phi.amplitudes()[(m + 1) % 32].norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_zero_is_identity_and_norm_preserving() {
        let g = TorusGrid::new(128).unwrap();
        let psi = random_state(g, 11);
        assert_eq!(displace(&psi, 0.0), psi);
        let d = displace(&psi, g.displacement_for(0.37));
        assert_abs_diff_eq!(d.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_product_basics() {
        let g = TorusGrid::new(16).unwrap();
        let psi = random_state(g, 5);
        let ipsi = psi.clone().with_global_phase(PI / 2.0);
        assert!((inner_product(&psi, &psi).unwrap() - 1.0).norm() < 1e-12);
        assert!((inner_product(&psi, &ipsi).unwrap() - Complex64::i()).norm() < 1e-12);

        let other = QuantumState::position_eigenstate(TorusGrid::new(8).unwrap(), 0);
        assert_eq!(
            inner_product(&psi, &other),
            Err(Error::GridMismatch { left: 16, right: 8 })
        );
    }

    #[test]
    fn from_amplitudes_checks_length() {
        let g = TorusGrid::new(8).unwrap();
        let err = QuantumState::from_amplitudes(g, vec![Complex64::new(1.0, 0.0); 6]);
        assert_eq!(
            err,
            Err(Error::LengthMismatch {
                expected: 8,
                found: 6
            })
        );
        assert!(MomentumState::from_amplitudes(g, vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn coherent_state_periodic_in_centre(
                x0 in 0.0..TAU, p0 in 0.0..TAU, shift_x in -2i32..=2, shift_p in -2i32..=2,
            ) {
                let g = TorusGrid::new(64).unwrap();
                let s = g.default_sigma();
                let a = coherent_state(g, &CoherentParams::new(x0, p0, s).unwrap());
                let b = coherent_state(
                    g,
                    &CoherentParams::new(x0 + TAU * shift_x as f64, p0 + TAU * shift_p as f64, s).unwrap(),
                );
                for (u, v) in a.amplitudes().iter().zip(b.amplitudes()) {
                    prop_assert!((u - v).norm() < 1e-12);
                }
                prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn displacements_compose(p1 in -3.0..3.0f64, p2 in -3.0..3.0f64, seed in 0u64..1000) {
                let g = TorusGrid::new(64).unwrap();
                let psi = random_state(g, seed);
                let twice = displace(&displace(&psi, p1), p2);
                let once = displace(&psi, p1 + p2);
                for (u, v) in twice.amplitudes().iter().zip(once.amplitudes()) {
                    prop_assert!((u - v).norm() < 1e-12);
                }
                prop_assert!((twice.norm() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn cauchy_schwarz(s1 in 0u64..1000, s2 in 0u64..1000) {
                let g = TorusGrid::new(32).unwrap();
                let ip = inner_product(&random_state(g, s1), &random_state(g, s2)).unwrap();
                prop_assert!(ip.norm() <= 1.0 + 1e-12);
            }
        }
    }
}
