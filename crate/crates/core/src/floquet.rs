//! Kicked-rotator Floquet propagation.
//!
//! The one-period propagator in the position basis is
//!
//! `U_{l,l'} = N^{-1/2} exp[iπ(l−l')²/N] · exp[−i (NK/2π) cos(2πl'/N)]`.
//!
//! For even `N` the kinetic kernel is circulant and, by the quadratic Gauss
//! sum, diagonal in momentum space with eigenvalues `e^{iπ/4} e^{−iπm²/N}`.
//! [`FloquetOperator`] applies `U` in `O(N log N)` as kick, FFT, kinetic
//! multiply, inverse FFT. [`dense_floquet`] builds the matrix entry by entry
//! and serves as the reference for small `N`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::Fft;

use crate::state::{self, QuantumState, TorusGrid};
use crate::{Error, Result};

/// Largest dimension for which [`dense_floquet`] will allocate a matrix.
pub const DENSE_MAX_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// Kicking strength on a given grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickedRotatorParams {
    grid: TorusGrid,
    k: f64,
}

impl KickedRotatorParams {
    /// `K` must be finite and non-negative (`K = 0` is the free rotor).
    pub fn new(grid: TorusGrid, k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidKick(k));
        }
        Ok(Self { grid, k })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// True in the regime where the classical map is fully chaotic.
    pub fn is_chaotic(&self) -> bool {
        self.k > 7.0
    }
}

/// Kick phase `exp[−i (NK/2π) cos(2πl/N)]`.
fn kick_phase(n: usize, k: f64, l: usize) -> Complex64 {
    let nk = n as f64 * k / TAU;
    Complex64::cis(-nk * (TAU * l as f64 / n as f64).cos())
}

/// `exp(iπ q / N)` with `q` reduced mod `2N` so large squares keep full precision.
fn quadratic_phase(n: usize, q: u64, sign: f64) -> Complex64 {
    let r = q % (2 * n as u64);
    Complex64::cis(sign * PI * r as f64 / n as f64)
}

/// Precomputed phase tables and FFT plans for one `(N, K)`.
///
/// Tables are immutable once built; a single operator can be shared across
/// threads, each thread bringing its own state buffer and scratch space.
pub struct FloquetOperator {
    params: KickedRotatorParams,
    kick: Vec<Complex64>,
    // e^{iπ/4} e^{−iπm²/N} / N: the 1/N completes the unnormalised FFT pair
    kinetic: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for FloquetOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FloquetOperator")
            .field("n", &self.params.grid.dim())
            .field("k", &self.params.k)
            .finish_non_exhaustive()
    }
}

impl FloquetOperator {
    pub fn new(params: KickedRotatorParams) -> Self {
        let n = params.grid.dim();
        let kick = (0..n).map(|l| kick_phase(n, params.k, l)).collect();
        let global = Complex64::cis(FRAC_PI_4) / n as f64;
        let kinetic = (0..n as u64)
            .map(|m| global * quadratic_phase(n, m * m, -1.0))
            .collect();
        let (fwd, inv) = state::plans(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            params,
            kick,
            kinetic,
            fwd,
            inv,
            scratch_len,
        }
    }

    /// Shared operator for `(N, K)`, built on first use. The cache is keyed
    /// by `N` and the exact bit pattern of `K`.
    pub fn cached(params: KickedRotatorParams) -> Arc<Self> {
        type Cache = HashMap<(usize, u64), Arc<FloquetOperator>>;
        static CACHE: OnceLock<Mutex<Cache>> = OnceLock::new();
        let key = (params.grid.dim(), params.k.to_bits());
        let mut cache = CACHE
            .get_or_init(Default::default)
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(Self::new(params)))
            .clone()
    }

    /// Drops the constant `e^{iπ/4}` from the kinetic factor. Echo quantities
    /// are unchanged because the phase cancels between `Uⁿ` and `U†ⁿ`.
    pub fn without_global_phase(mut self) -> Self {
        let undo = Complex64::cis(-FRAC_PI_4);
        self.kinetic.iter_mut().for_each(|c| *c *= undo);
        self
    }

    /// Multiplies kinetic entry `m` by `exp(i·delta·m)`. Only meant as a
    /// negative control for the oracle suite.
    #[doc(hidden)]
    pub fn with_kinetic_error(mut self, delta: f64) -> Self {
        self.kinetic
            .iter_mut()
            .enumerate()
            .for_each(|(m, c)| *c *= Complex64::cis(delta * m as f64));
        self
    }

    pub fn params(&self) -> KickedRotatorParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.params.grid.dim()
    }

    /// Scratch buffer large enough for [`FloquetOperator::apply_in_place`].
    pub fn make_scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }

    /// Applies `U` or `U†` to a raw amplitude slice of length `N`.
    pub fn apply_in_place(
        &self,
        amps: &mut [Complex64],
        direction: Direction,
        scratch: &mut [Complex64],
    ) {
        assert_eq!(amps.len(), self.dim(), "buffer length must equal N");
        match direction {
            Direction::Forward => {
                state::apply_phases(amps, &self.kick);
                self.fwd.process_with_scratch(amps, scratch);
                state::apply_phases(amps, &self.kinetic);
                self.inv.process_with_scratch(amps, scratch);
            }
            Direction::Adjoint => {
                self.fwd.process_with_scratch(amps, scratch);
                amps.iter_mut()
                    .zip(&self.kinetic)
                    .for_each(|(a, c)| *a *= c.conj());
                self.inv.process_with_scratch(amps, scratch);
                amps.iter_mut()
                    .zip(&self.kick)
                    .for_each(|(a, c)| *a *= c.conj());
            }
        }
    }

    /// One Floquet period applied to `state`.
    pub fn step(&self, state: &QuantumState, direction: Direction) -> Result<QuantumState> {
        self.evolve(state, 1, direction)
    }

    /// `n` repeated periods; `n = 0` returns a copy of the input.
    pub fn evolve(
        &self,
        state: &QuantumState,
        n: usize,
        direction: Direction,
    ) -> Result<QuantumState> {
        self.check_grid(state)?;
        let mut out = state.clone();
        let mut scratch = self.make_scratch();
        for _ in 0..n {
            self.apply_in_place(out.amplitudes_mut(), direction, &mut scratch);
        }
        Ok(out)
    }

    fn check_grid(&self, state: &QuantumState) -> Result<()> {
        if state.grid() != self.params.grid {
            return Err(Error::GridMismatch {
                left: self.dim(),
                right: state.grid().dim(),
            });
        }
        Ok(())
    }
}

/// One Floquet step using the shared operator for `params`.
pub fn floquet_step(
    state: &QuantumState,
    params: &KickedRotatorParams,
    direction: Direction,
) -> Result<QuantumState> {
    FloquetOperator::cached(*params).step(state, direction)
}

/// `n` Floquet steps using the shared operator for `params`.
pub fn evolve(
    state: &QuantumState,
    params: &KickedRotatorParams,
    n: usize,
    direction: Direction,
) -> Result<QuantumState> {
    FloquetOperator::cached(*params).evolve(state, n, direction)
}

/// Row-major complex square matrix, used for the dense reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        (0..n).for_each(|i| data[i * n + i] = Complex64::new(1.0, 0.0));
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                let row = &other.data[k * n..(k + 1) * n];
                for (j, b) in row.iter().enumerate() {
                    data[i * n + j] += a * b;
                }
            }
        }
        Self { n, data }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        Self { n, data }
    }

    pub fn pow(&self, exp: usize) -> Self {
        (0..exp).fold(Self::identity(self.n), |acc, _| self.matmul(&acc))
    }

    /// Largest entry of `|A − B|`.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Builds `U_{l,l'}` entry by entry.
pub fn dense_floquet(params: &KickedRotatorParams) -> Result<DenseMatrix> {
    let n = params.grid.dim();
    if n > DENSE_MAX_DIM {
        return Err(Error::DenseTooLarge(n));
    }
    let norm = 1.0 / (n as f64).sqrt();
    let mut data = Vec::with_capacity(n * n);
    for l in 0..n {
        for lp in 0..n {
            let d = l.abs_diff(lp) as u64;
            data.push(norm * quadratic_phase(n, d * d, 1.0) * kick_phase(n, params.k, lp));
        }
    }
    Ok(DenseMatrix { n, data })
}
