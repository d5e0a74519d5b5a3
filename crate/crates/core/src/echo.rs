//! Displacement-echo kernels and their ensemble averages.
//!
//! For an initial state `ψ₀`, boost `D = exp(i P x̂/ħ)` and Floquet operator
//! `U`, the kernel and echo at kick `n` are
//!
//! ```text
//! I(n)   = ⟨ψ₀| D† U†ⁿ D Uⁿ |ψ₀⟩ = ⟨Uⁿ D ψ₀ | D Uⁿ ψ₀⟩
//! M_D(n) = |I(n)|²
//! ```
//!
//! Two running states are kept, so each kick costs two Floquet steps, one
//! diagonal phase and one inner product.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::floquet::{Direction, FloquetOperator, KickedRotatorParams};
use crate::state::{self, coherent_state, CoherentParams, QuantumState, TorusGrid};
use crate::{Error, Result};

/// Kernel and echo of a single initial state, indexed by kick `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEcho {
    pub kernel: Vec<Complex64>,
    pub echo: Vec<f64>,
}

/// Echo series for one initial state.
pub fn echo_series(
    psi0: &QuantumState,
    params: &KickedRotatorParams,
    displacement: f64,
    n_max: usize,
) -> Result<StateEcho> {
    if psi0.grid() != params.grid() {
        return Err(Error::GridMismatch {
            left: params.grid().dim(),
            right: psi0.grid().dim(),
        });
    }
    let op = FloquetOperator::cached(*params);
    let phases = state::displacement_phases(params.grid(), displacement);
    let mut buffers = EchoBuffers::new(&op);
    Ok(buffers.run(&op, psi0.amplitudes(), &phases, n_max))
}

/// Reusable buffers for repeated echo evaluations with one operator.
pub(crate) struct EchoBuffers {
    boosted_first: Vec<Complex64>,
    plain: Vec<Complex64>,
    boosted_last: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl EchoBuffers {
    pub(crate) fn new(op: &FloquetOperator) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let n = op.dim();
        Self {
            boosted_first: vec![zero; n],
            plain: vec![zero; n],
            boosted_last: vec![zero; n],
            scratch: op.make_scratch(),
        }
    }

    pub(crate) fn run(
        &mut self,
        op: &FloquetOperator,
        psi0: &[Complex64],
        phases: &[Complex64],
        n_max: usize,
    ) -> StateEcho {
        self.boosted_first.copy_from_slice(psi0);
        state::apply_phases(&mut self.boosted_first, phases);
        self.plain.copy_from_slice(psi0);

        let mut kernel = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            if n > 0 {
                op.apply_in_place(
                    &mut self.boosted_first,
                    Direction::Forward,
                    &mut self.scratch,
                );
                op.apply_in_place(&mut self.plain, Direction::Forward, &mut self.scratch);
            }
            self.boosted_last.copy_from_slice(&self.plain);
            state::apply_phases(&mut self.boosted_last, phases);
            kernel.push(state::dot(&self.boosted_first, &self.boosted_last));
        }
        let echo = kernel.iter().map(|i| i.norm_sqr()).collect();
        StateEcho { kernel, echo }
    }
}

/// How the wavepacket width is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// `σ = √(2π/N)`.
    Default,
    Explicit(f64),
}

impl SigmaPolicy {
    pub fn resolve(&self, grid: TorusGrid) -> f64 {
        match *self {
            SigmaPolicy::Default => grid.default_sigma(),
            SigmaPolicy::Explicit(s) => s,
        }
    }
}

/// One ensemble run: a set of displacements evaluated on the same members.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub dim: usize,
    pub k: f64,
    pub displacements: Vec<f64>,
    pub n_max: usize,
    pub ensemble_size: usize,
    pub sigma: SigmaPolicy,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.dim)?;
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidKick(self.k));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidArgument("ensemble_size must be >= 1".into()));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be >= 1".into()));
        }
        if let Some(p) = self.displacements.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "displacement {p} is not finite"
            )));
        }
        let grid = TorusGrid::new(self.dim)?;
        CoherentParams::new(0.0, 0.0, self.sigma.resolve(grid))?;
        Ok(())
    }
}

/// Phase-space centre of ensemble member `index`.
///
/// Each member draws from its own ChaCha8 stream (`stream = index`) of the
/// run seed, so a member's centre does not depend on the ensemble size.
pub fn member_center(seed: u64, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let x0 = rng.random::<f64>() * TAU;
    let p0 = rng.random::<f64>() * TAU;
    (x0, p0)
}

/// Ensemble-averaged echo for one displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSeries {
    pub displacement: f64,
    pub dim: usize,
    pub ensemble_size: usize,
    pub mean_md: Vec<f64>,
    /// Sample standard deviation over members divided by `√ensemble_size`.
    pub stderr_md: Vec<f64>,
    pub mean_kernel: Vec<Complex64>,
    /// Ensemble mean of `|I(n)|`.
    pub mean_abs_kernel: Vec<f64>,
}

impl EchoSeries {
    /// Rescaled displacement `N·P/2π`.
    pub fn np_over_2pi(&self) -> f64 {
        self.dim as f64 * self.displacement / TAU
    }

    pub fn len(&self) -> usize {
        self.mean_md.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_md.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.len().saturating_sub(1)
    }

    /// Reduces per-member results in index order.
    pub fn from_members(displacement: f64, dim: usize, members: &[&StateEcho]) -> Self {
        let m = members.len();
        let len = members.first().map_or(0, |s| s.echo.len());
        let inv = 1.0 / m as f64;
        let mut mean_md = vec![0.0; len];
        let mut mean_kernel = vec![Complex64::new(0.0, 0.0); len];
        let mut mean_abs_kernel = vec![0.0; len];
        for member in members {
            for n in 0..len {
                mean_md[n] += member.echo[n];
                mean_kernel[n] += member.kernel[n];
                mean_abs_kernel[n] += member.kernel[n].norm();
            }
        }
        mean_md.iter_mut().for_each(|v| *v *= inv);
        mean_kernel.iter_mut().for_each(|v| *v *= inv);
        mean_abs_kernel.iter_mut().for_each(|v| *v *= inv);

        let stderr_md = (0..len)
            .map(|n| {
                if m < 2 {
                    return 0.0;
                }
                let ss: f64 = members
                    .iter()
                    .map(|s| (s.echo[n] - mean_md[n]).powi(2))
                    .sum();
                (ss / (m - 1) as f64).sqrt() / (m as f64).sqrt()
            })
            .collect();

        Self {
            displacement,
            dim,
            ensemble_size: m,
            mean_md,
            stderr_md,
            mean_kernel,
            mean_abs_kernel,
        }
    }

    /// Checks the bounds every averaged series must satisfy and returns a
    /// description of each violation.
    ///
    /// * `mean_md[0] = 1`, `0 ≤ mean_md ≤ 1`, `|mean_kernel| ≤ 1`
    /// * `mean_md ≥ |mean_kernel|² − 3·stderr` (mean of `|I|²` dominates `|mean I|²`)
    /// * `mean_md ≥ 1/N − 3·stderr` from kick `floor_from` on, with the
    ///   standard error bounded below by `(1/N)/√members`
    pub fn invariant_violations(&self, floor_from: usize) -> Vec<String> {
        const TOL: f64 = 1e-10;
        let mut out = Vec::new();
        if let Some(&first) = self.mean_md.first() {
            if (first - 1.0).abs() > TOL {
                out.push(format!("mean_MD(0) = {first}, expected 1"));
            }
        }
        let floor = 1.0 / self.dim as f64;
        for n in 0..self.len() {
            let md = self.mean_md[n];
            let se = self.stderr_md[n];
            if !(-TOL..=1.0 + TOL).contains(&md) {
                out.push(format!("mean_MD({n}) = {md} outside [0, 1]"));
            }
            let ik = self.mean_kernel[n].norm();
            if ik > 1.0 + TOL {
                out.push(format!("|mean_I({n})| = {ik} > 1"));
            }
            if md < ik * ik - 3.0 * se - TOL {
                out.push(format!("mean_MD({n}) = {md} < |mean_I|² = {}", ik * ik));
            }
            // at the floor single-member echoes are roughly exponentially
            // distributed, so their spread is at least floor/√members
            let floor_se = se.max(floor / (self.ensemble_size as f64).sqrt());
            if n >= floor_from && md < floor - 3.0 * floor_se {
                out.push(format!("mean_MD({n}) = {md} below 1/N = {floor}"));
            }
        }
        out
    }
}

/// Runs the ensemble for every displacement in `config`.
///
/// Members are evaluated in parallel on the current rayon pool; per-member
/// results are buffered and reduced serially in index order, so the output
/// is bit-identical for a given seed and ensemble size regardless of the
/// number of worker threads.
pub fn ensemble_echo(config: &EnsembleConfig) -> Result<Vec<EchoSeries>> {
    config.validate()?;
    let grid = TorusGrid::new(config.dim)?;
    let params = KickedRotatorParams::new(grid, config.k)?;
    let op = FloquetOperator::cached(params);
    let sigma = config.sigma.resolve(grid);
    let phase_tables: Vec<Vec<Complex64>> = config
        .displacements
        .iter()
        .map(|&p| state::displacement_phases(grid, p))
        .collect();

    let per_member: Vec<Vec<StateEcho>> = (0..config.ensemble_size as u64)
        .into_par_iter()
        .map_init(
            || EchoBuffers::new(&op),
            |buffers, index| {
                let (x0, p0) = member_center(config.seed, index);
                let centre = CoherentParams::new(x0, p0, sigma).expect("validated sigma");
                let psi0 = coherent_state(grid, &centre);
                phase_tables
                    .iter()
                    .map(|phases| buffers.run(&op, psi0.amplitudes(), phases, config.n_max))
                    .collect()
            },
        )
        .collect();

    Ok(config
        .displacements
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let members: Vec<&StateEcho> = per_member.iter().map(|m| &m[j]).collect();
            EchoSeries::from_members(p, config.dim, &members)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::dense_floquet;

    fn params(n: usize, k: f64) -> KickedRotatorParams {
        KickedRotatorParams::new(TorusGrid::new(n).unwrap(), k).unwrap()
    }

    fn packet(grid: TorusGrid, x0: f64, p0: f64) -> QuantumState {
        coherent_state(
            grid,
            &CoherentParams::new(x0, p0, grid.default_sigma()).unwrap(),
        )
    }

    fn config(n: usize, k: f64, displacements: Vec<f64>, members: usize) -> EnsembleConfig {
        EnsembleConfig {
            dim: n,
            k,
            displacements,
            n_max: 8,
            ensemble_size: members,
            sigma: SigmaPolicy::Default,
            seed: 42,
        }
    }

    #[test]
    fn zero_displacement_gives_unit_echo() {
        let p = params(256, 10.09);
        let psi = packet(p.grid(), 1.3, 4.1);
        let s = echo_series(&psi, &p, 0.0, 20).unwrap();
        for (i, m) in s.kernel.iter().zip(&s.echo) {
            assert!((i - 1.0).norm() < 1e-10);
            assert!((m - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn first_point_is_one_for_any_displacement() {
        let p = params(128, 10.09);
        let psi = packet(p.grid(), 2.0, 0.5);
        for disp in [0.01, 0.3, 2.0, -7.5] {
            let s = echo_series(&psi, &p, disp, 1).unwrap();
            assert!((s.echo[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_matrix_powers() {
        let p = params(16, 10.09);
        let grid = p.grid();
        let disp = grid.displacement_for(3.0);
        let psi = packet(grid, 0.7, 3.3);
        let s = echo_series(&psi, &p, disp, 3).unwrap();

        let u = dense_floquet(&p).unwrap();
        let un = u.pow(3);
        let udn = un.adjoint();
        let d: Vec<Complex64> = (0..16).map(|l| Complex64::cis(disp * l as f64)).collect();
        // D† U†ⁿ D Uⁿ ψ₀
        let mut v = un.apply(psi.amplitudes());
        v.iter_mut().zip(&d).for_each(|(a, b)| *a *= b);
        let mut v = udn.apply(&v);
        v.iter_mut().zip(&d).for_each(|(a, b)| *a *= b.conj());
        let expected: Complex64 = psi
            .amplitudes()
            .iter()
            .zip(&v)
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!((s.kernel[3] - expected).norm() < 1e-10);
        assert!((s.echo[3] - expected.norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn invariant_under_global_phase_of_initial_state() {
        let p = params(128, 10.09);
        let psi = packet(p.grid(), 2.0, 1.0);
        let disp = p.grid().displacement_for(2.5);
        let a = echo_series(&psi, &p, disp, 10).unwrap();
        let b = echo_series(&psi.clone().with_global_phase(0.9), &p, disp, 10).unwrap();
        for (x, y) in a.echo.iter().zip(&b.echo) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_member_ensemble_equals_state_series() {
        let cfg = config(256, 10.09, vec![TAU * 3.0 / 256.0], 1);
        let series = ensemble_echo(&cfg).unwrap();
        let (x0, p0) = member_center(cfg.seed, 0);
        let p = params(256, 10.09);
        let s = echo_series(
            &packet(p.grid(), x0, p0),
            &p,
            cfg.displacements[0],
            cfg.n_max,
        )
        .unwrap();
        assert_eq!(series[0].mean_md, s.echo);
        assert_eq!(series[0].mean_kernel, s.kernel);
        assert!(series[0].stderr_md.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let cfg = config(512, 10.09, vec![0.0, TAU * 2.0 / 512.0], 24);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_echo(&cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a, run(3));
    }

    #[test]
    fn member_centres_do_not_depend_on_ensemble_size() {
        let a: Vec<_> = (0..5).map(|i| member_center(9, i)).collect();
        let b: Vec<_> = (0..50).map(|i| member_center(9, i)).collect();
        assert_eq!(a[..], b[..5]);
        assert_ne!(member_center(9, 0), member_center(10, 0));
        for (x, p) in b {
            assert!((0.0..TAU).contains(&x) && (0.0..TAU).contains(&p));
        }
    }

    #[test]
    fn series_respect_bounds() {
        let n = 256;
        let cfg = EnsembleConfig {
            n_max: 30,
            ..config(
                n,
                10.09,
                vec![0.0, TAU * 0.5 / n as f64, TAU * 4.0 / n as f64],
                32,
            )
        };
        for s in ensemble_echo(&cfg).unwrap() {
            let v = s.invariant_violations(15);
            assert!(v.is_empty(), "P={}: {v:?}", s.displacement);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ensemble_echo(&config(255, 1.0, vec![0.0], 1)).is_err());
        assert!(ensemble_echo(&config(256, 1.0, vec![0.0], 0)).is_err());
        assert!(ensemble_echo(&config(256, 1.0, vec![f64::NAN], 2)).is_err());
        assert!(ensemble_echo(&EnsembleConfig {
            n_max: 0,
            ..config(256, 1.0, vec![0.0], 2)
        })
        .is_err());
        let bad_sigma = EnsembleConfig {
            sigma: SigmaPolicy::Explicit(2.0),
            ..config(256, 1.0, vec![0.0], 2)
        };
        assert!(ensemble_echo(&bad_sigma).is_err());
    }

    #[test]
    fn stderr_is_sample_deviation_over_root_m() {
        let a = StateEcho {
            kernel: vec![Complex64::new(1.0, 0.0); 2],
            echo: vec![1.0, 0.2],
        };
        let b = StateEcho {
            kernel: vec![Complex64::new(1.0, 0.0); 2],
            echo: vec![1.0, 0.6],
        };
        let s = EchoSeries::from_members(0.1, 8, &[&a, &b]);
        assert!((s.mean_md[1] - 0.4).abs() < 1e-15);
        // sample sd = sqrt(0.08) ; / sqrt(2)
        assert!((s.stderr_md[1] - 0.2).abs() < 1e-12);
        assert_eq!(s.stderr_md[0], 0.0);
    }
}
