//! Self-checks run by `dispecho oracle-suite`: split-operator step against the
//! dense matrix, unitarity, and echo kernels against brute-force matrix powers.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::output::{fmt_f64, Csv};
use crate::echo::{echo_series, EchoBuffers};
use crate::floquet::{dense_floquet, DenseMatrix, Direction, FloquetOperator, KickedRotatorParams};
use crate::state::{self, coherent_state, CoherentParams, QuantumState, TorusGrid};
use crate::Result;

/// Element-wise tolerance for fast-vs-dense comparisons.
pub const DENSE_TOL: f64 = 1e-10;

/// Test hooks for the suite.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleOptions {
    /// Phase error per momentum index injected into the fast kinetic factor.
    /// Zero for a normal run; anything else must make the suite fail.
    pub kinetic_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub observed: f64,
    pub limit: f64,
}

impl OracleCheck {
    fn new(name: impl Into<String>, observed: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            limit,
        }
    }

    pub fn passed(&self) -> bool {
        self.observed < self.limit
    }
}

/// CSV report: `check,observed,limit,status`.
pub fn format_report(checks: &[OracleCheck]) -> String {
    let mut csv = Csv::new(&["check", "observed", "limit", "status"]);
    for c in checks {
        csv.row(&[
            c.name.clone(),
            fmt_f64(c.observed),
            fmt_f64(c.limit),
            if c.passed() { "pass" } else { "fail" }.to_string(),
        ]);
    }
    csv.as_str().to_string()
}

fn random_state(grid: TorusGrid, rng: &mut impl Rng) -> Result<QuantumState> {
    let amps = (0..grid.dim())
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    QuantumState::from_amplitudes(grid, amps)?.normalized()
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest deviation between the fast step (both directions) and the dense
/// matrix over `states` random inputs.
pub fn dense_deviation(
    params: KickedRotatorParams,
    states: usize,
    kinetic_error: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let dense = dense_floquet(&params)?;
    let adjoint = dense.adjoint();
    let op = FloquetOperator::new(params).with_kinetic_error(kinetic_error);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let psi = random_state(params.grid(), rng)?;
        let fwd = op.step(&psi, Direction::Forward)?;
        worst = worst.max(max_abs_diff(
            fwd.amplitudes(),
            &dense.apply(psi.amplitudes()),
        ));
        let adj = op.step(&psi, Direction::Adjoint)?;
        worst = worst.max(max_abs_diff(
            adj.amplitudes(),
            &adjoint.apply(psi.amplitudes()),
        ));
    }
    Ok(worst)
}

/// `max |U†U − I|` of the dense matrix.
pub fn dense_unitarity(params: KickedRotatorParams) -> Result<f64> {
    let dense = dense_floquet(&params)?;
    Ok(dense
        .adjoint()
        .matmul(&dense)
        .max_deviation(&DenseMatrix::identity(params.grid().dim())))
}

/// Brute-force kernel `⟨Uⁿ D ψ | D Uⁿ ψ⟩` from dense matrix powers.
pub fn brute_force_kernel(
    psi: &QuantumState,
    params: KickedRotatorParams,
    displacement: f64,
    n: usize,
) -> Result<Complex64> {
    let un = dense_floquet(&params)?.pow(n);
    let grid = params.grid();
    let a = QuantumState::from_amplitudes(
        grid,
        un.apply(state::displace(psi, displacement).amplitudes()),
    )?;
    let b = QuantumState::from_amplitudes(grid, un.apply(psi.amplitudes()))?;
    state::inner_product(&a, &state::displace(&b, displacement))
}

/// Runs every check. Individual checks never abort the suite; computation
/// errors surface as `Err`.
pub fn run_oracle_suite(options: OracleOptions) -> Result<Vec<OracleCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0D15_EC40);
    let mut checks = Vec::new();

    for n in [8, 16, 32, 64] {
        let grid = TorusGrid::new(n)?;
        for k in [0.5, 10.09, 200.09] {
            let params = KickedRotatorParams::new(grid, k)?;
            let dev = dense_deviation(params, 20, options.kinetic_error, &mut rng)?;
            checks.push(OracleCheck::new(
                format!("dense_vs_fast N={n} K={k}"),
                dev,
                DENSE_TOL,
            ));
        }
    }

    for n in [8, 16, 32] {
        let params = KickedRotatorParams::new(TorusGrid::new(n)?, 10.09)?;
        checks.push(OracleCheck::new(
            format!("dense_unitarity N={n}"),
            dense_unitarity(params)?,
            DENSE_TOL,
        ));
    }

    {
        let grid = TorusGrid::new(4096)?;
        let params = KickedRotatorParams::new(grid, 10.09)?;
        let op = FloquetOperator::new(params).with_kinetic_error(options.kinetic_error);
        let psi = random_state(grid, &mut rng)?;
        let fwd = op.evolve(&psi, 100, Direction::Forward)?;
        checks.push(OracleCheck::new(
            "norm_drift N=4096 n=100",
            (fwd.norm() - 1.0).abs(),
            1e-8,
        ));
        let back = op.evolve(
            &op.evolve(&psi, 5, Direction::Forward)?,
            5,
            Direction::Adjoint,
        )?;
        checks.push(OracleCheck::new(
            "round_trip N=4096 n=5",
            max_abs_diff(back.amplitudes(), psi.amplitudes()),
            1e-9,
        ));
    }

    {
        let grid = TorusGrid::new(16)?;
        let params = KickedRotatorParams::new(grid, 10.09)?;
        let p = 3.0 * TAU / 16.0;
        let psi = coherent_state(grid, &CoherentParams::new(1.3, 4.1, grid.default_sigma())?);
        let op = FloquetOperator::new(params).with_kinetic_error(options.kinetic_error);
        let mut buffers = EchoBuffers::new(&op);
        let fast = buffers.run(
            &op,
            psi.amplitudes(),
            &state::displacement_phases(grid, p),
            3,
        );
        let mut dev: f64 = 0.0;
        for n in 0..=3 {
            dev = dev.max((fast.kernel[n] - brute_force_kernel(&psi, params, p, n)?).norm());
        }
        checks.push(OracleCheck::new(
            "echo_brute_force N=16 K=10.09 m=3",
            dev,
            DENSE_TOL,
        ));
    }

    {
        let grid = TorusGrid::new(256)?;
        let params = KickedRotatorParams::new(grid, 10.09)?;
        let psi = coherent_state(grid, &CoherentParams::new(2.0, 0.7, grid.default_sigma())?);
        let mut worst_initial: f64 = 0.0;
        for m in [0.0, 0.5, 1.0, 7.3, 128.0] {
            let s = echo_series(&psi, &params, grid.displacement_for(m), 0)?;
            worst_initial = worst_initial.max((s.echo[0] - 1.0).abs());
        }
        checks.push(OracleCheck::new(
            "echo_initial_unity N=256",
            worst_initial,
            1e-12,
        ));

        let p = grid.displacement_for(2.0);
        let plain = FloquetOperator::new(params);
        let phaseless = FloquetOperator::new(params).without_global_phase();
        let phases = state::displacement_phases(grid, p);
        let a = EchoBuffers::new(&plain).run(&plain, psi.amplitudes(), &phases, 10);
        let b = EchoBuffers::new(&phaseless).run(&phaseless, psi.amplitudes(), &phases, 10);
        let dev = a
            .kernel
            .iter()
            .zip(&b.kernel)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        checks.push(OracleCheck::new("echo_global_phase N=256", dev, 1e-12));
    }

    Ok(checks)
}
