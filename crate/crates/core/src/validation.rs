//! Self-checks run by `catzeno validate`: the dense-exponential oracle
//! against the adaptive integrator, plus the convention and invariant
//! identities the rest of the crate relies on.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::evolve::{evolve, evolve_expm, liouvillian, lindblad_rhs, SolverConfig};
use crate::experiment::ExperimentConfig;
use crate::fock::{cat_state, parity, DensityMatrix, HilbertSpec, Operator};
use crate::model::{build_reduced, DissipatorTerm, LindbladModel};
use crate::units::{mhz_to_rad_per_us, rad_per_us_to_mhz};
use crate::C64;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            tolerance,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}: worst {:e} (tolerance {:e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Random time-independent model: Hermitian `H` and one to three collapse
/// operators with rates in `[0.1, 1)`.
pub fn random_model(rng: &mut ChaCha8Rng, spec: &HilbertSpec) -> Result<LindbladModel> {
    let n = spec.total_dim();
    let g = random_matrix(rng, n);
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let mut m = LindbladModel::new(spec.clone());
    m.add_hamiltonian(Operator::from_matrix(spec.clone(), h)?, None)?;
    for _ in 0..rng.random_range(1..=3) {
        let l = Operator::from_matrix(spec.clone(), random_matrix(rng, n))?;
        m.add_dissipator(l, rng.random_range(0.1..1.0), None)?;
    }
    Ok(m)
}

pub fn random_state(rng: &mut ChaCha8Rng, spec: &HilbertSpec) -> Result<DensityMatrix> {
    let g = random_matrix(rng, spec.total_dim());
    let p = &g * g.adjoint();
    let tr: C64 = p.diagonal().iter().sum();
    DensityMatrix::new(spec.clone(), p / tr)
}

/// One or two modes with total dimension at most 12.
fn random_spec(rng: &mut ChaCha8Rng) -> Result<HilbertSpec> {
    if rng.random_bool(0.5) {
        HilbertSpec::single(rng.random_range(2..=12))
    } else {
        let a = rng.random_range(2..=4);
        let b = rng.random_range(2..=12 / a);
        HilbertSpec::new(vec![a, b])
    }
}

/// Worst trace distance between the adaptive integrator and the dense
/// exponential over `count` random models.
pub fn oracle_equivalence(count: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig {
        rtol: 1e-10,
        atol: 1e-12,
        ..SolverConfig::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..count {
        let spec = random_spec(&mut rng)?;
        let m = random_model(&mut rng, &spec)?;
        let rho0 = random_state(&mut rng, &spec)?;
        let t = rng.random_range(0.5..3.0) / m.max_rate();
        let a = evolve(&m, &rho0, &[0.0, t], &cfg, &[])?.final_state;
        let b = evolve_expm(&m, &rho0, t)?;
        worst = worst.max(a.trace_distance(&b)?);
    }
    Ok(Check::new("integrator vs dense exponential (trace distance)", worst, 1e-7))
}

/// Stored GKSL form against `(k/2)(2 L rho L† - L†L rho - rho L†L)`.
pub fn convention_bridge(count: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(2..=6);
        let spec = HilbertSpec::single(n)?;
        let l = random_matrix(&mut rng, n);
        let rho = random_matrix(&mut rng, n);
        let kappa = rng.random_range(0.0..5.0);
        let term = DissipatorTerm::new(Operator::from_matrix(spec, l.clone())?, kappa)?;
        let ld = l.adjoint();
        let two_sided = (&l * &rho * &ld * C64::new(2.0, 0.0) - &ld * &l * &rho - &rho * &ld * &l)
            * C64::new(kappa / 2.0, 0.0);
        worst = worst.max((term.apply(&rho) - two_sided).camax());
    }
    Ok(Check::new("dissipator convention bridge", worst, 1e-13))
}

/// Relative MHz -> rad/us -> MHz round-trip error.
pub fn unit_round_trip() -> Check {
    let worst = [0.176, 0.0017, 0.003, 86.0, 0.471, 0.007, 0.502, 1e-6, 1234.5]
        .iter()
        .map(|&f| ((rad_per_us_to_mhz(mhz_to_rad_per_us(f)) - f) / f).abs())
        .fold(0.0, f64::max);
    Check::new("unit round trip MHz <-> rad/us", worst, 1e-15)
}

pub fn liouvillian_vs_rhs(count: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let spec = random_spec(&mut rng)?;
        let m = random_model(&mut rng, &spec)?;
        let rho = random_matrix(&mut rng, spec.total_dim());
        let diff = liouvillian(&m, 0.0).apply(&rho) - lindblad_rhs(&m, 0.0, &rho);
        worst = worst.max(diff.camax());
    }
    Ok(Check::new("Liouvillian vs direct right-hand side", worst, 1e-12))
}

/// Undriven, lossless reduced model from an even cat: parity stays at +1.
pub fn parity_conservation(horizon: f64) -> Result<Check> {
    let mut cfg = ExperimentConfig::standard();
    cfg.device.kappa1 = 0.0;
    let p = cfg.reduced_params(2.0, 0.0);
    let m = build_reduced(&p)?;
    let rho0 = DensityMatrix::pure(&cat_state(ExperimentConfig::alpha(2.0), 0.0, p.dim_s)?);
    let times: Vec<f64> = (0..=10).map(|k| horizon * k as f64 / 10.0).collect();
    let r = evolve(&m, &rho0, &times, &cfg.numerics, &[("parity".into(), parity(p.dim_s)?)])?;
    let worst = r.expectations["parity"]
        .iter()
        .map(|v| (v - C64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    Ok(Check::new("parity conservation without drive or loss", worst, 1e-6))
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        oracle_equivalence(20, seed)?,
        convention_bridge(50, seed + 1)?,
        unit_round_trip(),
        liouvillian_vs_rhs(20, seed + 2)?,
        parity_conservation(5.0)?,
    ])
}
