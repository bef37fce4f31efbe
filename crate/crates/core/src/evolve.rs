//! Lindblad integration, Liouvillian superoperators and steady states.
//!
//! Vectorization is column stacking: `vec(rho)[i + j*d] = rho[(i, j)]`,
//! which is nalgebra's storage order, so `vec(rho)` is `rho.as_slice()`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::fock::{hermitian_eigenvalues, kron, DensityMatrix, HilbertSpec, Operator};
use crate::model::{DriveChannel, LindbladModel};
use crate::sparse::Csr;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step in us.
    pub max_step: f64,
    pub store_states: bool,
    /// Accepted plus rejected steps before giving up.
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 1.0,
            store_states: false,
            max_steps: 20_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rtol and atol must be > 0, got {} and {}",
                self.rtol, self.atol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max_step must be > 0, got {}",
                self.max_step
            )));
        }
        Ok(())
    }
}

/// Dense `d^2 x d^2` generator acting on column-stacked density matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperoperatorMatrix {
    spec: HilbertSpec,
    entries: DMatrix<C64>,
}

impl SuperoperatorMatrix {
    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `L vec(rho)` reshaped back to a matrix.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = rho.nrows();
        let v = nalgebra::DVector::from_column_slice(rho.as_slice());
        let out = &self.entries * v;
        DMatrix::from_column_slice(d, d, out.as_slice())
    }
}

/// Worst deviations from a valid density matrix over the stored samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physicality {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    fn new() -> Self {
        Self {
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }

    fn record(&mut self, rho: &DMatrix<C64>) {
        let tr: C64 = rho.diagonal().iter().sum();
        self.max_trace_error = self.max_trace_error.max((tr - 1.0).norm());
        let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.max_hermiticity_error = self.max_hermiticity_error.max(herm);
        let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
        let min = hermitian_eigenvalues(&h).into_iter().fold(f64::INFINITY, f64::min);
        self.min_eigenvalue = self.min_eigenvalue.min(min);
    }

    /// Worst of both.
    pub fn merge(self, other: Physicality) -> Physicality {
        Physicality {
            max_trace_error: self.max_trace_error.max(other.max_trace_error),
            max_hermiticity_error: self.max_hermiticity_error.max(other.max_hermiticity_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }

    /// Checks the thresholds used throughout the test suite.
    pub fn is_physical(&self) -> bool {
        self.max_trace_error <= 1e-9 && self.max_hermiticity_error <= 1e-9 && self.min_eigenvalue >= -1e-7
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub expectations: BTreeMap<String, Vec<C64>>,
    pub states: Option<Vec<DensityMatrix>>,
    pub final_state: DensityMatrix,
    pub physicality: Physicality,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Dense Liouvillian at time `t`.
pub fn liouvillian(model: &LindbladModel, t: f64) -> SuperoperatorMatrix {
    let d = model.spec().total_dim();
    let id = DMatrix::<C64>::identity(d, d);
    let h = model.hamiltonian_at(t).into_matrix();
    let mi = C64::new(0.0, -1.0);
    let mut l = (kron(&id, &h) - kron(&h.transpose(), &id)) * mi;
    for (k, term) in model.dissipators().iter().enumerate() {
        let rate = model.rate_at(k, t);
        if rate == 0.0 {
            continue;
        }
        let c = term.collapse.matrix();
        let cdc = c.adjoint() * c;
        let half = C64::new(0.5, 0.0);
        let part = kron(&c.conjugate(), c) - kron(&id, &cdc) * half - kron(&cdc.transpose(), &id) * half;
        l += part * C64::new(rate, 0.0);
    }
    SuperoperatorMatrix {
        spec: model.spec().clone(),
        entries: l,
    }
}

/// `-i[H, rho] + sum_k rate_k (L rho L† - 1/2 {L†L, rho})` evaluated densely.
pub fn lindblad_rhs(model: &LindbladModel, t: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let h = model.hamiltonian_at(t).into_matrix();
    let mut out = (&h * rho - rho * &h) * C64::new(0.0, -1.0);
    for (k, term) in model.dissipators().iter().enumerate() {
        let rate = model.rate_at(k, t);
        if rate != 0.0 {
            out += crate::model::gksl(term.collapse.matrix(), rate, rho);
        }
    }
    out
}

// How a block of the effective Hamiltonian scales with its drive envelope.
#[derive(Clone, Copy)]
enum Scaling {
    Linear,
    Quadratic,
}

struct Block {
    channel: Option<DriveChannel>,
    scaling: Scaling,
    vals: Vec<C64>,
}

struct Jump {
    op: Csr,
    rate: f64,
    channel: Option<DriveChannel>,
}

/// Sparse right-hand side `-i(H_eff rho - rho H_eff†) + sum r L rho L†`
/// with `H_eff = H - (i/2) sum r L†L`.
struct Generator<'a> {
    model: &'a LindbladModel,
    d: usize,
    pattern: Csr,
    blocks: Vec<Block>,
    jumps: Vec<Jump>,
    heff: Vec<C64>,
    rates: Vec<f64>,
    scratch: Vec<C64>,
}

impl<'a> Generator<'a> {
    fn new(model: &'a LindbladModel) -> Self {
        let d = model.spec().total_dim();
        let mut groups: Vec<(Option<DriveChannel>, u8, DMatrix<C64>)> = Vec::new();
        let mut add = |channel, tag: u8, m: DMatrix<C64>| {
            if let Some(g) = groups.iter_mut().find(|g| g.0 == channel && g.1 == tag) {
                g.2 += m;
            } else {
                groups.push((channel, tag, m));
            }
        };
        for term in model.hamiltonian_terms() {
            add(term.drive, 1, term.op.matrix().clone());
        }
        let mut jumps = Vec::new();
        for term in model.dissipators() {
            let l = term.collapse.matrix();
            let anti = (l.adjoint() * l) * C64::new(0.0, -0.5 * term.rate);
            add(term.drive, 2, anti);
            jumps.push(Jump {
                op: Csr::from_dense(l),
                rate: term.rate,
                channel: term.drive,
            });
        }
        let mut mask = DMatrix::<bool>::from_element(d, d, false);
        for g in &groups {
            for (m, v) in mask.iter_mut().zip(g.2.iter()) {
                *m |= *v != ZERO;
            }
        }
        let pattern = Csr::from_pattern(&DMatrix::zeros(d, d), |i, j| mask[(i, j)]);
        let blocks = groups
            .into_iter()
            .map(|(channel, tag, m)| Block {
                channel,
                scaling: if tag == 1 { Scaling::Linear } else { Scaling::Quadratic },
                vals: Csr::from_pattern(&m, |i, j| mask[(i, j)]).vals,
            })
            .collect();
        let nnz = pattern.nnz();
        let nj = jumps.len();
        Self {
            model,
            d,
            pattern,
            blocks,
            jumps,
            heff: vec![ZERO; nnz],
            rates: vec![0.0; nj],
            scratch: vec![ZERO; d * d],
        }
    }

    /// Loads coefficients for time `t` on the envelope piece that starts at
    /// `piece_start`.
    fn set_time(&mut self, piece_start: f64, t: f64) {
        self.heff.iter_mut().for_each(|v| *v = ZERO);
        for b in &self.blocks {
            let f = self.model.drive_factor_on_piece(b.channel, piece_start, t);
            let c = match b.scaling {
                Scaling::Linear => f,
                Scaling::Quadratic => f * f,
            };
            if c != 0.0 {
                for (h, v) in self.heff.iter_mut().zip(&b.vals) {
                    *h += v * c;
                }
            }
        }
        for (r, j) in self.rates.iter_mut().zip(&self.jumps) {
            let f = self.model.drive_factor_on_piece(j.channel, piece_start, t);
            *r = j.rate * f * f;
        }
    }

    fn apply(&mut self, x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        self.pattern.left_mul_add(&self.heff, x, out, C64::new(0.0, -1.0));
        self.pattern.right_mul_adj_add(&self.heff, x, out, C64::new(0.0, 1.0));
        for (j, &r) in self.jumps.iter().zip(&self.rates) {
            if r == 0.0 {
                continue;
            }
            self.scratch.iter_mut().for_each(|v| *v = ZERO);
            j.op.left_mul_add(&j.op.vals, x, &mut self.scratch, C64::new(1.0, 0.0));
            j.op.right_mul_adj_add(&j.op.vals, &self.scratch, out, C64::new(r, 0.0));
        }
    }

    fn dim(&self) -> usize {
        self.d
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// PI controller constants.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MAX: f64 = 10.0;
const FAC_MIN: f64 = 0.2;

struct Stepper<'a> {
    gen: Generator<'a>,
    cfg: SolverConfig,
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    facold: f64,
    accepted: usize,
    rejected: usize,
}

fn err_norm(y: &[C64], ynew: &[C64], delta: &[C64], atol: f64, rtol: f64) -> f64 {
    let n = y.len() as f64;
    let s: f64 = y
        .iter()
        .zip(ynew)
        .zip(delta)
        .map(|((a, b), e)| {
            let sc = atol + rtol * a.norm().max(b.norm());
            e.norm_sqr() / (sc * sc)
        })
        .sum();
    (s / n).sqrt()
}

impl<'a> Stepper<'a> {
    fn new(gen: Generator<'a>, cfg: SolverConfig) -> Self {
        let n = gen.dim() * gen.dim();
        let z = || vec![ZERO; n];
        Self {
            gen,
            cfg,
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            facold: 1e-4,
            accepted: 0,
            rejected: 0,
        }
    }

    fn initial_step(&mut self, piece: f64, t: f64, y: &[C64], hmax: f64) -> f64 {
        let (atol, rtol) = (self.cfg.atol, self.cfg.rtol);
        let n = y.len() as f64;
        let sc = |v: &C64| atol + rtol * v.norm();
        let dnf: f64 = self.k[0].iter().zip(y).map(|(f, v)| (f.norm() / sc(v)).powi(2)).sum::<f64>() / n;
        let dny: f64 = y.iter().map(|v| (v.norm() / sc(v)).powi(2)).sum::<f64>() / n;
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            0.01 * (dny / dnf).sqrt()
        };
        h = h.min(hmax);
        for (i, v) in self.ytmp.iter_mut().enumerate() {
            *v = y[i] + self.k[0][i] * h;
        }
        self.gen.set_time(piece, t + h);
        let (head, tail) = self.k.split_at_mut(1);
        self.gen.apply(&self.ytmp, &mut tail[0]);
        let der2 = (tail[0]
            .iter()
            .zip(&head[0])
            .zip(y)
            .map(|((f1, f0), v)| ((f1 - f0).norm() / sc(v)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(hmax)
    }

    /// Advances `y` from `t0` to `t1` on one envelope piece. `h` carries the
    /// proposed step between calls.
    fn integrate(&mut self, y: &mut Vec<C64>, t0: f64, t1: f64, h: &mut f64) -> Result<()> {
        let piece = t0;
        let hmax = self.cfg.max_step.min(t1 - t0);
        self.gen.set_time(piece, t0);
        {
            let (k0, _) = self.k.split_at_mut(1);
            self.gen.apply(y, &mut k0[0]);
        }
        if *h <= 0.0 {
            *h = self.initial_step(piece, t0, y, hmax);
        }
        let mut t = t0;
        let mut last_rejected = false;
        while t < t1 {
            if self.accepted + self.rejected >= self.cfg.max_steps {
                return Err(Error::Stiffness { t, step: *h });
            }
            let remaining = t1 - t;
            let mut step = h.min(self.cfg.max_step);
            let landing = step >= remaining * (1.0 - 1e-12);
            if landing {
                step = remaining;
            }
            if step < 1e-12 * t.abs().max(1.0) && !landing {
                return Err(Error::Stiffness { t, step });
            }
            self.stages(y, piece, t, step);
            for (i, d) in self.ytmp.iter_mut().enumerate() {
                let mut e = ZERO;
                for s in 0..7 {
                    if E[s] != 0.0 {
                        e += self.k[s][i] * E[s];
                    }
                }
                *d = e * step;
            }
            let err = err_norm(y, &self.ynew, &self.ytmp, self.cfg.atol, self.cfg.rtol);
            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                let fac = (fac11 / self.facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut hnew = step / fac;
                if last_rejected {
                    hnew = hnew.min(step);
                }
                self.facold = err.max(1e-4);
                self.accepted += 1;
                last_rejected = false;
                std::mem::swap(y, &mut self.ynew);
                let (k0, rest) = self.k.split_at_mut(6);
                std::mem::swap(&mut k0[0], &mut rest[0]);
                t = if landing { t1 } else { t + step };
                // Keep the proposal from being shrunk by a short landing step.
                if !landing || hnew > *h {
                    *h = hnew;
                }
            } else {
                let fac = (fac11 / SAFETY).min(1.0 / FAC_MIN);
                *h = step / fac;
                self.rejected += 1;
                last_rejected = true;
            }
        }
        Ok(())
    }

    fn stages(&mut self, y: &[C64], piece: f64, t: f64, h: f64) {
        for s in 1..7 {
            for (i, v) in self.ytmp.iter_mut().enumerate() {
                let mut acc = y[i];
                for (j, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        acc += self.k[j][i] * (a * h);
                    }
                }
                *v = acc;
            }
            self.gen.set_time(piece, t + C[s] * h);
            let (_, todo) = self.k.split_at_mut(s);
            self.gen.apply(&self.ytmp, &mut todo[0]);
            if s == 6 {
                self.ynew.copy_from_slice(&self.ytmp);
            }
        }
    }
}

fn trace_product(a: &DMatrix<C64>, rho: &DMatrix<C64>) -> C64 {
    // Tr(A rho) = sum_ij A_ij rho_ji
    let d = a.nrows();
    let mut s = ZERO;
    for j in 0..d {
        for i in 0..d {
            s += a[(i, j)] * rho[(j, i)];
        }
    }
    s
}

fn check_spec(model: &LindbladModel, spec: &HilbertSpec) -> Result<()> {
    if model.spec() != spec {
        return Err(Error::SpecMismatch {
            left: model.spec().mode_dims().to_vec(),
            right: spec.mode_dims().to_vec(),
        });
    }
    Ok(())
}

/// Integrates the master equation with adaptive Dormand-Prince 5(4) steps
/// that land exactly on every requested time and envelope knot.
pub fn evolve(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    times: &[f64],
    cfg: &SolverConfig,
    observables: &[(String, Operator)],
) -> Result<EvolutionResult> {
    cfg.validate()?;
    check_spec(model, rho0.spec())?;
    for (_, o) in observables {
        check_spec(model, o.spec())?;
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter("no output times".into()));
    }
    if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "output times must be finite, >= 0 and strictly increasing".into(),
        ));
    }
    let d = model.spec().total_dim();
    let knots: Vec<f64> = model
        .breakpoints()
        .into_iter()
        .filter(|&k| k > 0.0 && k < times[times.len() - 1])
        .collect();

    let mut stepper = Stepper::new(Generator::new(model), cfg.clone());
    let mut y = rho0.matrix().as_slice().to_vec();
    let mut t = 0.0;
    let mut h = 0.0;
    let mut expectations: BTreeMap<String, Vec<C64>> =
        observables.iter().map(|(k, _)| (k.clone(), Vec::with_capacity(times.len()))).collect();
    let mut states = cfg.store_states.then(Vec::new);
    let mut phys = Physicality::new();
    let mut knot_iter = knots.iter().peekable();

    for &target in times {
        while t < target {
            let mut end = target;
            while let Some(&&k) = knot_iter.peek() {
                if k <= t {
                    knot_iter.next();
                } else {
                    end = end.min(k);
                    break;
                }
            }
            stepper.integrate(&mut y, t, end, &mut h)?;
            t = end;
        }
        let rho = DMatrix::from_column_slice(d, d, &y);
        phys.record(&rho);
        for (name, op) in observables {
            expectations
                .get_mut(name)
                .expect("observable registered")
                .push(trace_product(op.matrix(), &rho));
        }
        if let Some(s) = states.as_mut() {
            s.push(DensityMatrix::new_unchecked(model.spec().clone(), rho)?);
        }
    }
    let final_state = DensityMatrix::new_unchecked(model.spec().clone(), DMatrix::from_column_slice(d, d, &y))?;
    Ok(EvolutionResult {
        times: times.to_vec(),
        expectations,
        states,
        final_state,
        physicality: phys,
        accepted_steps: stepper.accepted,
        rejected_steps: stepper.rejected,
    })
}

/// Largest total dimension accepted by the dense exponential oracle.
pub const EXPM_MAX_DIM: usize = 16;

/// `exp(t L) vec(rho0)` for a time-independent model.
pub fn evolve_expm(model: &LindbladModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    check_spec(model, rho0.spec())?;
    let d = model.spec().total_dim();
    if d > EXPM_MAX_DIM {
        return Err(Error::DimensionGuard { dim: d, max: EXPM_MAX_DIM });
    }
    if model.is_time_dependent() {
        return Err(Error::TimeDependentModel);
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let l = liouvillian(model, 0.0);
    let prop = expm(&(l.entries * C64::new(t, 0.0)));
    let v = nalgebra::DVector::from_column_slice(rho0.matrix().as_slice());
    let out = prop * v;
    DensityMatrix::new_unchecked(model.spec().clone(), DMatrix::from_column_slice(d, d, out.as_slice()))
}

/// Largest total dimension for which steady states use a dense SVD.
pub const STEADY_SVD_MAX_DIM: usize = 24;

#[derive(Clone, Debug)]
pub enum SteadyState {
    /// The Liouvillian has a one-dimensional kernel.
    Unique(DensityMatrix),
    /// Several independent steady matrices. `basis` is orthonormal in the
    /// Hilbert-Schmidt inner product; its elements need not be states.
    /// `reached` is the long-time limit of the supplied initial state.
    Degenerate {
        basis: Vec<DMatrix<C64>>,
        reached: Option<DensityMatrix>,
    },
    /// Reached by long-time integration; uniqueness is not checked.
    Integrated(DensityMatrix),
}

impl SteadyState {
    /// The physical state, if one was determined.
    pub fn state(&self) -> Option<&DensityMatrix> {
        match self {
            SteadyState::Unique(r) | SteadyState::Integrated(r) => Some(r),
            SteadyState::Degenerate { reached, .. } => reached.as_ref(),
        }
    }
}

fn normalize_steady(spec: &HilbertSpec, m: DMatrix<C64>) -> Result<DensityMatrix> {
    let tr: C64 = m.diagonal().iter().sum();
    if tr.norm() < 1e-12 {
        return Err(Error::NonConvergence(
            "kernel vector has zero trace".into(),
        ));
    }
    let m = m / tr;
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::new_unchecked(spec.clone(), h)
}

/// Steady state of a time-independent model.
///
/// Small systems use the kernel of the dense Liouvillian. Larger systems, and
/// degenerate kernels with an `initial` state, integrate until
/// `max |d rho/dt| < 1e-9` or `t_max` us have elapsed.
pub fn steady_state(
    model: &LindbladModel,
    initial: Option<&DensityMatrix>,
    t_max: f64,
) -> Result<SteadyState> {
    if model.is_time_dependent() {
        return Err(Error::TimeDependentModel);
    }
    let spec = model.spec();
    let d = spec.total_dim();
    if let Some(r) = initial {
        check_spec(model, r.spec())?;
    }
    if d > STEADY_SVD_MAX_DIM {
        let start = initial.cloned().unwrap_or_else(|| DensityMatrix::maximally_mixed(spec));
        return Ok(SteadyState::Integrated(integrate_to_steady(model, &start, t_max)?));
    }
    let l = liouvillian(model, 0.0).entries;
    let svd = l.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    // Truncated dark-state coherences sit near 1e-8 of the largest value.
    let tol = 1e-6 * smax.max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let vec_of = |i: usize| -> DMatrix<C64> {
        let row = v_t.row(i).map(|z| z.conj());
        DMatrix::from_iterator(d, d, row.iter().cloned())
    };
    match null.len() {
        0 => Err(Error::NonConvergence(format!(
            "Liouvillian has no kernel (smallest singular value {:e})",
            svd.singular_values.min()
        ))),
        1 => Ok(SteadyState::Unique(normalize_steady(spec, vec_of(null[0]))?)),
        _ => {
            let basis: Vec<DMatrix<C64>> = null.iter().map(|&i| vec_of(i)).collect();
            let reached = match initial {
                Some(r) => Some(integrate_to_steady(model, r, t_max)?),
                None => None,
            };
            Ok(SteadyState::Degenerate { basis, reached })
        }
    }
}

/// Integrates in doubling chunks until `max |d rho/dt| < 1e-9`.
pub fn integrate_to_steady(model: &LindbladModel, rho0: &DensityMatrix, t_max: f64) -> Result<DensityMatrix> {
    let cfg = SolverConfig {
        rtol: 1e-10,
        atol: 1e-12,
        max_step: 10.0,
        ..SolverConfig::default()
    };
    let mut rho = rho0.clone();
    let mut elapsed = 0.0;
    let mut chunk: f64 = 1.0;
    loop {
        let deriv = lindblad_rhs(model, 0.0, rho.matrix());
        let size = deriv.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if size < 1e-9 {
            return normalize_steady(model.spec(), rho.into_matrix());
        }
        if elapsed >= t_max {
            return Err(Error::NonConvergence(format!(
                "|d rho/dt| = {size:e} after {elapsed} us of integration"
            )));
        }
        let span = chunk.min(t_max - elapsed);
        let run = evolve(model, &rho, &[0.0, span], &cfg, &[])?;
        rho = run.final_state;
        elapsed += span;
        chunk *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation, cat_state, number, parity, thermal_state, StateVector};
    use crate::model::{build_reduced, ReducedParams};
    use crate::units::mhz_to_rad_per_us;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn loss_model(dim: usize, kappa: f64) -> LindbladModel {
        let a = annihilation(dim).unwrap();
        let mut m = LindbladModel::new(a.spec().clone());
        m.add_dissipator(a, kappa, None).unwrap();
        m
    }

    fn random_model(rng: &mut ChaCha8Rng, dim: usize) -> LindbladModel {
        let spec = HilbertSpec::single(dim).unwrap();
        let g = DMatrix::from_fn(dim, dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let h = (&g + g.adjoint()) * c(0.5, 0.0);
        let mut m = LindbladModel::new(spec.clone());
        m.add_hamiltonian(Operator::from_matrix(spec.clone(), h).unwrap(), None).unwrap();
        for _ in 0..rng.random_range(1..3) {
            let l = DMatrix::from_fn(dim, dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            m.add_dissipator(Operator::from_matrix(spec.clone(), l).unwrap(), rng.random_range(0.1..1.0), None)
                .unwrap();
        }
        m
    }

    fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> DensityMatrix {
        let g = DMatrix::from_fn(dim, dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let p = &g * g.adjoint();
        let tr: C64 = p.diagonal().iter().sum();
        DensityMatrix::new(HilbertSpec::single(dim).unwrap(), p / tr).unwrap()
    }

    #[test]
    fn empty_model_has_zero_liouvillian() {
        let m = LindbladModel::new(HilbertSpec::single(3).unwrap());
        assert_eq!(liouvillian(&m, 0.0).entries().camax(), 0.0);
    }

    #[test]
    fn amplitude_damping_by_hand() {
        let kappa = 0.7;
        let l = liouvillian(&loss_model(2, kappa), 0.0);
        let rho = DMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.7, 0.0)]);
        let dr = l.apply(&rho);
        assert!((dr[(1, 1)] - c(-kappa * 0.7, 0.0)).norm() < 1e-15);
        assert!((dr[(0, 1)] - c(0.1, 0.2) * (-kappa / 2.0)).norm() < 1e-15);
        assert!((dr[(0, 0)] - c(kappa * 0.7, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn unitary_part_fixes_identity() {
        let spec = HilbertSpec::single(4).unwrap();
        let mut m = LindbladModel::new(spec.clone());
        m.add_hamiltonian(&number(4).unwrap() * 1.3, None).unwrap();
        let l = liouvillian(&m, 0.0);
        let id = DMatrix::<C64>::identity(4, 4) * c(0.25, 0.0);
        assert!(l.apply(&id).camax() < 1e-15);
    }

    #[test]
    fn liouvillian_matches_direct_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let dim = rng.random_range(2..6);
            let m = random_model(&mut rng, dim);
            let rho = DMatrix::from_fn(dim, dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let diff = liouvillian(&m, 0.0).apply(&rho) - lindblad_rhs(&m, 0.0, &rho);
            assert!(diff.camax() <= 1e-12);
        }
    }

    #[test]
    fn sparse_generator_matches_direct_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 5);
        let rho = random_state(&mut rng, 5);
        let mut g = Generator::new(&m);
        g.set_time(0.0, 0.0);
        let mut out = vec![ZERO; 25];
        g.apply(rho.matrix().as_slice(), &mut out);
        let want = lindblad_rhs(&m, 0.0, rho.matrix());
        let got = DMatrix::from_column_slice(5, 5, &out);
        assert!((got - want).camax() < 1e-13);
    }

    #[test]
    fn pure_loss_population_decay() {
        let kappa = 0.4;
        let m = loss_model(4, kappa);
        let rho0 = DensityMatrix::pure(&StateVector::fock(1, 4).unwrap());
        let times: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let n = number(4).unwrap();
        let r = evolve(&m, &rho0, &times, &SolverConfig::default(), &[("n".into(), n)]).unwrap();
        for (t, v) in times.iter().zip(&r.expectations["n"]) {
            let want = (-kappa * t).exp();
            assert!((v.re - want).abs() <= 1e-7 * want.max(1e-3), "t={t}: {} vs {want}", v.re);
        }
        assert!(r.physicality.is_physical());
    }

    #[test]
    fn expm_oracle_agrees_with_integrator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SolverConfig {
            rtol: 1e-10,
            atol: 1e-12,
            ..SolverConfig::default()
        };
        for _ in 0..5 {
            let m = random_model(&mut rng, 3);
            let rho0 = random_state(&mut rng, 3);
            let t = 1.0 / m.max_rate();
            let a = evolve(&m, &rho0, &[0.0, t], &cfg, &[]).unwrap().final_state;
            let b = evolve_expm(&m, &rho0, t).unwrap();
            assert!(a.trace_distance(&b).unwrap() <= 1e-8);
            assert!((b.trace() - c(1.0, 0.0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn expm_guards() {
        let m = loss_model(17, 1.0);
        let rho = DensityMatrix::pure(&StateVector::fock(0, 17).unwrap());
        assert!(matches!(evolve_expm(&m, &rho, 1.0), Err(Error::DimensionGuard { .. })));
        let small = loss_model(3, 1.0);
        let rho = DensityMatrix::pure(&StateVector::fock(2, 3).unwrap());
        assert_eq!(evolve_expm(&small, &rho, 0.0).unwrap().matrix(), rho.matrix());
    }

    #[test]
    fn bad_times_rejected() {
        let m = loss_model(3, 1.0);
        let rho = DensityMatrix::pure(&StateVector::fock(1, 3).unwrap());
        let cfg = SolverConfig::default();
        assert!(evolve(&m, &rho, &[0.0, 1.0, 1.0], &cfg, &[]).is_err());
        assert!(evolve(&m, &rho, &[-1.0, 1.0], &cfg, &[]).is_err());
    }

    #[test]
    fn steady_state_of_pure_loss_is_vacuum() {
        let m = loss_model(5, 0.3);
        let s = steady_state(&m, None, 100.0).unwrap();
        let SteadyState::Unique(rho) = s else { panic!("expected a unique steady state") };
        assert!((rho.matrix()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn thermal_bath_gives_thermal_state() {
        let dim = 6;
        let n_th = 0.2;
        let a = annihilation(dim).unwrap();
        let mut m = LindbladModel::new(a.spec().clone());
        m.add_dissipator(a.clone(), 1.0 + n_th, None).unwrap();
        m.add_dissipator(a.adjoint(), n_th, None).unwrap();
        let s = steady_state(&m, None, 100.0).unwrap();
        let rho = s.state().unwrap();
        let want = thermal_state(n_th, dim).unwrap();
        // Truncation only perturbs the tail of the distribution.
        assert!(rho.trace_distance(&want).unwrap() < 1e-4);
    }

    #[test]
    fn two_photon_kernel_is_degenerate_and_reaches_even_cat() {
        let kappa2 = mhz_to_rad_per_us(0.176);
        let p = ReducedParams {
            eps2: c(kappa2, 0.0),
            kappa2,
            kappa1: 0.0,
            chi_ss: 0.0,
            eps: c(0.0, 0.0),
            dim_s: 12,
        };
        let m = build_reduced(&p).unwrap();
        let vac = DensityMatrix::pure(&StateVector::fock(0, 12).unwrap());
        let s = steady_state(&m, Some(&vac), 500.0).unwrap();
        let SteadyState::Degenerate { basis, reached } = s else { panic!("expected degenerate kernel") };
        assert_eq!(basis.len(), 4);
        let cat = cat_state(c(2f64.sqrt(), 0.0), 0.0, 12).unwrap();
        assert!(reached.unwrap().fidelity_pure(&cat).unwrap() >= 0.999);
    }

    #[test]
    fn lossless_undriven_cat_keeps_parity() {
        let kappa2 = mhz_to_rad_per_us(0.176);
        let p = ReducedParams {
            eps2: c(1.5 * kappa2, 0.0),
            kappa2,
            kappa1: 0.0,
            chi_ss: mhz_to_rad_per_us(0.003),
            eps: c(0.0, 0.0),
            dim_s: 20,
        };
        let m = build_reduced(&p).unwrap();
        let rho0 = DensityMatrix::pure(&cat_state(c(3f64.sqrt(), 0.0), 0.0, 20).unwrap());
        let times: Vec<f64> = (0..=10).map(|k| 5.0 * k as f64).collect();
        let r = evolve(&m, &rho0, &times, &SolverConfig::default(), &[("P".into(), parity(20).unwrap())]).unwrap();
        for v in &r.expectations["P"] {
            assert!((v.re - 1.0).abs() <= 1e-6);
        }
        assert!(r.physicality.is_physical());
    }

    #[test]
    fn envelope_knots_are_respected() {
        // A drive switched on for exactly 0.5 us rotates a qubit by a known angle.
        let spec = HilbertSpec::single(2).unwrap();
        let a = annihilation(2).unwrap();
        let x = &a + &a.adjoint();
        let mut m = LindbladModel::new(spec.clone());
        m.add_hamiltonian(&x * 1.0, Some(DriveChannel::Zeno)).unwrap();
        let proto = crate::model::Protocol::new(0.25, 0.5, 0.0, 0.0).unwrap();
        let m = crate::model::apply_protocol(&m, &proto).unwrap();
        let rho0 = DensityMatrix::pure(&StateVector::fock(0, 2).unwrap());
        let n = number(2).unwrap();
        let r = evolve(&m, &rho0, &[0.0, 2.0], &SolverConfig::default(), &[("n".into(), n)]).unwrap();
        let want = 0.5f64.sin().powi(2);
        assert!((r.expectations["n"][1].re - want).abs() < 1e-8);
    }
}
