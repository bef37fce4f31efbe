//! Reduced single-mode and full storage-reservoir Lindblad models.
//!
//! Dissipators are stored in the GKSL form
//!
//! ```text
//! rate * (L rho L† - 1/2 {L†L, rho})
//! ```
//!
//! A channel written as `(kappa/2) * (2 L rho L† - L†L rho - rho L†L)` is
//! therefore stored with `rate = kappa`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{evolve, SolverConfig};
use crate::fock::{
    annihilation, check_truncation, identity, tensor, DensityMatrix, HilbertSpec, Operator,
    StateVector,
};

/// Drives whose amplitude follows a protocol envelope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveChannel {
    /// The pumps creating the two-photon exchange and its drive.
    Stabilization,
    /// The weak single-photon drive on the storage.
    Zeno,
}

/// Piecewise-linear amplitude multiplier.
///
/// Consecutive points with equal times encode a jump; the envelope is
/// right-continuous and constant outside the listed points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    points: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn piecewise(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("envelope needs at least one point".into()));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidParameter("envelope times must be non-decreasing".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidParameter("envelope points must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    fn piece(&self, t: f64) -> Option<usize> {
        self.points.iter().rposition(|p| p.0 <= t)
    }

    fn eval_piece(&self, piece: Option<usize>, t: f64) -> f64 {
        match piece {
            None => self.points[0].1,
            Some(i) if i + 1 == self.points.len() => self.points[i].1,
            Some(i) => {
                let (t0, v0) = self.points[i];
                let (t1, v1) = self.points[i + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_piece(self.piece(t), t)
    }

    /// Evaluates the linear piece that is active just after `piece_start`,
    /// extended to `t`. Integrators use this so that a step ending exactly on
    /// a jump still sees the left limit.
    pub fn value_on_piece(&self, piece_start: f64, t: f64) -> f64 {
        self.eval_piece(self.piece(piece_start), t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianTerm {
    pub op: Operator,
    pub drive: Option<DriveChannel>,
}

/// One collapse channel. When `drive` is set the rate scales with the square
/// of the envelope, as a pumped two-photon rate does with the pump amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct DissipatorTerm {
    pub collapse: Operator,
    pub rate: f64,
    pub drive: Option<DriveChannel>,
}

impl DissipatorTerm {
    pub fn new(collapse: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dissipation rate must be >= 0, got {rate}"
            )));
        }
        Ok(Self {
            collapse,
            rate,
            drive: None,
        })
    }

    /// `rate * (L rho L† - 1/2 {L†L, rho})` at the nominal rate.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        gksl(self.collapse.matrix(), self.rate, rho)
    }
}

pub(crate) fn gksl(l: &DMatrix<C64>, rate: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let ld = l.adjoint();
    let ldl = &ld * l;
    let half = C64::new(0.5, 0.0);
    (l * rho * &ld - (&ldl * rho) * half - (rho * &ldl) * half) * C64::new(rate, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LindbladModel {
    spec: HilbertSpec,
    hamiltonian: Vec<HamiltonianTerm>,
    dissipators: Vec<DissipatorTerm>,
    envelopes: BTreeMap<DriveChannel, Envelope>,
}

impl LindbladModel {
    pub fn new(spec: HilbertSpec) -> Self {
        Self {
            spec,
            hamiltonian: Vec::new(),
            dissipators: Vec::new(),
            envelopes: BTreeMap::new(),
        }
    }

    pub fn add_hamiltonian(&mut self, op: Operator, drive: Option<DriveChannel>) -> Result<()> {
        self.check_spec(op.spec())?;
        if !op.is_hermitian(1e-10) {
            return Err(Error::InvalidParameter(format!(
                "Hamiltonian term is not Hermitian (deviation {:e})",
                op.hermiticity_error()
            )));
        }
        self.hamiltonian.push(HamiltonianTerm { op, drive });
        Ok(())
    }

    pub fn add_dissipator(
        &mut self,
        collapse: Operator,
        rate: f64,
        drive: Option<DriveChannel>,
    ) -> Result<()> {
        self.check_spec(collapse.spec())?;
        let mut term = DissipatorTerm::new(collapse, rate)?;
        term.drive = drive;
        self.dissipators.push(term);
        Ok(())
    }

    pub fn with_envelope(mut self, channel: DriveChannel, envelope: Envelope) -> Self {
        self.envelopes.insert(channel, envelope);
        self
    }

    fn check_spec(&self, spec: &HilbertSpec) -> Result<()> {
        if spec != &self.spec {
            return Err(Error::SpecMismatch {
                left: self.spec.mode_dims().to_vec(),
                right: spec.mode_dims().to_vec(),
            });
        }
        Ok(())
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn hamiltonian_terms(&self) -> &[HamiltonianTerm] {
        &self.hamiltonian
    }

    pub fn dissipators(&self) -> &[DissipatorTerm] {
        &self.dissipators
    }

    pub fn envelopes(&self) -> &BTreeMap<DriveChannel, Envelope> {
        &self.envelopes
    }

    /// Amplitude multiplier of a drive channel at time `t`.
    pub fn drive_factor(&self, channel: Option<DriveChannel>, t: f64) -> f64 {
        channel
            .and_then(|c| self.envelopes.get(&c))
            .map_or(1.0, |e| e.value(t))
    }

    pub(crate) fn drive_factor_on_piece(
        &self,
        channel: Option<DriveChannel>,
        piece_start: f64,
        t: f64,
    ) -> f64 {
        channel
            .and_then(|c| self.envelopes.get(&c))
            .map_or(1.0, |e| e.value_on_piece(piece_start, t))
    }

    pub fn hamiltonian_at(&self, t: f64) -> Operator {
        let mut h = Operator::zeros(&self.spec);
        for term in &self.hamiltonian {
            let f = self.drive_factor(term.drive, t);
            if f != 0.0 {
                h = &h + &(&term.op * f);
            }
        }
        h
    }

    /// Effective rate of dissipator `index` at time `t`.
    pub fn rate_at(&self, index: usize, t: f64) -> f64 {
        let term = &self.dissipators[index];
        let f = self.drive_factor(term.drive, t);
        term.rate * f * f
    }

    /// True when an attached envelope is used by some term and is not
    /// constant.
    pub fn is_time_dependent(&self) -> bool {
        let used = |c: DriveChannel| {
            self.hamiltonian.iter().any(|h| h.drive == Some(c))
                || self.dissipators.iter().any(|d| d.drive == Some(c))
        };
        self.envelopes.iter().any(|(c, e)| {
            used(*c) && e.points().iter().any(|p| p.1 != e.points()[0].1)
        })
    }

    /// Times where some envelope changes slope or jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.envelopes.values().flat_map(|e| e.knots()).collect();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        ts
    }

    /// Largest coefficient scale, used to pick default time steps.
    pub fn max_rate(&self) -> f64 {
        let h = self.hamiltonian_at(0.0).matrix().amax_norm();
        let d = self
            .dissipators
            .iter()
            .map(|t| {
                let l = t.collapse.matrix();
                t.rate * (l.adjoint() * l).amax_norm()
            })
            .fold(0.0, f64::max);
        h.max(d)
    }
}

trait AmaxNorm {
    fn amax_norm(&self) -> f64;
}

impl AmaxNorm for DMatrix<C64> {
    fn amax_norm(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Parameters of the single-mode model obtained after eliminating the
/// reservoir. Rates in rad/us.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub eps2: C64,
    pub kappa2: f64,
    pub kappa1: f64,
    pub chi_ss: f64,
    pub eps: C64,
    pub dim_s: usize,
}

/// Parameters of the storage-reservoir model. Rates in rad/us, `kappa_r` is
/// `1 / T1` of the reservoir.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullParams {
    pub g: C64,
    pub eps_r: C64,
    pub eps: C64,
    pub chi_rr: f64,
    pub chi_ss: f64,
    pub chi_rs: f64,
    pub delta_r: f64,
    pub delta_p: f64,
    pub kappa_r: f64,
    pub n_th: f64,
    pub kappa1: f64,
    pub dim_s: usize,
    pub dim_r: usize,
}

impl FullParams {
    /// `alpha_inf^2 = -eps_R / g` of the dark state `|±alpha> ⊗ |0>`.
    pub fn alpha_sq(&self) -> C64 {
        if self.g.norm() == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            -self.eps_r / self.g
        }
    }
}

/// Principal square root of `2 eps2 / kappa2`.
pub fn alpha_inf(eps2: C64, kappa2: f64) -> Result<C64> {
    if !(kappa2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa2 must be > 0, got {kappa2}"
        )));
    }
    Ok((eps2 * (2.0 / kappa2)).sqrt())
}

pub fn build_reduced(p: &ReducedParams) -> Result<LindbladModel> {
    let alpha = if p.eps2.norm() == 0.0 && p.kappa2 == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        alpha_inf(p.eps2, p.kappa2)?
    };
    check_truncation(alpha, p.dim_s)?;
    if p.kappa1 < 0.0 {
        return Err(Error::InvalidParameter("kappa1 must be >= 0".into()));
    }
    let a = annihilation(p.dim_s)?;
    let ad = a.adjoint();
    let id = identity(p.dim_s)?;
    let mut model = LindbladModel::new(a.spec().clone());

    let a2 = &a * &a;
    let kerr = &(&ad * &ad) * &a2;
    model.add_hamiltonian(&kerr * (-0.5 * p.chi_ss), None)?;
    let drive = &(&ad * p.eps) + &(&a * p.eps.conj());
    model.add_hamiltonian(drive, Some(DriveChannel::Zeno))?;

    if p.kappa2 > 0.0 {
        let l2 = &a2 - &(&id * (alpha * alpha));
        model.add_dissipator(l2, p.kappa2, Some(DriveChannel::Stabilization))?;
    }
    if p.kappa1 > 0.0 {
        model.add_dissipator(a, p.kappa1, None)?;
    }
    Ok(model)
}

/// Storage and reservoir ladder operators on the joint space, storage first.
pub fn joint_ladders(dim_s: usize, dim_r: usize) -> Result<(Operator, Operator)> {
    let a_s = tensor(&annihilation(dim_s)?, &identity(dim_r)?);
    let a_r = tensor(&identity(dim_s)?, &annihilation(dim_r)?);
    Ok((a_s, a_r))
}

pub fn build_full(p: &FullParams) -> Result<LindbladModel> {
    if !(p.kappa_r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa_R must be > 0, got {}",
            p.kappa_r
        )));
    }
    if !(p.n_th >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "n_th must be >= 0, got {}",
            p.n_th
        )));
    }
    check_truncation(p.alpha_sq().sqrt(), p.dim_s)?;
    let (a_s, a_r) = joint_ladders(p.dim_s, p.dim_r)?;
    let (as_d, ar_d) = (a_s.adjoint(), a_r.adjoint());
    let n_s = &as_d * &a_s;
    let n_r = &ar_d * &a_r;
    let as2 = &a_s * &a_s;
    let ar2 = &a_r * &a_r;
    let mut model = LindbladModel::new(a_s.spec().clone());

    let exchange = &(&(&as2 * &ar_d) * p.g) + &(&(&as2.adjoint() * &a_r) * p.g.conj());
    model.add_hamiltonian(exchange, Some(DriveChannel::Stabilization))?;
    let res_drive = &(&ar_d * p.eps_r) + &(&a_r * p.eps_r.conj());
    model.add_hamiltonian(res_drive, Some(DriveChannel::Stabilization))?;
    let zeno = &(&as_d * p.eps) + &(&a_s * p.eps.conj());
    model.add_hamiltonian(zeno, Some(DriveChannel::Zeno))?;

    let kerr_r = &(&ar_d * &ar_d) * &ar2;
    let kerr_s = &(&as_d * &as_d) * &as2;
    let cross = &n_r * &n_s;
    let mut stat = &kerr_r * (-0.5 * p.chi_rr);
    stat = &stat + &(&kerr_s * (-0.5 * p.chi_ss));
    stat = &stat + &(&cross * (-p.chi_rs));
    stat = &stat + &(&n_r * p.delta_r);
    stat = &stat + &(&n_s * (0.5 * (p.delta_r + p.delta_p)));
    model.add_hamiltonian(stat, None)?;

    if p.kappa1 > 0.0 {
        model.add_dissipator(a_s, p.kappa1, None)?;
    }
    model.add_dissipator(a_r.clone(), (1.0 + p.n_th) * p.kappa_r, None)?;
    if p.n_th > 0.0 {
        model.add_dissipator(ar_d, p.n_th * p.kappa_r, None)?;
    }
    Ok(model)
}

/// Seeds from adiabatic elimination of the reservoir.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub kappa2: f64,
    pub eps2: C64,
    /// Set when `kappa_R / |g| < 10`, where the elimination is unreliable.
    pub weak_separation: bool,
}

/// Eliminating `a_R ≈ -2i (g a_S^2 + eps_R) / kappa_R` gives a two-photon
/// channel with rate `4|g|^2/kappa_R` and collapse operator
/// `a_S^2 + eps_R/g`, i.e. `eps2 = -2 g* eps_R / kappa_R` in the
/// `alpha^2 = 2 eps2 / kappa2` parametrization.
pub fn effective_params(g: C64, eps_r: C64, kappa_r: f64) -> Result<EffectiveParams> {
    if !(kappa_r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa_R must be > 0, got {kappa_r}"
        )));
    }
    Ok(EffectiveParams {
        kappa2: 4.0 * g.norm_sqr() / kappa_r,
        eps2: -g.conj() * eps_r * (2.0 / kappa_r),
        weak_separation: g.norm() > 0.0 && kappa_r / g.norm() < 10.0,
    })
}

/// Inverse of the elimination rate: the exchange coupling giving `kappa2`.
pub fn coupling_for_kappa2(kappa2: f64, kappa_r: f64) -> f64 {
    (kappa2 * kappa_r / 4.0).sqrt()
}

/// Detunings `(Delta_R, Delta_P)` that cancel the mean-field Kerr and
/// cross-Kerr shifts of a cat with `nbar` photons: the reservoir sits on
/// its Stark-shifted resonance and the storage frame co-rotates with the
/// Kerr shift `chi_SS nbar`.
pub fn matched_detunings(chi_ss: f64, chi_rs: f64, nbar: f64) -> (f64, f64) {
    (chi_rs * nbar, (2.0 * chi_ss - chi_rs) * nbar)
}

/// `chi_RS = 2 chi_RR Delta_S / Delta_R` from measured Stark shifts.
pub fn stark_chi(chi_rr: f64, delta_s: f64, delta_r: f64) -> Result<f64> {
    if delta_r == 0.0 {
        return Err(Error::DivisionGuard(
            "reservoir Stark shift Delta_R is zero".into(),
        ));
    }
    Ok(2.0 * chi_rr * delta_s / delta_r)
}

/// Outcome of fitting the reduced model to a full-model run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kappa2_eff: f64,
    pub alpha_inf_eff: C64,
    /// Seeds the fit started from.
    pub seed: EffectiveParams,
    /// False when the run had no dynamics to fit (no reservoir drive); the
    /// rate is then the elimination seed.
    pub kappa2_fitted: bool,
    /// RMS mismatch of `<a_S^2>` between the two models.
    pub residual_rms: f64,
}

const CALIBRATION_SAMPLES: usize = 41;

/// Runs the full model from vacuum and extracts the effective two-photon rate
/// and amplitude seen by the storage.
pub fn calibrate_full_to_reduced(p: &FullParams, horizon: f64) -> Result<Calibration> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter("calibration horizon must be > 0".into()));
    }
    let seed = effective_params(p.g, p.eps_r, p.kappa_r)?;
    let mut quiet = p.clone();
    quiet.eps = C64::new(0.0, 0.0);
    let model = build_full(&quiet)?;
    let (a_s, _) = joint_ladders(p.dim_s, p.dim_r)?;
    let a2 = &a_s * &a_s;
    let vac = StateVector::fock(0, p.dim_s)?.tensor(&StateVector::fock(0, p.dim_r)?);
    let times: Vec<f64> = (0..CALIBRATION_SAMPLES)
        .map(|k| horizon * k as f64 / (CALIBRATION_SAMPLES - 1) as f64)
        .collect();
    let cfg = SolverConfig::default();
    let run = evolve(
        &model,
        &DensityMatrix::pure(&vac),
        &times,
        &cfg,
        &[("a2".to_string(), a2)],
    )?;
    let full_a2 = &run.expectations["a2"];
    let last = full_a2[CALIBRATION_SAMPLES - 1];
    let earlier = full_a2[(CALIBRATION_SAMPLES - 1) * 9 / 10];
    let scale = last.norm().max(1e-3);
    if (last - earlier).norm() > 1e-2 * scale {
        return Err(Error::CalibrationFailure(format!(
            "<a_S^2> still moving at the horizon: {earlier} -> {last} over the last 10% of {horizon} us"
        )));
    }
    let alpha_eff = last.sqrt();
    if last.norm() < 1e-6 {
        return Ok(Calibration {
            kappa2_eff: seed.kappa2,
            alpha_inf_eff: C64::new(0.0, 0.0),
            seed,
            kappa2_fitted: false,
            residual_rms: 0.0,
        });
    }

    let mismatch = |kappa2: f64| -> Result<f64> {
        let reduced = ReducedParams {
            eps2: last * (0.5 * kappa2),
            kappa2,
            kappa1: p.kappa1,
            chi_ss: p.chi_ss,
            eps: C64::new(0.0, 0.0),
            dim_s: p.dim_s,
        };
        let m = build_reduced(&reduced)?;
        let a = annihilation(p.dim_s)?;
        let r = evolve(
            &m,
            &DensityMatrix::pure(&StateVector::fock(0, p.dim_s)?),
            &times,
            &cfg,
            &[("a2".to_string(), &a * &a)],
        )?;
        let ss: f64 = r.expectations["a2"]
            .iter()
            .zip(full_a2)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        Ok((ss / CALIBRATION_SAMPLES as f64).sqrt())
    };

    // Golden-section search on log(kappa2) over a factor 8 either way.
    let (mut lo, mut hi) = ((seed.kappa2 / 8.0).ln(), (seed.kappa2 * 8.0).ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = mismatch(x1.exp())?;
    let mut f2 = mismatch(x2.exp())?;
    while hi - lo > 1e-3 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = mismatch(x1.exp())?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = mismatch(x2.exp())?;
        }
    }
    let best = 0.5 * (lo + hi);
    Ok(Calibration {
        kappa2_eff: best.exp(),
        alpha_inf_eff: alpha_eff,
        seed,
        kappa2_fitted: true,
        residual_rms: mismatch(best.exp())?,
    })
}

/// Pulse timings in us. The stabilization pumps ramp on, stay on through
/// `hold` and `tail`, then ramp off; the Zeno drive is on only during `hold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub ramp_on: f64,
    pub hold: f64,
    pub tail: f64,
    pub ramp_off: f64,
}

impl Protocol {
    pub fn new(ramp_on: f64, hold: f64, tail: f64, ramp_off: f64) -> Result<Self> {
        let p = Self {
            ramp_on,
            hold,
            tail,
            ramp_off,
        };
        p.validate()?;
        Ok(p)
    }

    /// 24 ns ramps and a 500 ns tail around a hold of `hold` us.
    pub fn standard(hold: f64) -> Self {
        Self {
            ramp_on: 0.024,
            hold,
            tail: 0.5,
            ramp_off: 0.024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ramp_on", self.ramp_on),
            ("hold", self.hold),
            ("tail", self.tail),
            ("ramp_off", self.ramp_off),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "protocol {name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn hold_start(&self) -> f64 {
        self.ramp_on
    }

    pub fn hold_end(&self) -> f64 {
        self.ramp_on + self.hold
    }

    pub fn total(&self) -> f64 {
        self.ramp_on + self.hold + self.tail + self.ramp_off
    }

    pub fn stabilization_envelope(&self) -> Envelope {
        let on = self.ramp_on;
        let off = on + self.hold + self.tail;
        Envelope {
            points: vec![(0.0, 0.0), (on, 1.0), (off, 1.0), (off + self.ramp_off, 0.0)],
        }
    }

    pub fn zeno_envelope(&self) -> Envelope {
        let (s, e) = (self.hold_start(), self.hold_end());
        Envelope {
            points: vec![(s, 0.0), (s, 1.0), (e, 1.0), (e, 0.0)],
        }
    }
}

pub fn apply_protocol(model: &LindbladModel, proto: &Protocol) -> Result<LindbladModel> {
    proto.validate()?;
    Ok(model
        .clone()
        .with_envelope(DriveChannel::Stabilization, proto.stabilization_envelope())
        .with_envelope(DriveChannel::Zeno, proto.zeno_envelope()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::parity;
    use crate::units::mhz_to_rad_per_us;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    // Two-sided form: (kappa/2)(2 L rho L† - L†L rho - rho L†L).
    fn two_sided(l: &DMatrix<C64>, kappa: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let ld = l.adjoint();
        let x = l * rho * &ld * c(2.0, 0.0) - &ld * l * rho - rho * &ld * l;
        x * c(kappa / 2.0, 0.0)
    }

    #[test]
    fn dissipator_convention_bridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(2..7);
            let l = random_matrix(&mut rng, n);
            let rho = random_matrix(&mut rng, n);
            let kappa = rng.random_range(0.0..5.0);
            let diff = gksl(&l, kappa, &rho) - two_sided(&l, kappa, &rho);
            assert!(diff.camax() <= 1e-13, "{}", diff.camax());
        }
    }

    fn reduced(nbar: f64) -> ReducedParams {
        let kappa2 = mhz_to_rad_per_us(0.176);
        ReducedParams {
            eps2: c(0.5 * kappa2 * nbar, 0.0),
            kappa2,
            kappa1: 0.0,
            chi_ss: 0.0,
            eps: c(0.0, 0.0),
            dim_s: 30,
        }
    }

    #[test]
    fn reduced_model_structure() {
        let mut p = reduced(2.0);
        p.kappa1 = 0.01;
        let m = build_reduced(&p).unwrap();
        assert_eq!(m.dissipators().len(), 2);
        assert_eq!(m.dissipators()[0].rate, p.kappa2);
        let alpha = alpha_inf(p.eps2, p.kappa2).unwrap();
        assert!((alpha * alpha - c(2.0, 0.0)).norm() < 1e-12);

        // |eps2|/2pi = 0.176 MHz gives nbar = 2 at kappa2/2pi = 0.176 MHz.
        assert!((p.eps2.norm() / mhz_to_rad_per_us(1.0) - 0.176).abs() < 1e-12);
    }

    #[test]
    fn undriven_reduced_model_conserves_parity() {
        let mut p = reduced(3.0);
        p.chi_ss = mhz_to_rad_per_us(0.003);
        let m = build_reduced(&p).unwrap();
        let par = parity(30).unwrap();
        assert!(m.hamiltonian_at(0.3).commutator(&par).max_abs() <= 1e-12);
        let l = &m.dissipators()[0].collapse;
        // a^2 - alpha^2 maps each sector into itself.
        let p_even = &(&identity(30).unwrap() + &par) * 0.5;
        let p_odd = &(&identity(30).unwrap() - &par) * 0.5;
        assert!((&(&p_odd * l) * &p_even).max_abs() <= 1e-12);
        assert!((&(&p_even * l) * &p_odd).max_abs() <= 1e-12);
    }

    #[test]
    fn reduced_guard() {
        let mut p = reduced(8.0);
        p.dim_s = 30;
        assert!(matches!(build_reduced(&p), Err(Error::TruncationGuard { .. })));
    }

    #[test]
    fn alpha_inf_cases() {
        assert!((alpha_inf(c(0.5, 0.0), 1.0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let a = alpha_inf(c(1.3, 0.0), 1.3).unwrap();
        assert!((a.norm_sqr() - 2.0).abs() < 1e-14);
        let b = alpha_inf(c(-0.5, 0.0), 1.0).unwrap();
        assert!(b.re.abs() < 1e-15 && (b.im - 1.0).abs() < 1e-15);
        assert!(alpha_inf(c(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn elimination_seeds() {
        let z = effective_params(c(0.0, 0.0), c(1.0, 0.0), 3.0).unwrap();
        assert_eq!(z.kappa2, 0.0);
        assert_eq!(z.eps2, c(0.0, 0.0));

        let kappa_r = 1.0 / 0.317;
        assert!((kappa_r / mhz_to_rad_per_us(1.0) - 0.502).abs() < 1e-3);
        let g = coupling_for_kappa2(mhz_to_rad_per_us(0.176), kappa_r);
        assert!((g / mhz_to_rad_per_us(1.0) - 0.149).abs() < 1e-3);

        let e1 = effective_params(c(g, 0.0), c(-2.0 * g, 0.0), kappa_r).unwrap();
        let e2 = effective_params(c(2.0 * g, 0.0), c(-2.0 * g, 0.0), kappa_r).unwrap();
        assert!((e2.kappa2 / e1.kappa2 - 4.0).abs() < 1e-12);
        assert!(e1.weak_separation);
        // Consistency with the dark state: 2 eps2 / kappa2 = -eps_R / g.
        let gc = c(0.3, 0.4);
        let er = c(-0.2, 0.9);
        let e = effective_params(gc, er, 50.0).unwrap();
        assert!((e.eps2 * (2.0 / e.kappa2) - (-er / gc)).norm() < 1e-12);
        assert!(!e.weak_separation);

        assert!(effective_params(c(1.0, 0.0), c(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn stark_chi_cases() {
        assert_eq!(stark_chi(1.0, 0.0, 2.0).unwrap(), 0.0);
        let chi_rr = mhz_to_rad_per_us(86.0);
        let chi = stark_chi(chi_rr, 0.471, 2.0 * 86.0).unwrap();
        assert!((chi / mhz_to_rad_per_us(1.0) - 0.471).abs() < 1e-12);
        assert_eq!(stark_chi(3.0, 0.2, 0.5).unwrap(), stark_chi(3.0, 0.4, 1.0).unwrap());
        assert!(matches!(stark_chi(1.0, 1.0, 0.0), Err(Error::DivisionGuard(_))));
    }

    fn full_params() -> FullParams {
        let kappa_r = 1.0 / 0.317;
        let g = coupling_for_kappa2(mhz_to_rad_per_us(0.176), kappa_r);
        FullParams {
            g: c(g, 0.0),
            eps_r: c(-2.0 * g, 0.0),
            eps: c(0.01, 0.0),
            chi_rr: mhz_to_rad_per_us(86.0),
            chi_ss: mhz_to_rad_per_us(0.003),
            chi_rs: mhz_to_rad_per_us(0.471),
            delta_r: 0.1,
            delta_p: -0.05,
            kappa_r,
            n_th: 0.015,
            kappa1: mhz_to_rad_per_us(0.0017),
            dim_s: 10,
            dim_r: 3,
        }
    }

    #[test]
    fn full_model_structure() {
        let p = full_params();
        let m = build_full(&p).unwrap();
        assert_eq!(m.spec().mode_dims(), &[10, 3]);
        assert_eq!(m.dissipators().len(), 3);
        assert!((m.dissipators()[1].rate - 1.015 / 0.317).abs() < 1e-12);
        assert!((m.dissipators()[2].rate - 0.015 / 0.317).abs() < 1e-12);
        assert!((p.alpha_sq() - c(2.0, 0.0)).norm() < 1e-12);

        let mut bad = p.clone();
        bad.kappa_r = 0.0;
        assert!(build_full(&bad).is_err());
    }

    #[test]
    fn hamiltonians_hermitian_at_random_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let full = apply_protocol(&build_full(&full_params()).unwrap(), &Protocol::standard(1.0)).unwrap();
        let mut rp = reduced(2.0);
        rp.eps = c(0.02, -0.01);
        rp.chi_ss = 0.02;
        let red = apply_protocol(&build_reduced(&rp).unwrap(), &Protocol::standard(1.0)).unwrap();
        for _ in 0..100 {
            let t = rng.random_range(-0.1..2.0);
            assert!(full.hamiltonian_at(t).is_hermitian(1e-10));
            assert!(red.hamiltonian_at(t).is_hermitian(1e-10));
        }
    }

    #[test]
    fn protocol_envelopes() {
        let p = Protocol::standard(2.0);
        let s = p.stabilization_envelope();
        assert!((s.value(0.012) - 0.5).abs() < 1e-12);
        assert_eq!(s.value(1.0), 1.0);
        assert_eq!(s.value(p.total() + 1.0), 0.0);
        assert!((s.value(p.total() - 0.012) - 0.5).abs() < 1e-9);
        let z = p.zeno_envelope();
        assert_eq!(z.value(0.0), 0.0);
        assert_eq!(z.value(0.024), 1.0);
        assert_eq!(z.value(2.024), 0.0);
        // Left limit at the hold end is still "on" for a step ending there.
        assert_eq!(z.value_on_piece(1.0, 2.024), 1.0);

        // Zero-length ramps switch instantaneously.
        let inst = Protocol::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(inst.stabilization_envelope().value(0.0), 1.0);
        assert_eq!(inst.stabilization_envelope().value(0.5), 1.0);
        assert_eq!(inst.stabilization_envelope().value(1.0), 0.0);
        assert_eq!(inst.zeno_envelope().value(0.0), 1.0);

        assert!(Protocol::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn protocol_scales_rates_quadratically() {
        let m = apply_protocol(&build_reduced(&reduced(2.0)).unwrap(), &Protocol::standard(1.0)).unwrap();
        assert!(m.is_time_dependent());
        let k = m.dissipators()[0].rate;
        assert!((m.rate_at(0, 0.012) - 0.25 * k).abs() < 1e-12);
        assert!(!build_reduced(&reduced(2.0)).unwrap().is_time_dependent());
    }

    proptest! {
        #[test]
        fn gksl_bridge_holds(seed in 0u64..1000, kappa in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = random_matrix(&mut rng, 4);
            let rho = random_matrix(&mut rng, 4);
            let diff = gksl(&l, kappa, &rho) - two_sided(&l, kappa, &rho);
            prop_assert!(diff.camax() <= 1e-13);
        }

        #[test]
        fn envelope_stays_in_unit_interval(ramp in 0.0f64..0.1, hold in 0.0f64..3.0, t in -1.0f64..5.0) {
            let p = Protocol::new(ramp, hold, 0.5, ramp).unwrap();
            for e in [p.stabilization_envelope(), p.zeno_envelope()] {
                let v = e.value(t);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
