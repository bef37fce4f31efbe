//! Scenario runners: parity oscillations, drive sweeps, Wigner snapshots,
//! cardinal-point gates, thermal phase flips and frequency matching.
//!
//! Drive strengths are given as multiples of `eps0` and mean the rotation
//! rate convention `Omega = 2 eps |alpha|`. The single-photon Hamiltonian
//! term `eps_H a† + h.c.` that produces this rate has `eps_H = eps / 2`,
//! in phase with `alpha` (plus the configured `zeno_phase`).

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{evolve, EvolutionResult, Physicality, SolverConfig};
use crate::fit::{fit_decaying_cosine, FitResult};
use crate::fock::{
    cat_state, coherent_state, identity, parity, tensor, thermal_state, DensityMatrix, Operator,
    StateVector,
};
use crate::model::{
    apply_protocol, build_full, build_reduced, coupling_for_kappa2, FullParams, LindbladModel, matched_detunings,
    Protocol, ReducedParams,
};
use crate::tomography::{
    bloch_vector, linspace, logical_basis, phase_flip_leakage, wigner_grid, wigner_point,
    BlochVector, LogicalBasis, Normalization, WignerGrid,
};
use crate::units::{mhz_to_rad_per_us, rate_from_lifetime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Reduced,
    Full,
}

/// Storage state at the start of a run; amplitudes follow `alpha = sqrt(nbar)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `N(|alpha> + e^{i phi}|-alpha>)`.
    Cat { phi: f64 },
    /// `|alpha>` or `|-alpha>`.
    Coherent { negative: bool },
    /// `cos(theta/2) C+ + sin(theta/2) e^{i phi} C-`.
    Cardinal { theta: f64, phi: f64 },
}

/// Device constants in rad/us.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub kappa2: f64,
    pub kappa1: f64,
    pub chi_ss: f64,
    pub chi_rr: f64,
    pub chi_rs: f64,
    pub kappa_r: f64,
    pub n_th: f64,
    pub delta_r: f64,
    pub delta_p: f64,
    pub dim_s: usize,
    pub dim_r: usize,
}

impl DeviceParams {
    pub fn standard() -> Self {
        Self {
            kappa2: mhz_to_rad_per_us(0.176),
            kappa1: mhz_to_rad_per_us(0.0017),
            chi_ss: mhz_to_rad_per_us(0.003),
            chi_rr: mhz_to_rad_per_us(86.0),
            chi_rs: mhz_to_rad_per_us(0.471),
            kappa_r: rate_from_lifetime(0.317),
            n_th: 0.015,
            delta_r: 0.0,
            delta_p: 0.0,
            dim_s: 30,
            dim_r: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSettings {
    pub nbar: f64,
    pub drive_multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerSettings {
    pub nbar: f64,
    pub drive_multiplier: f64,
    /// Half-width of the square grid in phase-space units.
    pub extent: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFlipSettings {
    pub nbar_list: Vec<f64>,
    pub n_th_list: Vec<f64>,
    pub horizon: f64,
    pub sample_count: usize,
    /// Offset the detunings to the mean-field Stark-shifted matching point
    /// of each `nbar`.
    pub stark_matched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingSettings {
    pub nbar: f64,
    /// Pump-amplitude proxy: multiplies both `g` and `eps_R`.
    pub amplitude_scales: Vec<f64>,
    /// Reservoir detunings `Delta_R` in rad/us.
    pub detunings: Vec<f64>,
    /// Hold time in units of `1 / kappa2`.
    pub hold_kappa2_units: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSettings {
    pub dir: Option<std::path::PathBuf>,
    pub format: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub device: DeviceParams,
    /// Ramps and tail; the hold is set per scenario.
    pub protocol: Protocol,
    pub initial: InitialState,
    pub nbar_list: Vec<f64>,
    pub drive_multipliers: Vec<f64>,
    pub eps0: f64,
    /// Phase of the Zeno drive relative to `alpha`, in rad.
    pub zeno_phase: f64,
    pub horizon: f64,
    pub sample_count: usize,
    pub numerics: SolverConfig,
    pub gate: GateSettings,
    pub wigner: WignerSettings,
    pub phase_flip: PhaseFlipSettings,
    pub matching: MatchingSettings,
    pub output: OutputSettings,
}

impl ExperimentConfig {
    /// Same values as the `paper-device` preset.
    pub fn standard() -> Self {
        Self {
            model: ModelKind::Reduced,
            device: DeviceParams::standard(),
            protocol: Protocol::standard(0.0),
            initial: InitialState::Cat { phi: 0.0 },
            nbar_list: vec![2.0, 3.0, 5.0],
            drive_multipliers: (0..=6).map(f64::from).collect(),
            eps0: mhz_to_rad_per_us(0.007),
            zeno_phase: 0.0,
            horizon: 50.0,
            sample_count: 201,
            numerics: SolverConfig::default(),
            gate: GateSettings {
                nbar: 3.0,
                drive_multiplier: 6.0,
            },
            wigner: WignerSettings {
                nbar: 3.0,
                drive_multiplier: 6.0,
                extent: 3.5,
                points: 71,
            },
            phase_flip: PhaseFlipSettings {
                nbar_list: vec![2.0, 3.0, 5.0],
                n_th_list: vec![0.0, 0.015],
                horizon: 50.0,
                sample_count: 51,
                stark_matched: true,
            },
            matching: MatchingSettings {
                nbar: 2.0,
                amplitude_scales: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25],
                detunings: linspace(-2.0, 2.0, 9).into_iter().map(mhz_to_rad_per_us).collect(),
                hold_kappa2_units: 5.0,
            },
            output: OutputSettings {
                dir: None,
                format: "csv".into(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.horizon > 0.0) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.sample_count < 2 {
            return bad(format!("sample_count must be >= 2, got {}", self.sample_count));
        }
        if self.nbar_list.iter().any(|n| !(*n > 0.0)) {
            return bad("nbar values must be > 0".into());
        }
        if self.drive_multipliers.iter().any(|m| !m.is_finite()) {
            return bad("drive multipliers must be finite".into());
        }
        if !(self.device.kappa2 > 0.0) || !(self.device.kappa_r > 0.0) {
            return bad("kappa2 and kappa_R must be > 0".into());
        }
        if !(self.phase_flip.horizon > 0.0) || self.phase_flip.sample_count < 2 {
            return bad("phase-flip horizon must be > 0 with at least 2 samples".into());
        }
        if self.wigner.points < 1 || !(self.wigner.extent > 0.0) {
            return bad("Wigner grid needs points >= 1 and extent > 0".into());
        }
        self.protocol.validate()?;
        self.numerics.validate()
    }

    pub fn alpha(nbar: f64) -> C64 {
        C64::new(nbar.sqrt(), 0.0)
    }

    /// Hamiltonian amplitude for an operational drive `eps` (rad/us).
    pub fn zeno_amplitude(&self, eps: f64, alpha: C64) -> C64 {
        C64::from_polar(0.5 * eps, alpha.arg() + self.zeno_phase)
    }

    pub fn reduced_params(&self, nbar: f64, eps: f64) -> ReducedParams {
        let d = &self.device;
        ReducedParams {
            eps2: C64::new(0.5 * d.kappa2 * nbar, 0.0),
            kappa2: d.kappa2,
            kappa1: d.kappa1,
            chi_ss: d.chi_ss,
            eps: self.zeno_amplitude(eps, Self::alpha(nbar)),
            dim_s: d.dim_s,
        }
    }

    /// Full-model parameters whose eliminated rate is `kappa2` and whose dark
    /// state is `|sqrt(nbar)> ⊗ |0>`.
    pub fn full_params(&self, nbar: f64, eps: f64, n_th: f64) -> FullParams {
        let d = &self.device;
        let g = coupling_for_kappa2(d.kappa2, d.kappa_r);
        FullParams {
            g: C64::new(g, 0.0),
            eps_r: C64::new(-g * nbar, 0.0),
            eps: self.zeno_amplitude(eps, Self::alpha(nbar)),
            chi_rr: d.chi_rr,
            chi_ss: d.chi_ss,
            chi_rs: d.chi_rs,
            delta_r: d.delta_r,
            delta_p: d.delta_p,
            kappa_r: d.kappa_r,
            n_th,
            kappa1: d.kappa1,
            dim_s: d.dim_s,
            dim_r: d.dim_r,
        }
    }

    pub fn build_model(&self, kind: ModelKind, nbar: f64, eps: f64, n_th: f64) -> Result<LindbladModel> {
        match kind {
            ModelKind::Reduced => build_reduced(&self.reduced_params(nbar, eps)),
            ModelKind::Full => build_full(&self.full_params(nbar, eps, n_th)),
        }
    }

    fn storage_op(&self, kind: ModelKind, op: Operator) -> Result<Operator> {
        Ok(match kind {
            ModelKind::Reduced => op,
            ModelKind::Full => tensor(&op, &identity(self.device.dim_r)?),
        })
    }

    fn embed(&self, kind: ModelKind, psi: &StateVector, n_th: f64) -> Result<DensityMatrix> {
        let rho = DensityMatrix::pure(psi);
        Ok(match kind {
            ModelKind::Reduced => rho,
            ModelKind::Full => rho.tensor(&thermal_state(n_th, self.device.dim_r)?),
        })
    }

    fn initial_vector(&self, initial: InitialState, nbar: f64) -> Result<StateVector> {
        let alpha = Self::alpha(nbar);
        let dim = self.device.dim_s;
        match initial {
            InitialState::Cat { phi } => cat_state(alpha, phi, dim),
            InitialState::Coherent { negative } => coherent_state(if negative { -alpha } else { alpha }, dim),
            InitialState::Cardinal { theta, phi } => logical_basis(alpha, dim)?.state(theta, phi),
        }
    }
}

fn storage(kind: ModelKind, rho: &DensityMatrix) -> Result<DensityMatrix> {
    match kind {
        ModelKind::Reduced => Ok(rho.clone()),
        ModelKind::Full => rho.partial_trace(0),
    }
}

/// Parity trace for one `(nbar, multiplier)` point. `times` are measured
/// from the moment the Zeno drive switches on.
#[derive(Clone, Debug)]
pub struct ParityRun {
    pub nbar: f64,
    pub multiplier: f64,
    pub times: Vec<f64>,
    pub parity: Vec<f64>,
    pub result: EvolutionResult,
}

fn parity_run(cfg: &ExperimentConfig, nbar: f64, multiplier: f64) -> Result<ParityRun> {
    let kind = cfg.model;
    let eps = multiplier * cfg.eps0;
    let proto = Protocol { hold: cfg.horizon, ..cfg.protocol };
    let model = apply_protocol(&cfg.build_model(kind, nbar, eps, cfg.device.n_th)?, &proto)?;
    let rho0 = cfg.embed(kind, &cfg.initial_vector(cfg.initial, nbar)?, cfg.device.n_th)?;
    let rel = linspace(0.0, cfg.horizon, cfg.sample_count);
    let abs: Vec<f64> = rel.iter().map(|t| t + proto.hold_start()).collect();
    let p = cfg.storage_op(kind, parity(cfg.device.dim_s)?)?;
    let result = evolve(&model, &rho0, &abs, &cfg.numerics, &[("parity".to_string(), p)])?;
    let parity = result.expectations["parity"].iter().map(|z| z.re).collect();
    Ok(ParityRun {
        nbar,
        multiplier,
        times: rel,
        parity,
        result,
    })
}

/// One run per `(nbar, multiplier)` pair, ordered nbar-major.
pub fn run_parity_oscillation(cfg: &ExperimentConfig) -> Result<Vec<ParityRun>> {
    cfg.validate()?;
    let jobs: Vec<(f64, f64)> = cfg
        .nbar_list
        .iter()
        .flat_map(|&n| cfg.drive_multipliers.iter().map(move |&m| (n, m)))
        .collect();
    jobs.par_iter().map(|&(n, m)| parity_run(cfg, n, m)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RabiRow {
    pub nbar: f64,
    pub multiplier: f64,
    pub omega: f64,
    pub tau: f64,
    pub tau_ratio: f64,
    pub fit: FitResult,
}

/// Fits every parity trace and normalizes decay times by the undriven one.
pub fn run_rabi_sweep(cfg: &ExperimentConfig) -> Result<(Vec<RabiRow>, Vec<ParityRun>)> {
    if !cfg.drive_multipliers.contains(&0.0) {
        return Err(Error::InvalidParameter(
            "drive_multipliers must include 0 to define the undriven decay time".into(),
        ));
    }
    let runs = run_parity_oscillation(cfg)?;
    let fits: Vec<FitResult> = runs
        .par_iter()
        .map(|r| fit_decaying_cosine(&r.times, &r.parity))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(runs.len());
    for (r, f) in runs.iter().zip(&fits) {
        let tau0 = runs
            .iter()
            .zip(&fits)
            .find(|(q, _)| q.nbar == r.nbar && q.multiplier == 0.0)
            .map(|(_, f0)| f0.tau)
            .expect("zero multiplier present");
        rows.push(RabiRow {
            nbar: r.nbar,
            multiplier: r.multiplier,
            omega: f.omega,
            tau: f.tau,
            tau_ratio: if r.multiplier == 0.0 { 1.0 } else { f.tau / tau0 },
            fit: *f,
        });
    }
    Ok((rows, runs))
}

/// `(pi/2) / Omega` with `Omega = 2 eps |alpha|`.
pub fn quarter_period(eps: f64, nbar: f64) -> f64 {
    FRAC_PI_2 / (2.0 * eps * nbar.sqrt())
}

#[derive(Clone, Debug)]
pub struct WignerSnapshot {
    pub label: &'static str,
    pub before: WignerGrid,
    pub after: WignerGrid,
    pub parity_before: f64,
    pub parity_after: f64,
    /// Quasi-probability values at `+alpha` and `-alpha`.
    pub lobes_before: [f64; 2],
    pub lobes_after: [f64; 2],
    /// Values along `Re(beta) = 0` at `cut_axis`.
    pub cut_before: Vec<f64>,
    pub cut_after: Vec<f64>,
    pub physicality: Physicality,
}

#[derive(Clone, Debug)]
pub struct TomographyReport {
    pub nbar: f64,
    pub hold: f64,
    pub cut_axis: Vec<f64>,
    pub snapshots: Vec<WignerSnapshot>,
}

fn protocol_run(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    nbar: f64,
    eps: f64,
    hold: f64,
    psi: &StateVector,
) -> Result<(DensityMatrix, EvolutionResult)> {
    let proto = Protocol { hold, ..cfg.protocol };
    let model = apply_protocol(&cfg.build_model(kind, nbar, eps, cfg.device.n_th)?, &proto)?;
    let rho0 = cfg.embed(kind, psi, cfg.device.n_th)?;
    let times = if proto.total() > 0.0 { vec![0.0, proto.total()] } else { vec![0.0] };
    let run = evolve(&model, &rho0, &times, &cfg.numerics, &[])?;
    Ok((storage(kind, &run.final_state)?, run))
}

/// Evolves `C+` and `C-` through the protocol with a hold of a quarter
/// rotation and records Wigner functions before and after.
pub fn run_wigner_tomography(cfg: &ExperimentConfig) -> Result<TomographyReport> {
    cfg.validate()?;
    let w = &cfg.wigner;
    let eps = w.drive_multiplier * cfg.eps0;
    let hold = if eps > 0.0 { quarter_period(eps, w.nbar) } else { 0.0 };
    let alpha = ExperimentConfig::alpha(w.nbar);
    let axis = linspace(-w.extent, w.extent, w.points);
    let cut_axis = axis.clone();
    let qp = Normalization::QuasiProbability;
    let snapshots = [("C+", 0.0), ("C-", PI)]
        .par_iter()
        .map(|&(label, phi)| -> Result<WignerSnapshot> {
            let psi = cat_state(alpha, phi, cfg.device.dim_s)?;
            let before = DensityMatrix::pure(&psi);
            let (after, run) = protocol_run(cfg, cfg.model, w.nbar, eps, hold, &psi)?;
            let cut = |rho: &DensityMatrix| -> Result<Vec<f64>> {
                cut_axis.iter().map(|&y| wigner_point(rho, C64::new(0.0, y), qp)).collect()
            };
            let lobes = |rho: &DensityMatrix| -> Result<[f64; 2]> {
                Ok([wigner_point(rho, alpha, qp)?, wigner_point(rho, -alpha, qp)?])
            };
            let par = |rho: &DensityMatrix| wigner_point(rho, C64::new(0.0, 0.0), Normalization::Parity);
            Ok(WignerSnapshot {
                label,
                before: wigner_grid(&before, &axis, &axis, qp)?,
                after: wigner_grid(&after, &axis, &axis, qp)?,
                parity_before: par(&before)?,
                parity_after: par(&after)?,
                lobes_before: lobes(&before)?,
                lobes_after: lobes(&after)?,
                cut_before: cut(&before)?,
                cut_after: cut(&after)?,
                physicality: run.physicality,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TomographyReport {
        nbar: w.nbar,
        hold,
        cut_axis,
        snapshots,
    })
}

/// Rotation by `+pi/2` about the logical X axis: `(x, y, z) -> (x, -z, y)`.
pub fn rotate_x_quarter(v: [f64; 3]) -> [f64; 3] {
    [v[0], -v[2], v[1]]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CardinalPoint {
    pub label: String,
    pub ideal: [f64; 3],
    pub before: BlochVector,
    pub identity: BlochVector,
    pub gate: BlochVector,
    /// Distance from `gate` to the rotated `identity` vector.
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateReport {
    pub nbar: f64,
    pub gate_time: f64,
    /// First time the parity of `C+` crosses zero under the drive.
    pub zero_crossing: Option<f64>,
    pub points: Vec<CardinalPoint>,
    /// Worst over every run behind the report.
    pub physicality: Physicality,
}

/// Linear interpolation of the first downward zero of `y`.
pub fn first_zero_crossing(t: &[f64], y: &[f64]) -> Option<f64> {
    (1..y.len()).find(|&k| y[k - 1] > 0.0 && y[k] <= 0.0).map(|k| {
        let f = y[k - 1] / (y[k - 1] - y[k]);
        t[k - 1] + f * (t[k] - t[k - 1])
    })
}

/// Six cardinal states through a `pi/2` gate and through an equally long
/// undriven hold.
pub fn run_cardinal_gate(cfg: &ExperimentConfig) -> Result<GateReport> {
    cfg.validate()?;
    let g = &cfg.gate;
    let eps = g.drive_multiplier * cfg.eps0;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("gate drive multiplier must be > 0".into()));
    }
    let gate_time = quarter_period(eps, g.nbar);
    let basis: LogicalBasis = logical_basis(ExperimentConfig::alpha(g.nbar), cfg.device.dim_s)?;
    let states = basis.cardinal_states()?;
    let runs = states
        .par_iter()
        .map(|(label, psi, ideal)| -> Result<(CardinalPoint, Physicality)> {
            let before = bloch_vector(&DensityMatrix::pure(psi), &basis)?;
            let (id_rho, id_run) = protocol_run(cfg, cfg.model, g.nbar, 0.0, gate_time, psi)?;
            let (gate_rho, gate_run) = protocol_run(cfg, cfg.model, g.nbar, eps, gate_time, psi)?;
            let identity = bloch_vector(&id_rho, &basis)?;
            let gate = bloch_vector(&gate_rho, &basis)?;
            let point = CardinalPoint {
                label: label.to_string(),
                ideal: *ideal,
                before,
                identity,
                gate,
                distance: gate.distance(rotate_x_quarter(identity.as_array())),
            };
            Ok((point, id_run.physicality.merge(gate_run.physicality)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trace_cfg = cfg.clone();
    trace_cfg.initial = InitialState::Cat { phi: 0.0 };
    trace_cfg.horizon = 2.0 * gate_time;
    trace_cfg.sample_count = 801;
    let trace = parity_run(&trace_cfg, g.nbar, g.drive_multiplier)?;
    let physicality = runs
        .iter()
        .fold(trace.result.physicality, |acc, (_, p)| acc.merge(*p));
    Ok(GateReport {
        nbar: g.nbar,
        gate_time,
        zero_crossing: first_zero_crossing(&trace.times, &trace.parity),
        points: runs.into_iter().map(|(p, _)| p).collect(),
        physicality,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeakageCurve {
    pub nbar: f64,
    pub n_th: f64,
    pub times: Vec<f64>,
    pub leakage: Vec<f64>,
    pub physicality: Physicality,
    /// Flip rate `-ln[(1 - 2L(T)) / (1 - 2L(0))] / (2T)` over the horizon.
    pub rate: f64,
}

/// Starts in `|alpha> ⊗ thermal(n_th)` with the pumps on and tracks the
/// weight of the opposite lobe.
pub fn run_phase_flip(cfg: &ExperimentConfig) -> Result<Vec<LeakageCurve>> {
    cfg.validate()?;
    let pf = &cfg.phase_flip;
    let jobs: Vec<(f64, f64)> = pf
        .nbar_list
        .iter()
        .flat_map(|&n| pf.n_th_list.iter().map(move |&t| (n, t)))
        .collect();
    jobs.par_iter()
        .map(|&(nbar, n_th)| -> Result<LeakageCurve> {
            let alpha = ExperimentConfig::alpha(nbar);
            let mut p = cfg.full_params(nbar, 0.0, n_th);
            if pf.stark_matched {
                let (dr, dp) = matched_detunings(p.chi_ss, p.chi_rs, nbar);
                p.delta_r += dr;
                p.delta_p += dp;
            }
            let model = build_full(&p)?;
            let rho0 = cfg.embed(ModelKind::Full, &coherent_state(alpha, cfg.device.dim_s)?, n_th)?;
            let times = linspace(0.0, pf.horizon, pf.sample_count);
            let numerics = SolverConfig {
                store_states: true,
                ..cfg.numerics.clone()
            };
            let run = evolve(&model, &rho0, &times, &numerics, &[])?;
            let leakage = run
                .states
                .as_ref()
                .expect("states stored")
                .iter()
                .map(|rho| phase_flip_leakage(&rho.partial_trace(0)?, alpha))
                .collect::<Result<Vec<f64>>>()?;
            let last = leakage[leakage.len() - 1];
            let rate = -((1.0 - 2.0 * last) / (1.0 - 2.0 * leakage[0])).ln() / (2.0 * pf.horizon);
            Ok(LeakageCurve {
                nbar,
                n_th,
                times,
                leakage,
                rate,
                physicality: run.physicality,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchingMap {
    pub amplitude_scales: Vec<f64>,
    pub detunings: Vec<f64>,
    pub hold: f64,
    /// Row-major, one row per amplitude scale.
    pub vacuum_overlap: Vec<f64>,
}

impl MatchingMap {
    pub fn get(&self, i_scale: usize, j_detuning: usize) -> f64 {
        self.vacuum_overlap[i_scale * self.detunings.len() + j_detuning]
    }
}

/// Vacuum population of the storage after a fixed hold from the joint
/// vacuum, over a grid of pump-amplitude proxies and reservoir detunings.
pub fn run_frequency_matching_sweep(cfg: &ExperimentConfig) -> Result<MatchingMap> {
    cfg.validate()?;
    let m = &cfg.matching;
    let hold = m.hold_kappa2_units / cfg.device.kappa2;
    let nd = m.detunings.len();
    let base = cfg.full_params(m.nbar, 0.0, cfg.device.n_th);
    let vacuum = StateVector::fock(0, cfg.device.dim_s)?;
    let rho0 = cfg.embed(ModelKind::Full, &vacuum, 0.0)?;
    let vacuum_overlap = (0..m.amplitude_scales.len() * nd)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let s = m.amplitude_scales[k / nd];
            let mut p = base.clone();
            p.g *= s;
            p.eps_r *= s;
            p.delta_r = m.detunings[k % nd];
            let run = evolve(&build_full(&p)?, &rho0, &[0.0, hold], &cfg.numerics, &[])?;
            Ok(run.final_state.partial_trace(0)?.matrix()[(0, 0)].re)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchingMap {
        amplitude_scales: m.amplitude_scales.clone(),
        detunings: m.detunings.clone(),
        hold,
        vacuum_overlap,
    })
}
