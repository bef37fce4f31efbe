//! Damped-cosine least squares for parity traces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use std::f64::consts::PI;

/// `amplitude * exp(-t/tau) * cos(omega t + phase) + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub omega: f64,
    pub tau: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    pub residual_rms: f64,
    pub converged: bool,
}

impl FitResult {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.tau).exp() * (self.omega * t + self.phase).cos() + self.offset
    }
}

pub const MIN_SAMPLES: usize = 8;

// Parameter vectors: damped cosine [A, gamma, omega, phi, B]; exponential [A, gamma, B].
fn cosine_model(p: &[f64], t: f64, grad: &mut [f64]) -> f64 {
    let (a, g, w, ph, b) = (p[0], p[1], p[2], p[3], p[4]);
    let e = (-g * t).exp();
    let (s, c) = (w * t + ph).sin_cos();
    grad[0] = e * c;
    grad[1] = -t * a * e * c;
    grad[2] = -t * a * e * s;
    grad[3] = -a * e * s;
    grad[4] = 1.0;
    a * e * c + b
}

fn exp_model(p: &[f64], t: f64, grad: &mut [f64]) -> f64 {
    let e = (-p[1] * t).exp();
    grad[0] = e;
    grad[1] = -t * p[0] * e;
    grad[2] = 1.0;
    p[0] * e + p[2]
}

type Model = fn(&[f64], f64, &mut [f64]) -> f64;

struct LmOutcome {
    params: Vec<f64>,
    cost: f64,
    start_cost: f64,
    covariance_finite: bool,
}

fn cost_of(model: Model, p: &[f64], t: &[f64], y: &[f64], g: &mut [f64]) -> f64 {
    t.iter().zip(y).map(|(&ti, &yi)| (model(p, ti, g) - yi).powi(2)).sum()
}

fn levenberg_marquardt(model: Model, start: &[f64], t: &[f64], y: &[f64]) -> LmOutcome {
    let np = start.len();
    let n = t.len();
    let mut p = start.to_vec();
    let mut g = vec![0.0; np];
    let start_cost = cost_of(model, &p, t, y, &mut g);
    let mut cost = start_cost;
    let mut lambda = 1e-3;
    let mut jac = DMatrix::<f64>::zeros(n, np);
    let mut res = DVector::<f64>::zeros(n);
    for _ in 0..2000 {
        for (i, (&ti, &yi)) in t.iter().zip(y).enumerate() {
            res[i] = yi - model(&p, ti, &mut g);
            for k in 0..np {
                jac[(i, k)] = g[k];
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let c = cost_of(model, &trial, t, y, &mut g);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    for (i, &ti) in t.iter().enumerate() {
        model(&p, ti, &mut g);
        for k in 0..np {
            jac[(i, k)] = g[k];
        }
    }
    let covariance_finite = (jac.transpose() * &jac)
        .try_inverse()
        .is_some_and(|inv| inv.iter().all(|v| v.is_finite()) && (0..np).all(|k| inv[(k, k)] >= 0.0));
    LmOutcome {
        params: p,
        cost,
        start_cost,
        covariance_finite,
    }
}

/// Angular frequency of the largest peak in the zero-padded spectrum of the
/// mean-removed series, excluding the zero bin.
fn spectral_peak(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let mean = y.iter().sum::<f64>() / n as f64;
    let m = 8 * n;
    let mut best = (0.0, 0.0);
    for k in 1..m / 2 {
        let w = 2.0 * PI * k as f64 / (m as f64 * dt);
        let (mut re, mut im) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let (s, c) = (w * (ti - t[0])).sin_cos();
            re += (yi - mean) * c;
            im += (yi - mean) * s;
        }
        let pow = re * re + im * im;
        if pow > best.1 {
            best = (w, pow);
        }
    }
    best.0
}

/// Decay rate from a straight-line fit of `ln|y - offset|`.
fn log_envelope_rate(t: &[f64], y: &[f64], offset: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, v)| (*v - offset).abs() > 1e-12)
        .map(|(ti, v)| (*ti, (v - offset).abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Decay time from log-linear regression on `|y|`, for non-oscillating
/// traces that relax to zero.
pub fn log_linear_tau(times: &[f64], values: &[f64]) -> Option<f64> {
    log_envelope_rate(times, values, 0.0).filter(|g| *g > 0.0).map(|g| 1.0 / g)
}

fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut p = phi.rem_euclid(two_pi);
    if p > PI {
        p -= two_pi;
    }
    p
}

/// Sampling interval when the grid is uniform.
fn uniform_step(t: &[f64]) -> Option<f64> {
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    t.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt).then_some(dt)
}

fn to_result(p: &[f64], cost: f64, n: usize, converged: bool, dt: Option<f64>) -> FitResult {
    let (mut a, g, mut w, mut ph, b) = (p[0], p[1], p[2], p[3], p[4]);
    if let Some(dt) = dt {
        let band = 2.0 * PI / dt;
        w = w.rem_euclid(band);
        if w > 0.5 * band {
            w -= band;
        }
    }
    if w < 0.0 {
        w = -w;
        ph = -ph;
    }
    if a < 0.0 {
        a = -a;
        ph += PI;
    }
    let tau = if g > 0.0 { 1.0 / g } else { f64::INFINITY };
    FitResult {
        omega: w,
        tau,
        amplitude: a,
        offset: b,
        phase: wrap_phase(ph),
        residual_rms: (cost / n as f64).sqrt(),
        converged: converged && tau > 0.0,
    }
}

/// Fits `A exp(-t/tau) cos(omega t + phi) + B`. A pure exponential is fitted
/// alongside; it wins (reported with `omega = 0`) unless the oscillating
/// model halves its residual.
pub fn fit_decaying_cosine(times: &[f64], values: &[f64]) -> Result<FitResult> {
    let n = times.len();
    if n < MIN_SAMPLES || values.len() != n {
        return Err(Error::InvalidParameter(format!(
            "fit needs at least {MIN_SAMPLES} samples with matching lengths, got {} times and {} values",
            n,
            values.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("fit needs increasing times and finite values".into()));
    }
    let span = times[n - 1] - times[0];
    let t: Vec<f64> = times.iter().map(|x| x - times[0]).collect();
    let y = values;

    let tail = (n / 10).max(1);
    let b_tail = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let gamma_seed = log_envelope_rate(&t, y, 0.0)
        .filter(|g| g.is_finite() && *g > 0.0)
        .unwrap_or(1.0 / span);
    let a0 = y[0];

    let exp_starts = [
        vec![a0, gamma_seed, 0.0],
        vec![a0 - b_tail, gamma_seed, b_tail],
        vec![a0, 3.0 / span, 0.0],
    ];
    let exp_fit = exp_starts
        .iter()
        .map(|s| levenberg_marquardt(exp_model, s, &t, y))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("non-empty starts");

    let peak = spectral_peak(&t, y);
    let mut omegas = vec![peak, 0.5 * peak, 2.0 * peak];
    let base = PI / span;
    omegas.extend((1..=24).map(|k| base * k as f64));
    let mut best: Option<LmOutcome> = None;
    for &w in &omegas {
        for &ph in &[0.0, std::f64::consts::FRAC_PI_2] {
            for &g in &[gamma_seed, 0.0] {
                let start = [a0, g, w, ph, 0.0];
                let out = levenberg_marquardt(cosine_model, &start, &t, y);
                if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
        }
    }
    let cos_fit = best.expect("non-empty starts");

    let scale = y.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    let exp_is_exact = exp_fit.cost <= 1e-18 * scale;
    let use_cosine = !exp_is_exact && cos_fit.cost < 0.25 * exp_fit.cost;
    if use_cosine {
        let ok = cos_fit.cost < cos_fit.start_cost && cos_fit.covariance_finite;
        Ok(to_result(&cos_fit.params, cos_fit.cost, n, ok, uniform_step(&t)))
    } else {
        let p = &exp_fit.params;
        let ok = exp_fit.cost <= exp_fit.start_cost && exp_fit.covariance_finite;
        Ok(to_result(&[p[0], p[1], 0.0, 0.0, p[2]], exp_fit.cost, n, ok, None))
    }
}
