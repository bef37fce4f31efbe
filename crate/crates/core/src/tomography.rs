//! Wigner functions, the cat-qubit logical basis and Bloch vectors.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{parity_cat, DensityMatrix, HilbertSpec, Operator, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(2/pi) <D P D†>`, integrates to one over phase space.
    QuasiProbability,
    /// `<D P D†>`, in [-1, 1].
    Parity,
}

impl Normalization {
    fn prefactor(self) -> f64 {
        match self {
            Normalization::QuasiProbability => 2.0 / std::f64::consts::PI,
            Normalization::Parity => 1.0,
        }
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Matrix elements `<m|D(gamma)|n>` of the untruncated displacement for
/// `m, n < dim`, from the associated Laguerre closed form.
pub fn displacement_elements(gamma: C64, dim: usize) -> DMatrix<C64> {
    let x = gamma.norm_sqr();
    let lf = ln_factorials(2 * dim);
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    let up = gamma;
    let down = -gamma.conj();
    for k in 0..dim {
        if k > 0 && x == 0.0 {
            break;
        }
        let (pow_up, pow_down) = (up.powi(k as i32), down.powi(k as i32));
        // L_s^{(k)}(x) by the three-term recurrence in s.
        let (mut l_prev, mut l_cur) = (0.0, 1.0);
        for s in 0..dim - k {
            if s == 1 {
                l_prev = 1.0;
                l_cur = 1.0 + k as f64 - x;
            } else if s > 1 {
                let sf = (s - 1) as f64;
                let next = ((2.0 * sf + 1.0 + k as f64 - x) * l_cur - (sf + k as f64) * l_prev) / (sf + 1.0);
                l_prev = l_cur;
                l_cur = next;
            }
            let scale = (0.5 * (lf[s] - lf[s + k]) - 0.5 * x).exp() * l_cur;
            out[(s + k, s)] = pow_up * scale;
            if k > 0 {
                out[(s, s + k)] = pow_down * scale;
            }
        }
    }
    out
}

fn single_mode(spec: &HilbertSpec) -> Result<usize> {
    match spec.mode_dims() {
        [d] => Ok(*d),
        dims => Err(Error::InvalidState(format!(
            "Wigner functions need a single-mode state, got modes {dims:?}; take a partial trace first"
        ))),
    }
}

/// `Tr[D(beta) P D(beta)† rho]` scaled by the normalization prefactor.
///
/// Uses `D(beta) P D(beta)† = D(2 beta) P` with exact matrix elements, so the
/// value is exact for the truncated `rho` at any `beta`.
pub fn wigner_point(rho: &DensityMatrix, beta: C64, norm: Normalization) -> Result<f64> {
    let d = single_mode(rho.spec())?;
    Ok(wigner_value(rho.matrix(), d, beta, norm))
}

fn wigner_value(rho: &DMatrix<C64>, d: usize, beta: C64, norm: Normalization) -> f64 {
    let disp = displacement_elements(beta * 2.0, d);
    let mut s = C64::new(0.0, 0.0);
    for n in 0..d {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        for m in 0..d {
            s += rho[(n, m)] * disp[(m, n)] * sign;
        }
    }
    s.re * norm.prefactor()
}

/// Wigner values on a rectangular grid. `values` is row-major with one row
/// per `im_axis` entry: `values[i * re_axis.len() + j]` is the value at
/// `re_axis[j] + i * im_axis[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl WignerGrid {
    pub fn get(&self, i_im: usize, j_re: usize) -> f64 {
        self.values[i_im * self.re_axis.len() + j_re]
    }

    /// Largest absolute value and where it sits.
    pub fn peak(&self) -> (f64, C64) {
        let (k, v) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        let n = self.re_axis.len();
        (*v, C64::new(self.re_axis[k % n], self.im_axis[k / n]))
    }

    /// Trapezoid-rule integral over the grid.
    pub fn integrate(&self) -> f64 {
        let w = |axis: &[f64], k: usize| -> f64 {
            let n = axis.len();
            if n < 2 {
                return 0.0;
            }
            let left = if k > 0 { axis[k] - axis[k - 1] } else { 0.0 };
            let right = if k + 1 < n { axis[k + 1] - axis[k] } else { 0.0 };
            0.5 * (left + right)
        };
        let mut s = 0.0;
        for i in 0..self.im_axis.len() {
            for j in 0..self.re_axis.len() {
                s += w(&self.im_axis, i) * w(&self.re_axis, j) * self.get(i, j);
            }
        }
        s
    }
}

pub fn wigner_grid(
    rho: &DensityMatrix,
    re_axis: &[f64],
    im_axis: &[f64],
    norm: Normalization,
) -> Result<WignerGrid> {
    let d = single_mode(rho.spec())?;
    if re_axis.is_empty() || im_axis.is_empty() {
        return Err(Error::InvalidParameter("Wigner grid axes must be non-empty".into()));
    }
    let nre = re_axis.len();
    let values: Vec<f64> = (0..nre * im_axis.len())
        .into_par_iter()
        .map(|k| wigner_value(rho.matrix(), d, C64::new(re_axis[k % nre], im_axis[k / nre]), norm))
        .collect();
    Ok(WignerGrid {
        re_axis: re_axis.to_vec(),
        im_axis: im_axis.to_vec(),
        values,
        normalization: norm,
    })
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Closed-form Wigner function of `N(|alpha> + e^{i phi}|-alpha>)` in the
/// untruncated space, quasi-probability normalization.
pub fn cat_wigner_analytic(alpha: C64, phi: f64, beta: C64) -> f64 {
    let g = |z: C64| (-2.0 * z.norm_sqr()).exp();
    let overlap = (-2.0 * alpha.norm_sqr()).exp();
    let norm = 2.0 * (1.0 + overlap * phi.cos());
    let fringe = 2.0 * g(beta) * (4.0 * (beta * alpha.conj()).im - phi).cos();
    (2.0 / std::f64::consts::PI) * (g(beta - alpha) + g(beta + alpha) + fringe) / norm
}

/// The two-level code space spanned by the even and odd cats of `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalBasis {
    pub alpha: C64,
    pub plus: StateVector,
    pub minus: StateVector,
    pub projector: Operator,
    pub x: Operator,
    pub y: Operator,
    pub z: Operator,
}

fn outer(a: &StateVector, b: &StateVector) -> DMatrix<C64> {
    a.amplitudes() * b.amplitudes().adjoint()
}

/// Exact parity cats `C+`, `C-` and Pauli operators with `Z_L` the
/// photon-number parity on the code space.
pub fn logical_basis(alpha: C64, dim: usize) -> Result<LogicalBasis> {
    let plus = parity_cat(alpha, 0, dim)?;
    let minus = parity_cat(alpha, 1, dim)?;
    let spec = plus.spec().clone();
    let pp = outer(&plus, &plus);
    let mm = outer(&minus, &minus);
    let pm = outer(&plus, &minus);
    let mp = outer(&minus, &plus);
    let i = C64::new(0.0, 1.0);
    let op = |m: DMatrix<C64>| Operator::from_matrix(spec.clone(), m);
    Ok(LogicalBasis {
        alpha,
        projector: op(&pp + &mm)?,
        x: op(&pm + &mp)?,
        y: op(&pm * (-i) + &mp * i)?,
        z: op(&pp - &mm)?,
        plus,
        minus,
    })
}

impl LogicalBasis {
    /// `cos(theta/2) C+ + sin(theta/2) e^{i phi} C-`.
    pub fn state(&self, theta: f64, phi: f64) -> Result<StateVector> {
        let amps = self.plus.amplitudes() * C64::new((0.5 * theta).cos(), 0.0)
            + self.minus.amplitudes() * C64::from_polar((0.5 * theta).sin(), phi);
        StateVector::from_amplitudes(self.plus.spec().clone(), amps)
    }

    /// The six cardinal states `+Z, -Z, +X, -X, +Y, -Y` with their ideal
    /// Bloch vectors.
    pub fn cardinal_states(&self) -> Result<Vec<(&'static str, StateVector, [f64; 3])>> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let points = [
            ("+Z", 0.0, 0.0, [0.0, 0.0, 1.0]),
            ("-Z", PI, 0.0, [0.0, 0.0, -1.0]),
            ("+X", FRAC_PI_2, 0.0, [1.0, 0.0, 0.0]),
            ("-X", FRAC_PI_2, PI, [-1.0, 0.0, 0.0]),
            ("+Y", FRAC_PI_2, FRAC_PI_2, [0.0, 1.0, 0.0]),
            ("-Y", FRAC_PI_2, -FRAC_PI_2, [0.0, -1.0, 0.0]),
        ];
        points
            .iter()
            .map(|&(name, th, ph, v)| Ok((name, self.state(th, ph)?, v)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub leakage: f64,
}

impl BlochVector {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, v: [f64; 3]) -> f64 {
        ((self.x - v[0]).powi(2) + (self.y - v[1]).powi(2) + (self.z - v[2]).powi(2)).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

pub fn bloch_vector(rho: &DensityMatrix, basis: &LogicalBasis) -> Result<BlochVector> {
    let e = |o: &Operator| crate::fock::expect(o, rho).map(|v| v.re);
    Ok(BlochVector {
        x: e(&basis.x)?,
        y: e(&basis.y)?,
        z: e(&basis.z)?,
        leakage: (1.0 - e(&basis.projector)?).clamp(0.0, 1.0),
    })
}

/// Weight of the opposite lobe: `W(-alpha) / (W(alpha) + W(-alpha))` from
/// parity-normalized values clipped below at zero.
pub fn phase_flip_leakage(rho: &DensityMatrix, alpha: C64) -> Result<f64> {
    let w_plus = wigner_point(rho, alpha, Normalization::Parity)?;
    let w_minus = wigner_point(rho, -alpha, Normalization::Parity)?;
    let (p, m) = (w_plus.max(0.0), w_minus.max(0.0));
    if p + m <= 0.0 {
        return Err(Error::UndefinedLeakage { w_plus, w_minus });
    }
    Ok(m / (p + m))
}
