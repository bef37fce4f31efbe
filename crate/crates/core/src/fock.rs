//! Operators and states on truncated bosonic Fock spaces.
//!
//! Multi-mode spaces use the Kronecker ordering of [`tensor`]: the left factor
//! is the slow index. Throughout the crate the storage mode is the left
//! factor and the reservoir the right one, so a basis index reads
//! `storage_level * dim_reservoir + reservoir_level`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;

/// Fock truncation of every mode, in tensor order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    mode_dims: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(mode_dims: Vec<usize>) -> Result<Self> {
        if mode_dims.is_empty() {
            return Err(Error::InvalidDimension { dim: 0 });
        }
        if let Some(&dim) = mode_dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension { dim });
        }
        Ok(Self { mode_dims })
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn total_dim(&self) -> usize {
        self.mode_dims.iter().product()
    }

    pub fn concat(&self, other: &HilbertSpec) -> HilbertSpec {
        let mut mode_dims = self.mode_dims.clone();
        mode_dims.extend_from_slice(&other.mode_dims);
        HilbertSpec { mode_dims }
    }

    fn ensure_same(&self, other: &HilbertSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpecMismatch {
                left: self.mode_dims.clone(),
                right: other.mode_dims.clone(),
            })
        }
    }
}

impl fmt::Display for HilbertSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.mode_dims.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", dims.join(" x "))
    }
}

/// Rejects amplitudes whose Poisson tail would be cut by the truncation.
pub fn check_truncation(alpha: C64, dim: usize) -> Result<()> {
    let alpha_sq = alpha.norm_sqr();
    // Rounding slack so that e.g. |alpha|^2 = 2 from sqrt(2 eps2/kappa2) fits dim 8.
    let need = 4.0 * alpha_sq * (1.0 - 1e-12);
    if need > dim as f64 {
        return Err(Error::TruncationGuard {
            alpha_sq,
            dim,
            required_dim: need.ceil() as usize,
        });
    }
    Ok(())
}

/// A dense complex operator tagged with the space it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    spec: HilbertSpec,
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(spec: HilbertSpec, mat: DMatrix<C64>) -> Result<Self> {
        let d = spec.total_dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "matrix is {}x{} but {spec} has total dimension {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { spec, mat })
    }

    pub fn identity(spec: &HilbertSpec) -> Self {
        let d = spec.total_dim();
        Self {
            spec: spec.clone(),
            mat: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(spec: &HilbertSpec) -> Self {
        let d = spec.total_dim();
        Self {
            spec: spec.clone(),
            mat: DMatrix::zeros(d, d),
        }
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            mat: self.mat.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            spec: self.spec.clone(),
            mat: &self.mat * factor,
        }
    }

    pub fn powi(&self, exponent: u32) -> Self {
        let mut out = Operator::identity(&self.spec);
        for _ in 0..exponent {
            out = &out * self;
        }
        out
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry modulus of `self - self†`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.mat - self.mat.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Matrix-vector product; the result is not renormalized.
    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        self.spec.ensure_same(&psi.spec)?;
        Ok(&self.mat * &psi.amps)
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.spec.ensure_same(&other.spec)?;
        Ok(Operator {
            spec: self.spec.clone(),
            mat: &self.mat * &other.mat,
        })
    }

    /// `<psi| A |psi>`.
    pub fn expect_pure(&self, psi: &StateVector) -> Result<C64> {
        let v = self.apply(psi)?;
        Ok(psi.amps.dotc(&v))
    }
}

fn assert_same(a: &HilbertSpec, b: &HilbertSpec) {
    assert!(a == b, "operator spaces differ: {a} vs {b}");
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_same(&self.spec, &rhs.spec);
        Operator {
            spec: self.spec.clone(),
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_same(&self.spec, &rhs.spec);
        Operator {
            spec: self.spec.clone(),
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_same(&self.spec, &rhs.spec);
        Operator {
            spec: self.spec.clone(),
            mat: &self.mat * &rhs.mat,
        }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Ladder operator `a` on a single truncated mode.
pub fn annihilation(dim: usize) -> Result<Operator> {
    let spec = HilbertSpec::single(dim)?;
    let mut mat = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        mat[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(Operator { spec, mat })
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.adjoint())
}

/// `a† a`, built directly on the diagonal.
pub fn number(dim: usize) -> Result<Operator> {
    let spec = HilbertSpec::single(dim)?;
    let diag = DVector::from_iterator(dim, (0..dim).map(|n| C64::new(n as f64, 0.0)));
    Ok(Operator {
        spec,
        mat: DMatrix::from_diagonal(&diag),
    })
}

pub fn identity(dim: usize) -> Result<Operator> {
    Ok(Operator::identity(&HilbertSpec::single(dim)?))
}

/// Photon-number parity `(-1)^n`.
pub fn parity(dim: usize) -> Result<Operator> {
    let spec = HilbertSpec::single(dim)?;
    let diag = DVector::from_iterator(
        dim,
        (0..dim).map(|n| C64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)),
    );
    Ok(Operator {
        spec,
        mat: DMatrix::from_diagonal(&diag),
    })
}

/// Kronecker product of raw matrices; `a` carries the slow index.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j1 in 0..ac {
        for i1 in 0..ar {
            let x = a[(i1, j1)];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for j2 in 0..bc {
                for i2 in 0..br {
                    out[(i1 * br + i2, j1 * bc + j2)] = x * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// `A ⊗ B` with spec `A.modes ++ B.modes`.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator {
        spec: a.spec.concat(&b.spec),
        mat: kron(&a.mat, &b.mat),
    }
}

/// `D(alpha) = exp(alpha a† - alpha* a)` on the truncated space.
pub fn displacement(alpha: C64, dim: usize) -> Result<Operator> {
    check_truncation(alpha, dim)?;
    let a = annihilation(dim)?;
    let gen = &a.adjoint().scale(alpha) - &a.scale(alpha.conj());
    let mat = expm(&gen.mat);
    Ok(Operator {
        spec: gen.spec,
        mat,
    })
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    spec: HilbertSpec,
    amps: DVector<C64>,
}

impl StateVector {
    /// Normalizes the given amplitudes.
    pub fn from_amplitudes(spec: HilbertSpec, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != spec.total_dim() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for total dimension {}",
                amps.len(),
                spec.total_dim()
            )));
        }
        let norm = amps.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("state vector has zero norm".into()));
        }
        Ok(Self {
            spec,
            amps: amps.unscale(norm),
        })
    }

    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        let spec = HilbertSpec::single(dim)?;
        if n >= dim {
            return Err(Error::InvalidState(format!(
                "Fock level {n} outside truncation {dim}"
            )));
        }
        let mut amps = DVector::zeros(dim);
        amps[n] = C64::new(1.0, 0.0);
        Ok(Self { spec, amps })
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.spec.ensure_same(&other.spec)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            spec: self.spec.clone(),
            mat: &self.amps * self.amps.adjoint(),
        }
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let a = DMatrix::from_column_slice(self.amps.len(), 1, self.amps.as_slice());
        let b = DMatrix::from_column_slice(other.amps.len(), 1, other.amps.as_slice());
        StateVector {
            spec: self.spec.concat(&other.spec),
            amps: DVector::from_column_slice(kron(&a, &b).as_slice()),
        }
    }
}

// Unnormalized truncated coherent amplitudes e^{-|a|^2/2} a^n / sqrt(n!).
fn coherent_amplitudes(alpha: C64, dim: usize) -> DVector<C64> {
    let mut amps = DVector::zeros(dim);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        amps[n] = c;
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    amps
}

/// Normalized truncated coherent state `|alpha>`.
pub fn coherent_state(alpha: C64, dim: usize) -> Result<StateVector> {
    check_truncation(alpha, dim)?;
    StateVector::from_amplitudes(HilbertSpec::single(dim)?, coherent_amplitudes(alpha, dim))
}

/// `N(|alpha> + e^{i phi} |-alpha>)`; `phi = 0` is the even cat, `phi = pi`
/// the odd one.
pub fn cat_state(alpha: C64, phi: f64, dim: usize) -> Result<StateVector> {
    check_truncation(alpha, dim)?;
    let spec = HilbertSpec::single(dim)?;
    let half = C64::from_polar(1.0, 0.5 * phi);
    // 1 + e^{i phi} and 1 - e^{i phi}, written to keep sector weights exact.
    let even = half * (2.0 * (0.5 * phi).cos());
    let odd = half * C64::new(0.0, -2.0 * (0.5 * phi).sin());
    if alpha.norm() == 0.0 {
        let level = if even.norm() > 1e-12 { 0 } else { 1 };
        return StateVector::fock(level, dim);
    }
    let mut amps = coherent_amplitudes(alpha, dim);
    for (n, c) in amps.iter_mut().enumerate() {
        *c *= if n % 2 == 0 { even } else { odd };
    }
    StateVector::from_amplitudes(spec, amps)
}

/// Even (`sector = 0`) or odd (`sector = 1`) projection of `|alpha>`,
/// normalized. These are the cats with exactly zero weight in the other
/// parity sector.
pub fn parity_cat(alpha: C64, sector: usize, dim: usize) -> Result<StateVector> {
    check_truncation(alpha, dim)?;
    if alpha.norm() == 0.0 {
        return StateVector::fock(sector % 2, dim);
    }
    let mut amps = coherent_amplitudes(alpha, dim);
    for (n, c) in amps.iter_mut().enumerate() {
        if n % 2 != sector % 2 {
            *c = C64::new(0.0, 0.0);
        }
    }
    StateVector::from_amplitudes(HilbertSpec::single(dim)?, amps)
}

/// Hermitian, unit-trace state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    spec: HilbertSpec,
    mat: DMatrix<C64>,
}

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-12;
pub const DENSITY_TRACE_TOL: f64 = 1e-12;
pub const DENSITY_EIGEN_TOL: f64 = -1e-10;

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(spec: HilbertSpec, mat: DMatrix<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(spec, mat)?;
        let herm = rho.hermiticity_error();
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = rho.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > DENSITY_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < DENSITY_EIGEN_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(rho)
    }

    /// Only checks the shape. Used for integrator output, where physicality is
    /// monitored rather than enforced.
    pub fn new_unchecked(spec: HilbertSpec, mat: DMatrix<C64>) -> Result<Self> {
        let d = spec.total_dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::InvalidState(format!(
                "matrix is {}x{} but {spec} has total dimension {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { spec, mat })
    }

    pub fn pure(psi: &StateVector) -> Self {
        psi.to_density()
    }

    pub fn maximally_mixed(spec: &HilbertSpec) -> Self {
        let d = spec.total_dim();
        Self {
            spec: spec.clone(),
            mat: DMatrix::identity(d, d) / C64::new(d as f64, 0.0),
        }
    }

    /// Convex combination `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Result<DensityMatrix> {
        self.spec.ensure_same(&other.spec)?;
        Ok(Self {
            spec: self.spec.clone(),
            mat: &self.mat * C64::new(w, 0.0) + &other.mat * C64::new(1.0 - w, 0.0),
        })
    }

    /// `U rho U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Result<DensityMatrix> {
        self.spec.ensure_same(&u.spec)?;
        Ok(Self {
            spec: self.spec.clone(),
            mat: &u.mat * &self.mat * u.mat.adjoint(),
        })
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.mat - self.mat.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// `<psi| rho |psi>`.
    pub fn fidelity_pure(&self, psi: &StateVector) -> Result<f64> {
        self.spec.ensure_same(&psi.spec)?;
        Ok(psi.amps.dotc(&(&self.mat * &psi.amps)).re)
    }

    /// `||rho - sigma||_1 / 2`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        self.spec.ensure_same(&other.spec)?;
        let diff = &self.mat - &other.mat;
        Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>())
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            spec: self.spec.concat(&other.spec),
            mat: kron(&self.mat, &other.mat),
        }
    }

    /// Reduced state of mode `keep`, tracing out every other mode.
    pub fn partial_trace(&self, keep: usize) -> Result<DensityMatrix> {
        let dims = self.spec.mode_dims();
        if keep >= dims.len() {
            return Err(Error::InvalidParameter(format!(
                "mode {keep} out of range for {}",
                self.spec
            )));
        }
        let dk = dims[keep];
        let inner: usize = dims[keep + 1..].iter().product();
        let outer: usize = dims[..keep].iter().product();
        let mut out = DMatrix::zeros(dk, dk);
        for o in 0..outer {
            for i in 0..dk {
                for j in 0..dk {
                    let mut s = C64::new(0.0, 0.0);
                    for r in 0..inner {
                        let row = (o * dk + i) * inner + r;
                        let col = (o * dk + j) * inner + r;
                        s += self.mat[(row, col)];
                    }
                    out[(i, j)] += s;
                }
            }
        }
        Ok(DensityMatrix {
            spec: HilbertSpec::single(dk)?,
            mat: out,
        })
    }
}

/// Eigenvalues of `(m + m†)/2`, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut vals: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Truncated Bose-Einstein state with mean occupation `n_th`.
pub fn thermal_state(n_th: f64, dim: usize) -> Result<DensityMatrix> {
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "thermal occupation must be >= 0, got {n_th}"
        )));
    }
    let spec = HilbertSpec::single(dim)?;
    let ratio = n_th / (1.0 + n_th);
    let mut pops = Vec::with_capacity(dim);
    let mut p = 1.0;
    for _ in 0..dim {
        pops.push(p);
        p *= ratio;
    }
    let total: f64 = pops.iter().sum();
    let diag = DVector::from_iterator(dim, pops.iter().map(|p| C64::new(p / total, 0.0)));
    Ok(DensityMatrix {
        spec,
        mat: DMatrix::from_diagonal(&diag),
    })
}

/// `Tr[A rho]`.
pub fn expect(a: &Operator, rho: &DensityMatrix) -> Result<C64> {
    a.spec.ensure_same(&rho.spec)?;
    // Tr[A rho] = sum_ij A_ij rho_ji
    let mut s = C64::new(0.0, 0.0);
    for j in 0..a.dim() {
        for i in 0..a.dim() {
            s += a.mat[(i, j)] * rho.mat[(j, i)];
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn annihilation_entries_and_errors() {
        let a = annihilation(5).unwrap();
        for n in 1..5 {
            assert_eq!(a.matrix()[(n - 1, n)], c((n as f64).sqrt(), 0.0));
        }
        assert_eq!(a.matrix()[(1, 0)], c(0.0, 0.0));
        assert!(matches!(annihilation(1), Err(Error::InvalidDimension { dim: 1 })));
    }

    #[test]
    fn annihilation_kills_vacuum() {
        let a = annihilation(6).unwrap();
        let v = a.apply(&StateVector::fock(0, 6).unwrap()).unwrap();
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn number_operator_diagonal() {
        let a = annihilation(8).unwrap();
        let n = &a.adjoint() * &a;
        for k in 0..8 {
            let psi = StateVector::fock(k, 8).unwrap();
            assert!((n.expect_pure(&psi).unwrap() - c(k as f64, 0.0)).norm() < 1e-14);
        }
        assert!((&n - &number(8).unwrap()).max_abs() < 1e-14);
    }

    #[test]
    fn truncated_commutator_artifact() {
        // [a, a†] = 1 except the last diagonal entry, which is -(dim - 1).
        let dim = 7;
        let a = annihilation(dim).unwrap();
        let comm = a.commutator(&a.adjoint());
        for i in 0..dim {
            for j in 0..dim {
                let want = if i != j {
                    0.0
                } else if i < dim - 1 {
                    1.0
                } else {
                    -((dim - 1) as f64)
                };
                assert!((comm.matrix()[(i, j)] - c(want, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn tensor_identities_and_ordering() {
        let i2 = identity(2).unwrap();
        let i3 = identity(3).unwrap();
        assert_eq!(tensor(&i2, &i3), identity(6).unwrap().with_spec(vec![2, 3]));

        let n2 = number(2).unwrap();
        let n3 = number(3).unwrap();
        let d = tensor(&n2, &n3);
        let diag: Vec<f64> = (0..6).map(|i| d.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(d.spec().mode_dims(), &[2, 3]);
    }

    #[test]
    fn disjoint_modes_commute() {
        let a_s = tensor(&annihilation(4).unwrap(), &identity(3).unwrap());
        let a_r = tensor(&identity(4).unwrap(), &annihilation(3).unwrap());
        assert!(a_s.commutator(&a_r).max_abs() == 0.0);
        assert!(a_s.commutator(&a_r.adjoint()).max_abs() == 0.0);
    }

    #[test]
    fn displacement_of_zero_is_identity() {
        let d = displacement(c(0.0, 0.0), 10).unwrap();
        assert!((d.matrix() - DMatrix::identity(10, 10)).camax() < 1e-15);
    }

    #[test]
    fn displaced_vacuum_matches_closed_form() {
        let alpha = c(3f64.sqrt(), 0.0);
        let d = displacement(alpha, 30).unwrap();
        let v = d.apply(&StateVector::fock(0, 30).unwrap()).unwrap();
        let mut fact = 1.0;
        for n in 0..30 {
            if n > 0 {
                fact *= n as f64;
            }
            let want = (-alpha.norm_sqr() / 2.0).exp() * alpha.re.powi(n as i32) / fact.sqrt();
            assert!((v[n] - c(want, 0.0)).norm() < 1e-8, "level {n}");
        }
    }

    #[test]
    fn displacement_inverse_and_unitarity() {
        let alpha = c(1.1, -0.7);
        let dp = displacement(alpha, 30).unwrap();
        let dm = displacement(-alpha, 30).unwrap();
        assert!(((&dp * &dm).matrix() - DMatrix::identity(30, 30)).camax() < 1e-8);
        assert!(((&dp.adjoint() * &dp).matrix() - DMatrix::identity(30, 30)).camax() < 1e-8);
    }

    #[test]
    fn displacement_guard() {
        let err = displacement(c(3.0, 0.0), 30).unwrap_err();
        match err {
            Error::TruncationGuard { required_dim, .. } => assert_eq!(required_dim, 36),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parity_basics() {
        let p = parity(6).unwrap();
        assert_eq!(p.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(p.matrix()[(1, 1)], c(-1.0, 0.0));
        assert_eq!((&p * &p), identity(6).unwrap());
    }

    #[test]
    fn coherent_state_checks() {
        let vac = coherent_state(c(0.0, 0.0), 10).unwrap();
        assert_eq!(vac, StateVector::fock(0, 10).unwrap());

        let alpha = c(2f64.sqrt(), 0.0);
        let psi = coherent_state(alpha, 30).unwrap();
        let a = annihilation(30).unwrap();
        assert!((a.expect_pure(&psi).unwrap() - alpha).norm() < 1e-6);

        let minus = coherent_state(-alpha, 30).unwrap();
        let overlap = psi.inner(&minus).unwrap().norm();
        assert!((overlap - (-2.0 * alpha.norm_sqr()).exp()).abs() < 1e-8);
    }

    #[test]
    fn cat_state_checks() {
        assert_eq!(
            cat_state(c(0.0, 0.0), 0.0, 12).unwrap(),
            StateVector::fock(0, 12).unwrap()
        );
        let alpha = c(3f64.sqrt(), 0.0);
        let p = parity(30).unwrap();
        let plus = cat_state(alpha, 0.0, 30).unwrap();
        let minus = cat_state(alpha, PI, 30).unwrap();
        assert!((p.expect_pure(&plus).unwrap() - c(1.0, 0.0)).norm() < 1e-10);
        assert!((p.expect_pure(&minus).unwrap() - c(-1.0, 0.0)).norm() < 1e-10);
        assert!(plus.inner(&minus).unwrap().norm() < 1e-12);
    }

    #[test]
    fn thermal_state_checks() {
        let vac = thermal_state(0.0, 4).unwrap();
        assert_eq!(vac.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(vac.trace(), c(1.0, 0.0));

        // Independent route: geometric weights (n/(1+n))^k, then normalize.
        let n_th: f64 = 0.015;
        let w: Vec<f64> = (0..3).map(|k| (n_th / (1.0 + n_th)).powi(k)).collect();
        let z: f64 = w.iter().sum();
        let rho = thermal_state(n_th, 3).unwrap();
        for k in 0..3 {
            assert!((rho.matrix()[(k, k)].re - w[k] / z).abs() < 1e-15);
        }
        // Tabulated populations, rounded.
        assert!((rho.matrix()[(0, 0)].re - 0.98525).abs() < 1e-4);
        assert!((rho.matrix()[(1, 1)].re - 0.014563).abs() < 1e-5);
        assert!((rho.matrix()[(2, 2)].re - 0.000215).abs() < 1e-6);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);

        assert!(thermal_state(-0.1, 3).is_err());
    }

    #[test]
    fn expect_checks() {
        let rho = thermal_state(0.3, 30).unwrap();
        let one = expect(&identity(30).unwrap(), &rho).unwrap();
        assert!((one - c(1.0, 0.0)).norm() < 1e-14);

        let r: f64 = 0.3 / 1.3;
        let num: f64 = (0..30).map(|k| k as f64 * r.powi(k)).sum();
        let den: f64 = (0..30).map(|k| r.powi(k)).sum();
        let mean = expect(&number(30).unwrap(), &rho).unwrap();
        assert!((mean.re - num / den).abs() < 1e-13);
        assert!((mean.re - 0.3).abs() < 1e-12);

        let cat = cat_state(c(3f64.sqrt(), 0.0), 0.0, 30).unwrap().to_density();
        let par = expect(&parity(30).unwrap(), &cat).unwrap();
        assert!((par - c(1.0, 0.0)).norm() < 1e-10);

        assert!(matches!(
            expect(&identity(4).unwrap(), &rho),
            Err(Error::SpecMismatch { .. })
        ));
    }

    #[test]
    fn partial_trace_of_product() {
        let s = cat_state(c(1.0, 0.0), 0.0, 6).unwrap().to_density();
        let r = thermal_state(0.2, 3).unwrap();
        let joint = s.tensor(&r);
        let back_s = joint.partial_trace(0).unwrap();
        let back_r = joint.partial_trace(1).unwrap();
        assert!((back_s.matrix() - s.matrix()).camax() < 1e-14);
        assert!((back_r.matrix() - r.matrix()).camax() < 1e-14);
    }

    #[test]
    fn density_validation() {
        let spec = HilbertSpec::single(2).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(spec.clone(), bad).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(DensityMatrix::new(spec, neg).is_err());
    }

    impl Operator {
        fn with_spec(self, dims: Vec<usize>) -> Operator {
            Operator::from_matrix(HilbertSpec::new(dims).unwrap(), self.mat).unwrap()
        }
    }
}
