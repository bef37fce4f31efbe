//! Compressed sparse rows for the integrator's inner loop.
//!
//! Dense matrices are column-major (nalgebra layout), so a `d x d` matrix is a
//! slice where entry `(i, j)` lives at `i + j * d`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug)]
pub(crate) struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl Csr {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        Self::from_pattern(m, |i, j| m[(i, j)] != C64::new(0.0, 0.0))
    }

    /// Values of `m` on an explicit sparsity pattern.
    pub fn from_pattern(m: &DMatrix<C64>, keep: impl Fn(usize, usize) -> bool) -> Self {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                if keep(i, j) {
                    cols.push(j);
                    vals.push(m[(i, j)]);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out += coeff * (A x)` with this pattern and the given values.
    pub fn left_mul_add(&self, vals: &[C64], x: &[C64], out: &mut [C64], coeff: C64) {
        let n = self.n;
        for j in 0..n {
            let xc = &x[j * n..(j + 1) * n];
            let oc = &mut out[j * n..(j + 1) * n];
            for i in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += vals[p] * xc[self.cols[p]];
                }
                oc[i] += coeff * s;
            }
        }
    }

    /// `out += coeff * (x A†)` with this pattern and the given values.
    pub fn right_mul_adj_add(&self, vals: &[C64], x: &[C64], out: &mut [C64], coeff: C64) {
        // (x A†)_{ij} = sum_k x_{ik} conj(A_{jk}): column j of the result
        // accumulates column k of x for every entry (j, k) of A.
        let n = self.n;
        for j in 0..n {
            for p in self.row_ptr[j]..self.row_ptr[j + 1] {
                let k = self.cols[p];
                let w = coeff * vals[p].conj();
                let src = &x[k * n..(k + 1) * n];
                let dst = &mut out[j * n..(j + 1) * n];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sparse(n: usize, seed: u64) -> DMatrix<C64> {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        DMatrix::from_fn(n, n, |_, _| {
            let keep = next();
            let (re, im) = (next(), next());
            if keep > 0.2 {
                C64::new(re, im)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn products_match_dense() {
        let n = 7;
        let a = random_sparse(n, 1);
        let x = random_sparse(n, 2);
        let csr = Csr::from_dense(&a);
        assert!(csr.nnz() < n * n);
        let coeff = C64::new(0.3, -1.2);

        let mut out = vec![C64::new(0.0, 0.0); n * n];
        csr.left_mul_add(&csr.vals, x.as_slice(), &mut out, coeff);
        let want = (&a * &x) * coeff;
        let got = DMatrix::from_column_slice(n, n, &out);
        assert!((got - want).camax() < 1e-14);

        let mut out = vec![C64::new(0.0, 0.0); n * n];
        csr.right_mul_adj_add(&csr.vals, x.as_slice(), &mut out, coeff);
        let want = (&x * a.adjoint()) * coeff;
        let got = DMatrix::from_column_slice(n, n, &out);
        assert!((got - want).camax() < 1e-14);
    }
}
