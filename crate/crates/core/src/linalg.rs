//! Small dense symmetric linear-algebra helpers shared across the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Compensated (Kahan) summation; sequence-space tail sums drive the
/// roughness-condition checks, so plain accumulation is not enough there.
#[derive(Default, Clone, Copy, Debug)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Kahan sum of an iterator.
pub fn ksum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::default();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Symmetrize in place against round-off drift.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = m.clone().symmetric_eigen().eigenvalues;
    let mut v: Vec<f64> = ev.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (i, x) in v.into_iter().enumerate() {
        ev[i] = x;
    }
    ev
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |a, &x| a.max(x.abs()))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn eig_max(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &x| a.max(x))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn eig_min(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &x| a.min(x))
}

/// Cholesky factorization with a descriptive error.
pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::Singular(what))
}

/// Solve `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    Ok(cholesky(m, what)?.solve(b))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, what)?.inverse())
}

/// Symmetric positive semi-definite square root via eigendecomposition.
/// Eigenvalues below `-1e-10 * max` are rejected, small negatives are clamped.
pub fn spd_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let tol = 1e-10 * max.max(1.0);
    let mut d = eig.eigenvalues.clone();
    for x in d.iter_mut() {
        if *x < -tol {
            return Err(Error::Singular(what));
        }
        *x = x.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&d) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Quadratic form `b' m^{-1} b` for SPD `m`.
pub fn quad_form_inv(m: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<f64> {
    let x = spd_solve(m, b, what)?;
    Ok(b.dot(&x))
}

/// Isometric half-vectorization of a symmetric `p x p` matrix:
/// diagonal entries first, then off-diagonals scaled by sqrt(2), so that
/// `svec(a) . svec(b) = <a, b>_Fr`.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let p = m.nrows();
    let mut out = DVector::zeros(p * (p + 1) / 2);
    let mut k = 0;
    for i in 0..p {
        out[k] = m[(i, i)];
        k += 1;
    }
    let s = std::f64::consts::SQRT_2;
    for i in 0..p {
        for j in (i + 1)..p {
            out[k] = s * m[(i, j)];
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn unsvec(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), p * (p + 1) / 2);
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        m[(i, i)] = v[i];
    }
    let s = std::f64::consts::SQRT_2;
    let mut k = p;
    for i in 0..p {
        for j in (i + 1)..p {
            let x = v[k] / s;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// Frobenius inner product of symmetric matrices.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
