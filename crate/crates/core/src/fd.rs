//! Finite-difference derivative checking.
//!
//! Central-difference stencils for validating analytic gradients, Hessians,
//! and higher directional derivatives. These evaluate only the supplied
//! closures, so they stay independent of whatever implementation they check.

use nalgebra::{DMatrix, DVector};

/// Central-difference gradient of `f` with step `h` per coordinate.
pub fn grad<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.clone();
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central differences of a gradient function: column `j` is
/// `(g(x+he_j) − g(x−he_j)) / 2h`.
pub fn hess_of_grad<G: Fn(&DVector<f64>) -> DVector<f64>>(
    g: G,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        let gp = g(&xp);
        xp[j] = x[j] - h;
        let gm = g(&xp);
        xp[j] = x[j];
        out.column_mut(j).copy_from(&((gp - gm) / (2.0 * h)));
    }
    out
}

/// Third directional derivative along `u`:
/// `[f(x+2hu) − 2f(x+hu) + 2f(x−hu) − f(x−2hu)] / (2h³)`, error `O(h²)`.
pub fn dir3<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> f64 {
    let at = |t: f64| f(&(x + u * (t * h)));
    (at(2.0) - 2.0 * at(1.0) + 2.0 * at(-1.0) - at(-2.0)) / (2.0 * h * h * h)
}

/// Fourth directional derivative along `u`:
/// `[f(x+2hu) − 4f(x+hu) + 6f(x) − 4f(x−hu) + f(x−2hu)] / h⁴`, error `O(h²)`.
pub fn dir4<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> f64 {
    let at = |t: f64| f(&(x + u * (t * h)));
    (at(2.0) - 4.0 * at(1.0) + 6.0 * at(0.0) - 4.0 * at(-1.0) + at(-2.0)) / (h * h * h * h)
}

/// Richardson-extrapolated third directional derivative: cancels the `O(h²)`
/// term of [`dir3`], leaving `O(h⁴)` truncation.
pub fn dir3r<F: Fn(&DVector<f64>) -> f64 + Copy>(
    f: F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> f64 {
    (4.0 * dir3(f, x, u, h / 2.0) - dir3(f, x, u, h)) / 3.0
}

/// Richardson-extrapolated fourth directional derivative.
pub fn dir4r<F: Fn(&DVector<f64>) -> f64 + Copy>(
    f: F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> f64 {
    (4.0 * dir4(f, x, u, h / 2.0) - dir4(f, x, u, h)) / 3.0
}

/// Relative error with a scale floor: `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Frobenius relative error of two matrices.
pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Euclidean relative error of two vectors.
pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_on_a_quartic() {
        // f(x) = x₀⁴ + x₀²x₁: exact derivatives known everywhere.
        let f = |x: &DVector<f64>| x[0].powi(4) + x[0] * x[0] * x[1];
        let x = DVector::from_row_slice(&[1.5, -0.5]);
        let g = grad(f, &x, 1e-6);
        assert!((g[0] - (4.0 * 1.5f64.powi(3) + 2.0 * 1.5 * -0.5)).abs() < 1e-7);
        assert!((g[1] - 1.5f64 * 1.5).abs() < 1e-8);
        let u = DVector::from_row_slice(&[1.0, 0.0]);
        // d³/dt³ along e₀ = 24 x₀ = 36; stencils are exact on a quartic, so
        // only rounding noise remains at a moderate step.
        assert!((dir3(f, &x, &u, 1e-2) - 36.0).abs() < 1e-6);
        // d⁴ = 24.
        assert!((dir4(f, &x, &u, 5e-2) - 24.0).abs() < 1e-6);
    }
}
