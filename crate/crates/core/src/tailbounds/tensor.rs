//! Concentration for families of second-order tensors of a standard Gaussian
//! vector: `T_i = γᵀ 𝒯_i γ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream, tag};
use crate::tailbounds::{fused_quantile, solve_xc, SpectralSummary, TailConfig};

/// A family of symmetric matrices `𝒯_i` with a majorant `𝕍² >= S²` of the
/// covariance of `T = (γᵀ𝒯_iγ)_i`, and the regularity constant `δ`.
#[derive(Debug, Clone)]
pub struct TensorFamily {
    tensors: Vec<DMatrix<f64>>,
    v_sq: DMatrix<f64>,
    /// Lower estimate of `sup { 2‖𝒯[u]‖ : ‖𝕍u‖ <= 1 }` (the exact sup is a
    /// nonconvex program); see [`tensor_delta`].
    pub delta: f64,
}

impl TensorFamily {
    /// Builds a family, validating symmetry of every tensor and, when `v_sq`
    /// is supplied, `𝕍² >= S²` (up to eigenvalue round-off). With `v_sq =
    /// None` the exact covariance `S²` is used. `delta` starts at 0; use
    /// [`TensorFamily::with_estimated_delta`] or set it from [`tensor_delta`].
    pub fn new(tensors: Vec<DMatrix<f64>>, v_sq: Option<DMatrix<f64>>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Validation("empty tensor family".into()));
        }
        let m = tensors[0].nrows();
        for (i, t) in tensors.iter().enumerate() {
            if t.nrows() != m || t.ncols() != m {
                return Err(Error::Validation(format!("tensor {i} is not {m}x{m}")));
            }
            if (t - t.transpose()).norm() > 1e-10 * (1.0 + t.norm()) {
                return Err(Error::Validation(format!("tensor {i} is not symmetric")));
            }
        }
        let mut fam = Self { tensors, v_sq: DMatrix::zeros(0, 0), delta: 0.0 };
        let s2 = fam.covariance();
        let v_sq = match v_sq {
            Some(v) => {
                let diff = &v - &s2;
                let min = linalg::eig_min(&diff);
                if min < -1e-8 * (1.0 + linalg::spectral_norm_sym(&v)) {
                    return Err(Error::Validation(format!(
                        "v_sq is not >= S^2: min eigenvalue of difference {min}"
                    )));
                }
                v
            }
            None => s2,
        };
        fam.v_sq = v_sq;
        Ok(fam)
    }

    /// Builds the family and estimates `delta` from `n_dirs` seeded random
    /// directions.
    pub fn with_estimated_delta(
        tensors: Vec<DMatrix<f64>>,
        v_sq: Option<DMatrix<f64>>,
        n_dirs: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut fam = Self::new(tensors, v_sq)?;
        fam.delta = tensor_delta(&fam, n_dirs, seed)?;
        Ok(fam)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Matrix dimension of each tensor.
    pub fn ambient_dim(&self) -> usize {
        self.tensors[0].nrows()
    }

    pub fn tensors(&self) -> &[DMatrix<f64>] {
        &self.tensors
    }

    pub fn v_sq(&self) -> &DMatrix<f64> {
        &self.v_sq
    }

    /// `𝒯[u] = Σ u_i 𝒯_i`.
    pub fn contract(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let m = self.ambient_dim();
        let mut out = DMatrix::zeros(m, m);
        for (c, t) in u.iter().zip(&self.tensors) {
            out += t * *c;
        }
        out
    }

    /// Exact covariance `S²` of `T`: `S²_{ii'} = 2 <𝒯_i, 𝒯_i'>_Fr`, so that
    /// `tr S² = 2 Σ ‖𝒯_i‖²_Fr` exactly.
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.len();
        let mut s2 = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = 2.0 * linalg::frob_inner(&self.tensors[i], &self.tensors[j]);
                s2[(i, j)] = v;
                s2[(j, i)] = v;
            }
        }
        s2
    }

    /// Mean of `T`: `E T_i = tr 𝒯_i`.
    pub fn mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.tensors.iter().map(|t| t.trace()))
    }

    /// One draw of `T = (γᵀ𝒯_iγ)_i` for standard Gaussian `γ`.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let m = self.ambient_dim();
        let g = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        DVector::from_iterator(self.len(), self.tensors.iter().map(|t| g.dot(&(t * &g))))
    }
}

/// Covariance `S²` of the tensor-family vector (checked constructor form of
/// [`TensorFamily::covariance`]).
pub fn tensor_family_covariance(tf: &TensorFamily) -> DMatrix<f64> {
    tf.covariance()
}

/// Randomized lower estimate of the regularity constant
/// `δ = sup { 2‖𝒯[u]‖ : ‖𝕍u‖ <= 1 }`.
///
/// Draws `n_dirs` directions `v` uniform on the unit sphere, maps them through
/// `𝕍⁻¹`, and whenever the raw objective improves on the best-so-far runs an
/// alternating ascent (top eigenvector of `𝒯[u]` against the ellipsoid-optimal
/// `u` for that eigenvector). Running-max semantics make the estimate
/// nondecreasing in `n_dirs` on a fixed seed stream.
pub fn tensor_delta(tf: &TensorFamily, n_dirs: usize, seed: u64) -> Result<f64> {
    let k = tf.len();
    let chol = linalg::cholesky(&tf.v_sq, "v_sq")?;
    if tf.tensors.iter().all(|t| t.norm() == 0.0) {
        return Ok(0.0);
    }
    let mut rng = stream(seed, 0, tag::DELTA_EST);
    let mut best = 0.0f64;

    let objective = |u: &DVector<f64>| 2.0 * linalg::spectral_norm_sym(&tf.contract(u));

    for _ in 0..n_dirs.max(1) {
        let mut v = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.norm();
        if n == 0.0 {
            continue;
        }
        v /= n;
        // u = V^{-1} v has ‖𝕍u‖ = ‖v‖ = 1 (V = chol factor of 𝕍² works since
        // only the ellipsoid boundary matters: ‖L' u‖ = 1 parametrizes it too).
        let u = chol.l().transpose().solve_upper_triangular(&v).ok_or(Error::Singular("v_sq"))?;
        let raw = objective(&u);
        if raw > best {
            best = refine_direction(tf, &u, raw, best.max(raw));
        }
    }
    Ok(best)
}

/// Alternating ascent from a starting direction; returns max(best_so_far, result).
fn refine_direction(tf: &TensorFamily, u0: &DVector<f64>, raw: f64, best: f64) -> f64 {
    let mut best = best.max(raw);
    let mut u = u0.clone();
    for _ in 0..25 {
        let c = tf.contract(&u);
        let eig = c.symmetric_eigen();
        // Top eigenvector by absolute eigenvalue, sign tracked.
        let (idx, ev) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, &v)| (i, v))
            .unwrap();
        let w = eig.eigenvectors.column(idx).into_owned();
        let sign = if ev >= 0.0 { 1.0 } else { -1.0 };
        // Maximize sign * Σ u_i (w'𝒯_i w) subject to ‖𝕍u‖ <= 1:
        // u ∝ 𝕍⁻² g with normalization ‖𝕍u‖ = 1.
        let g = DVector::from_iterator(
            tf.len(),
            tf.tensors.iter().map(|t| sign * w.dot(&(t * &w))),
        );
        let vinv2g = match linalg::spd_solve(&tf.v_sq, &g, "v_sq") {
            Ok(x) => x,
            Err(_) => return best,
        };
        let denom = g.dot(&vinv2g);
        if denom <= 0.0 {
            return best;
        }
        let u_next = vinv2g / denom.sqrt();
        let val = 2.0 * linalg::spectral_norm_sym(&tf.contract(&u_next));
        if val <= best * (1.0 + 1e-12) {
            best = best.max(val);
            break;
        }
        best = val;
        u = u_next;
    }
    best
}

/// Upper-tail quantile for `𝒵 = √(1−δγ) ‖Q(T − ET)‖`: the fused quantile of
/// the summary of `B = Q𝕍²Qᵀ`. Guarantee `P(𝒵 > value) <= 3e^{-x}` (validated
/// by Monte Carlo). Requires `δγ < 1`.
pub fn tensor_upper_tail(
    tf: &TensorFamily,
    q: &DMatrix<f64>,
    cfg: &TailConfig,
    x: f64,
) -> Result<f64> {
    if tf.delta * cfg.gamma >= 1.0 {
        return Err(Error::domain(
            "tensor_upper_tail",
            format!("requires delta*gamma < 1, got {}", tf.delta * cfg.gamma),
        ));
    }
    let mut b = q * &tf.v_sq * q.transpose();
    linalg::symmetrize(&mut b);
    if b.norm() == 0.0 {
        // Degenerate mapping: the quantile formula collapses to zero.
        return Ok(0.0);
    }
    let s = SpectralSummary::from_psd(&b)?;
    let pt = solve_xc(&s, cfg)?;
    fused_quantile(&pt, &s, x)
}

/// Lower-tail threshold `t = dim_a − α dim_a/(1−α) − 2√(x v2)` for
/// `‖Q(T−ET)‖²`, with guarantee `P(‖Q(T−ET)‖² < t) <= 2e^{-x}` (validated by
/// Monte Carlo). Uses `𝕍² = S²`; requires `x <= dim_a²/(4 v2)` and `α < 1/2`
/// satisfying `α √((1−α)/(1−2α)) >= δ √dim_a (1 + √(dim_a λ/(2 v2)))`.
pub fn tensor_lower_tail(tf: &TensorFamily, q: &DMatrix<f64>, x: f64, alpha: f64) -> Result<f64> {
    let s2 = tf.covariance();
    if (&s2 - &tf.v_sq).norm() > 1e-8 * (1.0 + s2.norm()) {
        return Err(Error::domain(
            "tensor_lower_tail",
            "lower bound is stated for v_sq = S^2 exactly",
        ));
    }
    let mut b = q * &s2 * q.transpose();
    linalg::symmetrize(&mut b);
    let s = SpectralSummary::from_psd(&b)?;
    let x_cap = s.dim_a * s.dim_a / (4.0 * s.v2);
    if x > x_cap {
        return Err(Error::domain(
            "tensor_lower_tail",
            format!("x={x} above cap dim_a^2/(4 v2) = {x_cap}"),
        ));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::domain("tensor_lower_tail", format!("alpha must be in (0, 1/2), got {alpha}")));
    }
    let required = tf.delta * s.dim_a.sqrt() * (1.0 + (s.dim_a * s.lambda / (2.0 * s.v2)).sqrt());
    let lhs = alpha * ((1.0 - alpha) / (1.0 - 2.0 * alpha)).sqrt();
    if lhs < required {
        return Err(Error::AlphaTooSmall { alpha, required });
    }
    Ok(s.dim_a - alpha * s.dim_a / (1.0 - alpha) - 2.0 * (x * s.v2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_scalar_tensor_variance() {
        // p=1, T1 = [c]: Var(c gamma^2) = 2 c^2.
        let c = 3.0;
        let tf = TensorFamily::new(vec![DMatrix::from_element(1, 1, c)], None).unwrap();
        let s2 = tensor_family_covariance(&tf);
        assert_relative_eq!(s2[(0, 0)], 2.0 * c * c, max_relative = 1e-14);
    }

    #[test]
    fn trace_identity_exact() {
        let t1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -1.0]);
        let t2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 4.0]);
        let frob = t1.norm_squared() + t2.norm_squared();
        let tf = TensorFamily::new(vec![t1, t2], None).unwrap();
        assert_eq!(tensor_family_covariance(&tf).trace(), 2.0 * frob);
    }

    #[test]
    fn asymmetric_tensor_rejected() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(TensorFamily::new(vec![t], None).is_err());
    }

    #[test]
    fn delta_single_tensor_closed_form() {
        // p=1, T1=[1], V^2=[2]: delta = 2*|1/sqrt(2)| = sqrt(2).
        let tf = TensorFamily::new(
            vec![DMatrix::from_element(1, 1, 1.0)],
            Some(DMatrix::from_element(1, 1, 2.0)),
        )
        .unwrap();
        let d = tensor_delta(&tf, 10, 1).unwrap();
        assert_relative_eq!(d, 2.0f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn delta_zero_family() {
        let tf = TensorFamily::new(vec![DMatrix::zeros(2, 2)], Some(DMatrix::identity(1, 1))).unwrap();
        assert_eq!(tensor_delta(&tf, 100, 3).unwrap(), 0.0);
    }

    #[test]
    fn delta_monotone_in_directions() {
        let t1 = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, -0.5, 0.1, 0.0, 0.1, 2.0]);
        let t2 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 1.0, 0.0, 0.0, 0.5, 0.0, -1.0]);
        let t3 = DMatrix::from_row_slice(3, 3, &[0.3, 0.0, 0.0, 0.0, 0.7, 0.2, 0.0, 0.2, 0.0]);
        let tf = TensorFamily::new(vec![t1, t2, t3], None).unwrap();
        let small = tensor_delta(&tf, 100, 9).unwrap();
        let large = tensor_delta(&tf, 10_000, 9).unwrap();
        assert!(large >= small);
        // The generic remark bound: with V^2 = S^2, delta <= sqrt(2).
        assert!(large <= 2.0f64.sqrt() + 1e-9);
    }

    #[test]
    fn upper_tail_is_fused_quantile_of_b() {
        let t1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let t2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let tf =
            TensorFamily::with_estimated_delta(vec![t1, t2], None, 500, 11).unwrap();
        let cfg = TailConfig::with_gamma(0.25 / tf.delta.max(1e-6)).unwrap();
        let q = DMatrix::identity(2, 2);
        let direct = tensor_upper_tail(&tf, &q, &cfg, 1.5).unwrap();
        let b = &q * tf.v_sq() * q.transpose();
        let s = SpectralSummary::from_psd(&b).unwrap();
        let pt = solve_xc(&s, &cfg).unwrap();
        assert_eq!(direct, fused_quantile(&pt, &s, 1.5).unwrap());
        // Zero mapping degenerates to zero at any x.
        let q0 = DMatrix::zeros(2, 2);
        assert_eq!(tensor_upper_tail(&tf, &q0, &cfg, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lower_tail_formula_and_alpha_gate() {
        // Small-scale family so a moderate alpha is admissible.
        let c = 0.01;
        let tensors: Vec<_> = (0..4)
            .map(|i| {
                let mut t = DMatrix::zeros(4, 4);
                t[(i, i)] = c;
                t
            })
            .collect();
        let tf = TensorFamily::with_estimated_delta(tensors, None, 2000, 5).unwrap();
        let q = DMatrix::identity(4, 4);
        let s = SpectralSummary::from_psd(&tf.covariance()).unwrap();
        // alpha -> admissible: threshold matches the formula.
        let alpha = 0.45;
        let t = tensor_lower_tail(&tf, &q, 0.5, alpha).unwrap();
        let expect = s.dim_a - alpha * s.dim_a / (1.0 - alpha) - 2.0 * (0.5 * s.v2).sqrt();
        assert_relative_eq!(t, expect, max_relative = 1e-12);
        // x above its cap rejected.
        let cap = s.dim_a * s.dim_a / (4.0 * s.v2);
        assert!(tensor_lower_tail(&tf, &q, cap * 1.01, alpha).is_err());
        // alpha too small reports the required minimum.
        match tensor_lower_tail(&tf, &q, 0.5, 1e-6) {
            Err(Error::AlphaTooSmall { required, .. }) => assert!(required > 0.0),
            other => panic!("expected AlphaTooSmall, got {other:?}"),
        }
    }
}
