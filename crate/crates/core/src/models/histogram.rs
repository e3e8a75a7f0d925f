//! Multinomial cell counts with softmax log-partition (log-density on a
//! finite partition).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::SlsModel;
use crate::rng::{stream, tag};

/// `p` cells with probabilities `θ*_j`, counts `S_j` from `n` draws;
/// `φ(υ) = log Σ e^{υ_j}`, truth `υ*_j = log θ*_j`.
#[derive(Debug, Clone)]
pub struct HistogramModel {
    theta_star: DVector<f64>,
    n: usize,
}

impl HistogramModel {
    pub fn new(theta_star: DVector<f64>, n: usize) -> Result<Self> {
        let sum: f64 = theta_star.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("cell probabilities sum to {sum}, not 1")));
        }
        if theta_star.iter().any(|&t| !(t > 0.0 && t <= 0.5)) {
            return Err(Error::Validation("cell probabilities must lie in (0, 1/2]".into()));
        }
        if n == 0 {
            return Err(Error::Validation("need n >= 1 draws".into()));
        }
        Ok(Self { theta_star, n })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }
}

#[derive(Debug, Clone)]
pub struct HistogramData {
    /// Cell counts, summing to `n`.
    pub counts: Vec<u64>,
}

/// Softmax log-partition with max-shift: returns `(φ, θ, ∇²φ)` where
/// `θ = softmax(υ)` and `∇²φ = diag(θ) − θθᵀ`.
pub fn histogram_phi(ups: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let m = ups.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = ups.iter().map(|&u| (u - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let phi = m + z.ln();
    let theta = DVector::from_iterator(ups.len(), exps.iter().map(|e| e / z));
    let mut hess = DMatrix::from_diagonal(&theta);
    hess.ger(-1.0, &theta, &theta, 1.0);
    linalg::symmetrize(&mut hess);
    (phi, theta, hess)
}

/// Third directional derivative of the softmax log-partition:
/// `<∇³φ(υ), u^{⊗3}> = E(U − EU)³` for the discrete variable `U = u_J`,
/// `P(J = j) = θ_j`.
pub fn histogram_third_dir(ups: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let (_, theta, _) = histogram_phi(ups);
    let m1: f64 = theta.dot(u);
    let m2: f64 = theta.iter().zip(u.iter()).map(|(&t, &x)| t * x * x).sum();
    let m3: f64 = theta.iter().zip(u.iter()).map(|(&t, &x)| t * x * x * x).sum();
    m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1
}

/// Joint third cumulant `<∇³φ(υ), u ⊗ u ⊗ w>` = cum(U, U, W).
fn third_cumulant_uuw(theta: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let eu: f64 = theta.dot(u);
    let ew: f64 = theta.dot(w);
    let euw: f64 = theta.iter().zip(u.iter().zip(w.iter())).map(|(&t, (&a, &b))| t * a * b).sum();
    let eu2: f64 = theta.iter().zip(u.iter()).map(|(&t, &a)| t * a * a).sum();
    let eu2w: f64 =
        theta.iter().zip(u.iter().zip(w.iter())).map(|(&t, (&a, &b))| t * a * a * b).sum();
    eu2w - 2.0 * eu * euw - ew * eu2 + 2.0 * eu * eu * ew
}

impl SlsModel for HistogramModel {
    type Data = HistogramData;

    fn dim(&self) -> usize {
        self.theta_star.len()
    }

    fn truth(&self) -> DVector<f64> {
        self.theta_star.map(f64::ln)
    }

    fn n_eff(&self) -> f64 {
        self.n as f64
    }

    fn stat(&self, data: &Self::Data) -> DVector<f64> {
        DVector::from_iterator(data.counts.len(), data.counts.iter().map(|&c| c as f64))
    }

    fn mean_stat(&self) -> DVector<f64> {
        &self.theta_star * self.n as f64
    }

    fn base(&self, ups: &DVector<f64>) -> Result<f64> {
        Ok(self.n as f64 * histogram_phi(ups).0)
    }

    fn base_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(histogram_phi(ups).1 * self.n as f64)
    }

    fn base_hess(&self, ups: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(histogram_phi(ups).2 * self.n as f64)
    }

    fn third_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        Some(self.n as f64 * histogram_third_dir(ups, u))
    }

    fn fourth_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        // Fourth cumulant of U: E(U-EU)^4 - 3 Var(U)^2.
        let (_, theta, _) = histogram_phi(ups);
        let m1: f64 = theta.dot(u);
        let c: Vec<f64> = u.iter().map(|&x| x - m1).collect();
        let mut c2 = 0.0;
        let mut c4 = 0.0;
        for (t, d) in theta.iter().zip(c.iter()) {
            c2 += t * d * d;
            c4 += t * d * d * d * d;
        }
        Some(self.n as f64 * (c4 - 3.0 * c2 * c2))
    }

    fn third_contraction(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
        let (_, theta, _) = histogram_phi(ups);
        let p = self.dim();
        let mut out = DVector::zeros(p);
        for k in 0..p {
            let mut e = DVector::zeros(p);
            e[k] = 1.0;
            out[k] = 0.5 * self.n as f64 * third_cumulant_uuw(&theta, u, &e);
        }
        Some(out)
    }

    fn gauge_fix(&self, ups: &mut DVector<f64>) {
        let mean = ups.mean();
        for x in ups.iter_mut() {
            *x -= mean;
        }
    }

    fn sample(&self, seed: u64) -> Self::Data {
        // Multinomial via per-draw inverse CDF; counts sum to n by construction.
        let mut rng = stream(seed, 0, tag::SAMPLER);
        let p = self.dim();
        let mut cdf = Vec::with_capacity(p);
        let mut acc = 0.0;
        for &t in self.theta_star.iter() {
            acc += t;
            cdf.push(acc);
        }
        let mut counts = vec![0u64; p];
        for _ in 0..self.n {
            let r: f64 = rng.gen();
            let j = cdf.partition_point(|&c| c < r).min(p - 1);
            counts[j] += 1;
        }
        HistogramData { counts }
    }

    fn var_zeta(&self) -> DMatrix<f64> {
        // Var(S) = n (diag θ − θθᵀ) = F(υ*).
        let mut v = DMatrix::from_diagonal(&self.theta_star);
        v.ger(-1.0, &self.theta_star, &self.theta_star, 1.0);
        linalg::symmetrize(&mut v);
        v * self.n as f64
    }

    fn v2_quantile(&self) -> DMatrix<f64> {
        self.var_zeta() * 2.0
    }

    fn v2_convention(&self) -> &'static str {
        "V^2 = 2 n hess(phi)(truth) (log-density convention, factor 2)"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_cell_symmetric() {
        let (_, theta, hess) = histogram_phi(&DVector::from_row_slice(&[0.0, 0.0]));
        assert_eq!(theta[0], 0.5);
        assert_relative_eq!(hess[(0, 0)], 0.25, max_relative = 1e-15);
        assert_relative_eq!(hess[(0, 1)], -0.25, max_relative = 1e-15);
    }

    #[test]
    fn two_cell_asymmetric() {
        // ups = (0, log 3): theta = (1/4, 3/4), hess entries ±3/16.
        let (_, theta, hess) = histogram_phi(&DVector::from_row_slice(&[0.0, 3.0f64.ln()]));
        assert_relative_eq!(theta[0], 0.25, max_relative = 1e-14);
        assert_relative_eq!(theta[1], 0.75, max_relative = 1e-14);
        assert_relative_eq!(hess[(0, 0)], 0.1875, max_relative = 1e-13);
        assert_relative_eq!(hess[(0, 1)], -0.1875, max_relative = 1e-13);
    }

    #[test]
    fn hessian_annihilates_constants() {
        let (_, _, hess) = histogram_phi(&DVector::from_row_slice(&[0.3, -1.0, 2.0]));
        let ones = DVector::from_element(3, 1.0);
        assert!((hess * ones).norm() < 1e-14);
    }

    #[test]
    fn third_dir_degenerate_cases() {
        // Constant direction: U degenerate -> 0.
        let ups = DVector::from_row_slice(&[0.1, -0.7, 0.4]);
        assert!(histogram_third_dir(&ups, &DVector::from_element(3, 2.5)).abs() < 1e-13);
        // Symmetric two-cell with u = (1, -1): E U = 0 and E U^3 = 0.
        let v = histogram_third_dir(
            &DVector::from_row_slice(&[0.0, 0.0]),
            &DVector::from_row_slice(&[1.0, -1.0]),
        );
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn third_dir_bound_with_floor() {
        // |<∇³φ,u³>| <= ‖m u‖³/(θ_min+g²)^{1/2} + 3‖h u‖³ for any g² >= 0.
        let ups = DVector::from_row_slice(&[0.2, -0.3, 0.9, -1.4]);
        let u = DVector::from_row_slice(&[1.0, -2.0, 0.5, 0.7]);
        let (_, theta, _) = histogram_phi(&ups);
        let lhs = histogram_third_dir(&ups, &u).abs();
        for g2 in [0.0, 0.05, 1.0] {
            let theta_min = theta.iter().cloned().fold(f64::INFINITY, f64::min);
            let hu3 = theta
                .iter()
                .zip(u.iter())
                .map(|(&t, &x)| t * x * x)
                .sum::<f64>()
                .powf(1.5);
            let mu3 = theta
                .iter()
                .zip(u.iter())
                .map(|(&t, &x)| (t + g2) * x * x)
                .sum::<f64>()
                .powf(1.5);
            let rhs = mu3 / (theta_min + g2).sqrt() + 3.0 * hu3;
            assert!(lhs <= rhs + 1e-12, "bound fails for g2={g2}");
        }
    }

    #[test]
    fn counts_sum_to_n() {
        let m = HistogramModel::new(DVector::from_row_slice(&[0.2, 0.3, 0.5]), 1234).unwrap();
        let d = m.sample(5);
        assert_eq!(d.counts.iter().sum::<u64>(), 1234);
    }
}
