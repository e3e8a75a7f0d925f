//! Synthetic quadratic SLS model for exactness tests.
//!
//! `L(υ) = ½ (υ−υ*)ᵀ A (υ−υ*) + <∇ζ, υ>` with a fixed SPD `A` and a Gaussian
//! stochastic gradient `∇ζ ~ N(0, V²)`. Third derivatives vanish, so Fisher
//! and Wilks expansions are exact and the risk equals `R_Q` identically.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::SlsModel;
use crate::rng::{stream, tag};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct QuadraticModel {
    fisher: DMatrix<f64>,
    v2: DMatrix<f64>,
    v2_chol_l: DMatrix<f64>,
    truth: DVector<f64>,
}

impl QuadraticModel {
    /// `v2 = None` uses `V² = A` (well-specified analogue).
    pub fn new(fisher: DMatrix<f64>, truth: DVector<f64>, v2: Option<DMatrix<f64>>) -> Result<Self> {
        let p = truth.len();
        if fisher.nrows() != p || fisher.ncols() != p {
            return Err(Error::Validation("fisher dimension mismatch".into()));
        }
        let v2 = v2.unwrap_or_else(|| fisher.clone());
        linalg::cholesky(&fisher, "fisher")?;
        let chol = linalg::cholesky(&v2, "v2")?;
        Ok(Self { fisher, v2_chol_l: chol.l().into(), v2, truth })
    }

    pub fn fisher(&self) -> &DMatrix<f64> {
        &self.fisher
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticData {
    /// The realized stochastic gradient `∇ζ`.
    pub zeta_grad: DVector<f64>,
}

impl SlsModel for QuadraticModel {
    type Data = QuadraticData;

    fn dim(&self) -> usize {
        self.truth.len()
    }

    fn truth(&self) -> DVector<f64> {
        self.truth.clone()
    }

    fn n_eff(&self) -> f64 {
        1.0 / linalg::spd_inverse(&self.fisher, "fisher")
            .map(|inv| linalg::spectral_norm_sym(&inv))
            .unwrap_or(1.0)
    }

    fn stat(&self, data: &Self::Data) -> DVector<f64> {
        -data.zeta_grad.clone()
    }

    fn mean_stat(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    fn base(&self, ups: &DVector<f64>) -> Result<f64> {
        let d = ups - &self.truth;
        Ok(0.5 * d.dot(&(&self.fisher * &d)))
    }

    fn base_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.fisher * (ups - &self.truth))
    }

    fn base_hess(&self, _ups: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.fisher.clone())
    }

    fn third_dir(&self, _ups: &DVector<f64>, _u: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }

    fn fourth_dir(&self, _ups: &DVector<f64>, _u: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }

    fn third_contraction(&self, _ups: &DVector<f64>, _u: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim()))
    }

    fn sample(&self, seed: u64) -> Self::Data {
        let mut rng = stream(seed, 0, tag::SAMPLER);
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        QuadraticData { zeta_grad: &self.v2_chol_l * z }
    }

    fn var_zeta(&self) -> DMatrix<f64> {
        self.v2.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_gradient_is_the_sampled_vector() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = QuadraticModel::new(a, DVector::from_row_slice(&[1.0, -1.0]), None).unwrap();
        let data = m.sample(3);
        let gz = m.grad_zeta(&data);
        assert!((gz - &data.zeta_grad).norm() < 1e-14);
    }
}
