//! Gaussian precision-matrix estimation.
//!
//! `L(υ) = ½ Σ <Â_i, υ> − (n/2) log det υ` over symmetric positive definite
//! `υ`, with `Â_i = X_i X_iᵀ`. Parameters live in the solver's vector space
//! through the isometric half-vectorization `svec`.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, svec, unsvec};
use crate::models::{ConditionConstants, SlsModel};
use crate::rng::{stream, tag};
use rand::Rng;

/// True covariance `Σ` and sample size; the estimation target is `υ* = Σ⁻¹`.
#[derive(Debug, Clone)]
pub struct PrecisionModel {
    sigma: DMatrix<f64>,
    sigma_chol_l: DMatrix<f64>,
    p: usize,
    n: usize,
}

impl PrecisionModel {
    pub fn new(sigma: DMatrix<f64>, n: usize) -> Result<Self> {
        let p = sigma.nrows();
        if sigma.ncols() != p || p == 0 {
            return Err(Error::Validation("sigma must be square and nonempty".into()));
        }
        if (&sigma - sigma.transpose()).norm() > 1e-10 * (1.0 + sigma.norm()) {
            return Err(Error::Validation("sigma must be symmetric".into()));
        }
        let chol = linalg::cholesky(&sigma, "sigma")?;
        Ok(Self { sigma_chol_l: chol.l().into(), sigma, p, n })
    }

    pub fn matrix_dim(&self) -> usize {
        self.p
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Half-vectorization order used by this model.
    pub fn to_vec_space(&self, m: &DMatrix<f64>) -> DVector<f64> {
        svec(m)
    }

    pub fn from_vec_space(&self, v: &DVector<f64>) -> DMatrix<f64> {
        unsvec(v, self.p)
    }

    fn spd_of(&self, ups: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = unsvec(ups, self.p);
        nalgebra::Cholesky::new(m.clone()).map(|_| m)
    }
}

#[derive(Debug, Clone)]
pub struct PrecisionData {
    /// Draws `X_i ~ N(0, Σ)`, one per row.
    pub samples: DMatrix<f64>,
}

impl PrecisionData {
    /// `n⁻¹ Σ X_i X_iᵀ`.
    pub fn sample_cov(&self) -> DMatrix<f64> {
        let n = self.samples.nrows();
        let mut s = self.samples.transpose() * &self.samples;
        s /= n as f64;
        linalg::symmetrize(&mut s);
        s
    }
}

impl SlsModel for PrecisionModel {
    type Data = PrecisionData;

    fn dim(&self) -> usize {
        self.p * (self.p + 1) / 2
    }

    fn truth(&self) -> DVector<f64> {
        let prec = linalg::spd_inverse(&self.sigma, "sigma").expect("validated SPD");
        svec(&prec)
    }

    fn n_eff(&self) -> f64 {
        self.n as f64
    }

    fn stat(&self, data: &Self::Data) -> DVector<f64> {
        // L = <(1/2)ΣÂ_i, υ> − (n/2) log det υ = −<s, υ> + h(υ) with
        // s = −(1/2)ΣÂ_i.
        let s = data.sample_cov() * (self.n as f64);
        svec(&s) * (-0.5)
    }

    fn mean_stat(&self) -> DVector<f64> {
        svec(&self.sigma) * (-0.5 * self.n as f64)
    }

    fn base(&self, ups: &DVector<f64>) -> Result<f64> {
        let m = self
            .spd_of(ups)
            .ok_or_else(|| Error::DomainExit("precision parameter not SPD".into()))?;
        let chol = linalg::cholesky(&m, "ups")?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Ok(-0.5 * self.n as f64 * logdet)
    }

    fn base_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self
            .spd_of(ups)
            .ok_or_else(|| Error::DomainExit("precision parameter not SPD".into()))?;
        let inv = linalg::spd_inverse(&m, "ups")?;
        Ok(svec(&inv) * (-0.5 * self.n as f64))
    }

    fn base_hess(&self, ups: &DVector<f64>) -> Result<DMatrix<f64>> {
        // Operator z ↦ (n/2) υ⁻¹ z υ⁻¹ materialized in svec coordinates.
        let m = self
            .spd_of(ups)
            .ok_or_else(|| Error::DomainExit("precision parameter not SPD".into()))?;
        let inv = linalg::spd_inverse(&m, "ups")?;
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for b in 0..d {
            let mut e = DVector::zeros(d);
            e[b] = 1.0;
            let eb = unsvec(&e, self.p);
            let img = &inv * eb * &inv * (0.5 * self.n as f64);
            h.column_mut(b).copy_from(&svec(&img));
        }
        linalg::symmetrize(&mut h);
        Ok(h)
    }

    fn in_domain(&self, ups: &DVector<f64>) -> bool {
        self.spd_of(ups).is_some()
    }

    fn third_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        // −n tr U³ with U = υ^{-1/2} z υ^{-1/2}; tr U^k = tr (υ⁻¹ z)^k.
        let m = self.spd_of(ups)?;
        let inv = linalg::spd_inverse(&m, "ups").ok()?;
        let a = inv * unsvec(u, self.p);
        Some(-(self.n as f64) * (&a * &a * &a).trace())
    }

    fn fourth_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        let m = self.spd_of(ups)?;
        let inv = linalg::spd_inverse(&m, "ups").ok()?;
        let a = inv * unsvec(u, self.p);
        let a2 = &a * &a;
        Some(3.0 * self.n as f64 * (&a2 * &a2).trace())
    }

    fn third_contraction(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
        // ∇³f[u,u,w] = −n tr(υ⁻¹uυ⁻¹uυ⁻¹w); as a vector: −n/2·... times 1/2
        // for the contraction definition ½<∇³f, u⊗u⊗·>.
        let m = self.spd_of(ups)?;
        let inv = linalg::spd_inverse(&m, "ups").ok()?;
        let um = unsvec(u, self.p);
        let mut a = &inv * &um * &inv * um * &inv;
        linalg::symmetrize(&mut a);
        Some(svec(&a) * (-0.5 * self.n as f64))
    }

    fn sample(&self, seed: u64) -> Self::Data {
        let mut rng = stream(seed, 0, tag::SAMPLER);
        let mut samples = DMatrix::zeros(self.n, self.p);
        for i in 0..self.n {
            let z = DVector::from_iterator(
                self.p,
                (0..self.p).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            let x = &self.sigma_chol_l * z;
            samples.row_mut(i).copy_from(&x.transpose());
        }
        PrecisionData { samples }
    }

    fn var_zeta(&self) -> DMatrix<f64> {
        // Var<∇ζ, u> = (n/2) tr(Σu)²: the operator u ↦ (n/2) Σ u Σ in svec
        // coordinates (equals F(υ*) for the well-specified Gaussian model).
        let d = self.dim();
        let mut v = DMatrix::zeros(d, d);
        for b in 0..d {
            let mut e = DVector::zeros(d);
            e[b] = 1.0;
            let eb = unsvec(&e, self.p);
            let img = &self.sigma * eb * &self.sigma * (0.5 * self.n as f64);
            v.column_mut(b).copy_from(&svec(&img));
        }
        linalg::symmetrize(&mut v);
        v
    }

    fn v2_convention(&self) -> &'static str {
        "V^2 = Var(grad zeta) = (n/2) tr(Sigma u)^2 closed form"
    }
}

/// Loss, gradient (as a symmetric matrix), and the Hessian quadratic form
/// `z ↦ (n/2) tr{(υ⁻¹z)²}` together with the operator `z ↦ (n/2) υ⁻¹zυ⁻¹`.
pub fn precision_loss_grad_hess<'a>(
    m: &'a PrecisionModel,
    data: &PrecisionData,
    ups_mat: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>, impl Fn(&DMatrix<f64>) -> DMatrix<f64> + 'a)> {
    let ups = svec(ups_mat);
    if !m.in_domain(&ups) {
        return Err(Error::DomainExit("precision parameter not SPD".into()));
    }
    let loss = m.loss(data, &ups)?;
    let grad = unsvec(&m.grad(data, &ups)?, m.matrix_dim());
    let inv = linalg::spd_inverse(ups_mat, "ups")?;
    let n = m.n_eff();
    let apply = move |z: &DMatrix<f64>| -> DMatrix<f64> { &inv * z * &inv * (0.5 * n) };
    Ok((loss, grad, apply))
}

/// Smoothness constants in the metric `‖𝔻(υ)u‖² = (n/2)‖υ^{-1/2}uυ^{-1/2}‖²_Fr`:
/// `τ₃ = √8 (1 − √(2r²/n))⁻³ n^{-1/2}`, `τ₄ = 12 (1 − √(2r²/n))⁻⁴ n⁻¹` for
/// `r < √(n/2)`.
pub fn precision_constants(m: &PrecisionModel, r: f64) -> Result<ConditionConstants> {
    let n = m.n_eff();
    if !(r >= 0.0) || r * r >= n / 2.0 {
        return Err(Error::domain(
            "precision_constants",
            format!("requires r < sqrt(n/2) = {}, got {r}", (n / 2.0).sqrt()),
        ));
    }
    let shrink = 1.0 - (2.0 * r * r / n).sqrt();
    Ok(ConditionConstants {
        tau3: 8.0f64.sqrt() * shrink.powi(-3) / n.sqrt(),
        tau4: 12.0 * shrink.powi(-4) / n,
        ..Default::default()
    })
}
