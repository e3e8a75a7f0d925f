//! Fixed-design logistic regression with Bernoulli responses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{sigmoid, ConditionConstants, SlsModel};
use crate::rng::{stream, tag};

/// Logistic regression: labels `Y_i ~ Bernoulli(θ*_i)`, canonical parameter
/// `<Ψ_i, υ>` per observation. Designs are fixed; random-design theory is out
/// of scope.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    designs: Vec<DVector<f64>>,
    theta_star: Vec<f64>,
    dim: usize,
    truth: Option<DVector<f64>>,
}

impl LogisticModel {
    pub fn new(designs: Vec<DVector<f64>>, theta_star: Vec<f64>) -> Result<Self> {
        if designs.is_empty() || designs.len() != theta_star.len() {
            return Err(Error::Validation(format!(
                "need matching nonempty designs ({}) and probabilities ({})",
                designs.len(),
                theta_star.len()
            )));
        }
        let dim = designs[0].len();
        if designs.iter().any(|d| d.len() != dim) {
            return Err(Error::Validation("design vectors of mixed dimension".into()));
        }
        if theta_star.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::Validation("success probabilities must lie in (0,1)".into()));
        }
        Ok(Self { designs, theta_star, dim, truth: None })
    }

    /// Correctly specified model: `θ*_i = sigmoid(<Ψ_i, υ*>)`, so the
    /// population minimizer is `υ*` and `Var(∇ζ) = F(υ*)`.
    pub fn well_specified(designs: Vec<DVector<f64>>, truth: &DVector<f64>) -> Result<Self> {
        let theta = designs.iter().map(|psi| sigmoid(psi.dot(truth))).collect();
        let mut m = Self::new(designs, theta)?;
        m.truth = Some(truth.clone());
        Ok(m)
    }

    /// Attaches an externally computed population minimizer.
    pub fn with_truth(mut self, truth: DVector<f64>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn n_obs(&self) -> usize {
        self.designs.len()
    }

    pub fn designs(&self) -> &[DVector<f64>] {
        &self.designs
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    /// Fisher operator `F(υ) = Σ φ''(<Ψ_i,υ>) Ψ_iΨ_iᵀ`.
    pub fn fisher_at(&self, ups: &DVector<f64>) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.dim, self.dim);
        for psi in &self.designs {
            let w = phi_d2(psi.dot(ups));
            f.ger(w, psi, psi, 1.0);
        }
        linalg::symmetrize(&mut f);
        f
    }

    fn truth_impl(&self) -> DVector<f64> {
        self.truth
            .clone()
            .expect("logistic truth only known for well-specified construction or with_truth")
    }
}

#[derive(Debug, Clone)]
pub struct LogisticData {
    /// Bernoulli outcomes, one per design row.
    pub labels: Vec<u8>,
}

impl SlsModel for LogisticModel {
    type Data = LogisticData;

    fn dim(&self) -> usize {
        self.dim
    }

    fn truth(&self) -> DVector<f64> {
        self.truth_impl()
    }

    fn n_eff(&self) -> f64 {
        self.designs.len() as f64
    }

    fn stat(&self, data: &Self::Data) -> DVector<f64> {
        let mut s = DVector::zeros(self.dim);
        for (y, psi) in data.labels.iter().zip(&self.designs) {
            if *y == 1 {
                s += psi;
            }
        }
        s
    }

    fn mean_stat(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.dim);
        for (t, psi) in self.theta_star.iter().zip(&self.designs) {
            s += psi * *t;
        }
        s
    }

    fn base(&self, ups: &DVector<f64>) -> Result<f64> {
        Ok(linalg::ksum(self.designs.iter().map(|psi| super::log1p_exp(psi.dot(ups)))))
    }

    fn base_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dim);
        for psi in &self.designs {
            g += psi * sigmoid(psi.dot(ups));
        }
        Ok(g)
    }

    fn base_hess(&self, ups: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.fisher_at(ups))
    }

    fn third_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        Some(dir_deriv_impl(self, ups, u, 3))
    }

    fn fourth_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        Some(dir_deriv_impl(self, ups, u, 4))
    }

    fn third_contraction(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        for psi in &self.designs {
            let a = psi.dot(u);
            out += psi * (0.5 * phi_d3(psi.dot(ups)) * a * a);
        }
        Some(out)
    }

    fn sample(&self, seed: u64) -> Self::Data {
        let mut rng = stream(seed, 0, tag::SAMPLER);
        let labels = self
            .theta_star
            .iter()
            .map(|&t| u8::from(rng.gen::<f64>() < t))
            .collect();
        LogisticData { labels }
    }

    fn var_zeta(&self) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.dim, self.dim);
        for (t, psi) in self.theta_star.iter().zip(&self.designs) {
            v.ger(t * (1.0 - t), psi, psi, 1.0);
        }
        linalg::symmetrize(&mut v);
        v
    }

    fn v2_quantile(&self) -> DMatrix<f64> {
        // Default convention V^2 = D^2 = F(truth); Var(grad zeta) <= D^2
        // holds with equality for the well-specified model.
        self.fisher_at(&self.truth_impl())
    }

    fn v2_convention(&self) -> &'static str {
        "V^2 = D^2 = F(truth), Var(grad zeta) <= D^2 checked"
    }
}

/// Sigmoid derivatives of `φ(u) = log(1+e^u)`, overflow-safe:
/// `φ'' = s(1−s)`, `φ⁽³⁾ = φ''(1−2s)`, `φ⁽⁴⁾ = φ''(1−6s+6s²)`.
#[inline]
pub(crate) fn phi_d2(u: f64) -> f64 {
    let s = sigmoid(u);
    s * (1.0 - s)
}

#[inline]
pub(crate) fn phi_d3(u: f64) -> f64 {
    let s = sigmoid(u);
    s * (1.0 - s) * (1.0 - 2.0 * s)
}

#[inline]
pub(crate) fn phi_d4(u: f64) -> f64 {
    let s = sigmoid(u);
    s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
}

/// Empirical loss, gradient, and Fisher matrix at `υ`.
pub fn logistic_loss_grad_hess(
    m: &LogisticModel,
    data: &LogisticData,
    ups: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    if data.labels.len() != m.n_obs() {
        return Err(Error::DomainEmpty(format!(
            "labels ({}) do not match designs ({})",
            data.labels.len(),
            m.n_obs()
        )));
    }
    Ok((m.loss(data, ups)?, m.grad(data, ups)?, m.fisher_at(ups)))
}

fn dir_deriv_impl(m: &LogisticModel, ups: &DVector<f64>, u: &DVector<f64>, order: u8) -> f64 {
    let d: fn(f64) -> f64 = if order == 3 { phi_d3 } else { phi_d4 };
    linalg::ksum(m.designs.iter().map(|psi| {
        let a = psi.dot(u);
        let k = if order == 3 { a * a * a } else { a * a * a * a };
        k * d(psi.dot(ups))
    }))
}

/// Exact directional derivative
/// `<∇^k E L(υ), u^{⊗k}> = Σ <Ψ_i,u>^k φ^{(k)}(<Ψ_i,υ>)` for `k ∈ {3,4}`.
pub fn logistic_dir_deriv(
    m: &LogisticModel,
    ups: &DVector<f64>,
    u: &DVector<f64>,
    order: u8,
) -> Result<f64> {
    if order != 3 && order != 4 {
        return Err(Error::domain("logistic_dir_deriv", format!("order must be 3 or 4, got {order}")));
    }
    Ok(dir_deriv_impl(m, ups, u, order))
}

/// Design-regularity and smoothness constants for the logistic model.
///
/// `δ₀ = max_i ‖D⁻¹Ψ_i‖` exactly; `ϰ` defaults to the proven conservative
/// `ϰ² = √e δ₀²` and is tightened (when `tighten_samples > 0`) by randomized
/// maximization of the quartic ratio `Σ <Ψ_i,z>⁴ w_i(υ) / ‖Dz‖⁴` over sampled
/// directions `z` and points `υ` in the `‖D(υ−υ°)‖ <= r` vicinity of the
/// truth. `τ₃ = √e ϰ`, `τ₄ = √e ϰ²`.
pub fn logistic_conditions(
    m: &LogisticModel,
    d_metric: &DMatrix<f64>,
    r: f64,
    tighten_samples: usize,
    seed: u64,
) -> Result<ConditionConstants> {
    let d_inv = d_metric
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("metric D"))?;
    let delta0 = m
        .designs
        .iter()
        .map(|psi| (&d_inv * psi).norm())
        .fold(0.0f64, f64::max);

    let e = std::f64::consts::E;
    let conservative = e.powf(0.25) * delta0;
    let mut varkappa = conservative;

    if tighten_samples > 0 {
        let center = m.truth_impl();
        let mut rng = stream(seed, 0, tag::COND_EST);
        let mut best = 0.0f64;
        for _ in 0..tighten_samples {
            let z = random_unit(m.dim, &mut rng);
            // υ = υ° + D⁻¹ w · (r t):  ‖D(υ − υ°)‖ = r t <= r.
            let w = random_unit(m.dim, &mut rng);
            let t: f64 = rng.gen();
            let ups = &center + &d_inv * w * (r * t);
            let dz4 = (d_metric * &z).norm().powi(4);
            if dz4 == 0.0 {
                continue;
            }
            let quart = linalg::ksum(m.designs.iter().map(|psi| {
                let a = psi.dot(&z);
                a * a * a * a * phi_d2(psi.dot(&ups))
            }));
            best = best.max(quart / dz4);
        }
        let tightened = best.sqrt();
        if tightened > 0.0 {
            varkappa = tightened.min(conservative);
        }
    }

    Ok(ConditionConstants {
        delta0,
        varkappa,
        tau3: e.sqrt() * varkappa,
        tau4: e.sqrt() * varkappa * varkappa,
        ..Default::default()
    })
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_obs_model() -> LogisticModel {
        LogisticModel::well_specified(vec![DVector::from_element(1, 1.0)], &DVector::zeros(1))
            .unwrap()
    }

    #[test]
    fn sigmoid_symmetry_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(phi_d2(0.0), 0.25);
        assert_eq!(phi_d3(0.0), 0.0);
    }

    #[test]
    fn single_observation_gradient() {
        // p=1, one obs, psi=1, Y=1: grad at 0 is -(1 - 1/2) = -1/2.
        let m = one_obs_model();
        let data = LogisticData { labels: vec![1] };
        let (_, g, h) = logistic_loss_grad_hess(&m, &data, &DVector::zeros(1)).unwrap();
        assert_relative_eq!(g[0], -0.5, max_relative = 1e-15);
        assert_relative_eq!(h[(0, 0)], 0.25, max_relative = 1e-15);
    }

    #[test]
    fn third_dir_vanishes_at_zero_arguments() {
        let designs = vec![
            DVector::from_row_slice(&[1.0, -1.0]),
            DVector::from_row_slice(&[0.5, 2.0]),
        ];
        let m = LogisticModel::well_specified(designs, &DVector::zeros(2)).unwrap();
        // phi'''(0) = 0, so the value is 0 whenever all <psi, ups> = 0.
        let u = DVector::from_row_slice(&[0.3, 0.7]);
        let v = logistic_dir_deriv(&m, &DVector::zeros(2), &u, 3).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn dir_deriv_bounded_by_phi2_sum() {
        // |phi^{(k)}| <= phi'' transfers to the directional derivative.
        let designs = vec![
            DVector::from_row_slice(&[1.2, 0.4]),
            DVector::from_row_slice(&[-0.3, 1.0]),
            DVector::from_row_slice(&[0.8, -0.9]),
        ];
        let m = LogisticModel::well_specified(designs.clone(), &DVector::from_row_slice(&[0.2, -0.4]))
            .unwrap();
        let ups = DVector::from_row_slice(&[0.5, 0.25]);
        let u = DVector::from_row_slice(&[-0.7, 1.3]);
        for order in [3u8, 4] {
            let lhs = logistic_dir_deriv(&m, &ups, &u, order).unwrap().abs();
            let k = i32::from(order);
            let rhs: f64 = designs
                .iter()
                .map(|psi| psi.dot(&u).abs().powi(k) * phi_d2(psi.dot(&ups)))
                .sum();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn phi_derivative_envelope_on_grid() {
        // |phi'''|, |phi''''| <= phi'' on [-30, 30] with zero violations.
        for i in 0..=600 {
            let u = -30.0 + 0.1 * i as f64;
            let d2 = phi_d2(u);
            assert!(phi_d3(u).abs() <= d2 + 1e-18, "order 3 fails at {u}");
            assert!(phi_d4(u).abs() <= d2 + 1e-18, "order 4 fails at {u}");
        }
    }

    #[test]
    fn conditions_orthonormal_design() {
        // Orthonormal design rows with D = I give delta0 = 1.
        let designs = vec![
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[0.0, 1.0]),
        ];
        let m = LogisticModel::well_specified(designs, &DVector::zeros(2)).unwrap();
        let cc = logistic_conditions(&m, &DMatrix::identity(2, 2), 0.5, 0, 0).unwrap();
        assert_relative_eq!(cc.delta0, 1.0, max_relative = 1e-12);
        let e = std::f64::consts::E;
        assert_relative_eq!(cc.varkappa, e.powf(0.25), max_relative = 1e-12);
        // Tightened never exceeds conservative.
        let tight = logistic_conditions(&m, &DMatrix::identity(2, 2), 0.5, 200, 7).unwrap();
        assert!(tight.varkappa <= cc.varkappa + 1e-15);
        assert_relative_eq!(tight.tau3, e.sqrt() * tight.varkappa, max_relative = 1e-14);
    }

    #[test]
    fn sampler_is_seed_deterministic() {
        let designs: Vec<_> =
            (0..50).map(|i| DVector::from_element(1, 1.0 + (i % 3) as f64)).collect();
        let m = LogisticModel::well_specified(designs, &DVector::from_element(1, 0.3)).unwrap();
        let a = m.sample(99);
        let b = m.sample(99);
        assert_eq!(a.labels, b.labels);
    }
}
