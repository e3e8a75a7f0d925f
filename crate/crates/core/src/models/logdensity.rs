//! 1-D dictionary log-density model on a quadrature grid.
//!
//! `log f(x) = <Ψ(x), υ*> − φ(υ*)` with
//! `φ(υ) = log ∫ e^{<Ψ(x),υ>} dμ₀(x)`; integrals are composite-trapezoid sums
//! on a uniform grid, and the tilted measure's mean/covariance of the
//! dictionary give `∇φ` and `∇²φ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{ConditionConstants, SlsModel};
use crate::rng::{stream, tag};

/// Grid, quadrature weights, dictionary values, truth, and sample size.
#[derive(Debug, Clone)]
pub struct LogDensity1D {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `m x p`: column `j` is the dictionary function `ψ_j` on the grid.
    dict: DMatrix<f64>,
    truth: DVector<f64>,
    n: usize,
}

impl LogDensity1D {
    /// Uniform grid of `m` nodes on `[a, b]` with composite-trapezoid weights.
    pub fn new(
        a: f64,
        b: f64,
        m: usize,
        dict_fn: impl Fn(f64) -> DVector<f64>,
        truth: DVector<f64>,
        n: usize,
    ) -> Result<Self> {
        if !(b > a) || m < 3 {
            return Err(Error::Validation(format!("need b > a and m >= 3 nodes, got [{a},{b}], m={m}")));
        }
        let h = (b - a) / (m - 1) as f64;
        let nodes: Vec<f64> = (0..m).map(|k| a + h * k as f64).collect();
        let weights: Vec<f64> =
            (0..m).map(|k| if k == 0 || k == m - 1 { 0.5 * h } else { h }).collect();
        let p = truth.len();
        let mut dict = DMatrix::zeros(m, p);
        for (k, &x) in nodes.iter().enumerate() {
            let row = dict_fn(x);
            if row.len() != p {
                return Err(Error::Validation("dictionary row length does not match truth".into()));
            }
            dict.row_mut(k).copy_from(&row.transpose());
        }
        let model = Self { nodes, weights, dict, truth, n };
        // Finite-integral check on the working parameter.
        model.tilted(&model.truth.clone())?;
        Ok(model)
    }

    /// Raw constructor from precomputed grid data.
    pub fn from_parts(
        nodes: Vec<f64>,
        weights: Vec<f64>,
        dict: DMatrix<f64>,
        truth: DVector<f64>,
        n: usize,
    ) -> Result<Self> {
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Validation("quadrature weights must be positive".into()));
        }
        if nodes.len() != weights.len() || dict.nrows() != nodes.len() || dict.ncols() != truth.len() {
            return Err(Error::Validation("grid/dictionary/truth sizes disagree".into()));
        }
        let model = Self { nodes, weights, dict, truth, n };
        model.tilted(&model.truth.clone())?;
        Ok(model)
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dict(&self) -> &DMatrix<f64> {
        &self.dict
    }

    /// Tilted-measure node weights `∝ w_k exp(<Ψ(x_k),υ>)` (max-shifted) and
    /// the log-partition value.
    fn tilted(&self, ups: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
        let lin = &self.dict * ups;
        let mut mx = f64::NEG_INFINITY;
        for (k, &l) in lin.iter().enumerate() {
            let v = l + self.weights[k].ln();
            if v > mx {
                mx = v;
            }
        }
        if !mx.is_finite() {
            return Err(Error::DomainExit(format!("log-partition diverges at ups={ups:?}")));
        }
        let terms: Vec<f64> =
            lin.iter().zip(&self.weights).map(|(&l, &w)| (l + w.ln() - mx).exp()).collect();
        let z: f64 = linalg::ksum(terms.iter().copied());
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::DomainExit("log-partition quadrature not finite".into()));
        }
        let phi = mx + z.ln();
        Ok((phi, terms.iter().map(|t| t / z).collect()))
    }

    /// Tilted mean of the dictionary, `E_υ Ψ = ∇φ(υ)`.
    pub fn tilted_mean(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, w) = self.tilted(ups)?;
        Ok(weighted_mean(&self.dict, &w))
    }
}

fn weighted_mean(dict: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
    let p = dict.ncols();
    let mut mean = DVector::zeros(p);
    for (k, &wk) in w.iter().enumerate() {
        mean += dict.row(k).transpose() * wk;
    }
    mean
}

fn weighted_cov(dict: &DMatrix<f64>, w: &[f64], mean: &DVector<f64>) -> DMatrix<f64> {
    let p = dict.ncols();
    let mut cov = DMatrix::zeros(p, p);
    for (k, &wk) in w.iter().enumerate() {
        let d = dict.row(k).transpose() - mean;
        cov.ger(wk, &d, &d, 1.0);
    }
    linalg::symmetrize(&mut cov);
    cov
}

/// `(φ(υ), ∇φ, ∇²φ)` — log-partition, tilted mean, tilted covariance of the
/// dictionary (per single observation; the model's loss scales by `n`).
pub fn logdensity_phi(
    m: &LogDensity1D,
    ups: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let (phi, w) = m.tilted(ups)?;
    let mean = weighted_mean(&m.dict, &w);
    let cov = weighted_cov(&m.dict, &w, &mean);
    Ok((phi, mean, cov))
}

#[derive(Debug, Clone)]
pub struct LogDensityData {
    /// Sampled grid-node indices (inverse CDF on the quadrature grid).
    pub node_idx: Vec<usize>,
}

impl SlsModel for LogDensity1D {
    type Data = LogDensityData;

    fn dim(&self) -> usize {
        self.truth.len()
    }

    fn truth(&self) -> DVector<f64> {
        self.truth.clone()
    }

    fn n_eff(&self) -> f64 {
        self.n as f64
    }

    fn stat(&self, data: &Self::Data) -> DVector<f64> {
        let mut s = DVector::zeros(self.dim());
        for &k in &data.node_idx {
            s += self.dict.row(k).transpose();
        }
        s
    }

    fn mean_stat(&self) -> DVector<f64> {
        self.tilted_mean(&self.truth)
            .expect("truth validated at construction")
            * self.n as f64
    }

    fn base(&self, ups: &DVector<f64>) -> Result<f64> {
        Ok(self.n as f64 * self.tilted(ups)?.0)
    }

    fn base_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.tilted_mean(ups)? * self.n as f64)
    }

    fn base_hess(&self, ups: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (_, _, cov) = logdensity_phi(self, ups)?;
        Ok(cov * self.n as f64)
    }

    fn third_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        // <∇³φ, u³> is the third central moment of <Ψ, u> under the tilted law.
        let (_, w) = self.tilted(ups).ok()?;
        let proj = &self.dict * u;
        let mean: f64 = w.iter().zip(proj.iter()).map(|(&wk, &v)| wk * v).sum();
        let m3: f64 = w
            .iter()
            .zip(proj.iter())
            .map(|(&wk, &v)| wk * (v - mean).powi(3))
            .sum();
        Some(self.n as f64 * m3)
    }

    fn fourth_dir(&self, ups: &DVector<f64>, u: &DVector<f64>) -> Option<f64> {
        // <∇⁴φ, u⁴> is the fourth cumulant: E d⁴ − 3 (E d²)².
        let (_, w) = self.tilted(ups).ok()?;
        let proj = &self.dict * u;
        let mean: f64 = w.iter().zip(proj.iter()).map(|(&wk, &v)| wk * v).sum();
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for (&wk, &v) in w.iter().zip(proj.iter()) {
            let d = v - mean;
            m2 += wk * d * d;
            m4 += wk * d * d * d * d;
        }
        Some(self.n as f64 * (m4 - 3.0 * m2 * m2))
    }

    // Third-derivative contraction deliberately not provided: the 4S
    // corrections are wired for logistic, histogram, and precision.

    fn sample(&self, seed: u64) -> Self::Data {
        let mut rng = stream(seed, 0, tag::SAMPLER);
        let (_, w) = self.tilted(&self.truth).expect("truth validated at construction");
        let mut cdf = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for &x in &w {
            acc += x;
            cdf.push(acc);
        }
        let node_idx = (0..self.n)
            .map(|_| {
                let r: f64 = rng.gen();
                cdf.partition_point(|&c| c < r).min(w.len() - 1)
            })
            .collect();
        LogDensityData { node_idx }
    }

    fn var_zeta(&self) -> DMatrix<f64> {
        let (_, _, cov) = logdensity_phi(self, &self.truth).expect("truth validated");
        cov * self.n as f64
    }

    fn v2_quantile(&self) -> DMatrix<f64> {
        self.var_zeta() * 2.0
    }

    fn v2_convention(&self) -> &'static str {
        "V^2 = 2 n hess(phi)(truth) (log-density convention, factor 2)"
    }
}

/// Randomized estimates of the log-density condition constants.
///
/// Maximizes the defining ratios over `n_samples` sampled `(υ, u, z)` with
/// `υ ∈ B_ρ(υ*)` (Bregman ball of `∇²φ(υ*)`), `u` on the `4ρ²` shell of
/// `∇²φ(υ)`, `z` random directions:
/// `C_ρ` from `exp{φ(υ+u) − φ(υ) − <∇φ(υ),u>}`,
/// `C_{Ψ,3}` from `|E_υ<ε,z>³| / E_υ^{3/2}<ε,z>²`,
/// `C_{Ψ,4}` from `E_υ<ε,z>⁴ / E_υ²<ε,z>²` (floored at 3, raw kept);
/// then `c₃ = C_{Ψ,3}(C_{Ψ,4}C_ρ)^{3/4}`, `c₄ = (C_{Ψ,4}−3)C_{Ψ,4}C_ρ`,
/// `τ₃ = c₃/√n`, `τ₄ = c₄/n`. Estimates are running maxima, so they are
/// nondecreasing in `n_samples` on a fixed seed stream.
pub fn logdensity_condition_constants(
    m: &LogDensity1D,
    rho: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ConditionConstants> {
    if !(rho > 0.0) {
        return Err(Error::domain("logdensity_condition_constants", "rho must be > 0"));
    }
    let p = m.dim();
    let truth = m.truth();
    let hess_star = logdensity_phi(m, &truth)?.2;
    let chol_star = linalg::cholesky(&hess_star, "hess(phi)(truth)")?;

    let mut rng = stream(seed, 0, tag::COND_EST);
    let mut c_rho = 1.0f64; // attained at u = 0
    let mut c_psi3 = 0.0f64;
    let mut c_psi4_raw = 0.0f64;

    for _ in 0..n_samples {
        // υ = υ* + Δ with <∇²φ(υ*), Δ⊗Δ> <= ρ² via the Cholesky ellipsoid map.
        let dir = random_unit(p, &mut rng);
        let t: f64 = rng.gen::<f64>().sqrt();
        let delta = chol_star
            .l()
            .transpose()
            .solve_upper_triangular(&(dir * (rho * t)))
            .ok_or(Error::Singular("hess(phi)(truth)"))?;
        let ups = &truth + delta;
        let (phi_u, grad_u, hess_u) = match logdensity_phi(m, &ups) {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::DomainExit(format!(
                    "condition sampling left the domain at ups={ups:?}: {e}"
                )))
            }
        };

        // u on the <∇²φ(υ), u⊗u> <= 4ρ² shell.
        let chol_u = match linalg::cholesky(&hess_u, "hess(phi)(ups)") {
            Ok(c) => c,
            Err(_) => continue,
        };
        let dir2 = random_unit(p, &mut rng);
        let su: f64 = rng.gen::<f64>().sqrt();
        let u = chol_u
            .l()
            .transpose()
            .solve_upper_triangular(&(dir2 * (2.0 * rho * su)))
            .ok_or(Error::Singular("hess(phi)(ups)"))?;
        if let Ok((phi_pu, _)) = m.tilted(&(&ups + &u)) {
            let breg = phi_pu - phi_u - grad_u.dot(&u);
            c_rho = c_rho.max(breg.exp());
        } else {
            return Err(Error::DomainExit(format!(
                "condition sampling left the domain at ups+u={:?}",
                &ups + &u
            )));
        }

        // Tilted moment ratios along a random direction z.
        let z = random_unit(p, &mut rng);
        let (_, w) = m.tilted(&ups)?;
        let proj = &m.dict * &z;
        let mean: f64 = w.iter().zip(proj.iter()).map(|(&wk, &v)| wk * v).sum();
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        let mut m4 = 0.0;
        for (&wk, &v) in w.iter().zip(proj.iter()) {
            let d = v - mean;
            m2 += wk * d * d;
            m3 += wk * d * d * d;
            m4 += wk * d * d * d * d;
        }
        if m2 > 1e-300 {
            c_psi3 = c_psi3.max(m3.abs() / m2.powf(1.5));
            c_psi4_raw = c_psi4_raw.max(m4 / (m2 * m2));
        }
    }

    let c_psi4 = c_psi4_raw.max(3.0);
    let c3 = c_psi3 * (c_psi4 * c_rho).powf(0.75);
    let c4 = (c_psi4 - 3.0) * c_psi4 * c_rho;
    let n = m.n_eff();
    Ok(ConditionConstants {
        c3,
        c4,
        c_rho,
        c_psi3,
        c_psi4,
        c_psi4_raw,
        tau3: c3 / n.sqrt(),
        tau4: c4 / n,
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

    fn uniform_linear(m: usize) -> LogDensity1D {
        LogDensity1D::new(0.0, 1.0, m, |x| DVector::from_row_slice(&[x]), DVector::zeros(1), 100)
            .unwrap()
    }

    #[test]
    fn uniform_moments() {
        // ups = 0, mu0 uniform on [0,1], psi(x) = x: grad = 1/2, hess = 1/12.
        let m = uniform_linear(8001);
        let (_, grad, hess) = logdensity_phi(&m, &DVector::zeros(1)).unwrap();
        assert!((grad[0] - 0.5).abs() <= 1e-8);
        assert!((hess[(0, 0)] - 1.0 / 12.0).abs() <= 1e-8);
    }

    #[test]
    fn hessian_is_psd() {
        let m = LogDensity1D::new(
            -1.0,
            1.0,
            401,
            |x| DVector::from_row_slice(&[x, x * x]),
            DVector::from_row_slice(&[0.3, -0.2]),
            50,
        )
        .unwrap();
        let (_, _, hess) = logdensity_phi(&m, &DVector::from_row_slice(&[0.1, 0.4])).unwrap();
        assert!(linalg::eig_min(&hess) >= -1e-10);
    }

    #[test]
    fn indicator_dictionary_reduces_to_histogram() {
        // Dictionary of cell indicators on the grid reproduces the softmax
        // log-partition up to the constant log of the cell measure.
        use crate::models::histogram_phi;
        let cells = 4usize;
        let m_nodes = 400usize;
        // Nodes strictly inside [0,1); indicator of cell j on equal cells.
        let h = 1.0 / m_nodes as f64;
        let nodes: Vec<f64> = (0..m_nodes).map(|k| (k as f64 + 0.5) * h).collect();
        let weights = vec![h; m_nodes];
        let mut dict = DMatrix::zeros(m_nodes, cells);
        for (k, &x) in nodes.iter().enumerate() {
            let j = ((x * cells as f64) as usize).min(cells - 1);
            dict[(k, j)] = 1.0;
        }
        let truth = DVector::zeros(cells);
        let m = LogDensity1D::from_parts(nodes, weights, dict, truth, 10).unwrap();
        let ups = DVector::from_row_slice(&[0.4, -0.1, 0.8, 0.0]);
        let (phi_ld, grad_ld, hess_ld) = logdensity_phi(&m, &ups).unwrap();
        let (phi_h, theta, hess_h) = histogram_phi(&ups);
        // Each cell has measure 1/4: phi_ld = log Σ (1/4) e^{υ_j} = phi_h + log(1/4).
        assert_relative_eq!(phi_ld, phi_h + (0.25f64).ln(), max_relative = 1e-12);
        assert!((grad_ld - theta).norm() < 1e-12);
        assert!((hess_ld - hess_h).norm() < 1e-12);
    }

    #[test]
    fn condition_constants_monotone_and_kurtosis_floor() {
        let m = LogDensity1D::new(
            -2.0,
            2.0,
            601,
            |x| DVector::from_row_slice(&[x, -0.5 * x * x]),
            DVector::from_row_slice(&[0.2, 0.8]),
            400,
        )
        .unwrap();
        let few = logdensity_condition_constants(&m, 0.3, 40, 11).unwrap();
        let many = logdensity_condition_constants(&m, 0.3, 400, 11).unwrap();
        assert!(many.c_rho >= few.c_rho);
        assert!(many.c_psi3 >= few.c_psi3);
        assert!(many.c_psi4_raw >= few.c_psi4_raw);
        // Direction-wise kurtosis ratio of any r.v. is >= 1; reported value floored at 3.
        assert!(many.c_psi4_raw >= 1.0);
        assert!(many.c_psi4 >= 3.0);
        assert_relative_eq!(many.tau3, many.c3 / (400.0f64).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn gaussian_family_linear_coordinate_third_moment_small() {
        // Ψ = (x, −x²/2) on a wide truncated grid: tilted laws are truncated
        // normals; the third central moment of the linear coordinate at the
        // symmetric slice is ~0.
        let m = LogDensity1D::new(
            -8.0,
            8.0,
            2001,
            |x| DVector::from_row_slice(&[x, -0.5 * x * x]),
            DVector::from_row_slice(&[0.0, 1.0]),
            100,
        )
        .unwrap();
        let (_, w) = m.tilted(&DVector::from_row_slice(&[0.0, 1.0])).unwrap();
        let proj: Vec<f64> = m.nodes().to_vec();
        let mean: f64 = w.iter().zip(&proj).map(|(&wk, &x)| wk * x).sum();
        let m3: f64 = w.iter().zip(&proj).map(|(&wk, &x)| wk * (x - mean).powi(3)).sum();
        assert!(m3.abs() < 1e-10);
    }
}
