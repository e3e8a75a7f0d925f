//! Penalized-MLE solver and expansion/risk certificates for SLS models.

mod expansion;
mod risk;

pub use expansion::{
    bias_expansion, effective_dimension, expansion_certificate, fourth_order_correction,
    fourth_order_report, BiasExpansion, ExpansionReport, FourthOrderCorrection, FourthOrderReport,
};
pub use risk::{risk_certificate, RiskOptions, RiskReport};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::SlsModel;

/// Quadratic penalty `½‖Gυ‖²`, as a PSD matrix, a diagonal, a ridge, or a
/// subspace restriction (projection / spectral cut-off). Projections are
/// realized as coordinate restriction, never as literal infinities.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadPenalty {
    Dense { g2: Vec<Vec<f64>> },
    Diagonal { g2: Vec<f64> },
    Ridge { g2: f64 },
    /// Keep exactly these coordinates; all others are pinned to zero.
    Projection { keep: Vec<usize> },
    /// Keep the first `j` coordinates.
    Cutoff { j: usize },
}

impl QuadPenalty {
    pub fn ridge(g2: f64) -> Self {
        QuadPenalty::Ridge { g2 }
    }

    pub fn diagonal(g2: Vec<f64>) -> Self {
        QuadPenalty::Diagonal { g2 }
    }

    pub fn dense(g2: DMatrix<f64>) -> Self {
        let rows = (0..g2.nrows())
            .map(|i| g2.row(i).iter().copied().collect())
            .collect();
        QuadPenalty::Dense { g2: rows }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            QuadPenalty::Dense { g2 } => {
                if g2.len() != dim || g2.iter().any(|r| r.len() != dim) {
                    return Err(Error::Validation("dense penalty dimension mismatch".into()));
                }
                let m = self.matrix(dim).expect("dense is finite");
                if linalg::eig_min(&m) < -1e-9 * (1.0 + linalg::spectral_norm_sym(&m)) {
                    return Err(Error::Validation("dense penalty must be PSD".into()));
                }
            }
            QuadPenalty::Diagonal { g2 } => {
                if g2.len() != dim {
                    return Err(Error::Validation("diagonal penalty dimension mismatch".into()));
                }
                if g2.iter().any(|&x| x < 0.0) {
                    return Err(Error::Validation("diagonal penalty entries must be >= 0".into()));
                }
            }
            QuadPenalty::Ridge { g2 } => {
                if *g2 < 0.0 {
                    return Err(Error::Validation("ridge penalty must be >= 0".into()));
                }
            }
            QuadPenalty::Projection { keep } => {
                if keep.is_empty() || keep.iter().any(|&i| i >= dim) {
                    return Err(Error::Validation("projection index set invalid".into()));
                }
            }
            QuadPenalty::Cutoff { j } => {
                if *j == 0 || *j > dim {
                    return Err(Error::Validation(format!("cutoff j must be in 1..={dim}")));
                }
            }
        }
        Ok(())
    }

    /// Kept coordinates for subspace penalties; `None` for finite penalties.
    pub fn kept(&self, _dim: usize) -> Option<Vec<usize>> {
        match self {
            QuadPenalty::Projection { keep } => Some(keep.clone()),
            QuadPenalty::Cutoff { j } => Some((0..*j).collect()),
            _ => None,
        }
    }

    /// `G²` as a matrix; `None` for subspace penalties.
    pub fn matrix(&self, dim: usize) -> Option<DMatrix<f64>> {
        match self {
            QuadPenalty::Dense { g2 } => {
                let flat: Vec<f64> = g2.iter().flatten().copied().collect();
                Some(DMatrix::from_row_slice(dim, dim, &flat))
            }
            QuadPenalty::Diagonal { g2 } => {
                Some(DMatrix::from_diagonal(&DVector::from_row_slice(g2)))
            }
            QuadPenalty::Ridge { g2 } => Some(DMatrix::identity(dim, dim) * *g2),
            _ => None,
        }
    }

    /// Whether the penalty is identically zero.
    pub fn is_null(&self) -> bool {
        match self {
            QuadPenalty::Ridge { g2 } => *g2 == 0.0,
            QuadPenalty::Diagonal { g2 } => g2.iter().all(|&x| x == 0.0),
            QuadPenalty::Dense { g2 } => g2.iter().flatten().all(|&x| x == 0.0),
            _ => false,
        }
    }

    pub fn value(&self, ups: &DVector<f64>) -> f64 {
        match self {
            QuadPenalty::Ridge { g2 } => 0.5 * g2 * ups.norm_squared(),
            QuadPenalty::Diagonal { g2 } => {
                0.5 * ups.iter().zip(g2).map(|(&u, &d)| d * u * u).sum::<f64>()
            }
            QuadPenalty::Dense { .. } => {
                let m = self.matrix(ups.len()).expect("finite");
                0.5 * ups.dot(&(&m * ups))
            }
            _ => 0.0,
        }
    }

    pub fn grad(&self, ups: &DVector<f64>) -> DVector<f64> {
        match self {
            QuadPenalty::Ridge { g2 } => ups * *g2,
            QuadPenalty::Diagonal { g2 } => {
                DVector::from_iterator(ups.len(), ups.iter().zip(g2).map(|(&u, &d)| d * u))
            }
            QuadPenalty::Dense { .. } => self.matrix(ups.len()).expect("finite") * ups,
            _ => DVector::zeros(ups.len()),
        }
    }
}

/// Solver options for the damped Newton iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Gradient tolerance scale: stop at `‖∇L_G‖ <= tol (1 + |L_G|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective value at every accepted iterate.
    pub trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, trace: false }
    }
}

/// Penalized minimizer with convergence diagnostics and the penalized Fisher
/// operator at the solution.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// Minimizer in solver coordinates (full-dimensional; pinned coordinates
    /// of subspace penalties are zero).
    pub upsilon_hat: Vec<f64>,
    pub iters: usize,
    pub grad_norm: f64,
    /// `F_G` at the solution (reduced to the kept block for subspace
    /// penalties).
    pub hess_g: Vec<Vec<f64>>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn upsilon(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.upsilon_hat)
    }

    pub fn hess(&self) -> DMatrix<f64> {
        let r = self.hess_g.len();
        let flat: Vec<f64> = self.hess_g.iter().flatten().copied().collect();
        DMatrix::from_row_slice(r, r, &flat)
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Objective closures for the Newton core.
struct Objective<'a> {
    loss: Box<dyn Fn(&DVector<f64>) -> Result<f64> + 'a>,
    grad: Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a>,
    hess: Box<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + 'a>,
    in_domain: Box<dyn Fn(&DVector<f64>) -> bool + 'a>,
    gauge_fix: Box<dyn Fn(&mut DVector<f64>) + 'a>,
}

/// Damped Newton with Armijo backtracking (factor ½, slope 1e-4) and a
/// Levenberg shift `1e-10 tr(H)/p` added only when the Cholesky factorization
/// fails. Steps are halved until the iterate stays inside the model domain.
fn newton(obj: &Objective, start: DVector<f64>, opts: &FitOptions) -> Result<FitResult> {
    let mut ups = start;
    (obj.gauge_fix)(&mut ups);
    if !(obj.in_domain)(&ups) {
        return Err(Error::DomainExit("starting point outside the model domain".into()));
    }
    let mut f = (obj.loss)(&ups)?;
    let mut trace = if opts.trace { vec![f] } else { Vec::new() };
    let p = ups.len().max(1);

    for iter in 0..opts.max_iter {
        let g = (obj.grad)(&ups)?;
        let gn = g.norm();
        if gn <= opts.tol * (1.0 + f.abs()) {
            let hess = (obj.hess)(&ups)?;
            return Ok(FitResult {
                upsilon_hat: ups.iter().copied().collect(),
                iters: iter,
                grad_norm: gn,
                hess_g: to_rows(&hess),
                converged: true,
                trace,
            });
        }
        let h = (obj.hess)(&ups)?;
        // Cholesky with escalating Levenberg shift on failure.
        let mut shift = 0.0;
        let dir = loop {
            let mut hs = h.clone();
            if shift > 0.0 {
                for i in 0..hs.nrows() {
                    hs[(i, i)] += shift;
                }
            }
            match nalgebra::Cholesky::new(hs) {
                Some(ch) => break -ch.solve(&g),
                None => {
                    shift = if shift == 0.0 {
                        1e-10 * h.trace().abs().max(1e-300) / p as f64
                    } else {
                        shift * 10.0
                    };
                    if !shift.is_finite() || shift > 1e12 * h.trace().abs().max(1.0) {
                        return Err(Error::Singular("penalized Hessian"));
                    }
                }
            }
        };

        let slope = g.dot(&dir);
        // Near the optimum the theoretical decrease sinks below the floating
        // point resolution of f; the Armijo test carries that slack.
        let f_res = 4.0 * f64::EPSILON * (1.0 + f.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let mut cand = &ups + &dir * t;
            (obj.gauge_fix)(&mut cand);
            if (obj.in_domain)(&cand) {
                let fc = (obj.loss)(&cand)?;
                if fc <= f + 1e-4 * t * slope + f_res {
                    ups = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConverged { grad_norm: gn, iters: iter });
        }
        if opts.trace {
            trace.push(f);
        }
    }
    let g = (obj.grad)(&ups)?;
    Err(Error::NonConverged { grad_norm: g.norm(), iters: opts.max_iter })
}

fn embed(reduced: &DVector<f64>, kept: &[usize], dim: usize) -> DVector<f64> {
    let mut full = DVector::zeros(dim);
    for (r, &i) in kept.iter().enumerate() {
        full[i] = reduced[r];
    }
    full
}

fn restrict_vec(full: &DVector<f64>, kept: &[usize]) -> DVector<f64> {
    DVector::from_iterator(kept.len(), kept.iter().map(|&i| full[i]))
}

pub(crate) fn restrict_mat(full: &DMatrix<f64>, kept: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(kept.len(), kept.len(), |r, c| full[(kept[r], kept[c])])
}

fn fit_impl<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    opts: &FitOptions,
    loss: impl Fn(&DVector<f64>) -> Result<f64>,
    grad: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    hess: impl Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
) -> Result<FitResult> {
    let dim = model.dim();
    pen.validate(dim)?;
    let start = model.truth();

    if let Some(kept) = pen.kept(dim) {
        // Subspace restriction: Newton on the kept coordinates.
        let obj = Objective {
            loss: Box::new(|u: &DVector<f64>| loss(&embed(u, &kept, dim))),
            grad: Box::new(|u: &DVector<f64>| Ok(restrict_vec(&grad(&embed(u, &kept, dim))?, &kept))),
            hess: Box::new(|u: &DVector<f64>| Ok(restrict_mat(&hess(&embed(u, &kept, dim))?, &kept))),
            in_domain: Box::new(|u: &DVector<f64>| model.in_domain(&embed(u, &kept, dim))),
            gauge_fix: Box::new(|_u: &mut DVector<f64>| {}),
        };
        let mut res = newton(&obj, restrict_vec(&start, &kept), opts)?;
        res.upsilon_hat = embed(&DVector::from_row_slice(&res.upsilon_hat), &kept, dim)
            .iter()
            .copied()
            .collect();
        return Ok(res);
    }

    let pen_loss = |u: &DVector<f64>| Ok(loss(u)? + pen.value(u));
    let pen_grad = |u: &DVector<f64>| Ok(grad(u)? + pen.grad(u));
    let g2 = pen.matrix(dim).expect("finite penalty");
    let pen_hess = move |u: &DVector<f64>| Ok(hess(u)? + &g2);
    // Identifiability along flat directions (histogram shift invariance) is
    // normally resolved by the penalty; with a null penalty the model's gauge
    // normalization pins the representative instead.
    let null_pen = pen.is_null();
    let obj = Objective {
        loss: Box::new(pen_loss),
        grad: Box::new(pen_grad),
        hess: Box::new(pen_hess),
        in_domain: Box::new(|u: &DVector<f64>| model.in_domain(u)),
        gauge_fix: Box::new(move |u: &mut DVector<f64>| {
            if null_pen {
                model.gauge_fix(u)
            }
        }),
    };
    newton(&obj, start, opts)
}

/// Penalized MLE `ũ_G = argmin { L(υ; data) + pen(υ) }`.
pub fn fit_pmle<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    data: &M::Data,
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_impl(
        model,
        pen,
        opts,
        |u| model.loss(data, u),
        |u| model.grad(data, u),
        |u| model.base_hess(u),
    )
}

/// Population target `υ*_G = argmin { E L(υ) + pen(υ) }`.
pub fn fit_population<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_impl(
        model,
        pen,
        opts,
        |u| model.pop_loss(u),
        |u| model.pop_grad(u),
        |u| model.base_hess(u),
    )
}

/// Penalized empirical objective value `L_G(υ)` (subspace penalties add 0 on
/// their domain).
pub fn penalized_loss<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    data: &M::Data,
    ups: &DVector<f64>,
) -> Result<f64> {
    Ok(model.loss(data, ups)? + pen.value(ups))
}

/// Penalized Fisher operator `F_G(υ) = F(υ) + G²` (reduced block for
/// subspace penalties).
pub fn penalized_fisher<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    ups: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let f = model.base_hess(ups)?;
    match pen.kept(model.dim()) {
        Some(kept) => Ok(restrict_mat(&f, &kept)),
        None => Ok(f + pen.matrix(model.dim()).expect("finite penalty")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HistogramModel, LogisticModel, QuadraticModel};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn quadratic_model_closed_form() {
        // ũ = (A + G²)^{-1} (A υ* − ∇ζ).
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 2.0]);
        let truth = DVector::from_row_slice(&[1.0, -0.5]);
        let m = QuadraticModel::new(a.clone(), truth.clone(), None).unwrap();
        let data = m.sample(11);
        let pen = QuadPenalty::ridge(0.7);
        let fit = fit_pmle(&m, &pen, &data, &FitOptions::default()).unwrap();
        let fg = &a + DMatrix::identity(2, 2) * 0.7;
        let want = fg.clone().try_inverse().unwrap() * (&a * &truth - &data.zeta_grad);
        assert!((fit.upsilon() - want).norm() < 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn scalar_logistic_fixture_matches_bisection() {
        // One obs, Y=1, psi=1, ridge g²=1: minimizer solves υ + sigmoid(υ) = 1.
        let m = LogisticModel::well_specified(
            vec![DVector::from_element(1, 1.0)],
            &DVector::zeros(1),
        )
        .unwrap();
        let data = crate::models::LogisticData { labels: vec![1] };
        let fit = fit_pmle(&m, &QuadPenalty::ridge(1.0), &data, &FitOptions::default()).unwrap();

        // Independent bisection oracle on f(υ) = −1 + sigmoid(υ) + υ.
        let f = |u: f64| -1.0 + 1.0 / (1.0 + (-u).exp()) + u;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((fit.upsilon()[0] - root).abs() < 1e-5);
        assert_relative_eq!(root, 0.4010580, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_logistic_data_gives_zero() {
        // Like-labelled pairs on ±Ψ cancel the linear term, so the penalized
        // objective is even and the solution is exactly 0 for any ridge.
        let designs = vec![
            DVector::from_row_slice(&[1.0, 0.5]),
            DVector::from_row_slice(&[-1.0, -0.5]),
            DVector::from_row_slice(&[0.3, -0.2]),
            DVector::from_row_slice(&[-0.3, 0.2]),
        ];
        let m = LogisticModel::well_specified(designs, &DVector::zeros(2)).unwrap();
        let data = crate::models::LogisticData { labels: vec![1, 1, 0, 0] };
        let fit = fit_pmle(&m, &QuadPenalty::ridge(0.5), &data, &FitOptions::default()).unwrap();
        assert!(fit.upsilon().norm() < 1e-9);
    }

    #[test]
    fn population_fit_recovers_truth_without_penalty() {
        let designs: Vec<DVector<f64>> = (0..40)
            .map(|i| {
                DVector::from_row_slice(&[(i as f64 * 0.37).sin(), (i as f64 * 0.61).cos(), 1.0])
            })
            .collect();
        let truth = DVector::from_row_slice(&[0.6, -0.4, 0.2]);
        let m = LogisticModel::well_specified(designs, &truth).unwrap();
        let fit = fit_population(&m, &QuadPenalty::ridge(0.0), &FitOptions::default()).unwrap();
        assert!((fit.upsilon() - truth).norm() < 1e-8);
    }

    #[test]
    fn huge_ridge_shrinks_population_fit_to_zero() {
        let designs: Vec<DVector<f64>> =
            (0..10).map(|i| DVector::from_row_slice(&[1.0, i as f64 / 10.0])).collect();
        let m = LogisticModel::well_specified(designs, &DVector::from_row_slice(&[0.8, -0.3]))
            .unwrap();
        let fit = fit_population(&m, &QuadPenalty::ridge(1e9), &FitOptions::default()).unwrap();
        assert!(fit.upsilon().norm() < 1e-5);
    }

    #[test]
    fn unpenalized_histogram_is_gauge_fixed() {
        let m = HistogramModel::new(DVector::from_row_slice(&[0.25, 0.25, 0.5]), 500).unwrap();
        let data = m.sample(3);
        let fit = fit_pmle(&m, &QuadPenalty::ridge(0.0), &data, &FitOptions::default()).unwrap();
        // The zero-mean gauge pins the shift-invariant direction...
        assert!(fit.upsilon().mean().abs() < 1e-12);
        // ...and the fitted probabilities match empirical frequencies.
        let (_, theta, _) = crate::models::histogram_phi(&fit.upsilon());
        for j in 0..3 {
            assert_relative_eq!(theta[j], data.counts[j] as f64 / 500.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn projection_matches_dense_limit() {
        let designs: Vec<DVector<f64>> = (0..60)
            .map(|i| {
                let t = i as f64;
                DVector::from_iterator(10, (0..10).map(|j| ((t + 1.0) * (j as f64 + 0.3)).sin()))
            })
            .collect();
        let truth = DVector::from_iterator(10, (0..10).map(|j| 0.1 * (j as f64 - 4.5)));
        let m = LogisticModel::well_specified(designs, &truth).unwrap();
        let data = m.sample(17);
        let keep: Vec<usize> = (0..5).collect();
        let proj = fit_pmle(
            &m,
            &QuadPenalty::Projection { keep: keep.clone() },
            &data,
            &FitOptions::default(),
        )
        .unwrap();
        let mut g2 = vec![1e8; 10];
        for &k in &keep {
            g2[k] = 0.0;
        }
        let dense =
            fit_pmle(&m, &QuadPenalty::diagonal(g2), &data, &FitOptions::default()).unwrap();
        let pu = proj.upsilon();
        let du = dense.upsilon();
        assert!((&pu - &du).norm() <= 1e-4 * pu.norm().max(1.0));
    }

    #[test]
    fn objective_strictly_decreases() {
        let designs: Vec<DVector<f64>> =
            (0..30).map(|i| DVector::from_row_slice(&[(i as f64).cos(), 1.0])).collect();
        let m = LogisticModel::well_specified(designs, &DVector::from_row_slice(&[1.2, -0.8]))
            .unwrap();
        let data = m.sample(5);
        let mut opts = FitOptions::default();
        opts.trace = true;
        // Start far away: exercise the line search.
        let fit = fit_pmle(&m, &QuadPenalty::ridge(0.05), &data, &opts).unwrap();
        for w in fit.trace.windows(2) {
            assert!(
                w[1] < w[0] + 1e-11 * (1.0 + w[0].abs()),
                "objective increased: {:?}",
                w
            );
        }
        assert!(fit.grad_norm <= 1e-9 * (1.0 + fit.trace.last().unwrap().abs()));
    }
}
