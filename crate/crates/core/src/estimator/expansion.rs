//! Effective dimension, Fisher/Wilks expansion certificates, penalization
//! bias, and fourth-order corrections.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{fit_pmle, fit_population, penalized_loss, FitOptions, QuadPenalty};
use crate::linalg;
use crate::models::{ConditionConstants, SlsModel};
use crate::tailbounds::{gaussian_quantile, SpectralSummary};

/// `dim_G = tr(F_G⁻¹ F)` (or `tr(F_G⁻¹ V²)` when a separate variance
/// majorant is supplied) plus the quantile closure `r_G(x) = √dim_G + √(2x)`.
///
/// Subspace penalties restrict to the kept block, so projections give
/// `dim_G = |M|` when `V² = F`.
pub fn effective_dimension(
    fisher: &DMatrix<f64>,
    pen: &QuadPenalty,
    v2: Option<&DMatrix<f64>>,
) -> Result<(f64, impl Fn(f64) -> f64)> {
    let dim = fisher.nrows();
    pen.validate(dim)?;
    let dim_g = match pen.kept(dim) {
        Some(kept) => {
            let f_kk = super::restrict_mat(fisher, &kept);
            let chol = linalg::cholesky(&f_kk, "restricted Fisher")?;
            let target = match v2 {
                Some(v) => super::restrict_mat(v, &kept),
                None => f_kk.clone(),
            };
            chol.solve(&target).trace()
        }
        None => {
            let fg = fisher + pen.matrix(dim).expect("finite penalty");
            let chol = linalg::cholesky(&fg, "penalized Fisher")?;
            let target = v2.cloned().unwrap_or_else(|| fisher.clone());
            chol.solve(&target).trace()
        }
    };
    let r_g = move |x: f64| dim_g.sqrt() + (2.0 * x).sqrt();
    Ok((dim_g, r_g))
}

/// Residuals and theoretical bounds for the Fisher and Wilks expansions plus
/// the penalization-bias expansion, all at one `(data, x)` instance.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub fisher_lhs: f64,
    pub fisher_rhs: f64,
    pub wilks_lhs: f64,
    pub wilks_rhs: f64,
    pub bias_lhs: f64,
    pub bias_rhs: f64,
    pub on_omega: bool,
    /// `‖D F_G⁻¹ ∇ζ‖`, the radius entering every right-hand side.
    pub zeta_norm_d: f64,
    /// Quantile `r_D = z(B_D, x)` defining the event Ω(x).
    pub r_d: f64,
    /// Penalization-bias radius `b_D = ‖D F_G⁻¹ M_G‖`.
    pub b_d: f64,
    /// Whether every theorem precondition held; bounds are non-binding
    /// otherwise but are still reported.
    pub applicable: bool,
    /// Violated preconditions, when any.
    pub notes: Vec<String>,
    /// Spectral gap `‖F_G(υ*_G) − F_G(υ*)‖ / ‖F_G(υ*_G)‖`: the two
    /// penalized-Fisher conventions, logged.
    pub fg_gap: f64,
    /// Minimal metric constant `ϰ² = λ_max(F_G⁻¹D²)` entering the
    /// preconditions (the model's quartic `varkappa` only feeds `τ₃`/`τ₄`).
    pub kappa2_metric: f64,
    pub v2_convention: String,
}

/// Shared penalized geometry at the population solution.
struct Geometry {
    ups_star: DVector<f64>,
    ups_star_g: DVector<f64>,
    fg: DMatrix<f64>,
    fg_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    m_g: DVector<f64>,
    fg_gap: f64,
}

fn geometry<M: SlsModel>(model: &M, pen: &QuadPenalty, opts: &FitOptions) -> Result<Geometry> {
    if pen.kept(model.dim()).is_some() {
        return Err(Error::Unsupported(
            "expansion/risk certificates need a finite penalty; reduce the model for projections"
                .into(),
        ));
    }
    pen.validate(model.dim())?;
    let ups_star = model.truth();
    let pop = fit_population(model, pen, opts)?;
    let ups_star_g = pop.upsilon();
    let g2 = pen.matrix(model.dim()).expect("finite penalty");
    let fg = model.base_hess(&ups_star_g)? + &g2;
    let fg_alt = model.base_hess(&ups_star)? + &g2;
    let fg_gap = linalg::spectral_norm_sym(&(&fg - &fg_alt))
        / linalg::spectral_norm_sym(&fg).max(1e-300);
    let fg_chol = linalg::cholesky(&fg, "penalized Fisher")?;
    let m_g = &g2 * &ups_star;
    Ok(Geometry { ups_star, ups_star_g, fg, fg_chol, m_g, fg_gap })
}

/// Fisher and Wilks expansion certificate at one dataset.
///
/// Fills `fisher_lhs = ‖D⁻¹F_G(ũ−υ*_G+F_G⁻¹∇ζ)‖` against
/// `(3τ₃/4)‖DF_G⁻¹∇ζ‖²`, `wilks_lhs = |2L_G(ũ)−2L_G(υ*_G)+‖F_G^{-1/2}∇ζ‖²|`
/// against `(τ₃/2)‖DF_G⁻¹∇ζ‖³`, and the bias pair; `on_omega` is the event
/// `‖DF_G⁻¹∇ζ‖ <= r_D = z(B_D, x)` with `B_D = DF_G⁻¹V²F_G⁻¹D`.
///
/// Precondition failures (`τ₃ϰ²r_D >= 4/9`, `D² > ϰ²F_G`) do not abort: the
/// report is computed and flagged non-applicable.
pub fn expansion_certificate<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    data: &M::Data,
    constants: &ConditionConstants,
    d_metric: &DMatrix<f64>,
    x: f64,
    opts: &FitOptions,
) -> Result<ExpansionReport> {
    let geo = geometry(model, pen, opts)?;
    let fit = fit_pmle(model, pen, data, opts)?;
    let ups_hat = fit.upsilon();
    let zeta = model.grad_zeta(data);

    let fg_inv_zeta = geo.fg_chol.solve(&zeta);
    let d_fg_inv_zeta = (d_metric * &fg_inv_zeta).norm();

    // Quantile of the Omega event from B_D = D F_G^{-1} V^2 F_G^{-1} D.
    let v2 = model.v2_quantile();
    let fg_inv_d = geo.fg_chol.solve(d_metric);
    let mut b_d_mat = fg_inv_d.transpose() * &v2 * &fg_inv_d;
    linalg::symmetrize(&mut b_d_mat);
    let r_d = match SpectralSummary::from_psd(&b_d_mat) {
        Ok(s) => gaussian_quantile(&s, x)?,
        Err(_) => 0.0,
    };
    let on_omega = d_fg_inv_zeta <= r_d;

    // Fisher residual: D^{-1}(F_G(ũ − υ*_G) + ∇ζ).
    let fisher_vec = &geo.fg * (&ups_hat - &geo.ups_star_g) + &zeta;
    let fisher_lhs = d_inv_norm(d_metric, &fisher_vec)?;
    let tau3 = constants.tau3;
    let fisher_rhs = 0.75 * tau3 * d_fg_inv_zeta * d_fg_inv_zeta;

    // Wilks residual: |2L_G(ũ) − 2L_G(υ*_G) + ζᵀF_G⁻¹ζ|.
    let l_hat = penalized_loss(model, pen, data, &ups_hat)?;
    let l_star_g = penalized_loss(model, pen, data, &geo.ups_star_g)?;
    let wilks_lhs = (2.0 * l_hat - 2.0 * l_star_g + zeta.dot(&fg_inv_zeta)).abs();
    let wilks_rhs = 0.5 * tau3 * d_fg_inv_zeta.powi(3);

    // Bias pair.
    let bias = bias_terms(&geo, d_metric, constants)?;

    // Preconditions with the minimal metric constant D² <= ϰ²F_G.
    let mut notes = Vec::new();
    let kappa2_metric = metric_kappa2(&geo, d_metric);
    if tau3 * kappa2_metric * r_d >= 4.0 / 9.0 {
        notes.push(format!(
            "tau3*kappa^2*r_D = {} >= 4/9",
            tau3 * kappa2_metric * r_d
        ));
    }
    if tau3 * kappa2_metric * bias.b_d >= 4.0 / 9.0 {
        notes.push(format!(
            "tau3*kappa^2*b_D = {} >= 4/9",
            tau3 * kappa2_metric * bias.b_d
        ));
    }

    Ok(ExpansionReport {
        fisher_lhs,
        fisher_rhs,
        wilks_lhs,
        wilks_rhs,
        bias_lhs: bias.lhs,
        bias_rhs: bias.rhs,
        on_omega,
        zeta_norm_d: d_fg_inv_zeta,
        r_d,
        b_d: bias.b_d,
        applicable: notes.is_empty(),
        notes,
        fg_gap: geo.fg_gap,
        kappa2_metric,
        v2_convention: model.v2_convention().to_string(),
    })
}

/// Smallest ϰ² with `D² <= ϰ² F_G`, i.e. `λ_max(F_G⁻¹D²)`.
fn metric_kappa2(geo: &Geometry, d_metric: &DMatrix<f64>) -> f64 {
    let d2 = d_metric * d_metric;
    let m = geo.fg_chol.solve(&d2);
    // F_G⁻¹D² is similar to the symmetric F_G^{-1/2}D²F_G^{-1/2}: real
    // spectrum; take the largest eigenvalue via symmetrization of the
    // similar form.
    let mut sym = geo.fg_chol.l().solve_lower_triangular(&d2).unwrap_or_else(|| m.clone());
    sym = geo
        .fg_chol
        .l()
        .solve_lower_triangular(&sym.transpose())
        .unwrap_or(sym);
    linalg::symmetrize(&mut sym);
    linalg::eig_max(&sym).max(0.0)
}

fn d_inv_norm(d_metric: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    // ‖D⁻¹v‖ via a symmetric solve (D is PSD).
    Ok(linalg::cholesky(d_metric, "metric D")?.solve(v).norm())
}

struct BiasTerms {
    vec: DVector<f64>,
    lhs: f64,
    rhs: f64,
    b_d: f64,
}

fn bias_terms(
    geo: &Geometry,
    d_metric: &DMatrix<f64>,
    constants: &ConditionConstants,
) -> Result<BiasTerms> {
    let fg_inv_mg = geo.fg_chol.solve(&geo.m_g);
    let b_d = (d_metric * &fg_inv_mg).norm();
    let bias_vec = &geo.ups_star_g - &geo.ups_star;
    let resid = &geo.fg * &bias_vec + &geo.m_g;
    let lhs = d_inv_norm(d_metric, &resid)?;
    let rhs = 0.75 * constants.tau3 * b_d * b_d;
    Ok(BiasTerms { vec: bias_vec, lhs, rhs, b_d })
}

/// Penalization-bias expansion report.
#[derive(Debug, Clone, Serialize)]
pub struct BiasExpansion {
    /// `υ*_G − υ*`.
    pub bias_vec: Vec<f64>,
    /// `‖D⁻¹F_G(υ*_G − υ* + F_G⁻¹M_G)‖`.
    pub lhs: f64,
    /// `(3τ₃/4) b_D²`.
    pub rhs: f64,
    pub b_d: f64,
    /// `τ₃ϰ²b_D < 4/9` held.
    pub applicable: bool,
}

/// Bias caused by a smooth penalty: returns `υ*_G − υ*`, the residual norm of
/// its first-order expansion `−F_G⁻¹M_G` (with `M_G = G²υ*`), and the bound.
pub fn bias_expansion<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    constants: &ConditionConstants,
    d_metric: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<BiasExpansion> {
    let geo = geometry(model, pen, opts)?;
    let t = bias_terms(&geo, d_metric, constants)?;
    let applicable = constants.tau3 * metric_kappa2(&geo, d_metric) * t.b_d < 4.0 / 9.0;
    Ok(BiasExpansion {
        bias_vec: t.vec.iter().copied().collect(),
        lhs: t.lhs,
        rhs: t.rhs,
        b_d: t.b_d,
        applicable,
    })
}

/// Fourth-order corrected vectors.
#[derive(Debug, Clone)]
pub struct FourthOrderCorrection {
    /// `φ_G = F_G⁻¹{∇ζ + ∇𝒯(F_G⁻¹∇ζ)}`.
    pub phi_g: DVector<f64>,
    /// `μ_G = F_G⁻¹M_G + F_G⁻¹∇𝒯(F_G⁻¹M_G)`.
    pub mu_g: DVector<f64>,
}

/// Computes the 4S correction vectors, with `∇𝒯(u) = ½<∇³f(υ*_G), u⊗u⊗·>`
/// supplied by the model's third-derivative contraction.
pub fn fourth_order_correction<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    grad_zeta: &DVector<f64>,
    opts: &FitOptions,
) -> Result<FourthOrderCorrection> {
    let geo = geometry(model, pen, opts)?;
    let contraction = |u: &DVector<f64>| -> Result<DVector<f64>> {
        model.third_contraction(&geo.ups_star_g, u).ok_or_else(|| {
            Error::Unsupported("model provides no third-derivative contraction".into())
        })
    };
    let fg_inv_zeta = geo.fg_chol.solve(grad_zeta);
    let phi_g = geo.fg_chol.solve(&(grad_zeta + contraction(&fg_inv_zeta)?));
    let fg_inv_mg = geo.fg_chol.solve(&geo.m_g);
    let mu_g = &fg_inv_mg + geo.fg_chol.solve(&contraction(&fg_inv_mg)?);
    Ok(FourthOrderCorrection { phi_g, mu_g })
}

/// 3S-vs-4S residual comparison at one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct FourthOrderReport {
    /// `‖D⁻¹F_G(ũ − υ* + φ_G + μ_G)‖`.
    pub residual_4s: f64,
    /// `(τ₄/2 + ϰ²τ₃²)(‖DF_G⁻¹∇ζ‖³ + b_D³)`.
    pub bound_4s: f64,
    /// `‖D⁻¹F_G(ũ − υ* + F_G⁻¹∇ζ + F_G⁻¹M_G)‖`, the uncorrected residual.
    pub residual_3s: f64,
}

/// Evaluates the 4S Fisher residual against its bound, alongside the 3S
/// residual for comparison.
pub fn fourth_order_report<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    data: &M::Data,
    constants: &ConditionConstants,
    d_metric: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<FourthOrderReport> {
    let geo = geometry(model, pen, opts)?;
    let zeta = model.grad_zeta(data);
    let corr = fourth_order_correction(model, pen, &zeta, opts)?;
    let fit = fit_pmle(model, pen, data, opts)?;
    let ups_hat = fit.upsilon();

    let resid_vec = &geo.fg * (&ups_hat - &geo.ups_star + &corr.phi_g + &corr.mu_g);
    let residual_4s = d_inv_norm(d_metric, &resid_vec)?;

    let fg_inv_zeta = geo.fg_chol.solve(&zeta);
    let fg_inv_mg = geo.fg_chol.solve(&geo.m_g);
    let resid3_vec = &geo.fg * (&ups_hat - &geo.ups_star + &fg_inv_zeta + &fg_inv_mg);
    let residual_3s = d_inv_norm(d_metric, &resid3_vec)?;

    let d_fg_inv_zeta = (d_metric * &fg_inv_zeta).norm();
    let b_d = (d_metric * &fg_inv_mg).norm();
    let k2 = metric_kappa2(&geo, d_metric);
    let bound_4s = (constants.tau4 / 2.0 + k2 * constants.tau3 * constants.tau3)
        * (d_fg_inv_zeta.powi(3) + b_d.powi(3));

    Ok(FourthOrderReport { residual_4s, bound_4s, residual_3s })
}
