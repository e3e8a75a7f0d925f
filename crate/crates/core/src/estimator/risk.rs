//! Bias-variance risk sandwich for the penalized MLE.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::estimator::{fit_pmle, fit_population, FitOptions, QuadPenalty};
use crate::linalg;
use crate::models::{ConditionConstants, SlsModel};
use crate::rng::{derive_seed, tag};
use crate::tailbounds::{gaussian_quantile, SpectralSummary};

/// Monte Carlo options for the empirical-risk column of the certificate.
#[derive(Debug, Clone)]
pub struct RiskOptions {
    /// Replicates of the full fit; 0 disables the Monte Carlo column.
    pub mc_reps: usize,
    pub master_seed: u64,
    /// `C₄` override; default is `r_D/√dim_D`.
    pub c4: Option<f64>,
    pub fit: FitOptions,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self { mc_reps: 0, master_seed: 0, c4: None, fit: FitOptions::default() }
    }
}

/// Analytic risk decomposition with the `(1 ± α_Q)²` sandwich and the
/// optional Monte Carlo estimate alongside (never merged).
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    /// `tr Var(Q F_G⁻¹ ∇ζ)` — exact variance term.
    pub dim_q: f64,
    /// `‖Q F_G⁻¹ M_G‖²` — squared penalization bias through `Q`.
    pub bias_q: f64,
    /// Exact linear-surrogate risk `dim_q + bias_q`.
    #[serde(rename = "R_Q")]
    pub r_q: f64,
    #[serde(rename = "alpha_Q")]
    pub alpha_q: f64,
    pub sandwich_lo: f64,
    pub sandwich_hi: f64,
    /// `tr B_D` for `B_D = D F_G⁻¹ V² F_G⁻¹ D`.
    pub dim_d: f64,
    /// `‖D F_G⁻¹ M_G‖`.
    pub b_d: f64,
    /// `z(B_D, x)`.
    pub r_d: f64,
    /// `C₄` actually used (default `r_D/√dim_D`).
    pub c4: f64,
    /// Whether the theorem preconditions held; the sandwich is non-binding
    /// otherwise.
    pub applicable: bool,
    pub notes: Vec<String>,
    /// Monte Carlo `E‖Q(ũ_G−υ*)‖² 1_Ω` and its standard error, when run.
    pub mc_risk: Option<f64>,
    pub mc_se: Option<f64>,
    pub mc_reps: usize,
    /// Fraction of replicates on the Ω event.
    pub mc_omega_rate: Option<f64>,
    pub v2_convention: String,
}

/// Computes `dim_Q = tr(QF_G⁻¹V²F_G⁻¹Qᵀ)` analytically (with the exact
/// `V² = Var(∇ζ)`), the bias term, `R_Q`, `α_Q`, and the sandwich endpoints;
/// optionally runs `mc_reps` full fits and reports the empirical risk with
/// its standard error.
pub fn risk_certificate<M: SlsModel>(
    model: &M,
    pen: &QuadPenalty,
    q_map: &DMatrix<f64>,
    constants: &ConditionConstants,
    d_metric: &DMatrix<f64>,
    x: f64,
    opts: &RiskOptions,
) -> Result<RiskReport> {
    let ups_star = model.truth();
    let pop = fit_population(model, pen, &opts.fit)?;
    let ups_star_g = pop.upsilon();
    let g2 = pen
        .matrix(model.dim())
        .ok_or_else(|| crate::error::Error::Unsupported("finite penalty required".into()))?;
    let fg = model.base_hess(&ups_star_g)? + &g2;
    let fg_chol = linalg::cholesky(&fg, "penalized Fisher")?;
    let m_g = &g2 * &ups_star;

    // Exact variance term through Q.
    let var_zeta = model.var_zeta();
    let fg_inv_qt = fg_chol.solve(&q_map.transpose());
    let dim_q = (fg_inv_qt.transpose() * &var_zeta * &fg_inv_qt).trace();

    let fg_inv_mg = fg_chol.solve(&m_g);
    let bias_q = (q_map * &fg_inv_mg).norm_squared();
    let r_q = dim_q + bias_q;

    // D-geometry for alpha_Q (quantile convention V²).
    let v2q = model.v2_quantile();
    let fg_inv_d = fg_chol.solve(d_metric);
    let mut b_d_mat = fg_inv_d.transpose() * &v2q * &fg_inv_d;
    linalg::symmetrize(&mut b_d_mat);
    let (dim_d, r_d) = match SpectralSummary::from_psd(&b_d_mat) {
        Ok(s) => (s.dim_a, gaussian_quantile(&s, x)?),
        Err(_) => (0.0, 0.0),
    };
    let b_d = (d_metric * &fg_inv_mg).norm();
    let c4 = opts.c4.unwrap_or(if dim_d > 0.0 { r_d / dim_d.sqrt() } else { 1.0 });

    let q_fg_inv_d = q_map * &fg_inv_d;
    let q_norm = op_norm(&q_fg_inv_d);
    let alpha_q = if r_q > 0.0 {
        q_norm * 0.75 * constants.tau3 * (c4 * dim_d + b_d * b_d) / r_q.sqrt()
    } else {
        0.0
    };

    let mut notes = Vec::new();
    // Minimal metric constant D² <= ϰ²F_G, computed spectrally.
    let d2 = d_metric * d_metric;
    let mut sym = fg_chol.l().solve_lower_triangular(&d2).expect("triangular");
    sym = fg_chol.l().solve_lower_triangular(&sym.transpose()).expect("triangular");
    linalg::symmetrize(&mut sym);
    let k2 = linalg::eig_max(&sym).max(0.0);
    let rmax = r_d.max(b_d);
    if constants.tau3 * k2 * rmax >= 4.0 / 9.0 {
        notes.push(format!("tau3*kappa^2*max(r_D,b_D) = {} >= 4/9", constants.tau3 * k2 * rmax));
    }
    if alpha_q >= 1.0 {
        notes.push(format!("alpha_Q = {alpha_q} >= 1: sandwich void"));
    }

    // Monte Carlo column: per-replicate seeds derive from
    // (master_seed, replicate_index), so aggregation is thread-count free.
    let (mc_risk, mc_se, mc_omega_rate) = if opts.mc_reps > 0 {
        let vals: Vec<(f64, bool)> = (0..opts.mc_reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(opts.master_seed, rep as u64, tag::MC_RISK);
                let data = model.sample(seed);
                let fit = fit_pmle(model, pen, &data, &opts.fit)?;
                let zeta = model.grad_zeta(&data);
                let on_omega = (d_metric * fg_chol.solve(&zeta)).norm() <= r_d;
                let err = q_map * (fit.upsilon() - &ups_star);
                Ok((if on_omega { err.norm_squared() } else { 0.0 }, on_omega))
            })
            .collect::<Result<_>>()?;
        let n = vals.len() as f64;
        let mean = vals.iter().map(|v| v.0).sum::<f64>() / n;
        let var = vals.iter().map(|v| (v.0 - mean) * (v.0 - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let omega = vals.iter().filter(|v| v.1).count() as f64 / n;
        (Some(mean), Some((var / n).sqrt()), Some(omega))
    } else {
        (None, None, None)
    };

    Ok(RiskReport {
        dim_q,
        bias_q,
        r_q,
        alpha_q,
        sandwich_lo: (1.0 - alpha_q).powi(2) * r_q,
        sandwich_hi: (1.0 + alpha_q).powi(2) * r_q,
        dim_d,
        b_d,
        r_d,
        c4,
        applicable: notes.is_empty(),
        notes,
        mc_risk,
        mc_se,
        mc_reps: opts.mc_reps,
        mc_omega_rate,
        v2_convention: model.v2_convention().to_string(),
    })
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    let mut mm = m * m.transpose();
    linalg::symmetrize(&mut mm);
    linalg::eig_max(&mm).max(0.0).sqrt()
}
