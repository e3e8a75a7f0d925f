//! Sequence-space penalty design: ridge vs spectral cut-off vs projection
//! risk bounds, the polynomial-growth roughness condition, oracle cut-off
//! selection, and minimax-rate sweeps.
//!
//! Tail sums like `Σ j⁻⁴` drive the checks, so all sequence accumulation uses
//! compensated summation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ksum, KahanSum};

/// Diagonalized Fisher spectrum `N₁ >= … >= N_p`, smoothness weights
/// `w₁ <= … <= w_p`, and signal coefficients in the eigenbasis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceModel {
    /// Nonincreasing positive Fisher eigenvalues.
    pub n_seq: Vec<f64>,
    /// Nondecreasing positive smoothness weights.
    pub w_seq: Vec<f64>,
    /// Signal coefficients `<υ*, e_j>`.
    pub upsilon_star: Vec<f64>,
    /// Whether `Σ w_j² υ*_j² <= 1` is asserted (the Sobolev ball flag).
    pub sobolev: bool,
}

impl SequenceModel {
    pub fn new(n_seq: Vec<f64>, w_seq: Vec<f64>, upsilon_star: Vec<f64>, sobolev: bool) -> Result<Self> {
        let p = n_seq.len();
        if p == 0 || w_seq.len() != p || upsilon_star.len() != p {
            return Err(Error::Validation("sequence model arrays must share a positive length".into()));
        }
        if n_seq.windows(2).any(|w| w[1] > w[0]) || n_seq.iter().any(|&x| x <= 0.0) {
            return Err(Error::Validation("Fisher spectrum must be positive nonincreasing".into()));
        }
        if w_seq.windows(2).any(|w| w[1] < w[0]) || w_seq.iter().any(|&x| x <= 0.0) {
            return Err(Error::Validation("weights must be positive nondecreasing".into()));
        }
        if sobolev {
            let mass = ksum(
                w_seq.iter().zip(&upsilon_star).map(|(&w, &u)| w * w * u * u),
            );
            if mass > 1.0 + 1e-9 {
                return Err(Error::Validation(format!(
                    "Sobolev flag set but sum w^2 ups^2 = {mass} > 1"
                )));
            }
        }
        Ok(Self { n_seq, w_seq, upsilon_star, sobolev })
    }

    pub fn len(&self) -> usize {
        self.n_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_seq.is_empty()
    }

    /// `J_g = max{ j : N_j >= g² }` with the inclusive tie rule (1-based
    /// count; 0 when `g²` exceeds `N₁`).
    pub fn ridge_cut_index(&self, g2: f64) -> usize {
        self.n_seq.partition_point(|&n| n >= g2)
    }
}

/// Ridge risk terms: the paper's bounds and the exact diagonal values.
#[derive(Debug, Clone, Serialize)]
pub struct RidgeRisk {
    /// `Σ_{j<=J} 1/N_j + g⁻⁴ Σ_{j>J} N_j` at `J = J_g`.
    pub var_bound: f64,
    /// `1/w_J²` under the Sobolev flag (for `J = 0`, the intermediate bound
    /// `max_j w_j⁻²/(g⁻²N_j+1)²`).
    pub bias_bound: f64,
    /// `Σ N_j/(N_j+g²)²`.
    pub exact_var: f64,
    /// `Σ υ*_j²/(g⁻²N_j+1)²`.
    pub exact_bias: f64,
    pub j_cut: usize,
}

/// Variance/bias of ridge penalization `G² = g² I` in the eigenbasis.
///
/// Exact terms are always valid; `var_bound` needs `Var(∇ζ) <= F` and
/// `bias_bound` the Sobolev flag together with `w_j N_j` nonincreasing.
pub fn ridge_risk_bound(m: &SequenceModel, g2: f64) -> Result<RidgeRisk> {
    if !(g2 > 0.0) {
        return Err(Error::domain("ridge_risk_bound", format!("g2 must be > 0, got {g2}")));
    }
    let j = m.ridge_cut_index(g2);
    let mut head = KahanSum::default();
    for &n in &m.n_seq[..j] {
        head.add(1.0 / n);
    }
    let mut tail = KahanSum::default();
    for &n in &m.n_seq[j..] {
        tail.add(n);
    }
    let var_bound = head.value() + tail.value() / (g2 * g2);

    let exact_var = ksum(m.n_seq.iter().map(|&n| n / ((n + g2) * (n + g2))));
    let exact_bias = ksum(
        m.n_seq
            .iter()
            .zip(&m.upsilon_star)
            .map(|(&n, &u)| u * u / ((n / g2 + 1.0) * (n / g2 + 1.0))),
    );
    let bias_bound = if j >= 1 {
        1.0 / (m.w_seq[j - 1] * m.w_seq[j - 1])
    } else {
        m.w_seq
            .iter()
            .zip(&m.n_seq)
            .map(|(&w, &n)| 1.0 / (w * w * (n / g2 + 1.0) * (n / g2 + 1.0)))
            .fold(0.0f64, f64::max)
    };
    Ok(RidgeRisk { var_bound, bias_bound, exact_var, exact_bias, j_cut: j })
}

/// Spectral cut-off at `J`: variance bound `Σ_{j<=J} 1/N_j` and the exact
/// tail bias `Σ_{j>J} υ*_j²`. `J = 0` gives `(0, ‖υ*‖²)`; `J = p` gives zero
/// bias.
pub fn cutoff_risk(m: &SequenceModel, j: usize) -> Result<(f64, f64)> {
    if j > m.len() {
        return Err(Error::domain("cutoff_risk", format!("J = {j} exceeds p = {}", m.len())));
    }
    let var = ksum(m.n_seq[..j].iter().map(|&n| 1.0 / n));
    let bias = ksum(m.upsilon_star[j..].iter().map(|&u| u * u));
    Ok((var, bias))
}

/// Exhaustive oracle cut-off: argmin over `J ∈ {0,…,p}` of
/// `var_term + bias_term`, ties broken toward smaller `J`.
pub fn oracle_cutoff(m: &SequenceModel) -> (usize, f64) {
    let p = m.len();
    // One pass: prefix variance, suffix bias.
    let mut best_j = 0usize;
    let (_, bias0) = cutoff_risk(m, 0).expect("J=0 valid");
    let mut best = bias0;
    let mut var = KahanSum::default();
    let mut bias = bias0;
    for j in 1..=p {
        var.add(1.0 / m.n_seq[j - 1]);
        let u = m.upsilon_star[j - 1];
        bias -= u * u;
        let risk = var.value() + bias.max(0.0);
        if risk < best {
            best = risk;
            best_j = j;
        }
    }
    (best_j, best)
}

/// Checks the polynomial-growth condition on a nondecreasing spectrum `b_j²`:
/// `Σ_{j>M} b_j⁻⁴ <= C_B M b_{M+1}⁻⁴` and `Σ_{j<=M} b_j⁴ <= C_B M b_M⁴` for
/// every `M < p`.
pub fn roughness_condition(bsq: &[f64], c_b: f64) -> Result<bool> {
    validate_bsq(bsq)?;
    let p = bsq.len();
    // Suffix sums of b^{-4} and prefix sums of b^4, compensated.
    let mut suffix = vec![0.0; p + 1];
    let mut acc = KahanSum::default();
    for j in (0..p).rev() {
        acc.add(bsq[j].powi(-2));
        suffix[j] = acc.value();
    }
    let mut prefix = KahanSum::default();
    for m in 1..p {
        prefix.add(bsq[m - 1] * bsq[m - 1]);
        let first = suffix[m] <= c_b * m as f64 * bsq[m].powi(-2) + 1e-15;
        let second = prefix.value() <= c_b * m as f64 * bsq[m - 1] * bsq[m - 1] + 1e-15;
        if !first || !second {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimal `C_B` for which [`roughness_condition`] holds (scan over `M`).
pub fn roughness_minimal_constant(bsq: &[f64]) -> Result<f64> {
    validate_bsq(bsq)?;
    let p = bsq.len();
    let mut suffix = vec![0.0; p + 1];
    let mut acc = KahanSum::default();
    for j in (0..p).rev() {
        acc.add(bsq[j].powi(-2));
        suffix[j] = acc.value();
    }
    let mut prefix = KahanSum::default();
    let mut c_min = 0.0f64;
    for m in 1..p {
        prefix.add(bsq[m - 1] * bsq[m - 1]);
        c_min = c_min.max(suffix[m] / (m as f64 * bsq[m].powi(-2)));
        c_min = c_min.max(prefix.value() / (m as f64 * bsq[m - 1] * bsq[m - 1]));
    }
    Ok(c_min)
}

fn validate_bsq(bsq: &[f64]) -> Result<()> {
    if bsq.is_empty() || bsq.iter().any(|&b| b <= 0.0) || bsq.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Validation("b^2 must be positive nondecreasing".into()));
    }
    Ok(())
}

/// Roughness-penalty effective dimension: exact `Σ (1+b_j²)⁻²`, the paper
/// bound `(1+C_B) M_G` with `M_G = max{ m : b_m² <= 1 }` (0 when none; the
/// bound degenerates then).
pub fn roughness_effective_dim(bsq: &[f64], c_b: f64) -> Result<(f64, f64, usize)> {
    validate_bsq(bsq)?;
    let exact = ksum(bsq.iter().map(|&b| (1.0 + b) * (1.0 + b)).map(|d| 1.0 / d));
    let m_g = bsq.partition_point(|&b| b <= 1.0);
    let bound = (1.0 + c_b) * m_g as f64;
    Ok((bound, exact, m_g))
}

/// Oracle `τ` for the univariate roughness family `G² = τ G₁²`,
/// `g_j² = j^{2s₀}`: minimizes `n⁻¹{(n/τ)^{1/(2s₀)} + τ C₁}` by golden
/// section. Returns `(τ*, M_τ = (n/τ*)^{1/(2s₀)}, risk(τ*))`.
pub fn tau_family_oracle(n: f64, s0: f64, c1: f64) -> Result<(f64, f64, f64)> {
    if !(n > 0.0 && s0 > 0.0 && c1 > 0.0) {
        return Err(Error::domain("tau_family_oracle", "n, s0, c1 must be positive"));
    }
    let risk = |tau: f64| ((n / tau).powf(1.0 / (2.0 * s0)) + tau * c1) / n;
    // Bracket then golden-section: the objective is unimodal in log τ.
    let (mut lo, mut hi) = (1e-9 * n.max(1.0), 1e3 * n.max(1.0));
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if risk(c.exp()) <= risk(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    lo = a.exp();
    hi = b.exp();
    let tau = 0.5 * (lo + hi);
    Ok((tau, (n / tau).powf(1.0 / (2.0 * s0)), risk(tau)))
}

/// Synthetic-rate sweep specification: `N_j = n j^{−2s}`,
/// `w_j² = C_w j^{2β}`, and `υ*` placed on the Sobolev sphere as
/// `υ*_j = c j^{−β−1/2−ε}` with `ε = 0.01` and `c` solving `Σ w_j²υ*_j² = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSpec {
    pub s: f64,
    pub beta: f64,
    pub c_w: f64,
    /// Sequence length used at every `n`.
    pub p: usize,
}

/// One sweep row.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub n: f64,
    pub j_star: usize,
    pub var_term: f64,
    pub bias_term: f64,
    pub risk: f64,
}

/// Sweep result with the least-squares log-log slope of risk vs `n`.
#[derive(Debug, Clone, Serialize)]
pub struct RateSweep {
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub slope_se: f64,
}

/// Builds the synthetic sequence model for a given `n`.
pub fn rate_model(spec: &RateSpec, n: f64) -> Result<SequenceModel> {
    let p = spec.p;
    let eps = 0.01;
    let n_seq: Vec<f64> = (1..=p).map(|j| n * (j as f64).powf(-2.0 * spec.s)).collect();
    let w_seq: Vec<f64> = (1..=p).map(|j| (spec.c_w * (j as f64).powf(2.0 * spec.beta)).sqrt()).collect();
    let shape: Vec<f64> = (1..=p).map(|j| (j as f64).powf(-spec.beta - 0.5 - eps)).collect();
    let mass = ksum(w_seq.iter().zip(&shape).map(|(&w, &u)| w * w * u * u));
    let c = (1.0 / mass).sqrt();
    let ups: Vec<f64> = shape.iter().map(|&u| c * u).collect();
    SequenceModel::new(n_seq, w_seq, ups, true)
}

/// Oracle-cut-off risk across an `n`-grid with the fitted log-log slope.
pub fn rate_sweep(spec: &RateSpec, n_grid: &[f64]) -> Result<RateSweep> {
    if n_grid.len() < 3 {
        return Err(Error::domain("rate_sweep", "need at least 3 grid points"));
    }
    let rows: Vec<RateRow> = n_grid
        .par_iter()
        .map(|&n| {
            let m = rate_model(spec, n)?;
            let (j_star, _) = oracle_cutoff(&m);
            let (var_term, bias_term) = cutoff_risk(&m, j_star)?;
            Ok(RateRow { n, j_star, var_term, bias_term, risk: var_term + bias_term })
        })
        .collect::<Result<_>>()?;

    let xs: Vec<f64> = rows.iter().map(|r| r.n.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.risk.ln()).collect();
    let (slope, slope_se) = least_squares_slope(&xs, &ys);
    Ok(RateSweep { rows, slope, slope_se })
}

/// Slope and its standard error of the simple linear regression `y ~ x`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let dof = (xs.len().saturating_sub(2)).max(1) as f64;
    (slope, (rss / dof / sxx).sqrt())
}
