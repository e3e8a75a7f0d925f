//! Deviation-bound quantiles for quadratic forms under light exponential
//! tails.
//!
//! All formulas operate on a [`SpectralSummary`] — the triple
//! `(tr B, tr B², ‖B‖)` of the operator `B = Q 𝕍² Qᵀ` — never on `B` itself,
//! so callers with structured operators (diagonal, low-rank) can supply exact
//! traces without materializing the matrix.
//!
//! The quantile of `‖Qξ‖` is Gaussian-like up to a critical level `x_c` and
//! grows linearly in `x` beyond it; [`solve_xc`] locates the crossing,
//! [`fused_quantile`] evaluates the two-regime curve, and
//! [`linear_majorant`] gives the `x_c`-free linear upper envelope.

mod tensor;

pub use tensor::{
    tensor_delta, tensor_family_covariance, tensor_lower_tail, tensor_upper_tail, TensorFamily,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The triple `(tr B, tr B², ‖B‖)` summarizing an operator `B` for all tail
/// formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// `tr B` (written `𝔭` in the quantile formulas).
    pub dim_a: f64,
    /// `tr B²`.
    pub v2: f64,
    /// `‖B‖` (largest eigenvalue).
    pub lambda: f64,
}

impl SpectralSummary {
    /// Validates the eigenvalue constraints `v2 <= dim_a * lambda` and
    /// `lambda² <= v2` (Cauchy-Schwarz on the spectrum of a PSD operator).
    pub fn new(dim_a: f64, v2: f64, lambda: f64) -> Result<Self> {
        if !(dim_a >= 0.0 && v2 >= 0.0 && lambda > 0.0) {
            return Err(Error::Validation(format!(
                "spectral summary needs dim_a >= 0, v2 >= 0, lambda > 0; got ({dim_a}, {v2}, {lambda})"
            )));
        }
        let tol = 1e-9 * (1.0 + v2.abs());
        if v2 > dim_a * lambda + tol {
            return Err(Error::Validation(format!(
                "v2={v2} exceeds dim_a*lambda={}",
                dim_a * lambda
            )));
        }
        if lambda * lambda > v2 + tol {
            return Err(Error::Validation(format!(
                "lambda^2={} exceeds v2={v2}",
                lambda * lambda
            )));
        }
        Ok(Self { dim_a, v2, lambda })
    }

    /// Summary of a PSD matrix given explicitly.
    pub fn from_psd(b: &DMatrix<f64>) -> Result<Self> {
        let eig = crate::linalg::sym_eigenvalues(b);
        let min = eig[0];
        if min < -1e-9 * eig[eig.len() - 1].abs().max(1.0) {
            return Err(Error::Validation(format!(
                "matrix is not PSD: min eigenvalue {min}"
            )));
        }
        let dim_a = crate::linalg::ksum(eig.iter().map(|&x| x.max(0.0)));
        let v2 = crate::linalg::ksum(eig.iter().map(|&x| x.max(0.0) * x.max(0.0)));
        let lambda = eig[eig.len() - 1].max(0.0);
        if lambda == 0.0 {
            return Err(Error::Validation("zero operator has no tail summary".into()));
        }
        Self::new(dim_a, v2, lambda)
    }

    /// Scales the summary as if `B -> c*B`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim_a: c * self.dim_a,
            v2: c * c * self.v2,
            lambda: c * self.lambda,
        }
    }
}

/// Exponential-tail radius and the regime split parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailConfig {
    /// Radius `γ` of the light-exponential-tail condition.
    pub gamma: f64,
    /// Regime split `ρ ∈ (0,1)`; `1/2` is the value all fused/majorant
    /// formulas are stated for.
    pub rho: f64,
}

impl TailConfig {
    pub fn new(gamma: f64, rho: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be positive finite, got {gamma}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Validation(format!("rho must lie in (0,1), got {rho}")));
        }
        Ok(Self { gamma, rho })
    }

    /// The standard choice `ρ = 1/2`.
    pub fn with_gamma(gamma: f64) -> Result<Self> {
        Self::new(gamma, 0.5)
    }
}

/// Location of the Gaussian-to-sub-exponential switch of the quantile curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseTransition {
    /// Critical confidence level.
    pub x_c: f64,
    /// Quantile at the switch, `z(B, x_c)`.
    pub z_c: f64,
    /// Linear-regime slope reciprocal `κ = √ρ γ / ((2+√ρ)√λ)`.
    pub kappa: f64,
    /// `μ(x_c)`.
    pub mu_c: f64,
    /// Regime split the transition was solved for.
    pub rho: f64,
}

/// Gaussian-regime upper quantile `z(B,x) = sqrt(tr B + 2√(x tr B²) + 2x‖B‖)`.
///
/// Strictly increasing in `x`, equals `sqrt(tr B)` at `x = 0`.
pub fn gaussian_quantile(s: &SpectralSummary, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain("gaussian_quantile", format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(s.dim_a.sqrt());
    }
    Ok((s.dim_a + 2.0 * (x * s.v2).sqrt() + 2.0 * x * s.lambda).sqrt())
}

/// Trimming level `μ(x) = 1 / (1 + √v2 / (2 λ √x)) ∈ (0,1]`, increasing in x.
///
/// Limits: `μ -> 1` when `v2 = 0` (rank-degenerate), `μ -> 0` as `x -> 0+`
/// otherwise.
pub fn mu_of_x(s: &SpectralSummary, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain("mu_of_x", format!("x must be > 0, got {x}")));
    }
    if s.v2 == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 / (1.0 + s.v2.sqrt() / (2.0 * s.lambda * x.sqrt())))
}

/// Trimming level used inside the crossing equation. This is the proof-side
/// variant with `𝚟` replaced by its Cauchy-Schwarz majorant `√(dim_a λ)`:
/// the phase-transition and `z_c` sandwiches are exact for this μ, while the
/// inline-text μ of [`mu_of_x`] can push `z_c` below its proven lower bound
/// when `tr B²` is far from `tr B · ‖B‖`.
fn crossing_mu(s: &SpectralSummary, x: f64) -> f64 {
    1.0 / (1.0 + (s.dim_a * s.lambda).sqrt() / (2.0 * s.lambda * x.sqrt()))
}

/// Right-hand side of the crossing equation:
/// `ρ (γ√λ/μ(x) − √(dim_a/μ(x)))²`, decreasing in `x`; clamped to 0 once the
/// bracket turns negative.
fn crossing_rhs(s: &SpectralSummary, cfg: &TailConfig, x: f64) -> f64 {
    let mu = crossing_mu(s, x);
    let bracket = cfg.gamma * s.lambda.sqrt() / mu - (s.dim_a / mu).sqrt();
    if bracket <= 0.0 {
        0.0
    } else {
        cfg.rho * bracket * bracket
    }
}

fn crossing_residual(s: &SpectralSummary, cfg: &TailConfig, x: f64) -> f64 {
    let z2 = s.dim_a + 2.0 * (x * s.v2).sqrt() + 2.0 * x * s.lambda;
    z2 - crossing_rhs(s, cfg, x)
}

/// Solves the phase-transition level `x_c`: the unique root of
/// `z²(B,x) = ρ (γ√λ/μ(x) − √(dim_a/μ(x)))²` with the proof-side trimming
/// level `μ⁻¹(x) = 1 + √(dim_a λ)/(2λ√x)` (see [`crossing_mu`]; the exposed
/// [`mu_of_x`] keeps the inline-text convention).
///
/// The left side increases and the right side decreases in `x`, so bisection
/// is exact; the upper bracket starts at `max(γ²/2, 1)` and doubles until a
/// sign change. Relative residual of the returned root is below `1e-10`.
pub fn solve_xc(s: &SpectralSummary, cfg: &TailConfig) -> Result<PhaseTransition> {
    if cfg.rho > 0.5 + 1e-12 {
        return Err(Error::domain(
            "solve_xc",
            format!("the Gaussian-regime theorem needs rho <= 1/2, got {}", cfg.rho),
        ));
    }
    let x_lo = 1e-12;
    let mut x_hi = (cfg.gamma * cfg.gamma / 2.0).max(1.0);

    if crossing_residual(s, cfg, x_lo) >= 0.0 {
        // LHS already above RHS at the left end: curves do not cross at x > 0.
        return Err(Error::NoPhaseTransition {
            gamma: cfg.gamma,
            ratio: (s.dim_a / s.lambda).sqrt(),
        });
    }
    let mut tries = 0;
    while crossing_residual(s, cfg, x_hi) < 0.0 {
        x_hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::NoPhaseTransition {
                gamma: cfg.gamma,
                ratio: (s.dim_a / s.lambda).sqrt(),
            });
        }
    }

    let mut lo = x_lo;
    let mut hi = x_hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if crossing_residual(s, cfg, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x_c = 0.5 * (lo + hi);
    let z_c = gaussian_quantile(s, x_c)?;
    let kappa = cfg.rho.sqrt() * cfg.gamma / ((2.0 + cfg.rho.sqrt()) * s.lambda.sqrt());
    let mu_c = crossing_mu(s, x_c);

    let rel = crossing_residual(s, cfg, x_c).abs() / (z_c * z_c);
    if rel > 1e-10 {
        return Err(Error::domain(
            "solve_xc",
            format!("bisection residual {rel} above 1e-10 relative"),
        ));
    }
    Ok(PhaseTransition { x_c, z_c, kappa, mu_c, rho: cfg.rho })
}

/// Two-regime quantile: `z(B,x)` for `x <= x_c`, then
/// `z_c + (x − x_c)/κ`. Continuous at the knot and nondecreasing.
///
/// `pt` must come from [`solve_xc`] with `ρ = 1/2` (the regime the fused
/// corollary is stated for).
pub fn fused_quantile(pt: &PhaseTransition, s: &SpectralSummary, x: f64) -> Result<f64> {
    if (pt.rho - 0.5).abs() > 1e-12 {
        return Err(Error::domain(
            "fused_quantile",
            format!("fused curve requires rho = 1/2, transition solved with rho = {}", pt.rho),
        ));
    }
    if x <= pt.x_c {
        gaussian_quantile(s, x)
    } else {
        Ok(pt.z_c + (x - pt.x_c) / pt.kappa)
    }
}

/// Linear envelope `√dim_a + κλ/√2 + x/κ` with `κ = γ/((√8+1)√λ)`;
/// dominates [`fused_quantile`] pointwise, slope exactly `1/κ`.
///
/// The intercept term is the scale-covariant form of the normalized-operator
/// statement (`κ/√2` at `‖B‖ = 1`): rescaling `B -> cB` multiplies all three
/// terms by `√c`.
pub fn linear_majorant(s: &SpectralSummary, cfg: &TailConfig, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain("linear_majorant", format!("x must be >= 0, got {x}")));
    }
    let kappa = cfg.gamma / ((8.0f64.sqrt() + 1.0) * s.lambda.sqrt());
    Ok(s.dim_a.sqrt() + kappa * s.lambda / 2.0f64.sqrt() + x / kappa)
}

/// Upper bound on the exponential moment `E e^{ν‖Qξ‖} 1{‖Qξ‖ ≥ z}`.
///
/// Gaussian zone (`√dim_a <= z <= z_c`, `ν <= (z−√dim_a)/(2√λ)`):
/// `6 exp{νz − (z−√dim_a)²/(2λ)}`. Beyond `z_c` (`ν < κ`):
/// `(3κ/(κ−ν)) exp{νz_c − (z_c−√dim_a)²/(2λ) − (κ−ν)(z−z_c)}`.
pub fn exp_moment_bound(
    s: &SpectralSummary,
    _cfg: &TailConfig,
    pt: &PhaseTransition,
    nu: f64,
    z: f64,
) -> Result<f64> {
    if nu < 0.0 {
        return Err(Error::domain("exp_moment_bound", format!("nu must be >= 0, got {nu}")));
    }
    let root_p = s.dim_a.sqrt();
    if z < root_p {
        return Err(Error::domain(
            "exp_moment_bound",
            format!("z={z} below sqrt(dim_a)={root_p}"),
        ));
    }
    if z <= pt.z_c {
        let nu_max = (z - root_p) / (2.0 * s.lambda.sqrt());
        if nu > nu_max {
            return Err(Error::domain(
                "exp_moment_bound",
                format!("gaussian zone needs nu <= (z - sqrt(dim_a))/(2 sqrt(lambda)) = {nu_max}, got {nu}"),
            ));
        }
        let expo = nu * z - (z - root_p).powi(2) / (2.0 * s.lambda);
        Ok(6.0 * expo.exp())
    } else {
        if nu >= pt.kappa {
            return Err(Error::domain(
                "exp_moment_bound",
                format!("sub-exponential zone needs nu < kappa = {}, got {nu}", pt.kappa),
            ));
        }
        let expo =
            nu * pt.z_c - (pt.z_c - root_p).powi(2) / (2.0 * s.lambda) - (pt.kappa - nu) * (z - pt.z_c);
        Ok(3.0 * pt.kappa / (pt.kappa - nu) * expo.exp())
    }
}

/// Moment-generating-function bound for sub-gaussian quadratic forms:
/// `E exp(μ‖ξ‖²/2) <= exp(μ² tr B²/(4(1−‖B‖μ)) + μ tr B / 2)` for
/// `0 <= μ < 1/‖B‖`.
pub fn hkz_mgf_bound(s: &SpectralSummary, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::domain("hkz_mgf_bound", format!("mu must be >= 0, got {mu}")));
    }
    if mu >= 1.0 / s.lambda {
        return Err(Error::domain(
            "hkz_mgf_bound",
            format!("mu must be below 1/lambda = {}, got {mu}", 1.0 / s.lambda),
        ));
    }
    Ok((mu * mu * s.v2 / (4.0 * (1.0 - s.lambda * mu)) + mu * s.dim_a / 2.0).exp())
}
