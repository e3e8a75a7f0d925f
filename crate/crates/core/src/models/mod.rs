//! Concrete SLS models.
//!
//! An SLS model has empirical loss `L(υ) = −<s(data), υ> + h(υ)` with a
//! deterministic convex `h` and a linear sufficient statistic `s`, so the
//! stochastic component `ζ(υ) = L(υ) − E L(υ)` is linear in `υ` with constant
//! gradient `∇ζ = E s − s`. The population loss replaces `s` by `E s`; the
//! Fisher operator is `F(υ) = ∇²h(υ)`.
//!
//! The precision-matrix model works on symmetric matrices; it is embedded
//! into the solver's vector space by the isometric half-vectorization, so all
//! generic machinery below sees plain `ℝ^d`.

mod histogram;
mod logdensity;
mod logistic;
mod precision;
mod quadratic;

pub mod config;

pub use histogram::{histogram_phi, histogram_third_dir, HistogramData, HistogramModel};
pub use logdensity::{
    logdensity_condition_constants, logdensity_phi, LogDensity1D, LogDensityData,
};
pub use logistic::{
    logistic_conditions, logistic_dir_deriv, logistic_loss_grad_hess, LogisticData, LogisticModel,
};
pub use precision::{precision_constants, precision_loss_grad_hess, PrecisionData, PrecisionModel};
pub use quadratic::{QuadraticData, QuadraticModel};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Estimated or proven smoothness/condition constants of a model.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ConditionConstants {
    /// `max_i ‖D⁻¹Ψ_i‖` (logistic design regularity).
    pub delta0: f64,
    /// Quartic-form constant `ϰ`.
    pub varkappa: f64,
    /// Third-order smoothness constant `τ₃`.
    pub tau3: f64,
    /// Fourth-order smoothness constant `τ₄`.
    pub tau4: f64,
    /// Log-density constant `c₃ = C_{Ψ,3} (C_{Ψ,4} C_ρ)^{3/4}`.
    pub c3: f64,
    /// Log-density constant `c₄ = (C_{Ψ,4} − 3) C_{Ψ,4} C_ρ`.
    pub c4: f64,
    /// Bregman-ball moment-generating bound `C_ρ`.
    pub c_rho: f64,
    /// Tilted third-moment ratio bound `C_{Ψ,3}`.
    pub c_psi3: f64,
    /// Tilted kurtosis ratio bound `C_{Ψ,4}` (floored at 3).
    pub c_psi4: f64,
    /// Raw `C_{Ψ,4}` estimate before the floor at 3.
    pub c_psi4_raw: f64,
}

/// Contract every concrete model implements; the estimator layer only sees
/// this surface. All methods are pure; models are immutable after
/// construction and samplers are stateless given the seed.
pub trait SlsModel: Sync {
    /// Dataset attached to a fit (sufficient statistic carrier).
    type Data: Sync + Send;

    /// Solver-space dimension (p, or p(p+1)/2 for the precision model).
    fn dim(&self) -> usize;

    /// True parameter in solver coordinates.
    fn truth(&self) -> DVector<f64>;

    /// Effective sample size.
    fn n_eff(&self) -> f64;

    /// Linear sufficient statistic `s(data)`.
    fn stat(&self, data: &Self::Data) -> DVector<f64>;

    /// Population mean `E s`.
    fn mean_stat(&self) -> DVector<f64>;

    /// Deterministic convex part `h(υ)`.
    fn base(&self, ups: &DVector<f64>) -> Result<f64>;

    /// `∇h(υ)`.
    fn base_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>>;

    /// `∇²h(υ)` — the Fisher operator `F(υ)`.
    fn base_hess(&self, ups: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Whether `υ` lies in the open domain of `h`.
    fn in_domain(&self, _ups: &DVector<f64>) -> bool {
        true
    }

    /// Exact third directional derivative `<∇³h(υ), u⊗u⊗u>` when available.
    fn third_dir(&self, _ups: &DVector<f64>, _u: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Exact fourth directional derivative `<∇⁴h(υ), u⊗..⊗u>` when available.
    fn fourth_dir(&self, _ups: &DVector<f64>, _u: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Third-derivative contraction `w ↦ ½ <∇³h(υ), u ⊗ u ⊗ w>` as a vector,
    /// when available (drives the fourth-order corrections).
    fn third_contraction(&self, _ups: &DVector<f64>, _u: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Gauge normalization for flat loss directions, applied by the solver
    /// only when the penalty is null (histogram pins the coordinate mean).
    fn gauge_fix(&self, _ups: &mut DVector<f64>) {}

    /// Model-faithful sampler; deterministic given the seed.
    fn sample(&self, seed: u64) -> Self::Data;

    /// Exact `Var(∇ζ)`.
    fn var_zeta(&self) -> DMatrix<f64>;

    /// The `V²` majorant convention this model uses in quantile formulas.
    fn v2_quantile(&self) -> DMatrix<f64> {
        self.var_zeta()
    }

    /// Human-readable record of the `V²` convention for reports.
    fn v2_convention(&self) -> &'static str {
        "V^2 = Var(grad zeta)"
    }

    /// Empirical loss `L(υ; data)`.
    fn loss(&self, data: &Self::Data, ups: &DVector<f64>) -> Result<f64> {
        Ok(-self.stat(data).dot(ups) + self.base(ups)?)
    }

    /// Empirical gradient.
    fn grad(&self, data: &Self::Data, ups: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.base_grad(ups)? - self.stat(data))
    }

    /// Population loss `E L(υ)`.
    fn pop_loss(&self, ups: &DVector<f64>) -> Result<f64> {
        Ok(-self.mean_stat().dot(ups) + self.base(ups)?)
    }

    /// Population gradient.
    fn pop_grad(&self, ups: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.base_grad(ups)? - self.mean_stat())
    }

    /// Constant stochastic gradient `∇ζ = ∇L − ∇EL = E s − s`.
    fn grad_zeta(&self, data: &Self::Data) -> DVector<f64> {
        self.mean_stat() - self.stat(data)
    }
}

/// Numerically stable sigmoid.
#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)` without overflow.
#[inline]
pub(crate) fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}
