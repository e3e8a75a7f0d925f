//! Command implementations. Each takes its parsed config plus the run
//! context and returns the list of files written.

mod certify;
mod fit;
mod iid;
mod rate;
mod risk;
mod tail;
mod tensor;

pub use certify::cmd_certify;
pub use fit::cmd_fit;
pub use iid::cmd_iid_sandwich;
pub use rate::cmd_rate;
pub use risk::cmd_risk;
pub use tail::cmd_tail;
pub use tensor::cmd_tensor;

use nalgebra::DMatrix;
use slskit::linalg;
use slskit::models::config::AnyModel;
use slskit::models::{
    logdensity_condition_constants, logistic_conditions, precision_constants, ConditionConstants,
    SlsModel,
};

use crate::config::ConstantsSpec;
use crate::{HResult, HarnessError};

/// Runs a closure generically over the concrete model behind an [`AnyModel`].
macro_rules! dispatch_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            slskit::models::config::AnyModel::Logistic($m) => $body,
            slskit::models::config::AnyModel::Histogram($m) => $body,
            slskit::models::config::AnyModel::LogDensity($m) => $body,
            slskit::models::config::AnyModel::Precision($m) => $body,
            slskit::models::config::AnyModel::Quadratic($m) => $body,
        }
    };
}
pub(crate) use dispatch_model;

/// Default certificate metric `D = F(υ*)^{1/2}`.
pub(crate) fn default_metric<M: SlsModel>(model: &M) -> HResult<DMatrix<f64>> {
    let f = model.base_hess(&model.truth()).map_err(HarnessError::from)?;
    linalg::spd_sqrt(&f, "Fisher at truth").map_err(HarnessError::from)
}

/// Resolves the condition constants for a model.
pub(crate) fn resolve_constants(
    spec: &ConstantsSpec,
    model: &AnyModel,
    seed: u64,
) -> HResult<ConditionConstants> {
    match (spec, model) {
        (ConstantsSpec::Manual { tau3, tau4, varkappa }, _) => Ok(ConditionConstants {
            tau3: *tau3,
            tau4: *tau4,
            varkappa: *varkappa,
            ..Default::default()
        }),
        (ConstantsSpec::Logistic { r, tighten }, AnyModel::Logistic(m)) => {
            let d = default_metric(m)?;
            let mut cc = logistic_conditions(m, &d, *r, *tighten, seed)?;
            if cc.varkappa == 0.0 {
                cc.varkappa = 1.0;
            }
            Ok(cc)
        }
        (ConstantsSpec::Precision { r }, AnyModel::Precision(m)) => {
            let mut cc = precision_constants(m, *r)?;
            cc.varkappa = 1.0;
            Ok(cc)
        }
        (ConstantsSpec::LogDensity { rho, samples }, AnyModel::LogDensity(m)) => {
            let mut cc = logdensity_condition_constants(m, *rho, *samples, seed)?;
            cc.varkappa = 1.0;
            Ok(cc)
        }
        _ => Err(HarnessError::Config(format!(
            "constants source does not match model kind {}",
            model.kind()
        ))),
    }
}
