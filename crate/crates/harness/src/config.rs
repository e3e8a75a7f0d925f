//! Per-command experiment configurations (JSON documents).

use serde::{Deserialize, Serialize};
use slskit::estimator::QuadPenalty;
use slskit::models::config::{MatrixSpec, ModelSpec};

use crate::{HResult, HarnessError};

fn default_rho() -> f64 {
    0.5
}

fn default_reps() -> u64 {
    1_000_000
}

/// X-axis grid: explicit values or an inclusive linear range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, count } => {
                let n = (*count).max(2);
                (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailGenerator {
    Gaussian,
    /// Coordinates i.i.d. symmetrized Exponential(1) scaled to unit variance;
    /// the light-exponential-tail condition holds with `V² = (1+γ²/2) I` at
    /// radius γ.
    SymExponential,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailMc {
    #[serde(default = "default_reps")]
    pub reps: u64,
    pub generator: TailGenerator,
}

/// `tail` command: quantile curves for one operator summary, optional MC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailConfigDoc {
    /// Operator `B` (diagonal spec or dense CSV); for the sym-exponential
    /// generator this is `diag(q_i²)` of the mapping `Q = diag(q_i)`.
    pub b: MatrixSpec,
    pub gamma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub x_grid: Grid,
    #[serde(default)]
    pub mc: Option<TailMc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IidGenerator {
    Gaussian,
    Rademacher,
}

/// `iid-sandwich` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IidConfigDoc {
    pub p: usize,
    pub n: u64,
    pub generator: IidGenerator,
    /// Optional diagonal of `Q`; identity when absent.
    #[serde(default)]
    pub q_diag: Option<Vec<f64>>,
    pub x_grid: Grid,
    #[serde(default = "default_reps")]
    pub reps: u64,
}

/// Condition-constant source for certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ConstantsSpec {
    /// Logistic design constants; `r` is the vicinity radius, `tighten` the
    /// number of randomized quartic-maximization samples (0 = conservative).
    Logistic { r: f64, #[serde(default)] tighten: usize },
    Precision { r: f64 },
    LogDensity { rho: f64, samples: usize },
    Manual {
        tau3: f64,
        #[serde(default)]
        tau4: f64,
        #[serde(default = "one")]
        varkappa: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// `fit` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfigDoc {
    pub model: ModelSpec,
    pub penalty: QuadPenalty,
    /// Load observations from CSV instead of sampling with the seed.
    #[serde(default)]
    pub data_csv: Option<std::path::PathBuf>,
    /// Also persist the dataset used.
    #[serde(default)]
    pub write_data: bool,
}

/// `certify` command: replicated expansion certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyConfigDoc {
    pub model: ModelSpec,
    pub penalty: QuadPenalty,
    pub constants: ConstantsSpec,
    pub x: f64,
    pub replicates: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSpec {
    Identity,
    /// `F_G^{1/2}` at the population solution (prediction loss).
    FisherGSqrt,
    /// Single coordinate.
    Coordinate(usize),
    Dense(Vec<Vec<f64>>),
}

/// `risk` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskConfigDoc {
    pub model: ModelSpec,
    pub penalty: QuadPenalty,
    pub constants: ConstantsSpec,
    pub q: QSpec,
    pub x: f64,
    #[serde(default)]
    pub mc_reps: usize,
    /// Optional `C₄` override.
    #[serde(default)]
    pub c4: Option<f64>,
}

/// `rate` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateConfigDoc {
    pub s: f64,
    pub beta: f64,
    pub c_w: f64,
    pub p: usize,
    pub n_grid: Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensorFamilySpec {
    /// `𝒯_i = c_i e_i e_iᵀ`.
    Diagonal { values: Vec<f64> },
    /// `k` seeded random symmetric tensors of size `m×m` with i.i.d.
    /// `N(0, scale²)` entries.
    RandomSymmetric { k: usize, m: usize, scale: f64 },
}

/// `tensor` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorConfigDoc {
    pub family: TensorFamilySpec,
    /// Inflation factor `c` for `𝕍² = c² S²` (1 = exact covariance).
    #[serde(default = "one")]
    pub v_inflate: f64,
    pub gamma: f64,
    pub x_grid: Grid,
    /// Lower-tail confidence parameter; lower-tail columns are emitted only
    /// when set.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Directions for the delta estimate.
    #[serde(default = "default_delta_dirs")]
    pub delta_dirs: usize,
    #[serde(default)]
    pub mc: Option<TailMcReps>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailMcReps {
    #[serde(default = "default_reps")]
    pub reps: u64,
}

fn default_delta_dirs() -> usize {
    2000
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> HResult<T> {
    serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
}
