//! Experiment harness for the slskit library: configuration ingestion, seeded
//! Monte Carlo runners, and CSV/JSON persistence.
//!
//! Every stochastic command requires an explicit seed; replicate streams are
//! counter-derived, so identical config + seed produce byte-identical output
//! files at any thread count.

pub mod commands;
pub mod config;
pub mod mc;
pub mod out;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Theorem preconditions failed; reports were still written.
    #[error("certificate not applicable: {0}")]
    Inapplicable(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<slskit::Error> for HarnessError {
    fn from(e: slskit::Error) -> Self {
        use slskit::Error as E;
        match e {
            E::Config(m) | E::Validation(m) => HarnessError::Config(m),
            E::Io { path, source } => HarnessError::Io { path, source },
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}

impl HarnessError {
    /// CLI exit code: 2 config, 3 numeric, 4 certificate-inapplicable.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Inapplicable(_) => 4,
        }
    }
}

pub type HResult<T> = Result<T, HarnessError>;

/// Global invocation context shared by all commands.
#[derive(Debug, Clone)]
pub struct RunContext {
    /// Master seed; stochastic commands fail fast without one.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// 0 = library default thread count.
    pub threads: usize,
    /// Hash of (config json, seed) embedded in every output file.
    pub config_hash: String,
}

impl RunContext {
    pub fn require_seed(&self) -> HResult<u64> {
        self.seed.ok_or_else(|| {
            HarnessError::Config("this command is stochastic: --seed is required".into())
        })
    }

    /// Runs `f` on a dedicated rayon pool when a thread count is pinned.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        if self.threads == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .expect("thread pool")
                .install(f)
        }
    }
}

/// Hash of the canonical config serialization plus the seed. Thread count and
/// output paths are deliberately excluded: they must not change output bytes.
pub fn config_hash(config_json: &str, seed: Option<u64>) -> String {
    use sha2::{Digest, Sha256};
    // Canonicalize through serde_json's ordered map representation.
    let canonical: String = serde_json::from_str::<serde_json::Value>(config_json)
        .map(|v| v.to_string())
        .unwrap_or_else(|_| config_json.to_string());
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    if let Some(s) = seed {
        h.update(s.to_le_bytes());
    }
    let digest = h.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
