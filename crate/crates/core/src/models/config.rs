//! JSON model specifications and CSV dataset persistence.
//!
//! A model spec is a JSON document with a `kind` discriminator; truth
//! parameters are inline arrays or CSV file paths. Datasets persist as CSV
//! with one observation per row.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    HistogramModel, LogDensity1D, LogisticModel, PrecisionModel, QuadraticModel, SlsModel,
};

/// Inline values or a CSV file path (one row per vector entry, or a matrix).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrayOrPath {
    Inline(Vec<f64>),
    Path { csv: PathBuf },
}

impl ArrayOrPath {
    pub fn load(&self) -> Result<Vec<f64>> {
        match self {
            ArrayOrPath::Inline(v) => Ok(v.clone()),
            ArrayOrPath::Path { csv } => {
                let text = read(csv)?;
                let mut out = Vec::new();
                for line in csv_rows(&text) {
                    for field in line.split(',') {
                        out.push(parse_f64(field)?);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// `{"identity": p}` (optionally scaled).
    Identity { identity: usize, #[serde(default = "one")] scale: f64 },
    /// `{"diag": [..]}`.
    Diag { diag: Vec<f64> },
    /// Dense rows inline.
    Dense { rows: Vec<Vec<f64>> },
    /// Seeded standard-normal rows scaled by `scale` (fixture designs).
    Gaussian {
        gaussian_rows: usize,
        cols: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Dense matrix from CSV (one row per line).
    Path { csv: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl MatrixSpec {
    pub fn load(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Identity { identity, scale } => {
                Ok(DMatrix::identity(*identity, *identity) * *scale)
            }
            MatrixSpec::Diag { diag } => {
                Ok(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
            }
            MatrixSpec::Dense { rows } => {
                let r = rows.len();
                if r == 0 {
                    return Err(Error::Config("empty dense matrix".into()));
                }
                let c = rows[0].len();
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::Config("ragged dense matrix".into()));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(DMatrix::from_row_slice(r, c, &flat))
            }
            MatrixSpec::Gaussian { gaussian_rows, cols, scale, seed } => {
                use rand::Rng;
                use rand_distr::StandardNormal;
                let mut rng = crate::rng::stream(*seed, 0, crate::rng::tag::SAMPLER);
                Ok(DMatrix::from_fn(*gaussian_rows, *cols, |_, _| {
                    rng.sample::<f64, _>(StandardNormal) * scale
                }))
            }
            MatrixSpec::Path { csv } => {
                let text = read(csv)?;
                let mut rows: Vec<Vec<f64>> = Vec::new();
                for line in csv_rows(&text) {
                    rows.push(line.split(',').map(parse_f64).collect::<Result<_>>()?);
                }
                MatrixSpec::Dense { rows }.load()
            }
        }
    }
}

/// Dictionary bases available for the 1-D log-density model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `ψ_j(x) = x^j`, `j = 1..=p`.
    Monomial,
    /// `ψ_j(x) = cos(jπ (x−a)/(b−a))`, `j = 1..=p`.
    Cosine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Logistic {
        designs: MatrixSpec,
        /// Either explicit success probabilities or a truth vector for the
        /// well-specified model.
        #[serde(default)]
        theta_star: Option<ArrayOrPath>,
        #[serde(default)]
        truth: Option<ArrayOrPath>,
    },
    Histogram {
        theta_star: ArrayOrPath,
        n: usize,
    },
    LogDensity {
        a: f64,
        b: f64,
        m: usize,
        basis: Basis,
        truth: ArrayOrPath,
        n: usize,
    },
    Precision {
        sigma: MatrixSpec,
        n: usize,
    },
    Quadratic {
        fisher: MatrixSpec,
        truth: ArrayOrPath,
        #[serde(default)]
        v2: Option<MatrixSpec>,
    },
}

/// A loaded model of any concrete kind.
pub enum AnyModel {
    Logistic(LogisticModel),
    Histogram(HistogramModel),
    LogDensity(LogDensity1D),
    Precision(PrecisionModel),
    Quadratic(QuadraticModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Logistic(_) => "logistic",
            AnyModel::Histogram(_) => "histogram",
            AnyModel::LogDensity(_) => "log_density",
            AnyModel::Precision(_) => "precision",
            AnyModel::Quadratic(_) => "quadratic",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnyModel::Logistic(m) => m.dim(),
            AnyModel::Histogram(m) => m.dim(),
            AnyModel::LogDensity(m) => m.dim(),
            AnyModel::Precision(m) => m.dim(),
            AnyModel::Quadratic(m) => m.dim(),
        }
    }
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model spec: {e}")))
    }

    pub fn load(&self) -> Result<AnyModel> {
        match self {
            ModelSpec::Logistic { designs, theta_star, truth } => {
                let d = designs.load()?;
                let rows: Vec<DVector<f64>> =
                    (0..d.nrows()).map(|i| d.row(i).transpose().into_owned()).collect();
                match (theta_star, truth) {
                    (Some(t), _) => {
                        let mut m = LogisticModel::new(rows, t.load()?)?;
                        if let Some(tr) = truth {
                            m = m.with_truth(DVector::from_row_slice(&tr.load()?));
                        }
                        Ok(AnyModel::Logistic(m))
                    }
                    (None, Some(tr)) => {
                        let t = DVector::from_row_slice(&tr.load()?);
                        Ok(AnyModel::Logistic(LogisticModel::well_specified(rows, &t)?))
                    }
                    (None, None) => {
                        Err(Error::Config("logistic spec needs theta_star or truth".into()))
                    }
                }
            }
            ModelSpec::Histogram { theta_star, n } => Ok(AnyModel::Histogram(HistogramModel::new(
                DVector::from_row_slice(&theta_star.load()?),
                *n,
            )?)),
            ModelSpec::LogDensity { a, b, m, basis, truth, n } => {
                let t = DVector::from_row_slice(&truth.load()?);
                let p = t.len();
                let (a, b) = (*a, *b);
                let basis = *basis;
                let dict = move |x: f64| -> DVector<f64> {
                    DVector::from_iterator(
                        p,
                        (1..=p).map(|j| match basis {
                            Basis::Monomial => x.powi(j as i32),
                            Basis::Cosine => {
                                (j as f64 * std::f64::consts::PI * (x - a) / (b - a)).cos()
                            }
                        }),
                    )
                };
                Ok(AnyModel::LogDensity(LogDensity1D::new(a, b, *m, dict, t, *n)?))
            }
            ModelSpec::Precision { sigma, n } => {
                Ok(AnyModel::Precision(PrecisionModel::new(sigma.load()?, *n)?))
            }
            ModelSpec::Quadratic { fisher, truth, v2 } => {
                let v2 = v2.as_ref().map(|m| m.load()).transpose()?;
                Ok(AnyModel::Quadratic(QuadraticModel::new(
                    fisher.load()?,
                    DVector::from_row_slice(&truth.load()?),
                    v2,
                )?))
            }
        }
    }
}

/// Writes a dataset as CSV, one observation per row.
pub fn write_dataset_csv(model: &AnyModel, seed: u64, path: &Path) -> Result<()> {
    let mut out = String::new();
    match model {
        AnyModel::Logistic(m) => {
            out.push_str("y\n");
            for y in m.sample(seed).labels {
                out.push_str(&format!("{y}\n"));
            }
        }
        AnyModel::Histogram(m) => {
            out.push_str("cell\n");
            for (j, c) in m.sample(seed).counts.iter().enumerate() {
                for _ in 0..*c {
                    out.push_str(&format!("{j}\n"));
                }
            }
        }
        AnyModel::LogDensity(m) => {
            out.push_str("x\n");
            let data = m.sample(seed);
            for k in data.node_idx {
                out.push_str(&format!("{:.17e}\n", m.nodes()[k]));
            }
        }
        AnyModel::Precision(m) => {
            let p = m.matrix_dim();
            let header: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
            out.push_str(&header.join(","));
            out.push('\n');
            let data = m.sample(seed);
            for i in 0..data.samples.nrows() {
                let row: Vec<String> =
                    (0..p).map(|j| format!("{:.17e}", data.samples[(i, j)])).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        AnyModel::Quadratic(m) => {
            out.push_str("zeta_grad\n");
            for v in m.sample(seed).zeta_grad.iter() {
                out.push_str(&format!("{v:.17e}\n"));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn csv_rows(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| {
        !l.is_empty() && !l.starts_with('#') && !l.chars().next().unwrap().is_alphabetic()
    })
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_spec_round_trip() {
        let spec = r#"{
            "kind": "logistic",
            "designs": {"rows": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]},
            "truth": [0.5, -0.25]
        }"#;
        let m = ModelSpec::from_json(spec).unwrap().load().unwrap();
        assert_eq!(m.kind(), "logistic");
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn quadratic_spec_with_identity_fisher() {
        let spec = r#"{
            "kind": "quadratic",
            "fisher": {"identity": 3, "scale": 10.0},
            "truth": [1.0, 0.0, -1.0]
        }"#;
        let m = ModelSpec::from_json(spec).unwrap().load().unwrap();
        assert_eq!(m.dim(), 3);
    }

    #[test]
    fn dataset_csv_writes(){
        let spec = r#"{"kind": "histogram", "theta_star": [0.5, 0.3, 0.2], "n": 25}"#;
        let m = ModelSpec::from_json(spec).unwrap().load().unwrap();
        let dir = std::env::temp_dir().join("slskit_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("hist.csv");
        write_dataset_csv(&m, 7, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 26);
    }
}
