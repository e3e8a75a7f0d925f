//! `fit`: one penalized-MLE solve; persists the fit report and optionally the
//! dataset.

use std::path::{Path, PathBuf};

use slskit::estimator::{fit_pmle, FitOptions};
use slskit::models::config::{write_dataset_csv, AnyModel};
use slskit::models::{
    HistogramData, LogDensityData, LogisticData, PrecisionData, QuadraticData, SlsModel,
};

use crate::commands::dispatch_model;
use crate::config::FitConfigDoc;
use crate::out::write_json;
use crate::{HResult, HarnessError, RunContext};

pub fn cmd_fit(cfg: &FitConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    let model = cfg.model.load().map_err(HarnessError::from)?;
    let mut written = Vec::new();

    let fit = match &cfg.data_csv {
        Some(path) => dispatch_model!(&model, m => {
            let data = load_data(&model, m, path)?;
            ctx.with_pool(|| fit_pmle(m, &cfg.penalty, &data, &FitOptions::default()))
                .map_err(HarnessError::from)?
        }),
        None => {
            let seed = ctx.require_seed()?;
            if cfg.write_data {
                let path = ctx.out_dir.join("dataset.csv");
                write_dataset_csv(&model, seed, &path).map_err(HarnessError::from)?;
                written.push(path);
            }
            dispatch_model!(&model, m => {
                let data = m.sample(seed);
                ctx.with_pool(|| fit_pmle(m, &cfg.penalty, &data, &FitOptions::default()))
                    .map_err(HarnessError::from)?
            })
        }
    };

    written.push(write_json(ctx, "fit.json", &fit)?);
    Ok(written)
}

/// Loads a dataset CSV (one observation per row) for the matching model kind.
fn load_data<M: SlsModel>(any: &AnyModel, _m: &M, path: &Path) -> HResult<M::Data>
where
    M::Data: FromCsv,
{
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
    M::Data::from_csv(any, &text)
}

/// Dataset parsing per model kind.
pub trait FromCsv: Sized {
    fn from_csv(model: &AnyModel, text: &str) -> HResult<Self>;
}

fn data_rows(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| l.chars().next().is_some_and(|c| !c.is_alphabetic()))
}

impl FromCsv for LogisticData {
    fn from_csv(_model: &AnyModel, text: &str) -> HResult<Self> {
        let labels = data_rows(text)
            .map(|l| match l {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(HarnessError::Config(format!("bad label {other:?}"))),
            })
            .collect::<HResult<_>>()?;
        Ok(LogisticData { labels })
    }
}

impl FromCsv for HistogramData {
    fn from_csv(model: &AnyModel, text: &str) -> HResult<Self> {
        let p = model.dim();
        let mut counts = vec![0u64; p];
        for l in data_rows(text) {
            let j: usize =
                l.parse().map_err(|e| HarnessError::Config(format!("bad cell {l:?}: {e}")))?;
            if j >= p {
                return Err(HarnessError::Config(format!("cell {j} out of range")));
            }
            counts[j] += 1;
        }
        Ok(HistogramData { counts })
    }
}

impl FromCsv for LogDensityData {
    fn from_csv(model: &AnyModel, text: &str) -> HResult<Self> {
        let AnyModel::LogDensity(m) = model else {
            return Err(HarnessError::Config("model/data kind mismatch".into()));
        };
        let nodes = m.nodes();
        let node_idx = data_rows(text)
            .map(|l| {
                let x: f64 =
                    l.parse().map_err(|e| HarnessError::Config(format!("bad x {l:?}: {e}")))?;
                // Snap to the nearest grid node.
                let k = nodes.partition_point(|&n| n < x);
                let k = if k == 0 {
                    0
                } else if k >= nodes.len() {
                    nodes.len() - 1
                } else if (x - nodes[k - 1]).abs() <= (nodes[k] - x).abs() {
                    k - 1
                } else {
                    k
                };
                Ok(k)
            })
            .collect::<HResult<_>>()?;
        Ok(LogDensityData { node_idx })
    }
}

impl FromCsv for PrecisionData {
    fn from_csv(model: &AnyModel, text: &str) -> HResult<Self> {
        let AnyModel::Precision(m) = model else {
            return Err(HarnessError::Config("model/data kind mismatch".into()));
        };
        let p = m.matrix_dim();
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for l in data_rows(text) {
            let vals: Vec<f64> = l
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| HarnessError::Config(format!("bad row {l:?}: {e}")))?;
            if vals.len() != p {
                return Err(HarnessError::Config(format!("row has {} fields, want {p}", vals.len())));
            }
            rows.extend(vals);
            n += 1;
        }
        Ok(PrecisionData { samples: nalgebra::DMatrix::from_row_slice(n, p, &rows) })
    }
}

impl FromCsv for QuadraticData {
    fn from_csv(_model: &AnyModel, text: &str) -> HResult<Self> {
        let vals: Vec<f64> = data_rows(text)
            .map(|l| l.parse::<f64>().map_err(|e| HarnessError::Config(format!("bad value: {e}"))))
            .collect::<HResult<_>>()?;
        Ok(QuadraticData { zeta_grad: nalgebra::DVector::from_row_slice(&vals) })
    }
}
