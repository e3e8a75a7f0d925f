//! `risk`: bias-variance sandwich certificate, optionally with the Monte
//! Carlo risk column.

use std::path::PathBuf;

use nalgebra::DMatrix;
use slskit::estimator::{fit_population, risk_certificate, FitOptions, RiskOptions};
use slskit::linalg;
use slskit::models::SlsModel;

use crate::commands::{default_metric, dispatch_model, resolve_constants};
use crate::config::{QSpec, RiskConfigDoc};
use crate::out::{fmt_f64, write_json, CsvOut};
use crate::{HResult, HarnessError, RunContext};

pub fn cmd_risk(cfg: &RiskConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    let seed = if cfg.mc_reps > 0 { Some(ctx.require_seed()?) } else { ctx.seed };
    let model = cfg.model.load().map_err(HarnessError::from)?;
    let constants = resolve_constants(&cfg.constants, &model, seed.unwrap_or(0))?;

    let report = dispatch_model!(&model, m => {
        let d = default_metric(m)?;
        let q = q_matrix(&cfg.q, m, &cfg.penalty)?;
        let opts = RiskOptions {
            mc_reps: cfg.mc_reps,
            master_seed: seed.unwrap_or(0),
            c4: cfg.c4,
            fit: FitOptions::default(),
        };
        ctx.with_pool(|| risk_certificate(m, &cfg.penalty, &q, &constants, &d, cfg.x, &opts))
            .map_err(HarnessError::from)?
    });

    let mut csv = CsvOut::new(
        ctx,
        "risk.csv",
        &[
            "dim_q", "bias_q", "R_Q", "alpha_Q", "sandwich_lo", "sandwich_hi", "dim_d", "b_d",
            "r_d", "mc_risk", "mc_se", "mc_reps",
        ],
    );
    csv.row(&[
        fmt_f64(report.dim_q),
        fmt_f64(report.bias_q),
        fmt_f64(report.r_q),
        fmt_f64(report.alpha_q),
        fmt_f64(report.sandwich_lo),
        fmt_f64(report.sandwich_hi),
        fmt_f64(report.dim_d),
        fmt_f64(report.b_d),
        fmt_f64(report.r_d),
        report.mc_risk.map(fmt_f64).unwrap_or_default(),
        report.mc_se.map(fmt_f64).unwrap_or_default(),
        report.mc_reps.to_string(),
    ]);

    let mut written = vec![csv.finish()?];
    written.push(write_json(ctx, "risk.json", &report)?);
    if !report.applicable {
        return Err(HarnessError::Inapplicable(format!(
            "risk sandwich preconditions failed: {:?}",
            report.notes
        )));
    }
    Ok(written)
}

fn q_matrix<M: SlsModel>(
    spec: &QSpec,
    model: &M,
    pen: &slskit::estimator::QuadPenalty,
) -> HResult<DMatrix<f64>> {
    let p = model.dim();
    Ok(match spec {
        QSpec::Identity => DMatrix::identity(p, p),
        QSpec::FisherGSqrt => {
            let pop = fit_population(model, pen, &FitOptions::default())
                .map_err(HarnessError::from)?;
            let fg = slskit::estimator::penalized_fisher(model, pen, &pop.upsilon())
                .map_err(HarnessError::from)?;
            linalg::spd_sqrt(&fg, "F_G").map_err(HarnessError::from)?
        }
        QSpec::Coordinate(i) => {
            if *i >= p {
                return Err(HarnessError::Config(format!("coordinate {i} out of range")));
            }
            let mut q = DMatrix::zeros(1, p);
            q[(0, *i)] = 1.0;
            q
        }
        QSpec::Dense(rows) => {
            let r = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            if rows.iter().any(|row| row.len() != p) {
                return Err(HarnessError::Config("Q row length must equal model dim".into()));
            }
            DMatrix::from_row_slice(r, p, &flat)
        }
    })
}
