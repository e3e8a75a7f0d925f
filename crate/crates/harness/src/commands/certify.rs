//! `certify`: replicated Fisher/Wilks/bias expansion certificates with
//! coverage summary.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use slskit::estimator::{expansion_certificate, ExpansionReport, FitOptions};
use slskit::models::SlsModel;
use slskit::rng::{derive_seed, tag};

use crate::commands::{default_metric, dispatch_model, resolve_constants};
use crate::config::CertifyConfigDoc;
use crate::out::{fmt_f64, write_json, CsvOut};
use crate::{HResult, HarnessError, RunContext};

#[derive(Debug, Serialize)]
struct CertifySummary {
    replicates: u64,
    x: f64,
    /// Fraction with `on_omega && fisher && wilks`.
    coverage: f64,
    threshold: f64,
    margin3sigma: f64,
    rate_on_omega: f64,
    rate_fisher: f64,
    rate_wilks: f64,
    bias_holds: bool,
    applicable: bool,
    notes: Vec<String>,
    tau3: f64,
    tau4: f64,
    varkappa: f64,
    fg_gap: f64,
    v2_convention: String,
}

pub fn cmd_certify(cfg: &CertifyConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    let seed = ctx.require_seed()?;
    if cfg.replicates == 0 {
        return Err(HarnessError::Config("replicate count must be >= 1".into()));
    }
    let model = cfg.model.load().map_err(HarnessError::from)?;
    let constants = resolve_constants(&cfg.constants, &model, seed)?;

    let reports: Vec<ExpansionReport> = dispatch_model!(&model, m => {
        let d = default_metric(m)?;
        ctx.with_pool(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|rep| {
                    let data = m.sample(derive_seed(seed, rep, tag::CERTIFY));
                    expansion_certificate(
                        m,
                        &cfg.penalty,
                        &data,
                        &constants,
                        &d,
                        cfg.x,
                        &FitOptions::default(),
                    )
                })
                .collect::<Result<_, _>>()
        })
        .map_err(HarnessError::from)?
    });

    let mut csv = CsvOut::new(
        ctx,
        "certify.csv",
        &[
            "rep",
            "on_omega",
            "fisher_lhs",
            "fisher_rhs",
            "wilks_lhs",
            "wilks_rhs",
            "bias_lhs",
            "bias_rhs",
            "zeta_norm_d",
            "r_d",
            "covered",
        ],
    );
    let mut covered = 0u64;
    let mut n_omega = 0u64;
    let mut n_fisher = 0u64;
    let mut n_wilks = 0u64;
    for (rep, r) in reports.iter().enumerate() {
        let fisher_ok = r.fisher_lhs <= r.fisher_rhs;
        let wilks_ok = r.wilks_lhs <= r.wilks_rhs;
        let cov = r.on_omega && fisher_ok && wilks_ok;
        covered += u64::from(cov);
        n_omega += u64::from(r.on_omega);
        n_fisher += u64::from(fisher_ok);
        n_wilks += u64::from(wilks_ok);
        csv.row(&[
            rep.to_string(),
            r.on_omega.to_string(),
            fmt_f64(r.fisher_lhs),
            fmt_f64(r.fisher_rhs),
            fmt_f64(r.wilks_lhs),
            fmt_f64(r.wilks_rhs),
            fmt_f64(r.bias_lhs),
            fmt_f64(r.bias_rhs),
            fmt_f64(r.zeta_norm_d),
            fmt_f64(r.r_d),
            cov.to_string(),
        ]);
    }

    let n = cfg.replicates as f64;
    let threshold = 1.0 - 3.0 * (-cfg.x).exp();
    let margin3sigma = 3.0 * (threshold.clamp(0.01, 0.99) * (1.0 - threshold.clamp(0.01, 0.99)) / n).sqrt();
    let first = &reports[0];
    let summary = CertifySummary {
        replicates: cfg.replicates,
        x: cfg.x,
        coverage: covered as f64 / n,
        threshold,
        margin3sigma,
        rate_on_omega: n_omega as f64 / n,
        rate_fisher: n_fisher as f64 / n,
        rate_wilks: n_wilks as f64 / n,
        bias_holds: first.bias_lhs <= first.bias_rhs,
        applicable: reports.iter().all(|r| r.applicable),
        notes: first.notes.clone(),
        tau3: constants.tau3,
        tau4: constants.tau4,
        varkappa: constants.varkappa,
        fg_gap: first.fg_gap,
        v2_convention: first.v2_convention.clone(),
    };

    let mut written = vec![csv.finish()?];
    written.push(write_json(ctx, "certify_summary.json", &summary)?);
    if !summary.applicable {
        return Err(HarnessError::Inapplicable(format!(
            "expansion preconditions failed: {:?}",
            summary.notes
        )));
    }
    Ok(written)
}
