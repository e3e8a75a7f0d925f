//! `rate`: oracle-cut-off risk sweep over an n-grid in the synthetic
//! sequence-space model, with the fitted log-log slope as a JSON footer.

use std::path::PathBuf;

use slskit::penalty_lab::{rate_sweep, RateSpec};

use crate::config::RateConfigDoc;
use crate::out::{fmt_f64, CsvOut};
use crate::{HResult, HarnessError, RunContext};

pub fn cmd_rate(cfg: &RateConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    let spec = RateSpec { s: cfg.s, beta: cfg.beta, c_w: cfg.c_w, p: cfg.p };
    let grid = cfg.n_grid.values();
    let sweep = ctx.with_pool(|| rate_sweep(&spec, &grid)).map_err(HarnessError::from)?;

    let mut csv =
        CsvOut::new(ctx, "rate.csv", &["n", "J_star", "var_term", "bias_term", "risk"]);
    for row in &sweep.rows {
        csv.row(&[
            fmt_f64(row.n),
            row.j_star.to_string(),
            fmt_f64(row.var_term),
            fmt_f64(row.bias_term),
            fmt_f64(row.risk),
        ]);
    }
    csv.json_footer(&serde_json::json!({
        "slope": sweep.slope,
        "slope_se": sweep.slope_se,
        "spec": {"s": cfg.s, "beta": cfg.beta, "c_w": cfg.c_w, "p": cfg.p},
    }));
    Ok(vec![csv.finish()?])
}
