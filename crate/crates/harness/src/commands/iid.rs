//! `iid-sandwich`: two-sided concentration of `‖QX‖²` around `tr B` for
//! `X = n^{-1/2} Σ ξ_i` with i.i.d. coordinates.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use slskit::linalg::ksum;
use slskit::rng::{stream, tag};

use crate::config::{IidConfigDoc, IidGenerator};
use crate::mc::{block_mc, CoverageRow};
use crate::out::{fmt_f64, CsvOut};
use crate::{HResult, HarnessError, RunContext};

pub fn cmd_iid_sandwich(cfg: &IidConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    if cfg.p == 0 || cfg.n == 0 {
        return Err(HarnessError::Config("need p >= 1 and n >= 1".into()));
    }
    let seed = ctx.require_seed()?;
    let q: Vec<f64> = match &cfg.q_diag {
        Some(d) if d.len() != cfg.p => {
            return Err(HarnessError::Config("q_diag length must equal p".into()))
        }
        Some(d) => d.clone(),
        None => vec![1.0; cfg.p],
    };
    // B = Q Σ Qᵀ with Σ = I: eigenvalues q_i².
    let lam: Vec<f64> = q.iter().map(|&x| x * x).collect();
    let tr_b = ksum(lam.iter().copied());
    let tr_b2 = ksum(lam.iter().map(|&l| l * l));
    let b_norm = lam.iter().cloned().fold(0.0f64, f64::max);
    let dim_q = tr_b / b_norm;

    // Advisory: the sandwich theorem is asymptotic in n >> dim_Q².
    let advisory_ok = (cfg.n as f64) >= 10.0 * dim_q * dim_q;

    let xs = cfg.x_grid.values();
    let upper: Vec<f64> =
        xs.iter().map(|&x| tr_b + 2.0 * (x * tr_b2).sqrt() + 2.0 * x * b_norm).collect();
    let lower: Vec<f64> = xs.iter().map(|&x| tr_b - 2.0 * (x * tr_b2).sqrt()).collect();

    let counts = ctx.with_pool(|| {
        let block = 16_384u64;
        let partials = block_mc(cfg.reps, block, |block_idx, len| {
            let mut rng = stream(seed, block_idx, tag::IID);
            let mut c = vec![(0u64, 0u64); xs.len()];
            for _ in 0..len {
                let q2 = draw_qx_norm2(cfg.generator, cfg.n, &lam, &mut rng);
                for (k, cc) in c.iter_mut().enumerate() {
                    if q2 > upper[k] {
                        cc.0 += 1;
                    }
                    if q2 < lower[k] {
                        cc.1 += 1;
                    }
                }
            }
            c
        });
        let mut total = vec![(0u64, 0u64); xs.len()];
        for p in partials {
            for (t, x) in total.iter_mut().zip(p) {
                t.0 += x.0;
                t.1 += x.1;
            }
        }
        total
    });

    let mut csv = CsvOut::new(
        ctx,
        "iid_sandwich.csv",
        &[
            "x",
            "upper_viol",
            "upper_emp",
            "upper_nom",
            "upper_margin",
            "lower_viol",
            "lower_emp",
            "lower_nom",
            "lower_margin",
            "reps",
            "advisory_ok",
        ],
    );
    for (k, &x) in xs.iter().enumerate() {
        // Delta treated as 0: its smallness is the claim under test.
        let up = CoverageRow::new(x, (-x).exp(), counts[k].0, cfg.reps);
        let lo = CoverageRow::new(x, 2.0 * (-x).exp(), counts[k].1, cfg.reps);
        csv.row(&[
            fmt_f64(x),
            up.violations.to_string(),
            fmt_f64(up.empirical),
            fmt_f64(up.nominal),
            fmt_f64(up.margin3sigma),
            lo.violations.to_string(),
            fmt_f64(lo.empirical),
            fmt_f64(lo.nominal),
            fmt_f64(lo.margin3sigma),
            cfg.reps.to_string(),
            advisory_ok.to_string(),
        ]);
    }
    csv.json_footer(&serde_json::json!({
        "dim_q": dim_q,
        "advisory_n_over_dimq2": cfg.n as f64 / (dim_q * dim_q),
        "advisory_ok": advisory_ok,
    }));
    Ok(vec![csv.finish()?])
}

/// One draw of `‖QX‖²`. Gaussian coordinates: `X ~ N(0, I)` exactly.
/// Rademacher: each coordinate sum is `2·Binomial(n, ½) − n` (exact),
/// scaled by `n^{-1/2}`.
fn draw_qx_norm2<R: Rng>(generator: IidGenerator, n: u64, lam: &[f64], rng: &mut R) -> f64 {
    let mut q2 = 0.0;
    match generator {
        IidGenerator::Gaussian => {
            for &l in lam {
                let g: f64 = rng.sample(StandardNormal);
                q2 += l * g * g;
            }
        }
        IidGenerator::Rademacher => {
            let binom = Binomial::new(n, 0.5).expect("valid binomial");
            let scale = 1.0 / (n as f64).sqrt();
            for &l in lam {
                let b = binom.sample(rng) as f64;
                let x = (2.0 * b - n as f64) * scale;
                q2 += l * x * x;
            }
        }
    }
    q2
}
