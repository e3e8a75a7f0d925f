//! `tensor`: covariance structure, regularity constant, and tail quantiles
//! for a family of second-order Gaussian tensors, with optional Monte Carlo
//! validation of the upper (and lower) tail guarantees.

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use slskit::rng::{stream, tag};
use slskit::tailbounds::{tensor_lower_tail, tensor_upper_tail, TailConfig, TensorFamily};

use crate::config::{TensorConfigDoc, TensorFamilySpec};
use crate::mc::{block_mc, CoverageRow};
use crate::out::{fmt_f64, CsvOut};
use crate::{HResult, HarnessError, RunContext};

pub fn cmd_tensor(cfg: &TensorConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    let seed = ctx.require_seed()?;
    let tensors = build_family(&cfg.family, seed)?;
    let k = tensors.len();
    let s2 = TensorFamily::new(tensors.clone(), None).map_err(HarnessError::from)?.covariance();
    let v_sq = if cfg.v_inflate == 1.0 {
        None
    } else {
        Some(&s2 * (cfg.v_inflate * cfg.v_inflate))
    };
    let family = TensorFamily::with_estimated_delta(tensors, v_sq, cfg.delta_dirs, seed)
        .map_err(HarnessError::from)?;
    let tail = TailConfig::with_gamma(cfg.gamma).map_err(HarnessError::from)?;
    if family.delta * cfg.gamma >= 1.0 {
        return Err(HarnessError::Numeric(format!(
            "delta*gamma = {} >= 1: upper-tail theorem inapplicable",
            family.delta * cfg.gamma
        )));
    }
    let q = DMatrix::identity(k, k);
    let xs = cfg.x_grid.values();

    let z_upper: Vec<f64> = xs
        .iter()
        .map(|&x| tensor_upper_tail(&family, &q, &tail, x))
        .collect::<Result<_, _>>()
        .map_err(HarnessError::from)?;
    // The lower tail is stated for 𝕍² = S² exactly, so it uses its own
    // family (with the S²-based delta estimate) regardless of v_inflate.
    let t_lower: Option<Vec<f64>> = match cfg.alpha {
        None => None,
        Some(alpha) => {
            let exact = TensorFamily::with_estimated_delta(
                family.tensors().to_vec(),
                None,
                cfg.delta_dirs,
                seed,
            )
            .map_err(HarnessError::from)?;
            Some(
                xs.iter()
                    .map(|&x| tensor_lower_tail(&exact, &q, x, alpha))
                    .collect::<Result<_, _>>()
                    .map_err(HarnessError::from)?,
            )
        }
    };

    let mut columns = vec!["x", "z_upper", "t_lower", "delta", "reps"];
    let has_mc = cfg.mc.is_some();
    if has_mc {
        columns.extend([
            "upper_viol",
            "upper_emp",
            "upper_nom",
            "upper_margin",
            "lower_viol",
            "lower_emp",
            "lower_nom",
            "lower_margin",
        ]);
    }
    let mut csv = CsvOut::new(ctx, "tensor.csv", &columns);

    let counts = match &cfg.mc {
        None => None,
        Some(mc) => Some(ctx.with_pool(|| {
            mc_counts(&family, &z_upper, t_lower.as_deref(), cfg.gamma, mc.reps, seed)
        })),
    };

    let reps = cfg.mc.as_ref().map(|m| m.reps).unwrap_or(0);
    for (i, &x) in xs.iter().enumerate() {
        let mut fields = vec![
            fmt_f64(x),
            fmt_f64(z_upper[i]),
            t_lower.as_ref().map(|t| fmt_f64(t[i])).unwrap_or_default(),
            fmt_f64(family.delta),
            reps.to_string(),
        ];
        if let Some(c) = &counts {
            let up = CoverageRow::new(x, 3.0 * (-x).exp(), c[i].0, reps);
            let lo = CoverageRow::new(x, 2.0 * (-x).exp(), c[i].1, reps);
            fields.extend([
                up.violations.to_string(),
                fmt_f64(up.empirical),
                fmt_f64(up.nominal),
                fmt_f64(up.margin3sigma),
                lo.violations.to_string(),
                fmt_f64(lo.empirical),
                fmt_f64(lo.nominal),
                fmt_f64(lo.margin3sigma),
            ]);
        }
        csv.row(&fields);
    }
    csv.json_footer(&serde_json::json!({
        "delta": family.delta,
        "delta_gamma": family.delta * cfg.gamma,
        "tr_s2": family.covariance().trace(),
    }));
    Ok(vec![csv.finish()?])
}

fn build_family(spec: &TensorFamilySpec, seed: u64) -> HResult<Vec<DMatrix<f64>>> {
    Ok(match spec {
        TensorFamilySpec::Diagonal { values } => values
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut t = DMatrix::zeros(values.len(), values.len());
                t[(i, i)] = c;
                t
            })
            .collect(),
        TensorFamilySpec::RandomSymmetric { k, m, scale } => {
            let mut rng = stream(seed, 0, tag::SAMPLER);
            (0..*k)
                .map(|_| {
                    let mut t = DMatrix::zeros(*m, *m);
                    for i in 0..*m {
                        for j in i..*m {
                            let v: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
                            t[(i, j)] = v;
                            t[(j, i)] = v;
                        }
                    }
                    t
                })
                .collect()
        }
    })
}

/// Counts upper violations `𝒵 > z_upper` with `𝒵 = √(1−δγ)‖T−ET‖` and lower
/// violations `‖T−ET‖² < t_lower` per grid point.
fn mc_counts(
    family: &TensorFamily,
    z_upper: &[f64],
    t_lower: Option<&[f64]>,
    gamma: f64,
    reps: u64,
    seed: u64,
) -> Vec<(u64, u64)> {
    let shrink = (1.0 - family.delta * gamma).max(0.0).sqrt();
    let mean = family.mean();
    let partials = block_mc(reps, 4096, |block_idx, len| {
        let mut rng = stream(seed, block_idx, tag::MC_TAIL);
        let mut counts = vec![(0u64, 0u64); z_upper.len()];
        for _ in 0..len {
            let t = family.draw(&mut rng);
            let err2 = (&t - &mean).norm_squared();
            let z = shrink * err2.sqrt();
            for (k, c) in counts.iter_mut().enumerate() {
                if z > z_upper[k] {
                    c.0 += 1;
                }
                if let Some(tl) = t_lower {
                    if err2 < tl[k] {
                        c.1 += 1;
                    }
                }
            }
        }
        counts
    });
    let mut total = vec![(0u64, 0u64); z_upper.len()];
    for p in partials {
        for (t, x) in total.iter_mut().zip(p) {
            t.0 += x.0;
            t.1 += x.1;
        }
    }
    total
}
