//! `tail`: quantile curves (gauss / fused / majorant) over an x-grid with
//! optional Monte Carlo exceedance validation.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use slskit::linalg;
use slskit::rng::{stream, tag};
use slskit::tailbounds::{
    fused_quantile, gaussian_quantile, linear_majorant, solve_xc, SpectralSummary, TailConfig,
};

use crate::config::{TailConfigDoc, TailGenerator};
use crate::mc::{block_mc, CoverageRow};
use crate::out::{fmt_f64, CsvOut};
use crate::{HResult, HarnessError, RunContext};

pub fn cmd_tail(cfg: &TailConfigDoc, ctx: &RunContext) -> HResult<Vec<PathBuf>> {
    let b = cfg.b.load().map_err(HarnessError::from)?;
    let tail_cfg =
        TailConfig::new(cfg.gamma, cfg.rho).map_err(HarnessError::from)?;

    // Effective operator: the sym-exponential generator satisfies the tail
    // condition with V² = (1+γ²/2) I, so B = Q V² Qᵀ picks up that factor.
    let (b_eff, eigs_b) = match cfg.mc.as_ref().map(|m| m.generator) {
        Some(TailGenerator::SymExponential) => {
            if !is_diagonal(&b) {
                return Err(HarnessError::Config(
                    "sym_exponential generator needs a diagonal B spec (Q = diag)".into(),
                ));
            }
            let c2 = 1.0 + cfg.gamma * cfg.gamma / 2.0;
            (b.clone() * c2, b.diagonal().iter().copied().collect::<Vec<f64>>())
        }
        _ => {
            let eigs: Vec<f64> = linalg::sym_eigenvalues(&b).iter().copied().collect();
            (b.clone(), eigs)
        }
    };
    let s = SpectralSummary::from_psd(&b_eff).map_err(HarnessError::from)?;
    let pt = solve_xc(&s, &tail_cfg).map_err(HarnessError::from)?;

    let xs = cfg.x_grid.values();
    let mut columns = vec!["x", "z_gauss", "z_fused", "z_majorant", "regime"];
    if cfg.mc.is_some() {
        columns.extend([
            "viol_gauss",
            "emp_gauss",
            "nom_gauss",
            "margin_gauss",
            "viol_fused",
            "emp_fused",
            "nom_fused",
            "margin_fused",
            "reps",
        ]);
    }
    let mut csv = CsvOut::new(ctx, "tail.csv", &columns);

    // Quantile rows are deterministic; MC exceedances appended when requested.
    let mut written = Vec::new();
    let mc = match &cfg.mc {
        None => None,
        Some(m) => {
            let seed = ctx.require_seed()?;
            let z_gauss: Vec<f64> = xs
                .iter()
                .map(|&x| gaussian_quantile(&s, x))
                .collect::<Result<_, _>>()
                .map_err(HarnessError::from)?;
            let z_fused: Vec<f64> = xs
                .iter()
                .map(|&x| fused_quantile(&pt, &s, x))
                .collect::<Result<_, _>>()
                .map_err(HarnessError::from)?;
            let counts = ctx.with_pool(|| {
                exceedance_counts(m.generator, &eigs_b, &z_gauss, &z_fused, m.reps, seed)
            });
            Some((counts, m.reps))
        }
    };

    for (i, &x) in xs.iter().enumerate() {
        let zg = gaussian_quantile(&s, x).map_err(HarnessError::from)?;
        let zf = fused_quantile(&pt, &s, x).map_err(HarnessError::from)?;
        let zm = linear_majorant(&s, &tail_cfg, x).map_err(HarnessError::from)?;
        let regime = if x <= pt.x_c { "gauss" } else { "subexp" };
        let mut fields = vec![
            fmt_f64(x),
            fmt_f64(zg),
            fmt_f64(zf),
            fmt_f64(zm),
            regime.to_string(),
        ];
        if let Some(((vg, vf), reps)) = mc.as_ref().map(|(c, r)| (c[i], *r)) {
            let rg = CoverageRow::new(x, (-x).exp(), vg, reps);
            let rf = CoverageRow::new(x, 3.0 * (-x).exp(), vf, reps);
            fields.extend([
                rg.violations.to_string(),
                fmt_f64(rg.empirical),
                fmt_f64(rg.nominal),
                fmt_f64(rg.margin3sigma),
                rf.violations.to_string(),
                fmt_f64(rf.empirical),
                fmt_f64(rf.nominal),
                fmt_f64(rf.margin3sigma),
                reps.to_string(),
            ]);
        }
        csv.row(&fields);
    }
    written.push(csv.finish()?);
    Ok(written)
}

fn is_diagonal(m: &nalgebra::DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Counts `‖Qξ‖ > z` per grid point for both quantile curves.
///
/// Gaussian generator: `‖Qξ‖² = Σ λ_i γ_i²` from the eigenvalues of `B`.
/// Sym-exponential: `ξ_i = (E − E')/√2` per coordinate, `Q = diag(√λ_i)`.
fn exceedance_counts(
    generator: TailGenerator,
    eigs_b: &[f64],
    z_gauss: &[f64],
    z_fused: &[f64],
    reps: u64,
    seed: u64,
) -> Vec<(u64, u64)> {
    let block = 16_384u64;
    let partials = block_mc(reps, block, |block_idx, len| {
        let mut rng = stream(seed, block_idx, tag::MC_TAIL);
        let mut counts = vec![(0u64, 0u64); z_gauss.len()];
        for _ in 0..len {
            let mut q2 = 0.0;
            match generator {
                TailGenerator::Gaussian => {
                    for &l in eigs_b {
                        let g: f64 = rng.sample(StandardNormal);
                        q2 += l * g * g;
                    }
                }
                TailGenerator::SymExponential => {
                    for &l in eigs_b {
                        let e1: f64 = rng.sample(Exp1);
                        let e2: f64 = rng.sample(Exp1);
                        let xi = (e1 - e2) / std::f64::consts::SQRT_2;
                        q2 += l * xi * xi;
                    }
                }
            }
            let q = q2.sqrt();
            for (k, c) in counts.iter_mut().enumerate() {
                if q > z_gauss[k] {
                    c.0 += 1;
                }
                if q > z_fused[k] {
                    c.1 += 1;
                }
            }
        }
        counts
    });
    let mut total = vec![(0u64, 0u64); z_gauss.len()];
    for p in partials {
        for (t, x) in total.iter_mut().zip(p) {
            t.0 += x.0;
            t.1 += x.1;
        }
    }
    total
}
