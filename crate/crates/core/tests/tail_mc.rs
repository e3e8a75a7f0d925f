//! Monte Carlo oracles for the tail-bound guarantees.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use slskit::rng::{stream, tag};
use slskit::tailbounds::{
    exp_moment_bound, gaussian_quantile, hkz_mgf_bound, solve_xc, SpectralSummary, TailConfig,
};

fn chi2_norm<R: Rng>(p: usize, rng: &mut R) -> f64 {
    let mut s = 0.0;
    for _ in 0..p {
        let g: f64 = rng.sample(StandardNormal);
        s += g * g;
    }
    s
}

#[test]
fn gaussian_exceedance_within_binomial_3sigma() {
    // Standard Gaussian in dimension 50: P(‖γ‖² > z²(B,x)) <= e^{-x} + 3σ.
    let p = 50usize;
    let s = SpectralSummary::new(p as f64, p as f64, 1.0).unwrap();
    let xs = [1.0, 2.0, 3.0];
    let thresholds: Vec<f64> =
        xs.iter().map(|&x| gaussian_quantile(&s, x).unwrap().powi(2)).collect();

    let reps: u64 = 200_000;
    let blocks = 64u64;
    let per = reps / blocks;
    let counts: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(31_415, b, tag::MC_TAIL);
            let mut c = vec![0u64; xs.len()];
            for _ in 0..per {
                let q2 = chi2_norm(p, &mut rng);
                for (k, &t) in thresholds.iter().enumerate() {
                    if q2 > t {
                        c[k] += 1;
                    }
                }
            }
            c
        })
        .collect();
    let n = (per * blocks) as f64;
    for (k, &x) in xs.iter().enumerate() {
        let viol: u64 = counts.iter().map(|c| c[k]).sum();
        let emp = viol as f64 / n;
        let nominal = (-x).exp();
        let sigma = (nominal * (1.0 - nominal) / n).sqrt();
        assert!(emp <= nominal + 3.0 * sigma, "x={x}: {emp} > {nominal} + 3σ");
    }
}

#[test]
fn exp_moment_bound_dominates_gaussian_mc() {
    // E e^{ν‖γ‖} 1{‖γ‖ >= z} <= bound for p=20, ν=0.1, z=√p + 2.
    let p = 20usize;
    let s = SpectralSummary::new(p as f64, p as f64, 1.0).unwrap();
    let cfg = TailConfig::with_gamma(20.0).unwrap();
    let pt = solve_xc(&s, &cfg).unwrap();
    let nu = 0.1;
    let z = (p as f64).sqrt() + 2.0;
    assert!(z <= pt.z_c, "test is set up for the Gaussian zone");
    let bound = exp_moment_bound(&s, &cfg, &pt, nu, z).unwrap();

    let reps: u64 = 400_000;
    let blocks = 64u64;
    let per = reps / blocks;
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(2_718, b, tag::MC_TAIL);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for _ in 0..per {
                let q = chi2_norm(p, &mut rng).sqrt();
                let v = if q >= z { (nu * q).exp() } else { 0.0 };
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let n = (per * blocks) as f64;
    let mean = sums.iter().map(|s| s.0).sum::<f64>() / n;
    let var = sums.iter().map(|s| s.1).sum::<f64>() / n - mean * mean;
    let se = (var / n).sqrt();
    assert!(mean <= bound + 3.0 * se, "MC {mean} (se {se}) vs bound {bound}");
}

#[test]
fn hkz_mgf_dominates_gaussian_closed_form_across_mu() {
    // For standard Gaussian, E exp(μ‖γ‖²/2) = (1−μ)^{-p/2} exactly.
    let p = 10.0f64;
    let s = SpectralSummary::new(p, p, 1.0).unwrap();
    for mu in [0.05f64, 0.2, 0.5, 0.8, 0.95] {
        let exact = (1.0 - mu).powf(-p / 2.0);
        let bound = hkz_mgf_bound(&s, mu).unwrap();
        assert!(exact <= bound, "mu={mu}: exact {exact} > bound {bound}");
    }
}

#[test]
fn fused_quantile_guarantee_for_sym_exponential() {
    // The documented sub-exponential generator: unit-variance symmetrized
    // Exponential coordinates satisfy the tail condition with
    // V² = (1+γ²/2) I at radius γ; the fused quantile of B = QV²Qᵀ then
    // carries the 3e^{-x} guarantee for ‖Qξ‖.
    use rand_distr::Exp1;
    let p = 20usize;
    let gamma = 1.5;
    let c2 = 1.0 + gamma * gamma / 2.0;
    let s = SpectralSummary::new(c2 * p as f64, c2 * c2 * p as f64, c2).unwrap();
    let cfg = TailConfig::with_gamma(gamma).unwrap();
    let pt = solve_xc(&s, &cfg).unwrap();
    let xs = [0.5, 1.0, 2.0];
    let thresholds: Vec<f64> = xs
        .iter()
        .map(|&x| slskit::tailbounds::fused_quantile(&pt, &s, x).unwrap())
        .collect();

    let reps: u64 = 200_000;
    let blocks = 64u64;
    let per = reps / blocks;
    let counts: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(1_618, b, tag::MC_TAIL);
            let mut c = vec![0u64; xs.len()];
            for _ in 0..per {
                let mut q2 = 0.0;
                for _ in 0..p {
                    let e1: f64 = rng.sample(Exp1);
                    let e2: f64 = rng.sample(Exp1);
                    let xi = (e1 - e2) / std::f64::consts::SQRT_2;
                    q2 += xi * xi;
                }
                let q = q2.sqrt();
                for (k, &t) in thresholds.iter().enumerate() {
                    if q > t {
                        c[k] += 1;
                    }
                }
            }
            c
        })
        .collect();
    let n = (per * blocks) as f64;
    for (k, &x) in xs.iter().enumerate() {
        let viol: u64 = counts.iter().map(|c| c[k]).sum();
        let emp = viol as f64 / n;
        let nominal = 3.0 * (-x).exp();
        let sigma = (nominal.min(1.0) * (1.0 - nominal.min(0.99)) / n).sqrt();
        assert!(emp <= nominal + 3.0 * sigma, "x={x}: {emp} > {nominal}");
    }
}
