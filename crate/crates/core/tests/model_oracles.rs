//! Finite-difference and Monte Carlo oracles for the concrete models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use slskit::fd;
use slskit::linalg;
use slskit::models::{
    histogram_phi, logdensity_phi, logistic_conditions, HistogramModel, LogDensity1D,
    LogisticModel, PrecisionModel, SlsModel,
};
use slskit::rng::stream;

fn gaussian_designs(n: usize, p: usize, scale: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = stream(seed, 0, 1);
    (0..n)
        .map(|_| {
            DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal) * scale))
        })
        .collect()
}

fn random_vec(p: usize, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal) * scale))
}

/// Gradient, Hessian, and available 3rd/4th directional derivatives of the
/// population objective match finite differences at the spec tolerances.
fn check_model_derivatives<M: SlsModel>(model: &M, points: &[(DVector<f64>, DVector<f64>)]) {
    for (ups, u) in points {
        let h = 1e-5 * (1.0 + ups.norm());
        let f = |x: &DVector<f64>| model.pop_loss(x).unwrap();
        let g = |x: &DVector<f64>| model.pop_grad(x).unwrap();

        let g_exact = model.pop_grad(ups).unwrap();
        let g_fd = fd::grad(f, ups, h);
        assert!(
            fd::rel_err_vec(&g_exact, &g_fd) <= 1e-6,
            "gradient mismatch: {}",
            fd::rel_err_vec(&g_exact, &g_fd)
        );

        let h_exact = model.base_hess(ups).unwrap();
        let h_fd = fd::hess_of_grad(g, ups, h);
        assert!(
            fd::rel_err_mat(&h_exact, &h_fd) <= 1e-5,
            "hessian mismatch: {}",
            fd::rel_err_mat(&h_exact, &h_fd)
        );

        // Unit direction; Richardson-extrapolated stencils. The checks are
        // relative at 1e-4 plus the unavoidable rounding-noise floor of the
        // difference scheme (f carries n_eff-sized values).
        let un = u / u.norm();
        // f evaluates n_eff-sized sums internally even when the value is
            // small, so the rounding floor keys to that scale.
            let f0 = f(ups).abs() + model.n_eff();
        let eps = f64::EPSILON;
        if let Some(d3) = model.third_dir(ups, &un) {
            let (h, hin) = (0.02, 0.01);
            let d3_fd = fd::dir3r(&f, ups, &un, h);
            let noise = 20.0 * eps * (1.0 + f0) / (hin * hin * hin);
            assert!(
                (d3 - d3_fd).abs() <= 1e-4 * d3.abs().max(d3_fd.abs()) + noise,
                "dir3 mismatch: exact {d3} fd {d3_fd}"
            );
        }
        if let Some(d4) = model.fourth_dir(ups, &un) {
            let (h, hin) = (0.04, 0.02);
            let d4_fd = fd::dir4r(&f, ups, &un, h);
            let noise = 40.0 * eps * (1.0 + f0) / (hin * hin * hin * hin);
            assert!(
                (d4 - d4_fd).abs() <= 1e-4 * d4.abs().max(d4_fd.abs()) + noise,
                "dir4 mismatch: exact {d4} fd {d4_fd}"
            );
        }
    }
}

fn points(p: usize, n_points: usize, scale: f64, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = stream(seed, 1, 2);
    (0..n_points)
        .map(|_| (random_vec(p, scale, &mut rng), random_vec(p, 1.0, &mut rng)))
        .collect()
}

#[test]
fn logistic_derivatives_match_fd() {
    let m = LogisticModel::well_specified(
        gaussian_designs(60, 4, 0.8, 10),
        &DVector::from_row_slice(&[0.4, -0.2, 0.3, 0.1]),
    )
    .unwrap();
    check_model_derivatives(&m, &points(4, 10, 0.5, 11));
}

#[test]
fn logistic_empirical_grad_hess_match_fd() {
    // The spec's example checks the empirical loss path too.
    let m = LogisticModel::well_specified(
        gaussian_designs(40, 3, 1.0, 12),
        &DVector::from_row_slice(&[0.2, 0.5, -0.4]),
    )
    .unwrap();
    let data = m.sample(3);
    let mut rng = stream(13, 0, 3);
    for _ in 0..10 {
        let ups = random_vec(3, 0.6, &mut rng);
        let h = 1e-5 * (1.0 + ups.norm());
        let f = |x: &DVector<f64>| m.loss(&data, x).unwrap();
        let g_fd = fd::grad(f, &ups, h);
        let g = m.grad(&data, &ups).unwrap();
        assert!(fd::rel_err_vec(&g, &g_fd) <= 1e-6);
        let h_fd = fd::hess_of_grad(|x| m.grad(&data, x).unwrap(), &ups, h);
        let h_exact = m.base_hess(&ups).unwrap();
        assert!(fd::rel_err_mat(&h_exact, &h_fd) <= 1e-6);
    }
}

#[test]
fn histogram_derivatives_match_fd() {
    let theta = DVector::from_row_slice(&[0.3, 0.2, 0.15, 0.35]);
    let m = HistogramModel::new(theta, 500).unwrap();
    check_model_derivatives(&m, &points(4, 10, 0.7, 21));
}

#[test]
fn histogram_third_dir_matches_fd_directly() {
    let mut rng = stream(22, 0, 4);
    for _ in 0..10 {
        let ups = random_vec(5, 0.8, &mut rng);
        let u = random_vec(5, 1.0, &mut rng);
        let f = |x: &DVector<f64>| histogram_phi(x).0;
        let d3_fd = fd::dir3(f, &ups, &u, 2e-3 / (1.0 + u.norm()));
        let d3 = slskit::models::histogram_third_dir(&ups, &u);
        assert!(fd::rel_err(d3, d3_fd, 1e-8) <= 1e-4, "exact {d3} vs fd {d3_fd}");
    }
}

#[test]
fn logdensity_derivatives_match_fd() {
    let m = LogDensity1D::new(
        0.0,
        1.0,
        801,
        |x| DVector::from_row_slice(&[x, x * x, (3.0 * x).sin()]),
        DVector::from_row_slice(&[0.5, -0.3, 0.2]),
        200,
    )
    .unwrap();
    check_model_derivatives(&m, &points(3, 10, 0.4, 31));
}

#[test]
fn precision_derivatives_match_fd() {
    let mut sigma = DMatrix::identity(3, 3);
    sigma[(0, 1)] = 0.3;
    sigma[(1, 0)] = 0.3;
    let m = PrecisionModel::new(sigma, 50).unwrap();
    // Random SPD-ish points near the truth; directions small enough to stay
    // in the domain through the FD stencil.
    let truth = m.truth();
    let mut rng = stream(41, 0, 5);
    let pts: Vec<_> = (0..10)
        .map(|_| {
            let d = m.dim();
            let ups = &truth + random_vec(d, 0.05, &mut rng);
            let u = random_vec(d, 0.3, &mut rng);
            (ups, u)
        })
        .collect();
    check_model_derivatives(&m, &pts);
}

#[test]
fn grad_zeta_is_constant_in_ups() {
    // ∇L(υ₁) − ∇EL(υ₁) = ∇L(υ₂) − ∇EL(υ₂) to 1e-10 for every model.
    let mut rng = stream(50, 0, 6);

    macro_rules! check {
        ($m:expr, $data:expr, $p:expr) => {{
            let u1 = random_vec($p, 0.5, &mut rng);
            let u2 = random_vec($p, 0.5, &mut rng);
            let z1 = $m.grad(&$data, &u1).unwrap() - $m.pop_grad(&u1).unwrap();
            let z2 = $m.grad(&$data, &u2).unwrap() - $m.pop_grad(&u2).unwrap();
            let scale = z1.norm().max(1.0);
            assert!((z1 - z2).norm() <= 1e-10 * scale);
        }};
    }

    let lm = LogisticModel::well_specified(
        gaussian_designs(50, 3, 1.0, 60),
        &DVector::from_row_slice(&[0.3, -0.1, 0.2]),
    )
    .unwrap();
    check!(lm, lm.sample(1), 3);

    let hm = HistogramModel::new(DVector::from_row_slice(&[0.4, 0.25, 0.35]), 300).unwrap();
    check!(hm, hm.sample(2), 3);

    let dm = LogDensity1D::new(
        -1.0,
        1.0,
        401,
        |x| DVector::from_row_slice(&[x, x * x]),
        DVector::from_row_slice(&[0.2, -0.1]),
        100,
    )
    .unwrap();
    check!(dm, dm.sample(3), 2);

    let pm = PrecisionModel::new(DMatrix::identity(3, 3), 40).unwrap();
    // Stay in the SPD domain.
    let t = pm.truth();
    let d1 = &t + random_vec(6, 0.05, &mut rng);
    let d2 = &t + random_vec(6, 0.05, &mut rng);
    let data = pm.sample(4);
    let z1 = pm.grad(&data, &d1).unwrap() - pm.pop_grad(&d1).unwrap();
    let z2 = pm.grad(&data, &d2).unwrap() - pm.pop_grad(&d2).unwrap();
    assert!((&z1 - &z2).norm() <= 1e-10 * z1.norm().max(1.0));
}

#[test]
fn logistic_sampler_mean_within_3_sigma() {
    // Empirical mean of Y matches the average success probability, n = 1e5.
    let n = 100_000;
    let designs = vec![DVector::from_element(1, 1.0); n];
    let theta = vec![0.37; n];
    let m = LogisticModel::new(designs, theta).unwrap();
    let data = m.sample(123);
    let mean = data.labels.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
    let sigma = (0.37f64 * 0.63 / n as f64).sqrt();
    assert!((mean - 0.37).abs() <= 3.0 * sigma, "mean {mean}");
}

#[test]
fn precision_sample_covariance_within_4_sigma() {
    // Entrywise agreement of the sample covariance with Σ at n = 1e5.
    let mut sigma = DMatrix::identity(3, 3);
    sigma[(0, 1)] = 0.4;
    sigma[(1, 0)] = 0.4;
    sigma[(2, 2)] = 2.0;
    let n = 100_000;
    let m = PrecisionModel::new(sigma.clone(), n).unwrap();
    let cov = m.sample(7).sample_cov();
    for i in 0..3 {
        for j in 0..3 {
            // Var(x_i x_j) = Σ_ii Σ_jj + Σ_ij² for Gaussians.
            let v = sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)] * sigma[(i, j)];
            let se = (v / n as f64).sqrt();
            assert!(
                (cov[(i, j)] - sigma[(i, j)]).abs() <= 4.0 * se,
                "entry ({i},{j}): {} vs {}",
                cov[(i, j)],
                sigma[(i, j)]
            );
        }
    }
}

#[test]
fn logdensity_var_zeta_matches_mc() {
    // Var(∇ζ) = n ∇²φ(υ*) via MC covariance of Ψ(X) − EΨ over many draws.
    let m = LogDensity1D::new(
        0.0,
        1.0,
        501,
        |x| DVector::from_row_slice(&[x, (2.0 * x).cos()]),
        DVector::from_row_slice(&[0.8, -0.5]),
        1,
    )
    .unwrap();
    let (_, mean, hess) = logdensity_phi(&m, &m.truth()).unwrap();
    let reps = 200_000;
    let mut acc = DMatrix::<f64>::zeros(2, 2);
    let mut m4 = DMatrix::<f64>::zeros(2, 2);
    for rep in 0..reps {
        let data = m.sample(slskit::rng::derive_seed(99, rep, 7));
        let psi = m.dict().row(data.node_idx[0]).transpose() - &mean;
        for i in 0..2 {
            for j in 0..2 {
                let v = psi[i] * psi[j];
                acc[(i, j)] += v;
                m4[(i, j)] += v * v;
            }
        }
    }
    let nf = reps as f64;
    for i in 0..2 {
        for j in 0..2 {
            let est = acc[(i, j)] / nf;
            let var = m4[(i, j)] / nf - est * est;
            let se = (var / nf).sqrt();
            assert!(
                (est - hess[(i, j)]).abs() <= 4.0 * se,
                "entry ({i},{j}): {est} vs {}",
                hess[(i, j)]
            );
        }
    }
}

#[test]
fn precision_var_zeta_quadratic_form_matches_mc() {
    // Var<∇ζ, u> = (n/2) tr(Σu)² by MC.
    let sigma = {
        let mut s = DMatrix::identity(3, 3);
        s[(0, 2)] = 0.3;
        s[(2, 0)] = 0.3;
        s
    };
    let n = 40;
    let m = PrecisionModel::new(sigma.clone(), n).unwrap();
    let u_mat = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.2, -0.3, 0.1, 0.0, 0.1, 0.4]);
    let u = linalg::svec(&u_mat);
    let want = 0.5 * n as f64 * (&sigma * &u_mat * &sigma * &u_mat).trace();

    let reps = 20_000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for rep in 0..reps {
        let data = m.sample(slskit::rng::derive_seed(17, rep, 8));
        let v = m.grad_zeta(&data).dot(&u);
        sum += v;
        sum2 += v * v;
    }
    let nf = reps as f64;
    let est = sum2 / nf - (sum / nf) * (sum / nf);
    // Var of the variance estimator for near-Gaussian v: ~2 Var²/reps.
    let se = (2.0 / nf).sqrt() * est;
    assert!((est - want).abs() <= 4.0 * se, "var {est} vs {want}");
}

#[test]
fn logistic_fisher_variability_sandwich() {
    // e^{-1/2} F(υ°) <= F(υ) <= e^{1/2} F(υ°) for ‖D(υ−υ°)‖ <= r with
    // δ₀ r <= 1/2, as eigenvalue bounds of F(υ°)^{-1/2}F(υ)F(υ°)^{-1/2}.
    let truth = DVector::from_row_slice(&[0.3, -0.2]);
    let m = LogisticModel::well_specified(gaussian_designs(200, 2, 1.0, 70), &truth).unwrap();
    let f0 = m.fisher_at(&truth);
    let d = linalg::spd_sqrt(&f0, "F").unwrap();
    let cc = logistic_conditions(&m, &d, 0.5, 0, 0).unwrap();
    let r = (0.5 / cc.delta0).min(2.0);
    let d_inv = d.clone().try_inverse().unwrap();
    let f0_chol = nalgebra::Cholesky::new(f0.clone()).unwrap();
    let mut rng = stream(71, 0, 9);
    let e = std::f64::consts::E;
    for _ in 0..20 {
        let w = random_vec(2, 1.0, &mut rng);
        let w = &w / w.norm();
        let t: f64 = rng.gen();
        let ups = &truth + &d_inv * w * (r * t);
        let f = m.fisher_at(&ups);
        // Similar symmetric form L⁻¹ F L⁻ᵀ.
        let mut s = f0_chol.l().solve_lower_triangular(&f).unwrap();
        s = f0_chol.l().solve_lower_triangular(&s.transpose()).unwrap();
        linalg::symmetrize(&mut s);
        let lo = linalg::eig_min(&s);
        let hi = linalg::eig_max(&s);
        assert!(lo >= e.powf(-0.5) - 1e-9, "low eigenvalue {lo}");
        assert!(hi <= e.powf(0.5) + 1e-9, "high eigenvalue {hi}");
    }
}
