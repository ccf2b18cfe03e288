mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use seqloc::analysis::{fim_sdt, solve_lspm_uvd};
use seqloc::estimator::{solve_las_sdt, solve_las_sdt_k, solve_las_sdt_v, wls_step, SolveResult};
use seqloc::model::{h_eval, AidingDrift, AidingVelocity, MeasurementSet, NoiseSpec, ParameterVector};

fn position_error(res: &SolveResult, truth: &ParameterVector) -> f64 {
    (&res.theta_hat.p - &truth.p).norm()
}

#[test]
fn wls_step_matches_explicit_inverse() {
    let mut rng = common::rng(11);
    for _ in 0..200 {
        let rows = rng.random_range(7..20);
        let cols = rng.random_range(2..7);
        let g = DMatrix::from_fn(rows, cols, |_, _| common::normal(&mut rng));
        let w = DVector::from_fn(rows, |_, _| rng.random_range(0.1..10.0));
        let r = DVector::from_fn(rows, |_, _| common::normal(&mut rng));
        let wm = DMatrix::from_diagonal(&w);
        let normal = g.transpose() * &wm * &g;
        let expected = normal.try_inverse().unwrap() * g.transpose() * &wm * &r;
        let got = wls_step(&r, &g, &w).unwrap();
        assert!((&got - &expected).norm() <= 1e-9 * expected.norm().max(1.0));
    }
}

#[test]
fn noiseless_instances_are_recovered_by_every_solver() {
    let mut rng = common::rng(21);
    for trial in 0..100 {
        let n = 2 + trial % 2;
        let theta = common::random_theta(&mut rng, n);
        let layout = common::random_layout(&mut rng, &theta, 10);
        let noise = NoiseSpec::uniform(10, 1.0, 1.0).unwrap();
        let tau = MeasurementSet::noiseless(&theta, &layout, noise).unwrap();
        let cfg = common::solver(common::start(&theta, tau.rho[0], 60.0, &mut rng));
        let av = AidingVelocity::isotropic(theta.v.as_slice(), 0.5).unwrap();
        let ak = AidingDrift::new(theta.k, 5.0).unwrap();
        let results = [
            solve_las_sdt(&tau, &layout, &cfg).unwrap(),
            solve_las_sdt_v(&tau, &av, &layout, &cfg).unwrap(),
            solve_las_sdt_k(&tau, &ak, &layout, &cfg).unwrap(),
            solve_lspm_uvd(&tau.rho, &tau.noise.sigma_rho, &layout, &cfg).unwrap(),
        ];
        for (i, res) in results.iter().enumerate() {
            assert!(
                res.converged && res.iterations <= 10,
                "trial {trial} solver {i}: {res:?}"
            );
            assert!(position_error(res, &theta) < 1e-2, "trial {trial} solver {i}");
        }
    }
}

#[test]
fn objective_is_non_increasing() {
    let mut rng = common::rng(31);
    let trials = 300;
    let mut monotone = 0;
    for trial in 0..trials {
        let n = 2 + trial % 2;
        let theta = common::random_theta(&mut rng, n);
        let layout = common::random_layout(&mut rng, &theta, 8);
        let noise = NoiseSpec::uniform(8, 1.0, 1.0).unwrap();
        let tau = MeasurementSet::noiseless(&theta, &layout, noise).unwrap();
        let cfg = common::solver(common::start(&theta, tau.rho[0], 60.0, &mut rng));
        let res = solve_las_sdt(&tau, &layout, &cfg).unwrap();
        let ok = res
            .objective_history
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
        if ok {
            monotone += 1;
        } else {
            assert!(!res.converged, "objective increased on a converged solve: {res:?}");
        }
    }
    assert!(monotone as f64 >= 0.99 * trials as f64, "{monotone}/{trials}");
}

#[test]
fn weak_aiding_reduces_to_the_unaided_solver() {
    let mut rng = common::rng(41);
    let layout = common::square();
    let noise = NoiseSpec::uniform(8, 50.0, 10.0).unwrap();
    for _ in 0..20 {
        let truth = ParameterVector::new(
            &[rng.random_range(100.0..500.0), rng.random_range(100.0..500.0)],
            rng.random_range(-1e3..1e3),
            &[rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)],
            rng.random_range(-100.0..100.0),
        )
        .unwrap();
        let tau = common::noisy(&truth, &layout, &noise, &mut rng);
        let cfg = common::solver(common::start(&truth, tau.rho[0], 60.0, &mut rng));
        let crlb = fim_sdt(&truth, &layout, &noise).unwrap().crlb;
        let base = solve_las_sdt(&tau, &layout, &cfg).unwrap().theta_hat.to_flat();
        let wrong_v = [truth.v[0] + 20.0, truth.v[1] - 20.0];
        let av = AidingVelocity::new(&wrong_v, DMatrix::identity(2, 2) * 1e12).unwrap();
        let ak = AidingDrift::new(truth.k + 50.0, 1e6).unwrap();
        let with_v = solve_las_sdt_v(&tau, &av, &layout, &cfg).unwrap().theta_hat.to_flat();
        let with_k = solve_las_sdt_k(&tau, &ak, &layout, &cfg).unwrap().theta_hat.to_flat();
        for i in 0..base.len() {
            let tol = 1e-3 * crlb[i].sqrt();
            assert!((with_v[i] - base[i]).abs() < tol, "v param {i}");
            assert!((with_k[i] - base[i]).abs() < tol, "k param {i}");
        }
    }
}

#[test]
fn tight_aiding_dominates_its_block() {
    let mut rng = common::rng(51);
    let layout = common::square();
    let noise = NoiseSpec::uniform(8, 50.0, 10.0).unwrap();
    for _ in 0..20 {
        let truth = ParameterVector::new(&[220.0, 380.0], 15.0, &[12.0, -7.0], 3.0).unwrap();
        let tau = common::noisy(&truth, &layout, &noise, &mut rng);
        let cfg = common::solver(common::start(&truth, tau.rho[0], 60.0, &mut rng));
        let av = AidingVelocity::new(truth.v.as_slice(), DMatrix::identity(2, 2) * 1e-6).unwrap();
        let res = solve_las_sdt_v(&tau, &av, &layout, &cfg).unwrap();
        assert!((&res.theta_hat.v - &truth.v).amax() < 1e-3);
        let ak = AidingDrift::new(truth.k, 1e-6).unwrap();
        let res = solve_las_sdt_k(&tau, &ak, &layout, &cfg).unwrap();
        assert!((res.theta_hat.k - truth.k).abs() < 1e-3);
    }
}

#[test]
fn critically_determined_toa_solution_interpolates() {
    let mut rng = common::rng(61);
    let mut checked = 0;
    for trial in 0..40 {
        let n = 2 + trial % 2;
        let theta = common::random_theta(&mut rng, n);
        let m = 2 * n + 2;
        let layout = common::random_layout(&mut rng, &theta, m);
        let noise = NoiseSpec::uniform(m, 1.0, 0.5).unwrap();
        let tau = common::noisy(&theta, &layout, &noise, &mut rng);
        let cfg = common::solver(common::start(&theta, tau.rho[0], 5.0, &mut rng));
        let Ok(res) = solve_lspm_uvd(&tau.rho, &tau.noise.sigma_rho, &layout, &cfg) else {
            continue;
        };
        if !res.converged {
            continue;
        }
        let h = h_eval(&res.theta_hat, &layout).unwrap();
        let residual = (&tau.rho - h.rows(m, m)).amax();
        assert!(residual < 1e-3, "trial {trial}: residual {residual}");
        checked += 1;
    }
    assert!(checked >= 30, "only {checked} solves converged");
}

#[test]
fn monte_carlo_covariance_matches_inverse_fim() {
    let mut rng = common::rng(71);
    let layout = common::square();
    let noise = NoiseSpec::uniform(8, 0.5, 0.1).unwrap();
    let truth = ParameterVector::new(&[240.0, 330.0], 1.2e5, &[20.0, -10.0], 900.0).unwrap();
    let fim = fim_sdt(&truth, &layout, &noise).unwrap();
    let cov = fim.fim.clone().try_inverse().unwrap();
    let trials = 5000;
    let errors: Vec<DVector<f64>> = (0..trials)
        .map(|_| {
            let tau = common::noisy(&truth, &layout, &noise, &mut rng);
            let cfg = common::solver(common::start(&truth, tau.rho[0], 60.0, &mut rng));
            solve_las_sdt(&tau, &layout, &cfg).unwrap().theta_hat.to_flat() - truth.to_flat()
        })
        .collect();
    let dim = truth.len();
    let mean = errors.iter().fold(DVector::zeros(dim), |a, e| a + e) / trials as f64;
    let sample = errors.iter().fold(DMatrix::zeros(dim, dim), |a, e| {
        a + (e - &mean) * (e - &mean).transpose()
    }) / (trials - 1) as f64;
    for i in 0..dim {
        for j in 0..dim {
            let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
            assert!(
                (sample[(i, j)] - cov[(i, j)]).abs() <= 0.15 * scale,
                "({i},{j}): sample {} vs bound {}",
                sample[(i, j)],
                cov[(i, j)]
            );
        }
        assert!(
            mean[i].abs() < 0.1 * cov[(i, i)].sqrt(),
            "param {i} mean error {}",
            mean[i]
        );
    }
}
