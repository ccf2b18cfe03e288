#![allow(dead_code)]

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seqloc::estimator::SolverConfig;
use seqloc::model::{AnchorLayout, MeasurementSet, NoiseSpec, ParameterVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random receiver state in a 1 km box, |v| < 50 m/s.
pub fn random_theta(rng: &mut impl Rng, n: usize) -> ParameterVector {
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(300.0..700.0)).collect();
    let v: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-50.0..50.0) / (n as f64).sqrt())
        .collect();
    let b = rng.random_range(-3e8..3e8);
    let k = rng.random_range(-6000.0..6000.0);
    ParameterVector::new(&p, b, &v, k).unwrap()
}

/// `m` anchors spread over the 1 km box, at least 50 m from `theta`.
pub fn random_layout(rng: &mut impl Rng, theta: &ParameterVector, m: usize) -> AnchorLayout {
    let n = theta.dim();
    let mut anchors: Vec<Vec<f64>> = Vec::new();
    while anchors.len() < m {
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
        let far = (0..n).map(|i| (q[i] - theta.p[i]).powi(2)).sum::<f64>().sqrt() > 50.0;
        let apart = anchors
            .iter()
            .all(|a| a.iter().zip(&q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() > 50.0);
        if far && apart {
            anchors.push(q);
        }
    }
    AnchorLayout::new(anchors, 0.05).unwrap()
}

pub fn noisy(theta: &ParameterVector, layout: &AnchorLayout, noise: &NoiseSpec, rng: &mut impl Rng) -> MeasurementSet {
    let exact = MeasurementSet::noiseless(theta, layout, noise.clone()).unwrap();
    let d = exact
        .d
        .iter()
        .zip(noise.sigma_d.iter())
        .map(|(x, s)| x + s * normal(rng))
        .collect();
    let rho = exact
        .rho
        .iter()
        .zip(noise.sigma_rho.iter())
        .map(|(x, s)| x + s * normal(rng))
        .collect();
    MeasurementSet::new(d, rho, noise.clone()).unwrap()
}

/// Start point with the position displaced by `radius` in a random
/// direction and clock offset taken from the first pseudorange.
pub fn start(theta: &ParameterVector, rho0: f64, radius: f64, rng: &mut impl Rng) -> ParameterVector {
    let n = theta.dim();
    let dir = DVector::from_fn(n, |_, _| normal(rng)).normalize();
    let p = &theta.p + dir * radius;
    ParameterVector::new(p.as_slice(), rho0, &vec![0.0; n], 0.0).unwrap()
}

pub fn solver(theta0: ParameterVector) -> SolverConfig {
    SolverConfig::new(10, 1e-2, theta0).unwrap()
}

/// The eight-anchor square of side 600 m with the receiver inside.
pub fn square() -> AnchorLayout {
    let s = 600.0;
    let h = 300.0;
    AnchorLayout::new(
        vec![
            vec![0.0, 0.0],
            vec![h, 0.0],
            vec![s, 0.0],
            vec![s, h],
            vec![s, s],
            vec![h, s],
            vec![0.0, s],
            vec![0.0, h],
        ],
        0.05,
    )
    .unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
