#![allow(dead_code)]

use abvr_core::simulation::{assign, generate_population, DgpConfig};
use abvr_core::ExperimentData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random linear dataset with arm-specific intercepts, slopes and noise.
pub fn random_linear(n: usize, seed: u64) -> ExperimentData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_t: f64 = rng.random_range(0.2..0.8);
    let n_t = ((p_t * n as f64).round() as usize).clamp(2, n - 2);
    let (a_t, a_c) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let (b_t, b_c) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let x_loc = rng.random_range(-10.0..10.0);
    let x_scale = rng.random_range(0.1..5.0);
    let noise = rng.random_range(0.01..3.0);

    let mut treated = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, n_t) {
        treated[i] = true;
    }
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for &t in &treated {
        let xi = x_loc + x_scale * (rng.random::<f64>() * 2.0 - 1.0) * 1.7;
        let e = noise * (rng.random::<f64>() - 0.5) * 3.4;
        y.push(if t { a_t + b_t * xi } else { a_c + b_c * xi } + e);
        x.push(xi);
    }
    ExperimentData::from_assignment(y, x, treated).unwrap()
}

/// One sample from the two-slope normal model with a fixed-count assignment.
pub fn dgp_sample(n: usize, p_t: f64, hte: f64, seed: u64) -> ExperimentData {
    let cfg = DgpConfig {
        n,
        p_t,
        hte,
        ..DgpConfig::default()
    };
    let pop = generate_population(&cfg, seed).unwrap();
    assign(&pop, p_t, seed ^ 0x5eed).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
