#![allow(dead_code)]

use bmec_core::scenario::{default_eu, default_scenario, realize_channels, ChannelGeometry, Fading};
use bmec_core::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `K` EUs at distances uniform in [5, 40] m with Rayleigh fading.
pub fn random_scenario_k(seed: u64, k: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let geometry: Vec<ChannelGeometry<f64>> = (0..k)
        .map(|_| ChannelGeometry {
            d0: rng.random_range(5.0..40.0),
            d1: rng.random_range(5.0..40.0),
            path_loss_exponent: 3.0,
            fading: Fading::Rayleigh,
        })
        .collect();
    let mut s = default_scenario::<f64>();
    s.eus.resize(k, default_eu());
    let gains = realize_channels(&geometry, seed).unwrap();
    s.with_gains(&gains)
        .unwrap()
        .with_uniform_l_min(rng.random_range(0.0..20e3))
}

/// Like [`random_scenario_k`] with `K` uniform in 1..=4.
pub fn random_scenario(seed: u64) -> Scenario {
    let k = ChaCha8Rng::seed_from_u64(seed).random_range(1..=4);
    random_scenario_k(seed, k)
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
