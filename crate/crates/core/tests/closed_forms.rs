//! Closed-form maximizers against brute-force search on the Lagrangian, and
//! hand-coded derivatives against finite differences.

mod common;

use bmec_core::problem::restrict;
use bmec_core::scenario::default_scenario;
use bmec_core::solver::{
    lagrangian, lagrangian_gradient, optimal_frequency, optimal_power, optimal_reflection,
    time_allocation_lp, TimePrice,
};
use bmec_core::{Allocation, DualState, Problem, SchemeTag};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Maximizer of a unimodal `f` on `[lo, hi]`: a 401-point grid, then zooming
/// into the two cells around the best point.
fn grid_argmax(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const N: usize = 400;
    let mut best = lo;
    for _ in 0..12 {
        let h = (hi - lo) / N as f64;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..=N {
            let x = lo + h * i as f64;
            let v = f(x);
            if v > best_val {
                best_val = v;
                best = x;
            }
        }
        (lo, hi) = ((best - h).max(lo), (best + h).min(hi));
    }
    best
}

fn duals_strategy(k: usize) -> impl Strategy<Value = DualState> {
    (
        prop::collection::vec(0.0f64..2.0, k),
        prop::collection::vec(6.0f64..10.0, k),
    )
        .prop_map(move |(theta, log_mu)| {
            let mut d = DualState::zeros(k);
            d.theta = theta;
            d.mu = log_mu.iter().map(|e| 10f64.powf(*e)).collect();
            d
        })
}

fn single_eu(problem: &Problem, k: usize, edit: impl Fn(&mut bmec_core::EuAllocation)) -> Allocation {
    let mut a = Allocation::zeros(problem.scenario.num_eus());
    edit(&mut a.eus[k]);
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn reflection_matches_grid(duals in duals_strategy(4), k in 0usize..4) {
        let p = restrict(&default_scenario(), SchemeTag::Proposed);
        let lag = |alpha: f64| {
            lagrangian(&single_eu(&p, k, |e| { e.t_b = 1.0; e.x = alpha; }), &duals, &p)
        };
        let grid = grid_argmax(lag, 0.0, 1.0);
        let closed = optimal_reflection(&duals, k, &p.scenario).alpha;
        prop_assert!((closed - grid).abs() <= 1e-4, "closed {closed} grid {grid}");
    }

    #[test]
    fn frequency_matches_grid(duals in duals_strategy(4), k in 0usize..4) {
        let p = restrict(&default_scenario(), SchemeTag::Proposed);
        let lag = |f: f64| {
            lagrangian(&single_eu(&p, k, |e| { e.freq = f; e.exec_time = 1.0; }), &duals, &p)
        };
        let grid = grid_argmax(lag, 0.0, 1e11);
        let closed = optimal_frequency(&duals, k, &p);
        prop_assert!((closed - grid).abs() <= 1e-4 * closed.max(grid), "closed {closed} grid {grid}");
    }

    #[test]
    fn power_matches_grid(duals in duals_strategy(4), k in 0usize..4) {
        let p = restrict(&default_scenario(), SchemeTag::Proposed);
        let lag = |power: f64| {
            lagrangian(&single_eu(&p, k, |e| { e.t_a = 1.0; e.energy = power; }), &duals, &p)
        };
        let grid = grid_argmax(lag, 0.0, 10.0);
        let closed = optimal_power(&duals, k, &p.scenario).unwrap();
        prop_assert!(
            (closed - grid).abs() <= 1e-4 * closed.max(grid) + 1e-15,
            "closed {closed} grid {grid}"
        );
    }

    #[test]
    fn gradient_matches_central_differences(
        seed in 0u64..1000,
        duals in duals_strategy(3),
        vartheta0 in 0.0f64..1e6,
    ) {
        let s = common::random_scenario_k(seed, 3);
        let p = restrict(&s, SchemeTag::Proposed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = duals;
        d.vartheta0 = vartheta0;
        d.phi = (0..3).map(|_| rng.random_range(0.0..1e-3)).collect();
        d.vartheta = (0..3).map(|_| rng.random_range(0.0..1e5)).collect();
        let mut a = Allocation::zeros(3);
        for e in &mut a.eus {
            e.t_b = rng.random_range(0.05..0.3);
            e.x = rng.random_range(0.05..0.95) * e.t_b;
            e.t_a = rng.random_range(0.05..0.3);
            e.energy = rng.random_range(1e-4..1e-2) * e.t_a;
            e.freq = rng.random_range(1e6..1e8);
            e.exec_time = 1.0;
        }
        let grad = lagrangian_gradient(&a, &d, &p);
        type Field = fn(&mut bmec_core::EuAllocation) -> &mut f64;
        let fields: [(&str, Field); 5] = [
            ("t_b", |e| &mut e.t_b),
            ("x", |e| &mut e.x),
            ("t_a", |e| &mut e.t_a),
            ("energy", |e| &mut e.energy),
            ("freq", |e| &mut e.freq),
        ];
        for k in 0..3 {
            let g = grad[k];
            let analytic = [g.d_t_b, g.d_x, g.d_t_a, g.d_energy, g.d_freq];
            for (j, (name, field)) in fields.iter().enumerate() {
                let value = *field(&mut a.clone().eus[k]);
                let h = 1e-6 * value;
                let at = |delta: f64| {
                    let mut b = a.clone();
                    *field(&mut b.eus[k]) = value + delta;
                    lagrangian(&b, &d, &p)
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                // Central differences lose digits to cancellation in large Lagrangians.
                let noise = 1e-12 * lagrangian(&a, &d, &p).abs() / h;
                prop_assert!(
                    (fd - analytic[j]).abs() <= 1e-4 * analytic[j].abs() + noise,
                    "eu {k} {name}: analytic {} fd {fd}", analytic[j]
                );
            }
        }
    }
}

#[test]
fn lp_beats_random_time_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.random_range(1..=4);
        let prices: Vec<TimePrice<f64>> = (0..n)
            .map(|_| TimePrice {
                backcom: rng.random_range(-1.0..1.0),
                active: rng.random_bool(0.8).then(|| rng.random_range(-1.0..1.0)),
            })
            .collect();
        let value = |t_b: &[f64], t_a: &[f64]| -> f64 {
            prices
                .iter()
                .enumerate()
                .map(|(k, p)| p.backcom * t_b[k] + p.active.unwrap_or(0.0) * t_a[k])
                .sum()
        };
        let lp = time_allocation_lp(&prices, 1.0);
        let best = value(&lp.t_b, &lp.t_a);
        let support = lp.t_b.iter().chain(&lp.t_a).filter(|&&t| t > 0.0).count();
        assert!(support <= 1, "not a vertex: {lp:?}");
        for _ in 0..10_000 {
            let mut w: Vec<f64> = (0..2 * n + 1).map(|_| rng.random::<f64>()).collect();
            for k in 0..n {
                if prices[k].active.is_none() {
                    w[n + k] = 0.0;
                }
            }
            let total: f64 = w.iter().sum();
            let t: Vec<f64> = w.iter().map(|x| x / total).collect();
            assert!(best >= value(&t[..n], &t[n..2 * n]) - 1e-12);
        }
    }
}
