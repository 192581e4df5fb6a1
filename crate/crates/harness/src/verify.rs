//! The `verify` suite: sampled convexity properties, optimality of full
//! execution time, KKT certification and agreement of the two solvers.

use bmec_core::phys::{at_bits, backcom_bits, backcom_harvest_energy, harvested_power};
use bmec_core::problem::restrict;
use bmec_core::scenario::{default_eu, realize_channels, ChannelGeometry, Fading};
use bmec_core::solver::{structure_checks, solve_dual, solve_reference, verify_full_execution_time, NamedCheck};
use bmec_core::{EhParams, Problem, Scenario, SchemeTag, SolveOptions, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::sweep::solve;

/// Relative objective agreement required between the two solvers.
pub const ORACLE_TOL: f64 = 1e-4;

/// Random instance: `K` in 1..=4, distances uniform in [5, 40] m, Rayleigh
/// fading and a uniform `L_min`, halved until the proposed scheme is feasible.
pub fn random_scenario(base: &Scenario, seed: u64, opts: &SolveOptions<f64>) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=4usize);
    random_scenario_with(base, k, &mut rng, seed, opts)
}

/// Like [`random_scenario`] with a fixed number of EUs.
pub fn random_scenario_k(base: &Scenario, k: usize, seed: u64, opts: &SolveOptions<f64>) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_scenario_with(base, k, &mut rng, seed, opts)
}

fn random_scenario_with(
    base: &Scenario,
    k: usize,
    rng: &mut ChaCha8Rng,
    seed: u64,
    opts: &SolveOptions<f64>,
) -> Scenario {
    let geometry: Vec<ChannelGeometry<f64>> = (0..k)
        .map(|_| ChannelGeometry {
            d0: rng.random_range(5.0..40.0),
            d1: rng.random_range(5.0..40.0),
            path_loss_exponent: 3.0,
            fading: Fading::Rayleigh,
        })
        .collect();
    let mut template = base.clone();
    let eu = template.eus.first().cloned().unwrap_or_else(default_eu);
    template.eus.resize(k, eu);
    let gains = realize_channels(&geometry, seed).expect("distances are positive");
    let mut s = template.with_gains(&gains).expect("one gain pair per EU");
    let mut l_min = rng.random_range(0.0..20e3);
    for _ in 0..20 {
        s = s.with_uniform_l_min(l_min);
        if solve(&restrict(&s, SchemeTag::Proposed), opts).status != SolveStatus::Infeasible {
            return s;
        }
        l_min *= 0.5;
    }
    s.with_uniform_l_min(0.0)
}

fn check(name: &'static str, failures: Vec<String>, total: usize) -> NamedCheck {
    NamedCheck {
        name,
        passed: failures.is_empty(),
        detail: match failures.first() {
            None => format!("{total} cases"),
            Some(first) => format!("{}/{total} failed, first: {first}", failures.len()),
        },
    }
}

/// Bounds, monotonicity and concavity along the reflection share of the
/// harvest model on random parameters.
pub fn eh_properties(rng: &mut ChaCha8Rng, samples: usize) -> NamedCheck {
    let mut failures = Vec::new();
    for i in 0..samples {
        let c = rng.random_range(0.1..10.0);
        let v = rng.random_range(0.01..5.0);
        let eh = EhParams {
            c,
            d: rng.random_range(0.0..1.0) * c * v,
            v,
        };
        let (a, b): (f64, f64) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let (f_lo, f_hi) = (harvested_power(lo, &eh), harvested_power(hi, &eh));
        let cap = eh.c - eh.d / eh.v;
        let incident = rng.random_range(1e-6..10.0);
        let (x1, x2) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let along = |x: f64| harvested_power((1.0 - x) * incident, &eh);
        let concave = along(0.5 * (x1 + x2)) >= 0.5 * (along(x1) + along(x2)) - 1e-10;
        if !(f_lo >= 0.0 && f_hi <= cap * (1.0 + 1e-12) && f_hi >= f_lo && concave) {
            failures.push(format!("sample {i}: {eh:?} at {lo}, {hi}"));
        }
    }
    check("eh-properties", failures, samples)
}

/// Midpoint concavity of the perspective-form rate and harvest functions, with
/// near-zero times in the mix.
pub fn perspective_concavity(base: &Scenario, rng: &mut ChaCha8Rng, samples: usize) -> NamedCheck {
    let mut failures = Vec::new();
    for i in 0..samples {
        let k = rng.random_range(0..base.num_eus());
        let time = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.2) {
                rng.random_range(0.0..1e-9)
            } else {
                rng.random_range(0.0..1.0)
            }
        };
        let (t1, t2) = (time(rng), time(rng));
        let (x1, x2) = (rng.random_range(0.0..=1.0) * t1, rng.random_range(0.0..=1.0) * t2);
        let (e1, e2) = (rng.random_range(0.0..0.1) * t1, rng.random_range(0.0..0.1) * t2);
        let (tm, xm, em) = (0.5 * (t1 + t2), 0.5 * (x1 + x2), 0.5 * (e1 + e2));
        let eu = &base.eus[k];
        let bc = |x, t| backcom_bits(x, t, base, k);
        let at = |e, t| at_bits(e, t, base, k);
        let eh = |x, t| backcom_harvest_energy(x, t, base.pb_power, eu.g, &eu.eh);
        let scale = |a: f64, b: f64| 1e-10 * (a.abs() + b.abs()).max(1.0);
        let ok = bc(xm, tm) >= 0.5 * (bc(x1, t1) + bc(x2, t2)) - scale(bc(x1, t1), bc(x2, t2))
            && at(em, tm) >= 0.5 * (at(e1, t1) + at(e2, t2)) - scale(at(e1, t1), at(e2, t2))
            && eh(xm, tm) >= 0.5 * (eh(x1, t1) + eh(x2, t2)) - 1e-10;
        if !ok {
            failures.push(format!("sample {i}: EU {k}, t = ({t1}, {t2})"));
        }
    }
    check("perspective-concavity", failures, samples)
}

fn full_execution_time(base: &Scenario, seed: u64, instances: usize, opts: &SolveOptions<f64>) -> NamedCheck {
    let failures = (0..instances as u64)
        .filter_map(|i| {
            let s = random_scenario_k(base, 1 + (i as usize % 2), seed.wrapping_add(i), opts);
            (!verify_full_execution_time(&Problem::original(s), 50, opts)).then(|| format!("instance {i}"))
        })
        .collect();
    check("full-execution-time", failures, instances)
}

fn kkt(config: &Config, seed: u64, draws: usize, opts: &SolveOptions<f64>) -> NamedCheck {
    let mut failures = Vec::new();
    let mut total = 0;
    for d in 0..draws as u64 {
        let Ok(gains) = realize_channels(&config.geometry, seed.wrapping_add(d)) else {
            failures.push(format!("draw {d}: invalid geometry"));
            continue;
        };
        let s = config.scenario.with_gains(&gains).expect("one gain pair per EU");
        for scheme in SchemeTag::ALL {
            let problem = restrict(&s, scheme);
            let report = solve(&problem, opts);
            total += 1;
            if report.status != SolveStatus::Optimal {
                continue;
            }
            if report.kkt_residual > opts.tol {
                failures.push(format!("draw {d} {scheme}: kkt {:e}", report.kkt_residual));
            }
            if scheme == SchemeTag::Proposed {
                for c in structure_checks(&report, &problem) {
                    if c.name == "energy-tight" && !c.passed {
                        failures.push(format!("draw {d}: {}", c.detail));
                    }
                }
            }
        }
    }
    check("kkt", failures, total)
}

fn oracle(base: &Scenario, seed: u64, instances: usize, opts: &SolveOptions<f64>) -> NamedCheck {
    let failures = (0..instances as u64)
        .filter_map(|i| {
            let s = random_scenario(base, seed.wrapping_add(i), opts);
            let problem = restrict(&s, SchemeTag::Proposed);
            let dual = solve_dual(&problem, opts);
            let reference = solve_reference(&problem, opts);
            let rel = (dual.objective - reference.objective).abs() / reference.objective.max(1.0);
            let statuses_agree = (dual.status == SolveStatus::Infeasible)
                == (reference.status == SolveStatus::Infeasible);
            (!(statuses_agree && rel <= ORACLE_TOL)).then(|| {
                format!(
                    "instance {i}: dual {:?} {:e}, reference {:?} {:e}",
                    dual.status, dual.objective, reference.status, reference.objective
                )
            })
        })
        .collect();
    check("oracle-equivalence", failures, instances)
}

/// Runs the whole suite with the config's scenario as template.
pub fn run_verify(config: &Config, seed: u64, opts: &SolveOptions<f64>) -> Vec<NamedCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        eh_properties(&mut rng, 1000),
        perspective_concavity(&config.scenario, &mut rng, 1000),
        full_execution_time(&config.scenario, seed, 20, opts),
        kkt(config, seed, 10, opts),
        oracle(&config.scenario, seed, 50, opts),
    ]
}
