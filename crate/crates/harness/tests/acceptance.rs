//! Acceptance criteria, one line each. Runs as a plain binary so the lines
//! show without `--nocapture`; exits non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bmec_core::problem::restrict;
use bmec_core::scenario::{default_scenario, realize_channels};
use bmec_core::solver::{
    kkt_residual, lagrangian, lagrangian_gradient, optimal_frequency, optimal_power,
    optimal_reflection, structure_checks, NamedCheck, solve_dual, solve_reference, verify_full_execution_time,
};
use bmec_core::{Allocation, DualState, Problem, SchemeTag, SolveOptions, SolveStatus};
use bmec_harness::verify::{eh_properties, perspective_concavity, random_scenario, random_scenario_k};
use bmec_harness::{load_config, read_csv, run_draws, solve, write_csv, Config, DrawRecord, SweepOptions, SweepSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_REL_TOL: f64 = 1e-4;
const ORACLE_BUDGET: Duration = Duration::from_secs(300);
const MIN_DRAWS: usize = 100;
const STRICT_GAIN: f64 = 1e-3;
const MONOTONE_REL_TOL: f64 = 1e-6;
const KKT_TOL: f64 = 1e-6;
const ENERGY_TIGHT_J: f64 = 1e-10;
const PINNING_BUDGET: Duration = Duration::from_secs(60);
const CLOSED_FORM_TOL: f64 = 1e-4;

type Outcome = Result<String, String>;

fn opts() -> SolveOptions<f64> {
    SolveOptions::default()
}

fn sweep_config() -> Config {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/l_min_sweep.cfg");
    load_config(&path).expect("shipped config loads")
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let base = default_scenario();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let s = random_scenario(&base, seed, &opts());
        let p = restrict(&s, SchemeTag::Proposed);
        let d = solve_dual(&p, &opts());
        let r = solve_reference(&p, &opts());
        if (d.status == SolveStatus::Infeasible) != (r.status == SolveStatus::Infeasible) {
            return Err(format!("seed {seed}: dual {:?}, reference {:?}", d.status, r.status));
        }
        let rel = (d.objective - r.objective).abs() / r.objective.max(1.0);
        if rel > ORACLE_REL_TOL {
            return Err(format!("seed {seed}: relative gap {rel:e}"));
        }
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    if elapsed > ORACLE_BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("50 scenarios, worst relative gap {worst:.1e}, {elapsed:.1?}"))
}

/// Fading draws of the shipped sweep, extended in blocks of [`BLOCK`] until
/// every paired average below has at least [`MIN_DRAWS`] draws.
struct LMinSweep {
    values: Vec<f64>,
    draws: usize,
    blocks: Vec<Vec<DrawRecord>>,
}

const BLOCK: usize = 100;

impl LMinSweep {
    fn run() -> Self {
        let cfg = sweep_config();
        let mut fig = LMinSweep {
            values: cfg.sweep.values.clone(),
            draws: 0,
            blocks: Vec::new(),
        };
        while fig.draws < 20 * BLOCK && (fig.draws == 0 || fig.smallest_set() < MIN_DRAWS) {
            let spec = SweepSpec {
                seed: cfg.sweep.seed.wrapping_add(fig.draws as u64),
                fading_draws: BLOCK,
                schemes: SchemeTag::ALL.to_vec(),
                output_path: None,
                ..cfg.sweep.clone()
            };
            let block = run_draws(&spec, &cfg.scenario, &cfg.geometry, &SweepOptions::default())
                .expect("valid geometry");
            fig.blocks.push(block);
            fig.draws += BLOCK;
        }
        fig
    }

    fn get(&self, v: usize, d: usize, scheme: SchemeTag) -> &DrawRecord {
        let s = SchemeTag::ALL.iter().position(|&t| t == scheme).unwrap();
        let r = &self.blocks[d / BLOCK][(v * BLOCK + d % BLOCK) * SchemeTag::ALL.len() + s];
        assert!(r.value_index == v && r.draw == d % BLOCK && r.scheme == scheme);
        r
    }

    /// Draws where every scheme is feasible at sweep point `v`.
    fn common(&self, v: usize) -> Vec<usize> {
        (0..self.draws)
            .filter(|&d| SchemeTag::ALL.iter().all(|&s| self.get(v, d, s).feasible()))
            .collect()
    }

    /// Draws where `scheme` is feasible at every sweep point.
    fn always(&self, scheme: SchemeTag) -> Vec<usize> {
        (0..self.draws)
            .filter(|&d| (0..self.values.len()).all(|v| self.get(v, d, scheme).feasible()))
            .collect()
    }

    fn smallest_set(&self) -> usize {
        let a = (0..self.values.len()).map(|v| self.common(v).len());
        let b = SchemeTag::ALL.iter().map(|&s| self.always(s).len());
        a.chain(b).min().unwrap_or(0)
    }

    fn mean(&self, v: usize, scheme: SchemeTag, draws: &[usize]) -> f64 {
        draws.iter().map(|&d| self.get(v, d, scheme).objective).sum::<f64>() / draws.len() as f64
    }
}

fn scheme_ordering(fig: &LMinSweep) -> Outcome {
    let mut smallest_gain = f64::INFINITY;
    for v in 0..fig.values.len() {
        let draws = fig.common(v);
        if draws.len() < MIN_DRAWS {
            return Err(format!("L_min {}: only {} common feasible draws", fig.values[v], draws.len()));
        }
        let proposed = fig.mean(v, SchemeTag::Proposed, &draws);
        let mut best_gain = f64::NEG_INFINITY;
        for &s in &SchemeTag::ALL[1..] {
            let other = fig.mean(v, s, &draws);
            if proposed < other * (1.0 - MONOTONE_REL_TOL) {
                return Err(format!("L_min {}: {s} {other:e} above proposed {proposed:e}", fig.values[v]));
            }
            best_gain = best_gain.max(proposed / other - 1.0);
        }
        if best_gain < STRICT_GAIN {
            return Err(format!("L_min {}: best gain {best_gain:e}", fig.values[v]));
        }
        smallest_gain = smallest_gain.min(best_gain);
    }
    Ok(format!(
        "{} draws, paired over common feasible draws, smallest best-gain {:.1}%",
        fig.draws,
        100.0 * smallest_gain
    ))
}

fn monotone_in_l_min(fig: &LMinSweep) -> Outcome {
    let mut fewest = usize::MAX;
    for &s in &SchemeTag::ALL {
        let draws = fig.always(s);
        if draws.len() < MIN_DRAWS {
            return Err(format!("{s}: only {} draws feasible throughout", draws.len()));
        }
        fewest = fewest.min(draws.len());
        let means: Vec<f64> = (0..fig.values.len()).map(|v| fig.mean(v, s, &draws)).collect();
        for w in means.windows(2) {
            if w[1] > w[0] * (1.0 + MONOTONE_REL_TOL) {
                return Err(format!("{s}: mean rises from {:e} to {:e}", w[0], w[1]));
            }
        }
    }
    Ok(format!("every scheme over >= {fewest} draws feasible at every L_min"))
}

fn kkt_certification() -> Outcome {
    let cfg = sweep_config();
    let mut optimal = 0;
    let mut uncertified = 0;
    let mut worst_kkt = 0.0f64;
    let mut worst_slack = 0.0f64;
    for draw in 0..100u64 {
        let gains = realize_channels(&cfg.geometry, 10_000 + draw).expect("valid geometry");
        let s = cfg.scenario.with_gains(&gains).expect("matching gains");
        for l_min in [5e3, 2e4] {
            let s = s.with_uniform_l_min(l_min);
            for scheme in SchemeTag::ALL {
                let p = restrict(&s, scheme);
                let report = solve(&p, &opts());
                match report.status {
                    SolveStatus::Optimal => optimal += 1,
                    SolveStatus::MaxIterations => {
                        uncertified += 1;
                        continue;
                    }
                    SolveStatus::Infeasible => continue,
                }
                let kkt = kkt_residual(&report.allocation, &report.duals, &p);
                if kkt > KKT_TOL {
                    return Err(format!("draw {draw} {scheme}: kkt {kkt:e}"));
                }
                worst_kkt = worst_kkt.max(kkt);
                if scheme == SchemeTag::Proposed {
                    let tight = structure_checks(&report, &p)
                        .into_iter()
                        .find(|c| c.name == "energy-tight")
                        .expect("energy check present");
                    if !tight.passed {
                        return Err(format!("draw {draw}: {}", tight.detail));
                    }
                    for slack in &report.energy_slack {
                        worst_slack = worst_slack.max(slack.abs());
                    }
                }
            }
        }
    }
    if worst_slack > ENERGY_TIGHT_J {
        return Err(format!("energy slack {worst_slack:e} J"));
    }
    Ok(format!(
        "{optimal} optimal solves, worst kkt {worst_kkt:.1e}, worst slack {worst_slack:.1e} J, {uncertified} uncertified"
    ))
}

fn full_execution_time() -> Outcome {
    let start = Instant::now();
    let base = default_scenario();
    for i in 0..20u64 {
        let k = 1 + (i as usize % 2);
        let s = random_scenario_k(&base, k, 500 + i, &opts());
        if !verify_full_execution_time(&Problem::original(s), 50, &opts()) {
            return Err(format!("instance {i} (K = {k})"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > PINNING_BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("20 instances, 50-point grid, {elapsed:.1?}"))
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by repeated grid zooming.
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

fn closed_forms() -> Outcome {
    let p = restrict(&default_scenario(), SchemeTag::Proposed);
    let n = p.scenario.num_eus();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 4];
    for point in 0..100 {
        let mut d = DualState::zeros(n);
        d.theta = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        d.mu = (0..n).map(|_| 10f64.powf(rng.random_range(6.0..10.0))).collect();
        for k in 0..n {
            let one = |edit: &dyn Fn(&mut bmec_core::EuAllocation)| {
                let mut a = Allocation::zeros(n);
                edit(&mut a.eus[k]);
                lagrangian(&a, &d, &p)
            };
            let alpha = grid_argmax(|x| one(&|e| { e.t_b = 1.0; e.x = x; }), 0.0, 1.0);
            let freq = grid_argmax(|f| one(&|e| { e.freq = f; e.exec_time = 1.0; }), 0.0, 1e11);
            let power = grid_argmax(|q| one(&|e| { e.t_a = 1.0; e.energy = q; }), 0.0, 10.0);
            let ca = optimal_reflection(&d, k, &p.scenario).alpha;
            let cf = optimal_frequency(&d, k, &p);
            let cp = optimal_power(&d, k, &p.scenario).map_err(|e| e.to_string())?;
            let errs = [
                (ca - alpha).abs(),
                (cf - freq).abs() / cf.max(freq),
                (cp - power).abs() / cp.max(power).max(1e-12),
            ];
            for (j, e) in errs.iter().enumerate() {
                if e.is_nan() || *e > CLOSED_FORM_TOL {
                    return Err(format!("dual point {point}, EU {k}: variable {j} error {e:e}"));
                }
                worst[j] = worst[j].max(*e);
            }
        }
        // Derivatives at an interior allocation.
        d.vartheta0 = rng.random_range(0.0..1e6);
        d.phi = (0..n).map(|_| rng.random_range(0.0..1e-3)).collect();
        d.vartheta = (0..n).map(|_| rng.random_range(0.0..1e5)).collect();
        let mut a = Allocation::zeros(n);
        for e in &mut a.eus {
            e.t_b = rng.random_range(0.05..0.2);
            e.x = rng.random_range(0.05..0.95) * e.t_b;
            e.t_a = rng.random_range(0.05..0.2);
            e.energy = rng.random_range(1e-4..1e-2) * e.t_a;
            e.freq = rng.random_range(1e6..1e8);
            e.exec_time = 1.0;
        }
        let grad = lagrangian_gradient(&a, &d, &p);
        let base = lagrangian(&a, &d, &p).abs();
        type Field = fn(&mut bmec_core::EuAllocation) -> &mut f64;
        let fields: [Field; 5] = [|e| &mut e.t_b, |e| &mut e.x, |e| &mut e.t_a, |e| &mut e.energy, |e| &mut e.freq];
        for k in 0..n {
            let g = grad[k];
            let analytic = [g.d_t_b, g.d_x, g.d_t_a, g.d_energy, g.d_freq];
            for (j, field) in fields.iter().enumerate() {
                let value = *field(&mut a.clone().eus[k]);
                let h = 1e-6 * value;
                let at = |delta: f64| {
                    let mut b = a.clone();
                    *field(&mut b.eus[k]) = value + delta;
                    lagrangian(&b, &d, &p)
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                // Cancellation noise of central differences on a large Lagrangian.
                let noise = 1e-12 * base / h;
                let err = (fd - analytic[j]).abs() / (analytic[j].abs() + noise / CLOSED_FORM_TOL);
                if err > CLOSED_FORM_TOL {
                    return Err(format!("dual point {point}, EU {k}: derivative {j} error {err:e}"));
                }
                worst[3] = worst[3].max(err);
            }
        }
    }
    Ok(format!(
        "100 dual points; worst alpha {:.1e}, f {:.1e}, p {:.1e}, derivative {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn named(check: NamedCheck) -> Outcome {
    if check.passed {
        Ok(check.detail)
    } else {
        Err(check.detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("small.json");
    std::fs::write(
        &cfg,
        r#"{"sweep": {"values": [5e3, 2e4], "fading_draws": 4, "seed": 42}}"#,
    )
    .map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_bmec"))
            .args(["sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("bmec sweep exited with {status}"));
        }
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.csv")?, run("b.csv")?);
    if a != b {
        return Err("two runs differ".into());
    }
    let rows = read_csv(&dir.path().join("a.csv")).map_err(|e| e.to_string())?;
    let mut rewritten = Vec::new();
    write_csv(&rows, &mut rewritten).map_err(|e| e.to_string())?;
    if rewritten != a {
        return Err("re-emitting the parsed rows changes the file".into());
    }
    Ok(format!("{} rows byte-identical across runs and after a parse round trip", rows.len()))
}

fn main() -> ExitCode {
    let fig = LMinSweep::run();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = default_scenario();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 oracle equivalence", oracle_equivalence()),
        ("2 scheme ordering", scheme_ordering(&fig)),
        ("3 monotone in L_min", monotone_in_l_min(&fig)),
        ("4 kkt certification", kkt_certification()),
        ("5 full execution time", full_execution_time()),
        ("6 closed forms", closed_forms()),
        ("7 eh properties", named(eh_properties(&mut rng, 1000))),
        ("8 perspective concavity", named(perspective_concavity(&base, &mut rng, 1000))),
        ("9 determinism and csv", determinism()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
