//! Post-solve checks: optimality of full execution time and structural
//! properties of the optimal solution.

use super::closed_form::reflection_coefficients;
use super::{solve_dual, solve_reference, SolveOptions, SolveReport, SolveStatus};
use crate::num::Real;
use crate::phys::{local_energy, total_harvest};
use crate::problem::{eu_consumption, Problem};

/// Grid verification that running the CPU for the whole block is optimal.
///
/// The problem is solved with `τ = T`; then for every EU, `τ_k` is swept over
/// `grid_n` points in `(0, T]` with everything except `f_k` kept at the
/// optimum and `f_k` re-optimized for the EU's leftover energy. Returns true
/// iff `τ_k = T` attains the grid maximum for every EU (within `1e-9`
/// relative). Infeasible problems pass vacuously.
pub fn verify_full_execution_time<T: Real>(problem: &Problem<T>, grid_n: usize, opts: &SolveOptions<T>) -> bool {
    assert!(grid_n >= 1, "grid_n must be positive");
    let pinned = problem.clone().with_full_execution_time();
    let mut report = solve_dual(&pinned, opts);
    if report.status == SolveStatus::MaxIterations {
        report = solve_reference(&pinned, opts);
    }
    if report.status == SolveStatus::Infeasible {
        return true;
    }
    let s = &pinned.scenario;
    let block = s.block_length;
    (0..s.num_eus()).all(|k| {
        let eu = &s.eus[k];
        let a = &report.allocation.eus[k];
        let spent_elsewhere = eu_consumption(&report.allocation, s, k)
            - local_energy(a.freq, a.exec_time, eu.capacitance);
        let budget = (total_harvest(&report.allocation, k, s).total - spent_elsewhere).pos();
        let bits = |tau: T| {
            if pinned.pinning.local {
                return T::zero();
            }
            let f = (budget / (eu.capacitance * tau)).cbrt().min(eu.f_max);
            eu.weight * tau * f / s.cycles_per_bit
        };
        let at_block = bits(block);
        let best = (1..=grid_n)
            .map(|j| bits(block * T::from_usize_lossy(j) / T::from_usize_lossy(grid_n)))
            .fold(T::zero(), T::max);
        at_block >= best * (T::one() - T::lit(1e-9))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Structural checks on an optimal report:
///
/// * `energy-tight`: every EU spends all harvested energy (within `1e-10` J);
/// * `power-threshold`: `p_k > 0` iff `h_k > σ² μ_k ln 2 / (w_k + θ_k)`,
///   for EUs with active-transmission time;
/// * `backcom-threshold`: `α_k > 0` iff
///   `h_k > μ_k (c v − d) σ² ln 2 / ((w_k + θ_k) ξ (P_t g_k + v)²)`,
///   for EUs with backscatter time.
///
/// Threshold comparisons within `1e-6` relative of the boundary pass.
pub fn structure_checks<T: Real>(report: &SolveReport<T>, problem: &Problem<T>) -> Vec<NamedCheck> {
    let s = &problem.scenario;
    let d = &report.duals;
    let near = |a: T, b: T| (a - b).abs() <= T::lit(1e-6) * a.abs().max(b.abs());
    let mut energy = Vec::new();
    let mut power = Vec::new();
    let mut backcom = Vec::new();
    for k in 0..s.num_eus() {
        let eu = &s.eus[k];
        let a = &report.allocation.eus[k];
        let weight = eu.weight + d.theta[k];
        let slack = report.energy_slack[k];
        if slack.abs() > T::lit(1e-10) {
            energy.push(format!("eus[{k}] energy slack {slack:e} J"));
        }
        if !problem.pinning.active && a.t_a > T::zero() && weight > T::zero() {
            let threshold = s.noise_density * d.mu[k] * T::LN_2() / weight;
            let on = a.power() > T::lit(1e-12) * s.pb_power;
            if on != (eu.h > threshold) && !near(eu.h, threshold) {
                power.push(format!(
                    "eus[{k}] p = {:e} W but h = {:e}, threshold {threshold:e}",
                    a.power(),
                    eu.h
                ));
            }
        }
        if !problem.pinning.share && a.t_b > T::zero() && weight > T::zero() {
            let g = s.incident_power(k);
            let threshold = d.mu[k] * eu.eh.gain_numerator() * s.noise_density * T::LN_2()
                / (weight * s.backcom_gap * (g + eu.eh.v) * (g + eu.eh.v));
            let on = a.reflection() > T::lit(1e-9);
            let q = reflection_coefficients(d, k, s);
            let consistent = (eu.h > threshold) == (q.d > T::zero());
            if (on != (eu.h > threshold) && !near(eu.h, threshold)) || !consistent {
                backcom.push(format!(
                    "eus[{k}] α = {:e} but h = {:e}, threshold {threshold:e}",
                    a.reflection(),
                    eu.h
                ));
            }
        }
    }
    let check = |name, failures: Vec<String>| NamedCheck {
        name,
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "ok".to_string()
        } else {
            failures.join("; ")
        },
    };
    vec![
        check("energy-tight", energy),
        check("power-threshold", power),
        check("backcom-threshold", backcom),
    ]
}
