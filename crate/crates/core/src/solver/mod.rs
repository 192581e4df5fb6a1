//! Solvers for the convex problem and its restrictions.
//!
//! [`solve_dual`] runs Lagrangian dual ascent on top of the closed-form primal
//! responses and an LP time split, then polishes the KKT system.
//! [`solve_reference`] is an independent log-barrier interior-point method
//! that never touches the closed forms; the two are used as mutual oracles.

mod barrier;
mod certify;
mod closed_form;
mod dual;
mod lagrangian;
mod linalg;

pub use barrier::solve_reference;
pub use certify::{structure_checks, verify_full_execution_time, NamedCheck};
pub use closed_form::{
    optimal_frequency, optimal_power, optimal_reflection, reflection_coefficients,
    reflection_objective, time_allocation_lp, time_prices, ClosedFormError, QuadraticCoefficients,
    ReflectionChoice, ReflectionRoute, TimeAllocation, TimePrice,
};
pub use dual::solve_dual;
pub use lagrangian::{
    kkt_breakdown, kkt_residual, lagrangian, lagrangian_gradient, EuGradient, KktBreakdown, Scales,
};

use crate::num::Real;
use crate::problem::{Allocation, EuBits, ExecutionTime, Problem, Tolerances};

/// Lagrange multipliers of the convex problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState<T> {
    /// Minimum-bits constraints, per EU.
    pub theta: Vec<T>,
    /// Energy-causality constraints, per EU.
    pub mu: Vec<T>,
    /// Frequency caps, per EU.
    pub phi: Vec<T>,
    /// Total time constraint.
    pub vartheta0: T,
    /// `x_k ≤ t_k^b`, per EU.
    pub vartheta: Vec<T>,
}

impl<T: Real> DualState<T> {
    pub fn zeros(num_eus: usize) -> Self {
        Self {
            theta: vec![T::zero(); num_eus],
            mu: vec![T::zero(); num_eus],
            phi: vec![T::zero(); num_eus],
            vartheta0: T::zero(),
            vartheta: vec![T::zero(); num_eus],
        }
    }

    pub fn num_eus(&self) -> usize {
        self.theta.len()
    }

    /// `w_k + θ_k`.
    #[inline]
    pub(crate) fn effective_weight(&self, problem: &Problem<T>, k: usize) -> T {
        problem.scenario.eus[k].weight + self.theta[k]
    }

    /// True when every multiplier is non-negative.
    pub fn is_dual_feasible(&self) -> bool {
        let z = T::zero();
        self.theta
            .iter()
            .chain(&self.mu)
            .chain(&self.phi)
            .chain(&self.vartheta)
            .all(|&v| v >= z)
            && self.vartheta0 >= z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    /// Scaled KKT residual required for [`SolveStatus::Optimal`].
    pub tol: T,
    /// Cap on Newton steps of either solver.
    pub max_iters: usize,
    pub feasibility: Tolerances<T>,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6),
            max_iters: 100_000,
            feasibility: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub status: SolveStatus,
    /// Weighted sum computation bits.
    pub objective: T,
    pub allocation: Allocation<T>,
    pub duals: DualState<T>,
    pub kkt_residual: T,
    pub per_eu_bits: Vec<EuBits<T>>,
    /// Harvested minus consumed energy per EU, joules.
    pub energy_slack: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> SolveReport<T> {
    pub(crate) fn build(
        problem: &Problem<T>,
        status: SolveStatus,
        allocation: Allocation<T>,
        duals: DualState<T>,
        iterations: usize,
    ) -> Self {
        let scenario = &problem.scenario;
        let r = crate::problem::residuals(&allocation, scenario);
        let kkt = kkt_residual(&allocation, &duals, problem);
        Self {
            status,
            objective: crate::problem::objective(&allocation, scenario),
            per_eu_bits: (0..scenario.num_eus())
                .map(|k| crate::problem::eu_bits(&allocation, scenario, k))
                .collect(),
            energy_slack: r.energy_deficit.iter().map(|&d| -d).collect(),
            allocation,
            duals,
            kkt_residual: kkt,
            iterations,
        }
    }

    pub(crate) fn infeasible(problem: &Problem<T>, iterations: usize) -> Self {
        let k = problem.scenario.num_eus();
        Self::build(
            problem,
            SolveStatus::Infeasible,
            Allocation::zeros(k),
            DualState::zeros(k),
            iterations,
        )
    }

    /// Downgrades an `Optimal` status that fails certification.
    pub(crate) fn certify(mut self, problem: &Problem<T>, opts: &SolveOptions<T>) -> Self {
        if self.status == SolveStatus::Optimal
            && !(self.kkt_residual <= opts.tol
                && problem.is_feasible(&self.allocation, &opts.feasibility))
        {
            self.status = SolveStatus::MaxIterations;
        }
        self
    }
}

/// Pins every execution time to the block length (nothing is gained by
/// idling the CPU), turning the original problem into the reduced one.
pub fn fix_execution_time<T: Real>(problem: &Problem<T>) -> Problem<T> {
    problem.clone().with_full_execution_time()
}

/// Solvers accept problems with free execution time and resolve it first.
pub(crate) fn resolved<T: Real>(problem: &Problem<T>) -> std::borrow::Cow<'_, Problem<T>> {
    match problem.execution {
        ExecutionTime::Free => std::borrow::Cow::Owned(fix_execution_time(problem)),
        ExecutionTime::Fixed(_) => std::borrow::Cow::Borrowed(problem),
    }
}

/// Reports for instances whose answer is the zero allocation: all weights and
/// requirements zero, or a stranded network (see [`Problem::is_stranded`]),
/// which is feasible only without a bits requirement.
pub(crate) fn trivial_report<T: Real>(
    problem: &Problem<T>,
    opts: &SolveOptions<T>,
) -> Option<SolveReport<T>> {
    let s = &problem.scenario;
    let n = s.num_eus();
    let idle = s
        .eus
        .iter()
        .all(|eu| eu.weight == T::zero() && eu.l_min <= T::zero());
    if !idle && !problem.is_stranded() {
        return None;
    }
    if s.eus.iter().any(|eu| eu.l_min > T::zero()) {
        return Some(SolveReport::infeasible(problem, 0));
    }
    Some(
        SolveReport::build(
            problem,
            SolveStatus::Optimal,
            finish_allocation(problem, Allocation::zeros(n)),
            DualState::zeros(n),
            0,
        )
        .certify(problem, opts),
    )
}

/// Allocation with `τ` filled in from the problem and pinned fields zeroed.
pub(crate) fn finish_allocation<T: Real>(
    problem: &Problem<T>,
    mut alloc: Allocation<T>,
) -> Allocation<T> {
    for (k, a) in alloc.eus.iter_mut().enumerate() {
        a.exec_time = problem.exec_time(k);
        if problem.pinning.share {
            a.x = T::zero();
        }
        if problem.pinning.active {
            a.t_a = T::zero();
            a.energy = T::zero();
        }
        if problem.pinning.local {
            a.freq = T::zero();
        }
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{objective, restrict, SchemeTag};
    use crate::scenario::default_scenario;

    #[test]
    fn fix_execution_time_pins_tau() {
        let p0 = Problem::original(default_scenario::<f64>());
        let p1 = fix_execution_time(&p0);
        assert_eq!(p1.execution, ExecutionTime::Fixed(vec![1.0; 4]));
        assert_eq!(p1.scenario, p0.scenario);
        assert_eq!(fix_execution_time(&p1), p1);
    }

    #[test]
    fn tau_is_irrelevant_without_local_computing() {
        let s = default_scenario::<f64>();
        let mut alloc = Allocation::zeros(4);
        alloc.eus[0].t_a = 0.5;
        alloc.eus[0].energy = 1e-4;
        let base = objective(&alloc, &s);
        for tau in [0.0, 0.3, 1.0] {
            for a in &mut alloc.eus {
                a.exec_time = tau;
            }
            assert_eq!(objective(&alloc, &s), base);
        }
        let p = restrict(&s, SchemeTag::CompleteOffloading);
        assert!(p.respects_restriction(&alloc));
    }

    #[test]
    fn stranded_eu_is_zero_or_infeasible() {
        let mut s = default_scenario::<f64>();
        s.eus.truncate(1);
        // Far from the PB: harvest below the BackCom circuit power.
        s.eus[0].g = 1e-6;
        let free = restrict(&s.with_uniform_l_min(0.0), SchemeTag::Proposed);
        let needy = restrict(&s.with_uniform_l_min(1.0), SchemeTag::Proposed);
        assert!(free.is_stranded());
        let opts = SolveOptions::default();
        for solve in [solve_dual::<f64>, solve_reference::<f64>] {
            let r = solve(&free, &opts);
            assert_eq!(r.status, SolveStatus::Optimal);
            assert_eq!(r.objective, 0.0);
            assert_eq!(solve(&needy, &opts).status, SolveStatus::Infeasible);
        }
    }

    #[test]
    fn stranded_network_needs_every_eu_short_of_power() {
        let mut s = default_scenario::<f64>();
        s.eus.truncate(3);
        for eu in &mut s.eus {
            eu.g = 1e-6;
        }
        let opts = SolveOptions::default();
        let free = restrict(&s.with_uniform_l_min(0.0), SchemeTag::Proposed);
        assert!(free.is_stranded());
        for solve in [solve_dual::<f64>, solve_reference::<f64>] {
            assert_eq!(solve(&free, &opts).status, SolveStatus::Optimal);
        }
        // One well-placed EU lets the others harvest during its BackCom slot.
        s.eus[0].g = 1e-2;
        assert!(!restrict(&s, SchemeTag::Proposed).is_stranded());
    }
}
