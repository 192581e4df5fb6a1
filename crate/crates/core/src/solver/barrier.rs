//! Reference solver: a log-barrier interior-point method with Newton steps
//! on the perspective-form problem. It uses only function values, gradients
//! and Hessians of the model, never the closed-form maximizers.

use super::lagrangian::Scales;
use super::linalg::SquareMatrix;
use super::{
    finish_allocation, resolved, trivial_report, DualState, SolveOptions, SolveReport, SolveStatus,
};
use crate::num::Real;
use crate::phys::{backcom_harvest_curve, perspective, rate_curve, PerspectiveEval};
use crate::problem::{Allocation, Problem};

const CENTERING_STEPS: usize = 200;

/// Variable indices of one EU in the scaled vector; pinned variables are absent.
#[derive(Debug, Clone, Copy)]
struct EuIndex {
    t_b: usize,
    x: Option<usize>,
    t_a: Option<usize>,
    energy: Option<usize>,
    freq: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Lower(usize),
    ShareUpper(usize),
    FreqUpper(usize),
    Bits(usize),
    Energy(usize),
    Time,
}

/// Value, sparse gradient and sparse symmetric Hessian (both triangles stored).
struct Smooth<T> {
    value: T,
    grad: Vec<(usize, T)>,
    hess: Vec<(usize, usize, T)>,
}

impl<T: Real> Smooth<T> {
    fn constant(value: T) -> Self {
        Self {
            value,
            grad: Vec::new(),
            hess: Vec::new(),
        }
    }

    fn linear(&mut self, i: usize, coef: T, z: &[T]) {
        self.value = self.value + coef * z[i];
        self.grad.push((i, coef));
    }

    /// Adds `coef · t φ(y/t)` where `y = s_num z[num]`, `t = s_time z[time]`.
    fn perspective(
        &mut self,
        pe: PerspectiveEval<T>,
        num: usize,
        s_num: T,
        time: usize,
        s_time: T,
        coef: T,
    ) {
        self.value = self.value + coef * pe.value;
        self.grad.push((num, coef * pe.d_num * s_num));
        self.grad.push((time, coef * pe.d_time * s_time));
        self.hess
            .push((num, num, coef * pe.h_num_num * s_num * s_num));
        self.hess
            .push((time, time, coef * pe.h_time_time * s_time * s_time));
        let cross = coef * pe.h_num_time * s_num * s_time;
        self.hess.push((num, time, cross));
        self.hess.push((time, num, cross));
    }

    fn scaled(mut self, by: T) -> Self {
        self.value = self.value * by;
        for g in &mut self.grad {
            g.1 = g.1 * by;
        }
        for h in &mut self.hess {
            h.2 = h.2 * by;
        }
        self
    }
}

struct Model<'a, T> {
    problem: &'a Problem<T>,
    scales: Scales<T>,
    index: Vec<EuIndex>,
    kinds: Vec<Kind>,
    n: usize,
    /// Index of the phase-I slack, when present.
    slack: Option<usize>,
}

impl<'a, T: Real> Model<'a, T> {
    fn new(problem: &'a Problem<T>) -> Self {
        let s = &problem.scenario;
        let mut n = 0;
        let mut next = || {
            n += 1;
            n - 1
        };
        let pin = problem.pinning;
        let index: Vec<EuIndex> = (0..s.num_eus())
            .map(|_| EuIndex {
                t_b: next(),
                x: (!pin.share).then(&mut next),
                t_a: (!pin.active).then(&mut next),
                energy: (!pin.active).then(&mut next),
                freq: (!pin.local).then(&mut next),
            })
            .collect();
        let mut kinds = Vec::new();
        for (k, ix) in index.iter().enumerate() {
            match ix.x {
                Some(x) => {
                    kinds.push(Kind::Lower(x));
                    kinds.push(Kind::ShareUpper(k));
                }
                None => kinds.push(Kind::Lower(ix.t_b)),
            }
            for i in [ix.t_a, ix.energy, ix.freq].into_iter().flatten() {
                kinds.push(Kind::Lower(i));
            }
            if ix.freq.is_some() {
                kinds.push(Kind::FreqUpper(k));
            }
            if s.eus[k].l_min > T::zero() {
                kinds.push(Kind::Bits(k));
            }
            kinds.push(Kind::Energy(k));
        }
        kinds.push(Kind::Time);
        Self {
            problem,
            scales: Scales::new(problem),
            index,
            kinds,
            n,
            slack: None,
        }
    }

    fn dim(&self) -> usize {
        self.n + usize::from(self.slack.is_some())
    }

    /// Physical bits of EU `k`.
    fn bits(&self, k: usize, z: &[T]) -> Smooth<T> {
        let s = &self.problem.scenario;
        let ix = self.index[k];
        let time = self.scales.time;
        let mut out = Smooth::constant(T::zero());
        if let Some(x) = ix.x {
            let gain = s.backcom_snr_gain(k);
            let pe = perspective(x_phys(z[x], time), time * z[ix.t_b], |u| {
                rate_curve(s.bandwidth, gain, u)
            });
            out.perspective(pe, x, time, ix.t_b, time, T::one());
        }
        if let (Some(ta), Some(p)) = (ix.t_a, ix.energy) {
            let gain = s.at_snr_gain(k);
            let pe = perspective(self.scales.energy[k] * z[p], time * z[ta], |u| {
                rate_curve(s.bandwidth, gain, u)
            });
            out.perspective(pe, p, self.scales.energy[k], ta, time, T::one());
        }
        if let Some(f) = ix.freq {
            out.linear(
                f,
                self.scales.freq[k] * self.problem.exec_time(k) / s.cycles_per_bit,
                z,
            );
        }
        out
    }

    /// Physical net energy (harvest minus consumption) of EU `k`.
    fn energy(&self, k: usize, z: &[T]) -> Smooth<T> {
        let s = &self.problem.scenario;
        let eu = &s.eus[k];
        let ix = self.index[k];
        let time = self.scales.time;
        let mut out = Smooth::constant(T::zero());
        match ix.x {
            Some(x) => {
                let pe = perspective(x_phys(z[x], time), time * z[ix.t_b], |u| {
                    backcom_harvest_curve(s, k, u.min(T::one()))
                });
                out.perspective(pe, x, time, ix.t_b, time, T::one());
            }
            None => out.linear(ix.t_b, s.idle_harvest_power(k) * time, z),
        }
        for (i, other) in self.index.iter().enumerate() {
            if i != k {
                out.linear(other.t_b, s.idle_harvest_power(k) * time, z);
            }
        }
        out.linear(ix.t_b, -eu.backcom_circuit_power * time, z);
        if let (Some(ta), Some(p)) = (ix.t_a, ix.energy) {
            out.linear(p, -self.scales.energy[k], z);
            out.linear(ta, -eu.at_circuit_power * time, z);
        }
        if let Some(f) = ix.freq {
            let sf = self.scales.freq[k];
            let c = eu.capacitance * self.problem.exec_time(k) * sf * sf * sf;
            let v = z[f];
            out.value = out.value - c * v * v * v;
            out.grad.push((f, -T::lit(3.0) * c * v * v));
            out.hess.push((f, f, -T::lit(6.0) * c * v));
        }
        out
    }

    /// Scaled constraint `ĝ ≥ 0`, with the phase-I slack added where it applies.
    fn constraint(&self, kind: Kind, z: &[T]) -> Smooth<T> {
        let s = &self.problem.scenario;
        let mut out = match kind {
            Kind::Lower(i) => {
                let mut c = Smooth::constant(T::zero());
                c.linear(i, T::one(), z);
                c
            }
            Kind::ShareUpper(k) => {
                let ix = self.index[k];
                let mut c = Smooth::constant(T::zero());
                c.linear(ix.t_b, T::one(), z);
                c.linear(ix.x.expect("share constraint without x"), -T::one(), z);
                c
            }
            Kind::FreqUpper(k) => {
                let mut c = Smooth::constant(T::one());
                c.linear(
                    self.index[k].freq.expect("frequency cap without f"),
                    -T::one(),
                    z,
                );
                c
            }
            Kind::Bits(k) => {
                let mut c = self.bits(k, z);
                c.value = c.value - s.eus[k].l_min;
                c.scaled(T::one() / self.scales.bits)
            }
            Kind::Energy(k) => {
                let e = self.scales.energy[k];
                self.energy(k, z).scaled(T::one() / e)
            }
            Kind::Time => {
                let mut c = Smooth::constant(T::one());
                for ix in &self.index {
                    c.linear(ix.t_b, -T::one(), z);
                    if let Some(ta) = ix.t_a {
                        c.linear(ta, -T::one(), z);
                    }
                }
                c
            }
        };
        if let (Some(si), Kind::Bits(_) | Kind::Energy(_)) = (self.slack, kind) {
            out.linear(si, T::one(), z);
        }
        out
    }

    /// Objective to maximize: scaled weighted bits, or `−s` in phase I.
    fn objective(&self, z: &[T]) -> Smooth<T> {
        if let Some(si) = self.slack {
            let mut c = Smooth::constant(T::zero());
            c.linear(si, -T::one(), z);
            return c;
        }
        let s = &self.problem.scenario;
        let mut out = Smooth::constant(T::zero());
        for k in 0..s.num_eus() {
            let b = self
                .bits(k, z)
                .scaled(s.eus[k].weight / self.scales.lagrangian);
            out.value = out.value + b.value;
            out.grad.extend(b.grad);
            out.hess.extend(b.hess);
        }
        out
    }

    fn constraint_values(&self, z: &[T]) -> Vec<T> {
        self.kinds
            .iter()
            .map(|&kind| self.constraint(kind, z).value)
            .collect()
    }

    /// Barrier function `t f₀ + Σ log ĝ`; `None` outside the domain.
    fn barrier_value(&self, z: &[T], t: T) -> Option<T> {
        let mut v = t * self.objective(z).value;
        for g in self.constraint_values(z) {
            if !(g > T::zero()) {
                return None;
            }
            v = v + g.ln();
        }
        v.is_finite().then_some(v)
    }

    fn barrier_derivatives(&self, z: &[T], t: T) -> (Vec<T>, SquareMatrix<T>) {
        let n = self.dim();
        let mut grad = vec![T::zero(); n];
        let mut hess = SquareMatrix::zeros(n);
        let f0 = self.objective(z);
        for &(i, g) in &f0.grad {
            grad[i] = grad[i] + t * g;
        }
        for &(i, j, h) in &f0.hess {
            hess.add(i, j, t * h);
        }
        for &kind in &self.kinds {
            let c = self.constraint(kind, z);
            let inv = T::one() / c.value;
            let mut dense = vec![T::zero(); n];
            for &(i, g) in &c.grad {
                dense[i] = dense[i] + g;
            }
            for (i, &g) in dense.iter().enumerate() {
                grad[i] = grad[i] + g * inv;
            }
            for &(i, j, h) in &c.hess {
                hess.add(i, j, h * inv);
            }
            let support: Vec<usize> = (0..n).filter(|&i| dense[i] != T::zero()).collect();
            for &i in &support {
                for &j in &support {
                    hess.add(i, j, -dense[i] * dense[j] * inv * inv);
                }
            }
        }
        (grad, hess)
    }

    /// Multiplier estimates at a near-central point.
    ///
    /// `1 / (t ĝ)` loses relative accuracy when `ĝ` is tiny, so the
    /// multipliers of the nearly active constraints (`ĝ < 1/√t`) are fitted
    /// by least squares to stationarity `∇f₀ + Σ λ ∇ĝ = 0` and clipped at 0.
    fn multipliers(&self, z: &[T], t: T) -> Vec<T> {
        let n = self.dim();
        let cut = T::one() / t.sqrt();
        let cons: Vec<Smooth<T>> = self.kinds.iter().map(|&k| self.constraint(k, z)).collect();
        let active: Vec<usize> = (0..cons.len()).filter(|&i| cons[i].value < cut).collect();
        let mut out: Vec<T> = cons.iter().map(|c| T::one() / (t * c.value)).collect();
        if active.is_empty() {
            return out;
        }
        let dense = |c: &Smooth<T>| {
            let mut v = vec![T::zero(); n];
            for &(i, g) in &c.grad {
                v[i] = v[i] + g;
            }
            v
        };
        let grads: Vec<Vec<T>> = active.iter().map(|&i| dense(&cons[i])).collect();
        let f0 = dense(&self.objective(z));
        let m = active.len();
        let mut normal = SquareMatrix::zeros(m);
        let mut rhs = vec![T::zero(); m];
        for a in 0..m {
            for b in 0..m {
                let dot: T = grads[a].iter().zip(&grads[b]).map(|(&x, &y)| x * y).sum();
                normal.add(a, b, dot);
            }
            rhs[a] = -grads[a].iter().zip(&f0).map(|(&x, &y)| x * y).sum::<T>();
        }
        let scale = (0..m).map(|a| normal.at(a, a)).fold(T::zero(), T::max);
        normal.add_diagonal(scale * T::lit(1e-14));
        if let Some(lambda) = normal.regularized_solve(&rhs) {
            // Keep the barrier estimate where the fit is not clearly better.
            let fitted: Vec<T> = lambda.into_iter().map(T::pos).collect();
            let residual = |lam: &dyn Fn(usize) -> T| -> T {
                (0..n)
                    .map(|j| {
                        let r = f0[j] + (0..m).map(|a| lam(a) * grads[a][j]).sum::<T>();
                        r * r
                    })
                    .sum::<T>()
            };
            let before = residual(&|a| out[active[a]]);
            let after = residual(&|a| fitted[a]);
            if after <= before {
                for (a, &i) in active.iter().enumerate() {
                    out[i] = fitted[a];
                }
            }
        }
        out
    }

    /// Newton centering at barrier parameter `t`. Returns the number of steps taken.
    fn center(&self, z: &mut Vec<T>, t: T, budget: usize, stop: impl Fn(&[T]) -> bool) -> usize {
        let mut steps = 0;
        while steps < budget {
            if stop(z) {
                break;
            }
            let (grad, hess) = self.barrier_derivatives(z, t);
            let mut neg = hess.clone();
            for v in &mut neg.data {
                *v = -*v;
            }
            let Some(dir) = neg.regularized_solve(&grad) else {
                break;
            };
            let decrement: T = grad.iter().zip(&dir).map(|(&g, &d)| g * d).sum();
            steps += 1;
            if !(decrement > T::lit(2e-12)) {
                break;
            }
            let Some(f0) = self.barrier_value(z, t) else {
                break;
            };
            let mut step = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<T> = z.iter().zip(&dir).map(|(&a, &d)| a + step * d).collect();
                if let Some(f1) = self.barrier_value(&trial, t) {
                    // Below the round-off of f0 the Armijo test is meaningless; accept any feasible step.
                    let noise = T::lit(1e-13) * f0.abs().max(T::one());
                    if f1 >= f0 + T::lit(0.25) * step * decrement || decrement * step < noise {
                        *z = trial;
                        accepted = true;
                        break;
                    }
                }
                step = step * T::lit(0.5);
            }
            if !accepted {
                log::debug!("barrier line search failed at t = {t:e}, decrement {decrement:e}");
                break;
            }
        }
        steps
    }
}

#[inline]
fn x_phys<T: Real>(x: T, time: T) -> T {
    x * time
}

/// Solves the problem with a log-barrier interior-point method.
///
/// A phase-I problem with a common slack on the bits and energy constraints
/// finds a strictly feasible start; if its optimum does not go below zero the
/// problem is reported infeasible.
pub fn solve_reference<T: Real>(problem: &Problem<T>, opts: &SolveOptions<T>) -> SolveReport<T> {
    let problem = resolved(problem);
    let problem = problem.as_ref();
    let s = &problem.scenario;
    let num_eus = s.num_eus();
    if let Some(report) = trivial_report(problem, opts) {
        return report;
    }
    let mut model = Model::new(problem);
    let mut iterations = 0;

    // Interior start for the simple bounds and the time constraint.
    let mut z = vec![T::zero(); model.n];
    let per_eu: usize = if problem.pinning.active { 1 } else { 2 };
    let slots = T::from_usize_lossy(num_eus * per_eu);
    let share = T::lit(0.9) / slots;
    for ix in &model.index {
        z[ix.t_b] = share;
        if let Some(x) = ix.x {
            z[x] = share * T::lit(0.5);
        }
        if let (Some(ta), Some(p)) = (ix.t_a, ix.energy) {
            z[ta] = share;
            z[p] = share * T::lit(0.01);
        }
        if let Some(f) = ix.freq {
            z[f] = T::lit(0.01);
        }
    }

    let gap_target = T::lit(1e-9);
    let m = T::from_usize_lossy(model.kinds.len());
    if model
        .constraint_values(&z)
        .iter()
        .any(|&g| !(g > T::zero()))
    {
        let worst = model
            .constraint_values(&z)
            .into_iter()
            .fold(T::zero(), |a, g| a.max(-g));
        model.slack = Some(model.n);
        z.push(worst + T::one());
        let feasible = |z: &[T]| z[z.len() - 1] < T::zero() && model_strict(&model, z);
        let mut t = T::one();
        let mut found = false;
        loop {
            iterations += model.center(
                &mut z,
                t,
                opts.max_iters
                    .saturating_sub(iterations)
                    .min(CENTERING_STEPS),
                |z| feasible(z),
            );
            if feasible(&z) {
                found = true;
                break;
            }
            if m / t < gap_target || iterations >= opts.max_iters {
                break;
            }
            t = t * T::lit(10.0);
        }
        let slack = z[model.n];
        if !found {
            log::debug!("phase I ended with slack {slack:e}");
            if slack >= -T::lit(1e-10) && iterations < opts.max_iters {
                return SolveReport::infeasible(problem, iterations);
            }
            let mut r = SolveReport::infeasible(problem, iterations);
            r.status = SolveStatus::MaxIterations;
            return r;
        }
        z.pop();
        model.slack = None;
    }

    let mut t = T::one();
    loop {
        let steps = model.center(
            &mut z,
            t,
            opts.max_iters
                .saturating_sub(iterations)
                .min(CENTERING_STEPS),
            |_| false,
        );
        iterations += steps;
        log::trace!("barrier t = {t:e}: {steps} Newton steps");
        if m / t < gap_target || iterations >= opts.max_iters {
            break;
        }
        t = t * T::lit(10.0);
    }

    let alloc = finish_allocation(problem, to_allocation(&model, &z));
    let mut duals = DualState::zeros(num_eus);
    let sc = &model.scales;
    let multipliers = model.multipliers(&z, t);
    for (&kind, &lambda) in model.kinds.iter().zip(&multipliers) {
        let lambda = lambda * sc.lagrangian;
        match kind {
            Kind::Bits(k) => duals.theta[k] = lambda / sc.bits,
            Kind::Energy(k) => duals.mu[k] = lambda / sc.energy[k],
            Kind::Time => duals.vartheta0 = lambda / sc.time,
            Kind::FreqUpper(k) => duals.phi[k] = lambda / sc.freq[k],
            Kind::ShareUpper(k) => duals.vartheta[k] = lambda / sc.time,
            Kind::Lower(_) => {}
        }
    }
    let status = if iterations >= opts.max_iters {
        SolveStatus::MaxIterations
    } else {
        SolveStatus::Optimal
    };
    SolveReport::build(problem, status, alloc, duals, iterations).certify(problem, opts)
}

fn model_strict<T: Real>(model: &Model<'_, T>, z: &[T]) -> bool {
    // Constraint values without the slack.
    let mut plain = z.to_vec();
    let si = model.n;
    plain[si] = T::zero();
    model
        .constraint_values(&plain)
        .iter()
        .all(|&g| g > T::zero())
}

fn to_allocation<T: Real>(model: &Model<'_, T>, z: &[T]) -> Allocation<T> {
    let sc = &model.scales;
    let mut alloc = Allocation::zeros(model.index.len());
    for (k, (ix, a)) in model.index.iter().zip(&mut alloc.eus).enumerate() {
        a.t_b = sc.time * z[ix.t_b];
        if let Some(x) = ix.x {
            a.x = (sc.time * z[x]).min(a.t_b);
        }
        if let (Some(ta), Some(p)) = (ix.t_a, ix.energy) {
            a.t_a = sc.time * z[ta];
            a.energy = sc.energy[k] * z[p];
        }
        if let Some(f) = ix.freq {
            a.freq = sc.freq[k] * z[f];
        }
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{restrict, SchemeTag};
    use crate::scenario::default_scenario;

    #[test]
    fn default_scenario_is_certified() {
        let p = restrict(&default_scenario::<f64>(), SchemeTag::Proposed);
        let r = solve_reference(&p, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal, "kkt {:e}", r.kkt_residual);
        assert!(r.objective > 0.0);
        assert!(p.is_feasible(&r.allocation, &Default::default()));
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut s = default_scenario::<f64>().with_uniform_l_min(0.0);
        for eu in &mut s.eus {
            eu.weight = 0.0;
        }
        let r = solve_reference(&restrict(&s, SchemeTag::Proposed), &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn huge_l_min_is_infeasible() {
        let s = default_scenario::<f64>().with_uniform_l_min(1e7);
        let r = solve_reference(&restrict(&s, SchemeTag::Proposed), &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn proposed_dominates_pure_backscatter() {
        let s = default_scenario::<f64>();
        let opts = SolveOptions::default();
        let prop = solve_reference(&restrict(&s, SchemeTag::Proposed), &opts);
        let pb = solve_reference(&restrict(&s, SchemeTag::PureBackscatter), &opts);
        assert!(prop.objective >= pb.objective * (1.0 - 1e-9));
    }
}
