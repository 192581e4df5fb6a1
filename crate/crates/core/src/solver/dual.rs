//! Lagrangian dual method built on the closed-form primal responses.
//!
//! Only the bits (θ) and energy (μ) constraints are dualized. The time
//! budget, frequency caps and `x ≤ t_b` stay in the inner problem, whose
//! maximizer is the closed forms plus a choice of time slot; their
//! multipliers (ϑ₀, φ, ϑ_k) are read off afterwards.
//!
//! The dual function is convex but kinked where the best slot changes. The
//! slot maximum is smoothed with a log barrier on the slot shares and the
//! signs of `μ`, `θ` are kept by log barriers, all of weight `ε`. The
//! minimizer of that smooth function is a point of the central path: every
//! dualized constraint has slack `ε / multiplier`. Damped Newton tracks it
//! down to a moderate `ε`. Below that the shares react like `1/ε` to the
//! multipliers, so the path is continued on the joint barrier system in
//! multipliers and shares, then polished on the active set.
//!
//! A dual value below zero anywhere proves infeasibility, since the optimum
//! of a feasible problem is non-negative.

use super::closed_form::{
    optimal_frequency, optimal_power, optimal_reflection, time_prices,
};
use super::lagrangian::{energy_slack, lagrangian, Scales};
use super::linalg::{levenberg_marquardt, SquareMatrix};
use super::{
    finish_allocation, resolved, trivial_report, DualState, SolveOptions, SolveReport, SolveStatus,
};
use crate::num::Real;
use crate::phys::{backcom_harvest_curve, rate_curve, total_harvest};
use crate::problem::{eu_bits, Allocation, Problem};

/// Smoothing weights of the dual phase: `10^-1 … 10^-6`.
const DUAL_STAGES: i32 = 6;
/// Further weights of the path-following phase: down to `10^-12`.
const PATH_STAGES: i32 = 6;
const NEWTON_PER_STAGE: usize = 60;

/// A time variable: EU index and slot (`false` BackCom, `true` AT).
type Slot = (usize, bool);

struct Context<'a, T> {
    problem: &'a Problem<T>,
    sc: Scales<T>,
    slots: Vec<Slot>,
    /// EUs with a positive bit floor, in order of their θ unknowns.
    bits_rows: Vec<usize>,
}

impl<'a, T: Real> Context<'a, T> {
    fn build_slots(&self) -> Vec<Slot> {
        let n = self.problem.scenario.num_eus();
        let mut out: Vec<Slot> = (0..n).map(|k| (k, false)).collect();
        if !self.problem.pinning.active {
            out.extend((0..n).map(|k| (k, true)));
        }
        out
    }

    fn duals(&self, mu_hat: &[T], theta_hat: &[T]) -> DualState<T> {
        let n = mu_hat.len();
        let mut d = DualState::zeros(n);
        for k in 0..n {
            d.mu[k] = mu_hat[k] * self.sc.lagrangian / self.sc.energy[k];
            d.theta[k] = theta_hat[k] * self.sc.lagrangian / self.sc.bits;
        }
        d
    }

    /// Per-second choices for every EU: `(α, p, f)`.
    fn per_second(&self, d: &DualState<T>) -> Option<Vec<(T, T, T)>> {
        let p = self.problem;
        let s = &p.scenario;
        (0..s.num_eus())
            .map(|k| {
                let alpha = if p.pinning.share {
                    T::zero()
                } else {
                    optimal_reflection(d, k, s).alpha
                };
                let power = if p.pinning.active {
                    T::zero()
                } else {
                    optimal_power(d, k, s).ok()?
                };
                let freq = optimal_frequency(d, k, p).min(s.eus[k].f_max);
                Some((alpha, power, freq))
            })
            .collect()
    }

    fn allocation(&self, choices: &[(T, T, T)], times: &[(Slot, T)]) -> Allocation<T> {
        let p = self.problem;
        let mut alloc = Allocation::zeros(p.scenario.num_eus());
        for (k, a) in alloc.eus.iter_mut().enumerate() {
            a.freq = choices[k].2;
            a.exec_time = p.exec_time(k);
        }
        for &((k, active), t) in times {
            let (alpha, power, _) = choices[k];
            let a = &mut alloc.eus[k];
            if active {
                a.t_a = t;
                a.energy = power * t;
            } else {
                a.t_b = t;
                a.x = alpha * t;
            }
        }
        alloc
    }

    /// Starting energy prices: invert the frequency (or power) closed form at
    /// a point that spends half of the full-block harvest.
    fn initial_mu(&self) -> Vec<T> {
        let p = self.problem;
        let s = &p.scenario;
        (0..s.num_eus())
            .map(|k| {
                let eu = &s.eus[k];
                let half = self.sc.energy[k] * T::lit(0.5);
                let mu = if !p.pinning.local {
                    let tau = p.exec_time(k);
                    let f = (half / (eu.capacitance * tau)).cbrt().min(eu.f_max);
                    eu.weight / (T::lit(3.0) * eu.capacitance * s.cycles_per_bit * f * f)
                } else {
                    let power = half / s.block_length;
                    eu.weight * s.bandwidth / (T::LN_2() * (power + s.noise_power() / eu.h))
                };
                (mu * self.sc.energy[k] / self.sc.lagrangian).max(T::lit(1e-6))
            })
            .collect()
    }
}


/// Smoothed dual at one point of the scaled multipliers.
struct Smoothed<T> {
    /// Barrier-augmented smoothed dual, the function being minimized.
    merit: T,
    /// Unsmoothed scaled dual value.
    dual: T,
    grad: Vec<T>,
    /// Share of the block given to each slot of [`Context::slots`].
    shares: Vec<T>,
    /// Smoothed time price `λ`; becomes ϑ₀.
    soft_max: T,
    /// Per-slot change of the scaled constraint values per block of time.
    columns: Vec<Vec<T>>,
}

impl<'a, T: Real> Context<'a, T> {
    /// Splits the unknowns into `(μ̂, θ̂)`; θ is only free where `L_min > 0`.
    fn unpack(&self, y: &[T]) -> (Vec<T>, Vec<T>) {
        let n = self.problem.scenario.num_eus();
        let mut theta = vec![T::zero(); n];
        for (i, &k) in self.bits_rows.iter().enumerate() {
            theta[k] = y[n + i];
        }
        (y[..n].to_vec(), theta)
    }

    /// Dualized constraint values, scaled: energy slack per EU, then bit surplus.
    fn constraints(&self, alloc: &Allocation<T>) -> Vec<T> {
        let p = self.problem;
        let s = &p.scenario;
        let n = s.num_eus();
        let mut out: Vec<T> = (0..n)
            .map(|k| energy_slack(alloc, p, k) / self.sc.energy[k])
            .collect();
        out.extend(
            self.bits_rows
                .iter()
                .map(|&k| (eu_bits(alloc, s, k).total() - s.eus[k].l_min) / self.sc.bits),
        );
        out
    }

    fn choices_at(&self, y: &[T]) -> Option<(DualState<T>, Vec<(T, T, T)>)> {
        let (mu, theta) = self.unpack(y);
        let d = self.duals(&mu, &theta);
        let choices = self.per_second(&d)?;
        choices
            .iter()
            .all(|c| c.0.is_finite() && c.1.is_finite() && c.2.is_finite())
            .then_some((d, choices))
    }

    fn timed(&self, shares: &[T]) -> Vec<(Slot, T)> {
        self.slots
            .iter()
            .zip(shares)
            .map(|(&sl, &w)| (sl, w * self.sc.time))
            .collect()
    }

    fn smoothed(&self, y: &[T], eps: T) -> Option<Smoothed<T>> {
        let p = self.problem;
        let sc = &self.sc;
        let (d, choices) = self.choices_at(y)?;
        let prices = time_prices(&d, p).ok()?;
        let c_hat: Vec<T> = self
            .slots
            .iter()
            .map(|&(k, active)| {
                let c = if active {
                    prices[k].active
                } else {
                    Some(prices[k].backcom)
                };
                c.map(|c| c * sc.time / sc.lagrangian)
            })
            .collect::<Option<_>>()?;
        let top = c_hat.iter().copied().fold(T::zero(), T::max);
        let soft_max = barrier_price(&c_hat, top, eps)?;
        let shares: Vec<T> = c_hat.iter().map(|&c| eps / (soft_max - c)).collect();
        let idle = eps / soft_max;
        let smoothing = shares
            .iter()
            .zip(&c_hat)
            .map(|(&t, &c)| t * c + eps * t.ln())
            .sum::<T>()
            + eps * idle.ln();

        let base = self.allocation(&choices, &[]);
        let base_value = lagrangian(&base, &d, p) / sc.lagrangian;
        let g0 = self.constraints(&base);
        let columns: Vec<Vec<T>> = self
            .slots
            .iter()
            .map(|&sl| {
                let a = self.allocation(&choices, &[(sl, sc.time)]);
                self.constraints(&a)
                    .iter()
                    .zip(&g0)
                    .map(|(&v, &b)| v - b)
                    .collect()
            })
            .collect();
        let barrier: T = y.iter().map(|&v| v.ln()).sum();
        let grad: Vec<T> = (0..y.len())
            .map(|i| {
                g0[i] + columns.iter().zip(&shares).map(|(c, &w)| w * c[i]).sum::<T>()
                    - eps / y[i]
            })
            .collect();
        let merit = base_value + smoothing - eps * barrier;
        let out = Smoothed {
            merit,
            dual: base_value + top,
            grad,
            shares,
            soft_max,
            columns,
        };
        (out.merit.is_finite() && out.grad.iter().all(|g| g.is_finite())).then_some(out)
    }

    /// Hessian of the merit function. The slot-softmax part, which grows like
    /// `1/ε`, is exact; the curvature of the closed-form responses is taken by
    /// central differences with the slot shares frozen.
    fn hessian(&self, y: &[T], eps: T, at: &Smoothed<T>) -> Option<SquareMatrix<T>> {
        let m = y.len();
        let mut h = SquareMatrix::zeros(m);
        let times = self.timed(&at.shares);
        for j in 0..m {
            let step = (y[j] * T::lit(1e-6)).max(T::lit(1e-14));
            let mut plus = y.to_vec();
            let mut minus = y.to_vec();
            plus[j] = plus[j] + step;
            minus[j] = (minus[j] - step).max(y[j] * T::lit(0.5));
            let gp = self.constraints(&self.allocation(&self.choices_at(&plus)?.1, &times));
            let gm = self.constraints(&self.allocation(&self.choices_at(&minus)?.1, &times));
            let width = plus[j] - minus[j];
            for i in 0..m {
                let v = (gp[i] - gm[i]) / width * T::lit(0.5);
                h.add(i, j, v);
                h.add(j, i, v);
            }
        }
        // Share response: dt_s = (t_s² / ε) (dc_s − Σ_r t_r² dc_r / Σ t²), idle included in Σ t².
        let sq: Vec<T> = at.shares.iter().map(|&t| t * t).collect();
        let idle = T::one() - at.shares.iter().copied().sum::<T>();
        let total_sq = sq.iter().copied().sum::<T>() + idle * idle;
        let mean: Vec<T> = (0..m)
            .map(|i| at.columns.iter().zip(&sq).map(|(c, &w)| w * c[i]).sum())
            .collect();
        for i in 0..m {
            for j in 0..m {
                let second: T = at
                    .columns
                    .iter()
                    .zip(&sq)
                    .map(|(c, &w)| w * c[i] * c[j])
                    .sum();
                h.add(i, j, (second - mean[i] * mean[j] / total_sq) / eps);
            }
            h.add(i, i, eps / (y[i] * y[i]));
        }
        h.data.iter().all(|v| v.is_finite()).then_some(h)
    }
}

/// Time price `λ` of the barrier-smoothed slot choice: the root of
/// `ε/λ + Σ ε/(λ − c_s) = 1` above every price and 0. The left-hand side is
/// convex and decreasing, so Newton's method from the left converges monotonically.
fn barrier_price<T: Real>(c_hat: &[T], top: T, eps: T) -> Option<T> {
    let mut lambda = top + eps * T::lit(0.5);
    for _ in 0..200 {
        let mut f = eps / lambda - T::one();
        let mut df = -eps / (lambda * lambda);
        for &c in c_hat {
            let gap = lambda - c;
            f = f + eps / gap;
            df = df - eps / (gap * gap);
        }
        let next = lambda - f / df;
        if !(next.is_finite()) {
            return None;
        }
        if next <= lambda || next - lambda <= T::lit(1e-15) * lambda.abs().max(eps) {
            return Some(next.max(lambda));
        }
        lambda = next;
    }
    Some(lambda)
}

enum Stage<T> {
    Converged(Vec<T>, usize),
    Infeasible(usize),
    Stuck(Vec<T>, usize),
}

/// Damped Newton on the merit function at fixed `ε`.
fn newton_stage<T: Real>(ctx: &Context<'_, T>, mut y: Vec<T>, eps: T, budget: usize) -> Stage<T> {
    let mut steps = 0;
    let Some(mut cur) = ctx.smoothed(&y, eps) else {
        return Stage::Stuck(y, steps);
    };
    while steps < budget {
        if cur.dual < -T::lit(1e-9) {
            log::debug!("dual value {:e} < 0 certifies infeasibility", cur.dual);
            return Stage::Infeasible(steps);
        }
        let Some(h) = ctx.hessian(&y, eps, &cur) else {
            return Stage::Stuck(y, steps);
        };
        let neg: Vec<T> = cur.grad.iter().map(|&g| -g).collect();
        let Some(dir) = h.regularized_solve(&neg) else {
            return Stage::Stuck(y, steps);
        };
        steps += 1;
        let decrement: T = dir.iter().zip(&cur.grad).map(|(&d, &g)| -d * g).sum();
        if decrement <= eps * T::lit(1e-3) {
            return Stage::Converged(y, steps);
        }
        // Stay strictly inside the positive orthant.
        let mut t = T::one();
        for (&v, &d) in y.iter().zip(&dir) {
            if d < T::zero() {
                t = t.min(T::lit(0.99) * v / -d);
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = y.iter().zip(&dir).map(|(&v, &d)| v + t * d).collect();
            if let Some(next) = ctx.smoothed(&trial, eps) {
                if next.merit <= cur.merit - T::lit(1e-4) * t * decrement {
                    accepted = Some((trial, next));
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        let Some((trial, next)) = accepted else {
            log::trace!("line search failed at eps {eps:e}, decrement {decrement:e}");
            return Stage::Stuck(y, steps);
        };
        y = trial;
        cur = next;
    }
    Stage::Stuck(y, steps)
}

/// Makes an allocation exactly feasible where possible: times are scaled
/// into the block, then each EU's spare energy goes to local computing (and
/// to transmit energy once the frequency cap binds).
fn restore<T: Real>(
    problem: &Problem<T>,
    alloc: &Allocation<T>,
    opts: &SolveOptions<T>,
) -> Option<Allocation<T>> {
    let s = &problem.scenario;
    let mut a = alloc.clone();
    let total = a.total_time();
    if total > s.block_length {
        let shrink = s.block_length / total;
        for e in &mut a.eus {
            e.t_b = e.t_b * shrink;
            e.x = e.x * shrink;
            e.t_a = e.t_a * shrink;
            e.energy = e.energy * shrink;
        }
    }
    for k in 0..s.num_eus() {
        let eu = &s.eus[k];
        let harvest = total_harvest(&a, k, s).total;
        let e = &mut a.eus[k];
        let circuits = eu.backcom_circuit_power * e.t_b + eu.at_circuit_power * e.t_a;
        let mut avail = harvest - circuits - e.energy;
        if avail < T::zero() {
            e.energy = (e.energy + avail).pos();
            avail = harvest - circuits - e.energy;
        }
        if avail < T::zero() {
            return None;
        }
        if !problem.pinning.local && e.exec_time > T::zero() {
            e.freq = (avail / (eu.capacitance * e.exec_time))
                .cbrt()
                .min(eu.f_max);
            avail = avail - eu.capacitance * e.freq.powi(3) * e.exec_time;
        }
        if avail > T::zero() && e.t_a > T::zero() && !problem.pinning.active {
            e.energy = e.energy + avail;
        }
    }
    problem.is_feasible(&a, &opts.feasibility).then_some(a)
}

/// Solves the problem by Newton's method on the smoothed Lagrangian dual.
pub fn solve_dual<T: Real>(problem: &Problem<T>, opts: &SolveOptions<T>) -> SolveReport<T> {
    let problem = resolved(problem);
    let p = problem.as_ref();
    let s = &p.scenario;
    let n = s.num_eus();
    if let Some(report) = trivial_report(p, opts) {
        return report;
    }
    let mut ctx = Context {
        problem: p,
        sc: Scales::new(p),
        slots: Vec::new(),
        bits_rows: (0..n).filter(|&k| s.eus[k].l_min > T::zero()).collect(),
    };
    ctx.slots = ctx.build_slots();
    let mut y = ctx.initial_mu();
    y.extend(ctx.bits_rows.iter().map(|_| T::one()));

    let mut eps = T::one();
    let mut iterations = 0;
    for _ in 0..DUAL_STAGES {
        eps = eps * T::lit(0.1);
        let budget = NEWTON_PER_STAGE.min(opts.max_iters.saturating_sub(iterations));
        if budget == 0 {
            break;
        }
        match newton_stage(&ctx, y.clone(), eps, budget) {
            Stage::Infeasible(k) => return SolveReport::infeasible(p, iterations + k),
            Stage::Converged(next, k) => {
                iterations += k;
                y = next;
            }
            Stage::Stuck(next, k) => {
                iterations += k;
                y = next;
                log::trace!("Newton stage stalled at eps {eps:e}");
            }
        }
    }
    let Some(last) = ctx.smoothed(&y, eps) else {
        let mut r = SolveReport::infeasible(p, iterations);
        r.status = SolveStatus::MaxIterations;
        return r;
    };
    if last.dual < -T::lit(1e-9) {
        return SolveReport::infeasible(p, iterations);
    }

    let mut candidates = Vec::new();
    let (path, steps) = follow_path(&ctx, &y, &last.shares, last.soft_max, eps);
    iterations += steps;
    if let Some((y, shares, lambda, eps)) = &path {
        candidates.push(central_point(&ctx, y, shares, *lambda));
        if let Some((y, shares, lambda)) = polish(&ctx, y, shares, *lambda, *eps) {
            candidates.push(central_point(&ctx, &y, &shares, lambda));
        }
    }
    if let Some((y2, shares, lambda)) = polish(&ctx, &y, &last.shares, last.soft_max, eps) {
        candidates.push(central_point(&ctx, &y2, &shares, lambda));
    }
    let shares = correct_shares(&y, eps, &last);
    candidates.push(central_point(&ctx, &y, &shares, last.soft_max));
    let mut report = None;
    for (alloc, duals) in candidates.into_iter().flatten() {
        let alloc = restore(p, &alloc, opts).unwrap_or(alloc);
        let r = SolveReport::build(
            p,
            SolveStatus::Optimal,
            finish_allocation(p, alloc),
            duals,
            iterations,
        )
        .certify(p, opts);
        if r.status == SolveStatus::Optimal {
            return r;
        }
        log::debug!("dual point failed certification, kkt {:e}", r.kkt_residual);
        report.get_or_insert(r);
    }
    report.unwrap_or_else(|| {
        let mut r = SolveReport::infeasible(p, iterations);
        r.status = SolveStatus::MaxIterations;
        r
    })
}

/// Near the end of the path the shares are far more sensitive to the
/// multipliers than double precision can resolve, so the constraint values
/// are off by much more than `ε`. With the closed-form choices fixed they are
/// affine in the shares: the smallest share-weighted change that puts every
/// active row exactly on its central slack `ε / y` (and keeps the used time) fixes that.
fn correct_shares<T: Real>(y: &[T], eps: T, at: &Smoothed<T>) -> Vec<T> {
    let rows: Vec<usize> = (0..y.len())
        .filter(|&i| eps / y[i] < T::lit(1e-6))
        .collect();
    let ns = at.shares.len();
    // Row r of A: column coefficients of constraint rows[r], then the time row.
    let coeff = |r: usize, s: usize| {
        if r < rows.len() {
            at.columns[s][rows[r]]
        } else {
            T::one()
        }
    };
    let m = rows.len() + 1;
    let mut rhs: Vec<T> = rows
        .iter()
        .map(|&i| -(at.grad[i]))
        .collect();
    rhs.push(T::zero());
    // The gradient already includes the barrier term, so -grad is the distance to the central slack.
    let mut gram = SquareMatrix::zeros(m);
    for a in 0..m {
        for b in 0..m {
            let v: T = (0..ns)
                .map(|s| at.shares[s] * coeff(a, s) * coeff(b, s))
                .sum();
            gram.add(a, b, v);
        }
    }
    let Some(lambda) = gram.regularized_solve(&rhs) else {
        return at.shares.clone();
    };
    (0..ns)
        .map(|s| {
            let delta: T = (0..m).map(|r| coeff(r, s) * lambda[r]).sum();
            (at.shares[s] * (T::one() + delta)).pos()
        })
        .collect()
}

/// Follows the central path of the inner barrier problem with the slot times
/// as unknowns: `λ − ĉ_s − ε/t_s = 0` per slot, `G_i − ε/y_i = 0` per
/// dualized row and `1 − Σ t − ε/λ = 0`, in logarithmic variables. Each
/// row stays of order one whether or not its constraint ends up active,
/// which the dual phase loses as `ε → 0`. Returns the last point reached and its `ε`.
fn follow_path<T: Real>(
    ctx: &Context<'_, T>,
    y0: &[T],
    shares0: &[T],
    lambda0: T,
    eps0: T,
) -> (Option<(Vec<T>, Vec<T>, T, T)>, usize) {
    let p = ctx.problem;
    let sc = &ctx.sc;
    let (m, ns) = (y0.len(), shares0.len());
    let floor = T::lit(1e-300);
    let mut u: Vec<T> = y0.iter().map(|&v| v.max(floor).ln()).collect();
    u.extend(shares0.iter().map(|&t| t.max(floor).ln()));
    u.push(lambda0.max(floor).ln());
    let unpack = |u: &[T]| {
        let exp = |v: T| v.min(T::lit(60.0)).exp();
        let y: Vec<T> = u[..m].iter().map(|&v| exp(v)).collect();
        let t: Vec<T> = u[m..m + ns].iter().map(|&v| exp(v)).collect();
        (y, t, exp(u[m + ns]))
    };
    let residual = |u: &[T], eps: T| -> Option<Vec<T>> {
        let (y, t, lambda) = unpack(u);
        let (d, choices) = ctx.choices_at(&y)?;
        let prices = time_prices(&d, p).ok()?;
        let g = ctx.constraints(&ctx.allocation(&choices, &ctx.timed(&t)));
        let mut r = Vec::with_capacity(m + ns + 1);
        for (j, &(k, active)) in ctx.slots.iter().enumerate() {
            let c = if active {
                prices[k].active?
            } else {
                prices[k].backcom
            };
            r.push(lambda - c * sc.time / sc.lagrangian - eps / t[j]);
        }
        r.extend((0..m).map(|i| g[i] - eps / y[i]));
        r.push(T::one() - t.iter().copied().sum::<T>() - eps / lambda);
        r.iter().all(|v| v.is_finite()).then_some(r)
    };
    // Recenter at the starting weight, then shrink it; a failed stage is
    // retried with a gentler reduction.
    let target = T::lit(10f64.powi(-(DUAL_STAGES + PATH_STAGES)));
    let mut eps = eps0;
    let mut factor = T::one();
    let mut reached = None;
    let mut steps = 0;
    while steps < 40 {
        let trial_eps = eps * factor;
        let big = vec![T::lit(1e6); m + ns + 1];
        let (next, err) = levenberg_marquardt(u.clone(), 60, trial_eps * T::lit(1e-3), |u| {
            residual(u, trial_eps).unwrap_or_else(|| big.clone())
        });
        steps += 1;
        log::trace!("path eps {trial_eps:e} residual {err:e}");
        if err <= trial_eps * T::lit(0.1) {
            u = next;
            eps = trial_eps;
            let (y, t, lambda) = unpack(&u);
            reached = Some((y, t, lambda, eps));
            if eps <= target {
                break;
            }
            factor = if factor >= T::one() {
                T::lit(0.1)
            } else {
                (factor * factor).max(T::lit(0.01))
            };
        } else if factor >= T::one() {
            // The start cannot be recentered.
            break;
        } else {
            factor = factor.sqrt();
            if factor > T::lit(0.9) {
                break;
            }
        }
    }
    (reached, steps)
}

/// Solves the exact (`ε = 0`) optimality system on the active set read off
/// the end of the path: every used slot earns the time price ϑ₀, every
/// active row is tight, and the block is full when ϑ₀ > 0. Returns the
/// multipliers, the slot shares and the scaled ϑ₀.
fn polish<T: Real>(
    ctx: &Context<'_, T>,
    y: &[T],
    shares0: &[T],
    lambda0: T,
    eps: T,
) -> Option<(Vec<T>, Vec<T>, T)> {
    let p = ctx.problem;
    let sc = &ctx.sc;
    let rows: Vec<usize> = (0..y.len())
        .filter(|&i| eps / y[i] < T::lit(1e-6))
        .collect();
    let support: Vec<usize> = (0..shares0.len())
        .filter(|&s| shares0[s] > T::lit(1e-9))
        .collect();
    let idle = T::one() - shares0.iter().copied().sum::<T>();
    let time = idle < T::lit(1e-6);
    let (nr, ns) = (rows.len(), support.len());

    let mut u: Vec<T> = rows.iter().map(|&i| y[i].ln()).collect();
    u.extend(support.iter().map(|&s| shares0[s].ln()));
    if time {
        u.push(lambda0.max(T::lit(1e-12)).ln());
    }
    let unpack = |u: &[T]| {
        let mut full: Vec<T> = y
            .iter()
            .zip(0..)
            .map(|(_, i)| if rows.contains(&i) { T::one() } else { T::zero() })
            .collect();
        for (j, &i) in rows.iter().enumerate() {
            full[i] = u[j].min(T::lit(60.0)).exp();
        }
        let mut shares = vec![T::zero(); shares0.len()];
        for (j, &s) in support.iter().enumerate() {
            shares[s] = u[nr + j].min(T::lit(5.0)).exp();
        }
        let vt = if time {
            u[nr + ns].min(T::lit(60.0)).exp()
        } else {
            T::zero()
        };
        (full, shares, vt)
    };
    let eval = |u: &[T]| -> Option<Vec<T>> {
        let (full, shares, vt) = unpack(u);
        let (d, choices) = ctx.choices_at(&full)?;
        let prices = time_prices(&d, p).ok()?;
        let alloc = ctx.allocation(&choices, &ctx.timed(&shares));
        let g = ctx.constraints(&alloc);
        let mut r: Vec<T> = support
            .iter()
            .map(|&s| {
                let (k, active) = ctx.slots[s];
                let c = if active {
                    prices[k].active
                } else {
                    Some(prices[k].backcom)
                };
                c.map(|c| c * sc.time / sc.lagrangian - vt)
            })
            .collect::<Option<_>>()?;
        r.extend(rows.iter().map(|&i| g[i]));
        if time {
            r.push(shares.iter().copied().sum::<T>() - T::one());
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    };
    let m = u.len();
    let (u, err) = levenberg_marquardt(u, 100, T::lit(1e-14), |u| {
        eval(u).unwrap_or_else(|| vec![T::lit(1e6); m])
    });
    if !(err <= T::lit(1e-11)) {
        log::trace!("KKT polish stopped at {err:e}");
        return None;
    }
    let (full, shares, vt) = unpack(&u);
    Some((full, shares, vt))
}

/// Primal point and full multiplier set at a point of the smoothed path.
fn central_point<T: Real>(
    ctx: &Context<'_, T>,
    y: &[T],
    shares: &[T],
    soft_max: T,
) -> Option<(Allocation<T>, DualState<T>)> {
    let p = ctx.problem;
    let s = &p.scenario;
    let (mut d, choices) = ctx.choices_at(y)?;
    let alloc = ctx.allocation(&choices, &ctx.timed(shares));
    d.vartheta0 = soft_max * ctx.sc.lagrangian / ctx.sc.time;
    for k in 0..s.num_eus() {
        let eu = &s.eus[k];
        let weight = eu.weight + d.theta[k];
        let tau = p.exec_time(k);
        if !p.pinning.local && choices[k].2 >= eu.f_max {
            let f = eu.f_max;
            d.phi[k] = (weight * tau / s.cycles_per_bit
                - T::lit(3.0) * d.mu[k] * eu.capacitance * f * f * tau)
                .pos();
        }
        if !p.pinning.share && choices[k].0 >= T::one() {
            let slope_rate = rate_curve(s.bandwidth, s.backcom_snr_gain(k), T::one()).slope;
            let slope_harvest = backcom_harvest_curve(s, k, T::one()).slope;
            d.vartheta[k] = (weight * slope_rate + d.mu[k] * slope_harvest).pos();
        }
    }
    Some((alloc, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{restrict, SchemeTag};
    use crate::scenario::default_scenario;
    use crate::solver::solve_reference;

    #[test]
    fn default_scenario_matches_reference() {
        let s = default_scenario::<f64>();
        let opts = SolveOptions::default();
        for scheme in SchemeTag::ALL {
            let p = restrict(&s, scheme);
            let d = solve_dual(&p, &opts);
            let r = solve_reference(&p, &opts);
            eprintln!(
                "{scheme}: dual {:?} {:.9e} kkt {:e} it {} | ref {:?} {:.9e} kkt {:e}",
                d.status,
                d.objective,
                d.kkt_residual,
                d.iterations,
                r.status,
                r.objective,
                r.kkt_residual
            );
            assert_eq!(d.status, SolveStatus::Optimal);
            assert!((d.objective - r.objective).abs() <= 1e-4 * r.objective.max(1.0));
        }
    }

    #[test]
    fn infeasible_l_min_is_detected() {
        let s = default_scenario::<f64>().with_uniform_l_min(1e7);
        let r = solve_dual(&restrict(&s, SchemeTag::Proposed), &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Infeasible);
    }
}
