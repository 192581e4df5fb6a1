//! Closed-form maximizers of the Lagrangian for fixed multipliers, the
//! per-second time prices they induce, and the single-constraint time LP.

use thiserror::Error;

use super::DualState;
use crate::num::Real;
use crate::phys::{backcom_harvest_curve, rate_curve};
use crate::problem::Problem;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ClosedFormError {
    /// With `μ_k = 0` the transmit power maximizing the Lagrangian is unbounded.
    #[error("eus[{eu}]: energy price μ is zero, transmit power is unbounded")]
    ZeroEnergyPrice { eu: usize },
}

/// CPU frequency maximizing the Lagrangian,
/// `[√(((w+θ)τ − φ C) / (3 μ ε τ C))]⁺` with `τ = T` after the execution-time
/// reduction.
///
/// With `μ_k = 0` the Lagrangian is non-decreasing in `f`, so `f_max` is
/// returned when the numerator is positive and `φ_k` is left to enforce the cap.
pub fn optimal_frequency<T: Real>(duals: &DualState<T>, k: usize, problem: &Problem<T>) -> T {
    if problem.pinning.local {
        return T::zero();
    }
    let s = &problem.scenario;
    let eu = &s.eus[k];
    let tau = problem.exec_time(k);
    let numerator = duals.effective_weight(problem, k) * tau - duals.phi[k] * s.cycles_per_bit;
    if numerator <= T::zero() || tau <= T::zero() {
        return T::zero();
    }
    if duals.mu[k] <= T::zero() {
        return eu.f_max;
    }
    (numerator / (T::lit(3.0) * duals.mu[k] * eu.capacitance * tau * s.cycles_per_bit)).sqrt()
}

/// Transmit power maximizing the Lagrangian, `[(w+θ) B / (μ ln 2) − B σ² / h]⁺`.
pub fn optimal_power<T: Real>(
    duals: &DualState<T>,
    k: usize,
    scenario: &Scenario<T>,
) -> Result<T, ClosedFormError> {
    let weight = scenario.eus[k].weight + duals.theta[k];
    let mu = duals.mu[k];
    if mu <= T::zero() {
        return Err(ClosedFormError::ZeroEnergyPrice { eu: k });
    }
    let b = scenario.bandwidth;
    Ok((weight * b / (mu * T::LN_2()) - scenario.noise_power() / scenario.eus[k].h).pos())
}

/// Coefficients of `A α² − B α + D = 0`, the stationarity condition of the
/// Lagrangian in the reflection coefficient after clearing denominators.
///
/// `G = P_t g`. The harvest derivative carries a factor `G` from the chain rule
/// through `(1 − α) G`, so it appears in the `μ` terms of both `B` and `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients<T> {
    pub a: T,
    pub b: T,
    pub d: T,
}

impl<T: Real> QuadraticCoefficients<T> {
    pub fn discriminant(&self) -> T {
        self.b * self.b - T::lit(4.0) * self.a * self.d
    }
}

pub fn reflection_coefficients<T: Real>(
    duals: &DualState<T>,
    k: usize,
    scenario: &Scenario<T>,
) -> QuadraticCoefficients<T> {
    let eu = &scenario.eus[k];
    let weight = eu.weight + duals.theta[k];
    let mu = duals.mu[k];
    let g = scenario.incident_power(k);
    let v = eu.eh.v;
    let cvd = eu.eh.gain_numerator();
    let xi = scenario.backcom_gap;
    let bw = scenario.bandwidth;
    let wbxh = weight * bw * xi * eu.h / T::LN_2();
    let two = T::lit(2.0);
    let a = wbxh * g * g * g;
    let b = two * a + two * wbxh * g * g * v + xi * mu * cvd * g * g * eu.h;
    let d = a + wbxh * g * v * v + two * wbxh * g * g * v - mu * cvd * scenario.noise_power() * g;
    QuadraticCoefficients { a, b, d }
}

/// Per-second Lagrangian terms that depend on the reflection coefficient,
/// `(w+θ) R^b(α) + μ F((1−α) P_t g) − ϑ_k α`.
pub fn reflection_objective<T: Real>(
    duals: &DualState<T>,
    k: usize,
    scenario: &Scenario<T>,
    alpha: T,
) -> T {
    let weight = scenario.eus[k].weight + duals.theta[k];
    let rate = rate_curve(scenario.bandwidth, scenario.backcom_snr_gain(k), alpha).value;
    let harvest = backcom_harvest_curve(scenario, k, alpha).value;
    weight * rate + duals.mu[k] * harvest - duals.vartheta[k] * alpha
}

/// How [`optimal_reflection`] arrived at its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectionRoute {
    /// `ϑ_k > 0`: the share constraint is active, `α = 1`.
    ShareActive,
    /// Smaller root of the quadratic, clipped to `[0, 1]`.
    Root,
    /// Smaller root exceeded 1 and was clamped.
    ClampedAboveOne,
    /// `A ≈ 0`: the linear equation `−B α + D = 0` was solved.
    Linear,
    /// Negative discriminant: 1-D numerical maximization was used.
    NumericalFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionChoice<T> {
    pub alpha: T,
    pub route: ReflectionRoute,
}

/// Reflection coefficient maximizing the Lagrangian: 1 when `ϑ_k > 0`,
/// otherwise the smaller root of the stationarity quadratic clipped to `[0, 1]`.
pub fn optimal_reflection<T: Real>(
    duals: &DualState<T>,
    k: usize,
    scenario: &Scenario<T>,
) -> ReflectionChoice<T> {
    if duals.vartheta[k] > T::zero() {
        return ReflectionChoice {
            alpha: T::one(),
            route: ReflectionRoute::ShareActive,
        };
    }
    let q = reflection_coefficients(duals, k, scenario);
    if q.d <= T::zero() {
        return ReflectionChoice {
            alpha: T::zero(),
            route: ReflectionRoute::Root,
        };
    }
    let scale = q.b * q.b;
    let mut disc = q.discriminant();
    if disc < T::zero() {
        if disc >= -T::lit(1e-9) * scale {
            disc = T::zero();
        } else {
            log::debug!("eus[{k}]: negative reflection discriminant {disc:e}, using 1-D search");
            return ReflectionChoice {
                alpha: golden_section_max(|a| reflection_objective(duals, k, scenario, a)),
                route: ReflectionRoute::NumericalFallback,
            };
        }
    }
    let (root, route) = if q.a <= T::lit(1e-14) * q.b.abs() {
        (q.d / q.b, ReflectionRoute::Linear)
    } else {
        // Smaller root in the cancellation-free form 2D / (B + √disc).
        (
            T::lit(2.0) * q.d / (q.b + disc.sqrt()),
            ReflectionRoute::Root,
        )
    };
    if root > T::one() {
        log::trace!("eus[{k}]: smaller reflection root {root:e} exceeds 1, clamping");
        return ReflectionChoice {
            alpha: T::one(),
            route: ReflectionRoute::ClampedAboveOne,
        };
    }
    ReflectionChoice {
        alpha: root.pos(),
        route,
    }
}

/// Maximizer of a concave function on `[0, 1]`.
pub(crate) fn golden_section_max<T: Real>(f: impl Fn(T) -> T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = (lo + hi) / T::lit(2.0);
    // The end points win for monotone functions.
    [T::zero(), mid, T::one()]
        .into_iter()
        .map(|a| (a, f(a)))
        .fold((mid, T::neg_infinity()), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
        .0
}

/// Marginal Lagrangian value per second of each time variable, with the
/// per-second decisions at their closed-form optima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePrice<T> {
    /// Coefficient of `t_k^b`.
    pub backcom: T,
    /// Coefficient of `t_k^a`; `None` when active transmission is pinned off.
    pub active: Option<T>,
}

/// Linear coefficients of the Lagrangian in `(t_k^b, t_k^a)`.
///
/// Substituting `x_k = α_k* t_k^b` and `P_k = p_k* t_k^a` makes every term
/// homogeneous of degree one in the times:
///
/// * `c_b,k = (w+θ) R^b(α*) + μ_k F((1−α*) P_t g_k) + Σ_{i≠k} μ_i P_i^h − μ_k P_c,k − ϑ₀ + ϑ_k (1 − α*)`
/// * `c_a,k = (w+θ) R^a(p*) − μ_k (p* + p_c,k) − ϑ₀`
///
/// where `R^b`, `R^a` are the per-second rates.
pub fn time_prices<T: Real>(
    duals: &DualState<T>,
    problem: &Problem<T>,
) -> Result<Vec<TimePrice<T>>, ClosedFormError> {
    let s = &problem.scenario;
    let n = s.num_eus();
    let idle: Vec<T> = (0..n)
        .map(|i| duals.mu[i] * s.idle_harvest_power(i))
        .collect();
    let idle_total: T = idle.iter().copied().sum();
    (0..n)
        .map(|k| {
            let eu = &s.eus[k];
            let weight = eu.weight + duals.theta[k];
            let mu = duals.mu[k];
            let alpha = if problem.pinning.share {
                T::zero()
            } else {
                optimal_reflection(duals, k, s).alpha
            };
            let rate_b = rate_curve(s.bandwidth, s.backcom_snr_gain(k), alpha).value;
            let harvest_b = backcom_harvest_curve(s, k, alpha).value;
            let backcom = weight * rate_b + mu * harvest_b + (idle_total - idle[k])
                - mu * eu.backcom_circuit_power
                - duals.vartheta0
                + duals.vartheta[k] * (T::one() - alpha);
            let active = if problem.pinning.active {
                None
            } else {
                let p = optimal_power(duals, k, s)?;
                let rate_a = rate_curve(s.bandwidth, s.at_snr_gain(k), p).value;
                Some(weight * rate_a - mu * (p + eu.at_circuit_power) - duals.vartheta0)
            };
            Ok(TimePrice { backcom, active })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeAllocation<T> {
    pub t_b: Vec<T>,
    pub t_a: Vec<T>,
}

/// Maximizes `Σ (c_b,k t_b,k + c_a,k t_a,k)` subject to `Σ (t_b + t_a) ≤ T`, `t ≥ 0`.
///
/// With a single budget row the simplex method terminates at a vertex: the
/// whole block goes to a largest positive coefficient, or nothing is
/// allocated. Ties go to the lowest EU index, BackCom before AT.
pub fn time_allocation_lp<T: Real>(prices: &[TimePrice<T>], block_length: T) -> TimeAllocation<T> {
    let n = prices.len();
    let mut out = TimeAllocation {
        t_b: vec![T::zero(); n],
        t_a: vec![T::zero(); n],
    };
    let mut best: Option<(usize, bool, T)> = None;
    for (k, p) in prices.iter().enumerate() {
        for (is_active, c) in [(false, Some(p.backcom)), (true, p.active)] {
            let Some(c) = c else { continue };
            if c > T::zero() && best.is_none_or(|(_, _, b)| c > b) {
                best = Some((k, is_active, c));
            }
        }
    }
    if let Some((k, is_active, _)) = best {
        if is_active {
            out.t_a[k] = block_length;
        } else {
            out.t_b[k] = block_length;
        }
    }
    out
}
