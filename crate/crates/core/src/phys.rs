//! Physical-layer formulas: harvested power and energy, BackCom and AT
//! throughput in their perspective forms, and local computing.
//!
//! Every perspective function `t·φ(y/t)` is defined as 0 at `t = 0`.

use crate::num::{nonneg, Real, ROUNDOFF};
use crate::problem::Allocation;
use crate::scenario::{EhParams, Scenario};

/// Harvested DC power for RF input `p_in`, `(c p + d)/(p + v) − d/v`.
///
/// Evaluated as `p (c v − d) / (v (p + v))`, which is the same expression
/// without the cancellation at small `p`. Panics on negative input.
#[inline]
#[track_caller]
pub fn harvested_power<T: Real>(p_in: T, eh: &EhParams<T>) -> T {
    let p = nonneg(p_in, "harvested_power input");
    p * eh.gain_numerator() / (eh.v * (p + eh.v))
}

/// `dF/dp = (c v − d) / (p + v)²`.
#[inline]
pub fn harvested_power_slope<T: Real>(p_in: T, eh: &EhParams<T>) -> T {
    let s = p_in + eh.v;
    eh.gain_numerator() / (s * s)
}

/// `d²F/dp² = −2 (c v − d) / (p + v)³`.
#[inline]
pub fn harvested_power_curvature<T: Real>(p_in: T, eh: &EhParams<T>) -> T {
    let s = p_in + eh.v;
    -T::lit(2.0) * eh.gain_numerator() / (s * s * s)
}

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curve<T> {
    pub value: T,
    pub slope: T,
    pub curvature: T,
}

/// `B log₂(1 + gain·u)` and its derivatives in `u`.
#[inline]
pub fn rate_curve<T: Real>(bandwidth: T, gain: T, u: T) -> Curve<T> {
    let ln2 = T::LN_2();
    let q = T::one() + gain * u;
    Curve {
        value: bandwidth * (gain * u).ln_1p() / ln2,
        slope: bandwidth * gain / (q * ln2),
        curvature: -bandwidth * gain * gain / (q * q * ln2),
    }
}

/// Per-second harvested power of EU `k` while it backscatters with reflection
/// coefficient `alpha`, `F((1 − α) P_t g)`, with derivatives in `alpha`.
#[inline]
pub fn backcom_harvest_curve<T: Real>(scenario: &Scenario<T>, k: usize, alpha: T) -> Curve<T> {
    let incident = scenario.incident_power(k);
    let eh = &scenario.eus[k].eh;
    let p = nonneg(T::one() - alpha, "1 - reflection coefficient") * incident;
    Curve {
        value: harvested_power(p, eh),
        slope: -incident * harvested_power_slope(p, eh),
        curvature: incident * incident * harvested_power_curvature(p, eh),
    }
}

/// `t·φ(y/t)` with gradient and Hessian with respect to `(y, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveEval<T> {
    pub value: T,
    pub d_num: T,
    pub d_time: T,
    pub h_num_num: T,
    pub h_num_time: T,
    pub h_time_time: T,
}

impl<T: Real> PerspectiveEval<T> {
    fn zero() -> Self {
        Self {
            value: T::zero(),
            d_num: T::zero(),
            d_time: T::zero(),
            h_num_num: T::zero(),
            h_num_time: T::zero(),
            h_time_time: T::zero(),
        }
    }
}

/// Evaluates the perspective of `curve` at `(num, time)`.
///
/// At `time = 0` the value is the continuity limit 0 and the derivatives are
/// reported as 0; callers must not use them there.
pub fn perspective<T: Real>(num: T, time: T, curve: impl Fn(T) -> Curve<T>) -> PerspectiveEval<T> {
    if time <= T::zero() {
        return PerspectiveEval::zero();
    }
    let u = num / time;
    let c = curve(u);
    let k = c.curvature / time;
    PerspectiveEval {
        value: time * c.value,
        d_num: c.slope,
        d_time: c.value - u * c.slope,
        h_num_num: k,
        h_num_time: -k * u,
        h_time_time: k * u * u,
    }
}

/// Reflection share `x / t_b` in `[0, 1]`; panics if `x` exceeds `t_b`
/// beyond round-off.
#[inline]
#[track_caller]
pub(crate) fn share_ratio<T: Real>(x: T, t_b: T) -> T {
    let x = nonneg(x, "backscatter share x");
    let slack = T::lit(ROUNDOFF) * (T::one() + t_b);
    assert!(
        x <= t_b + slack,
        "backscatter share x = {x:e} exceeds t_b = {t_b:e}"
    );
    (x / t_b).min(T::one())
}

/// Energy EU `k` harvests during its own backscatter slot, `N^b(x, t_b)`.
#[track_caller]
pub fn backcom_harvest_energy<T: Real>(x: T, t_b: T, pb_power: T, g: T, eh: &EhParams<T>) -> T {
    let t_b = nonneg(t_b, "t_b");
    if t_b == T::zero() {
        return T::zero();
    }
    let alpha = share_ratio(x, t_b);
    harvested_power((T::one() - alpha) * pb_power * g, eh) * t_b
}

/// Bits EU `k` offloads by backscatter, `t_b B log₂(1 + ξ x P_t g h / (t_b B σ²))`.
#[track_caller]
pub fn backcom_bits<T: Real>(x: T, t_b: T, scenario: &Scenario<T>, k: usize) -> T {
    let t_b = nonneg(t_b, "t_b");
    if t_b == T::zero() {
        return T::zero();
    }
    let alpha = share_ratio(x, t_b);
    t_b * rate_curve(scenario.bandwidth, scenario.backcom_snr_gain(k), alpha).value
}

/// Bits EU `k` offloads by active transmission with energy `P = p t_a`,
/// `t_a B log₂(1 + P h / (t_a B σ²))`.
#[track_caller]
pub fn at_bits<T: Real>(energy: T, t_a: T, scenario: &Scenario<T>, k: usize) -> T {
    let t_a = nonneg(t_a, "t_a");
    let energy = nonneg(energy, "transmit energy P");
    if t_a == T::zero() {
        return T::zero();
    }
    t_a * rate_curve(scenario.bandwidth, scenario.at_snr_gain(k), energy / t_a).value
}

/// `τ f / C_cpu`.
#[inline]
pub fn local_bits<T: Real>(freq: T, exec_time: T, cycles_per_bit: T) -> T {
    exec_time * freq / cycles_per_bit
}

/// `ε f³ τ`.
#[inline]
pub fn local_energy<T: Real>(freq: T, exec_time: T, capacitance: T) -> T {
    capacitance * freq * freq * freq * exec_time
}

/// Energy harvested by one EU over the first phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget<T> {
    /// Harvested during the EU's own backscatter slot.
    pub backcom_harvest: T,
    /// Harvested while the other EUs backscatter.
    pub idle_harvest: T,
    pub total: T,
}

/// Total harvested energy of EU `k`, `N^b + P^h (Σ_i t_i^b − t_k^b)`.
#[track_caller]
pub fn total_harvest<T: Real>(
    alloc: &Allocation<T>,
    k: usize,
    scenario: &Scenario<T>,
) -> EnergyBudget<T> {
    let own = &alloc.eus[k];
    let eu = &scenario.eus[k];
    let backcom_harvest = backcom_harvest_energy(own.x, own.t_b, scenario.pb_power, eu.g, &eu.eh);
    let others: T = alloc
        .eus
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, a)| nonneg(a.t_b, "t_b"))
        .sum();
    let idle_harvest = scenario.idle_harvest_power(k) * others;
    EnergyBudget {
        backcom_harvest,
        idle_harvest,
        total: backcom_harvest + idle_harvest,
    }
}
