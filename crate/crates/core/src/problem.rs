//! Problem representation: allocations, objective, constraint residuals and
//! the benchmark-scheme restrictions.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::num::Real;
use crate::phys::{at_bits, backcom_bits, local_bits, local_energy, total_harvest};
use crate::scenario::Scenario;

/// Decision variables of one EU in the convex (auxiliary-variable) form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuAllocation<T> {
    /// Backscatter time, seconds.
    pub t_b: T,
    /// Reflection share `α t_b`, seconds.
    pub x: T,
    /// Active transmission time, seconds.
    pub t_a: T,
    /// Transmit energy `p t_a`, joules.
    pub energy: T,
    /// CPU frequency, hertz.
    pub freq: T,
    /// Local execution time, seconds.
    pub exec_time: T,
}

impl<T: Real> EuAllocation<T> {
    pub fn zero() -> Self {
        Self {
            t_b: T::zero(),
            x: T::zero(),
            t_a: T::zero(),
            energy: T::zero(),
            freq: T::zero(),
            exec_time: T::zero(),
        }
    }

    /// Reflection coefficient `α = x / t_b` (0 when `t_b = 0`).
    pub fn reflection(&self) -> T {
        if self.t_b > T::zero() {
            (self.x / self.t_b).min(T::one())
        } else {
            T::zero()
        }
    }

    /// Transmit power `p = P / t_a` (0 when `t_a = 0`).
    pub fn power(&self) -> T {
        if self.t_a > T::zero() {
            self.energy / self.t_a
        } else {
            T::zero()
        }
    }
}

/// Full decision vector, one entry per EU in roster order.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    pub eus: Vec<EuAllocation<T>>,
}

impl<T: Real> Allocation<T> {
    pub fn zeros(num_eus: usize) -> Self {
        Self {
            eus: vec![EuAllocation::zero(); num_eus],
        }
    }

    /// `Σ_k (t_k^b + t_k^a)`.
    pub fn total_time(&self) -> T {
        self.eus.iter().map(|a| a.t_b + a.t_a).sum()
    }

    /// Checks the type-level invariants: non-negative fields, `x ≤ t_b`,
    /// `τ ≤ T` and `f ≤ f_max`, each with absolute slack `slack`.
    pub fn check_invariants(
        &self,
        scenario: &Scenario<T>,
        slack: T,
    ) -> Result<(), AllocationError> {
        if self.eus.len() != scenario.num_eus() {
            return Err(AllocationError::Length {
                expected: scenario.num_eus(),
                got: self.eus.len(),
            });
        }
        for (k, (a, eu)) in self.eus.iter().zip(&scenario.eus).enumerate() {
            let fields = [
                ("t_b", a.t_b),
                ("x", a.x),
                ("t_a", a.t_a),
                ("energy", a.energy),
                ("freq", a.freq),
                ("exec_time", a.exec_time),
            ];
            for (field, value) in fields {
                if !value.is_finite() || value < -slack {
                    return Err(AllocationError::Negative {
                        eu: k,
                        field,
                        value: value.to_f64_lossy(),
                    });
                }
            }
            if a.x > a.t_b + slack {
                return Err(AllocationError::ShareExceedsTime { eu: k });
            }
            if a.exec_time > scenario.block_length + slack {
                return Err(AllocationError::ExecTimeExceedsBlock { eu: k });
            }
            if a.freq > eu.f_max * (T::one() + slack) {
                return Err(AllocationError::FrequencyCap { eu: k });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("allocation has {got} EUs, scenario has {expected}")]
    Length { expected: usize, got: usize },
    #[error("eus[{eu}].{field} = {value} is negative or not finite")]
    Negative {
        eu: usize,
        field: &'static str,
        value: f64,
    },
    #[error("eus[{eu}]: backscatter share x exceeds t_b")]
    ShareExceedsTime { eu: usize },
    #[error("eus[{eu}]: execution time exceeds the block length")]
    ExecTimeExceedsBlock { eu: usize },
    #[error("eus[{eu}]: frequency exceeds f_max")]
    FrequencyCap { eu: usize },
}

/// Bits of one EU split by route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuBits<T> {
    pub backcom: T,
    pub at: T,
    pub local: T,
}

impl<T: Real> EuBits<T> {
    pub fn total(&self) -> T {
        self.backcom + self.at + self.local
    }
}

pub fn eu_bits<T: Real>(alloc: &Allocation<T>, scenario: &Scenario<T>, k: usize) -> EuBits<T> {
    let a = &alloc.eus[k];
    EuBits {
        backcom: backcom_bits(a.x, a.t_b, scenario, k),
        at: at_bits(a.energy, a.t_a, scenario, k),
        local: local_bits(a.freq, a.exec_time, scenario.cycles_per_bit),
    }
}

/// Energy EU `k` spends: circuits, transmit energy and local computing.
pub fn eu_consumption<T: Real>(alloc: &Allocation<T>, scenario: &Scenario<T>, k: usize) -> T {
    let a = &alloc.eus[k];
    let eu = &scenario.eus[k];
    eu.backcom_circuit_power * a.t_b
        + a.energy
        + eu.at_circuit_power * a.t_a
        + local_energy(a.freq, a.exec_time, eu.capacitance)
}

/// Weighted sum computation bits, `Σ_k w_k (R^b + R^a + R^e)`.
pub fn objective<T: Real>(alloc: &Allocation<T>, scenario: &Scenario<T>) -> T {
    (0..scenario.num_eus())
        .map(|k| scenario.eus[k].weight * eu_bits(alloc, scenario, k).total())
        .sum()
}

/// Signed constraint residuals; a constraint holds when its residual is ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals<T> {
    /// `L_min,k − bits_k`.
    pub bits_shortfall: Vec<T>,
    /// Consumption minus total harvested energy, joules.
    pub energy_deficit: Vec<T>,
    /// `Σ (t_b + t_a) − T`, seconds.
    pub time_excess: T,
}

pub fn residuals<T: Real>(alloc: &Allocation<T>, scenario: &Scenario<T>) -> ConstraintResiduals<T> {
    let k_range = 0..scenario.num_eus();
    ConstraintResiduals {
        bits_shortfall: k_range
            .clone()
            .map(|k| scenario.eus[k].l_min - eu_bits(alloc, scenario, k).total())
            .collect(),
        energy_deficit: k_range
            .map(|k| eu_consumption(alloc, scenario, k) - total_harvest(alloc, k, scenario).total)
            .collect(),
        time_excess: alloc.total_time() - scenario.block_length,
    }
}

/// Per-constraint feasibility tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Bits slack is `bits_rel · max(L_min, 1)`.
    pub bits_rel: T,
    /// Joules.
    pub energy: T,
    /// Seconds.
    pub time: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            bits_rel: T::lit(1e-6),
            energy: T::lit(1e-12),
            time: T::lit(1e-12),
        }
    }
}

/// True iff the allocation invariants hold and every residual is within tolerance.
pub fn is_feasible<T: Real>(
    alloc: &Allocation<T>,
    scenario: &Scenario<T>,
    tol: &Tolerances<T>,
) -> bool {
    if alloc.check_invariants(scenario, tol.time).is_err() {
        return false;
    }
    let r = residuals(alloc, scenario);
    let bits_ok = r
        .bits_shortfall
        .iter()
        .zip(&scenario.eus)
        .all(|(&s, eu)| s <= tol.bits_rel * eu.l_min.max(T::one()));
    let energy_ok = r.energy_deficit.iter().all(|&e| e <= tol.energy);
    bits_ok && energy_ok && r.time_excess <= tol.time
}

/// The proposed scheme and the four benchmark schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeTag {
    Proposed,
    CompleteOffloading,
    FullyLocal,
    PureBackscatter,
    PureHtt,
}

impl SchemeTag {
    pub const ALL: [SchemeTag; 5] = [
        SchemeTag::Proposed,
        SchemeTag::CompleteOffloading,
        SchemeTag::FullyLocal,
        SchemeTag::PureBackscatter,
        SchemeTag::PureHtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeTag::Proposed => "proposed",
            SchemeTag::CompleteOffloading => "complete-offloading",
            SchemeTag::FullyLocal => "fully-local",
            SchemeTag::PureBackscatter => "pure-backscatter",
            SchemeTag::PureHtt => "pure-htt",
        }
    }

    /// Variables pinned to zero by the scheme.
    pub fn pinning(self) -> Pinning {
        let none = Pinning::default();
        match self {
            SchemeTag::Proposed => none,
            SchemeTag::CompleteOffloading => Pinning {
                local: true,
                ..none
            },
            // Phase-1 time remains as pure EH time so the EUs have energy to compute with.
            SchemeTag::FullyLocal => Pinning {
                share: true,
                active: true,
                ..none
            },
            SchemeTag::PureBackscatter => Pinning {
                active: true,
                ..none
            },
            SchemeTag::PureHtt => Pinning {
                share: true,
                ..none
            },
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown scheme `{0}`")]
pub struct UnknownScheme(pub String);

impl FromStr for SchemeTag {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        SchemeTag::ALL
            .into_iter()
            .find(|tag| tag.name() == key)
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// Which variable groups a restriction pins to zero. `t_b` is never pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pinning {
    /// `x = 0` (α = 0): phase-1 time is pure EH time.
    pub share: bool,
    /// `t_a = P = 0`.
    pub active: bool,
    /// `f = 0`.
    pub local: bool,
}

/// How the local execution times are treated.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecutionTime<T> {
    /// `τ_k` is a decision variable (the original formulation).
    Free,
    /// `τ_k` fixed per EU.
    Fixed(Vec<T>),
}

/// A scenario together with a scheme restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    pub scenario: Scenario<T>,
    pub scheme: SchemeTag,
    pub pinning: Pinning,
    pub execution: ExecutionTime<T>,
}

impl<T: Real> Problem<T> {
    /// The original formulation with free execution times.
    pub fn original(scenario: Scenario<T>) -> Self {
        Self {
            scenario,
            scheme: SchemeTag::Proposed,
            pinning: Pinning::default(),
            execution: ExecutionTime::Free,
        }
    }

    /// Execution time of EU `k`; a free execution time resolves to the full block.
    pub fn exec_time(&self, k: usize) -> T {
        match &self.execution {
            ExecutionTime::Free => self.scenario.block_length,
            ExecutionTime::Fixed(tau) => tau[k],
        }
    }

    /// Pins `τ_k = T` for every EU.
    pub fn with_full_execution_time(mut self) -> Self {
        self.execution =
            ExecutionTime::Fixed(vec![self.scenario.block_length; self.scenario.num_eus()]);
        self
    }

    /// EU `k` harvests only during BackCom slots, at most `F_k` per second of
    /// the total `Σ t_b`, and burns `P_c,k` during its own. A schedule with any
    /// BackCom time therefore needs `Σ_k F_k / P_c,k > 1`. Otherwise every
    /// variable is forced to zero and the problem has no KKT multipliers.
    pub fn is_stranded(&self) -> bool {
        let s = &self.scenario;
        let mut share = T::zero();
        for k in 0..s.num_eus() {
            let harvest = s.idle_harvest_power(k);
            if harvest <= T::zero() {
                continue;
            }
            let circuit = s.eus[k].backcom_circuit_power;
            if circuit <= T::zero() {
                return false;
            }
            share = share + harvest / circuit;
        }
        share <= T::one()
    }

    /// True when the allocation respects the scheme pinning and fixed execution times.
    pub fn respects_restriction(&self, alloc: &Allocation<T>) -> bool {
        alloc.eus.iter().enumerate().all(|(k, a)| {
            let tau_ok = match &self.execution {
                ExecutionTime::Free => true,
                ExecutionTime::Fixed(tau) => a.exec_time == tau[k] || a.freq == T::zero(),
            };
            tau_ok
                && (!self.pinning.share || a.x == T::zero())
                && (!self.pinning.active || (a.t_a == T::zero() && a.energy == T::zero()))
                && (!self.pinning.local || a.freq == T::zero())
        })
    }

    /// Scenario feasibility plus the restriction.
    pub fn is_feasible(&self, alloc: &Allocation<T>, tol: &Tolerances<T>) -> bool {
        self.respects_restriction(alloc) && is_feasible(alloc, &self.scenario, tol)
    }
}

/// The convex problem with the variable pinning of `scheme` and `τ = T`.
pub fn restrict<T: Real>(scenario: &Scenario<T>, scheme: SchemeTag) -> Problem<T> {
    Problem {
        scenario: scenario.clone(),
        scheme,
        pinning: scheme.pinning(),
        execution: ExecutionTime::Free,
    }
    .with_full_execution_time()
}
