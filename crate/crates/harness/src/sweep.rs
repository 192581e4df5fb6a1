//! Monte Carlo sweeps over fading draws.

use std::path::PathBuf;
use std::time::Instant;

use bmec_core::problem::restrict;
use bmec_core::scenario::{realize_channels, ChannelGeometry, ScenarioError};
use bmec_core::solver::{solve_dual, solve_reference};
use bmec_core::{Problem, Scenario, SchemeTag, SolveOptions, SolveReport, SolveStatus};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Uniform minimum computation bits of every EU.
    LMin,
    /// PB transmit power, watts.
    PbPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub fading_draws: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeTag>,
    pub output_path: Option<PathBuf>,
}

impl Default for SweepSpec {
    /// `L_min` from 5 to 30 kbits, 100 draws, every scheme.
    fn default() -> Self {
        Self {
            variable: SweepVariable::LMin,
            values: (1..=6).map(|i| 5e3 * i as f64).collect(),
            fading_draws: 100,
            seed: 0,
            schemes: SchemeTag::ALL.to_vec(),
            output_path: None,
        }
    }
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), String> {
        if self.values.is_empty() {
            return Err("sweep has no values".into());
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err("sweep values must be strictly increasing".into());
        }
        let valid = |v: f64| match self.variable {
            SweepVariable::LMin => v >= 0.0 && v.is_finite(),
            SweepVariable::PbPower => v > 0.0 && v.is_finite(),
        };
        if let Some(v) = self.values.iter().find(|&&v| !valid(v)) {
            return Err(format!("invalid sweep value {v}"));
        }
        if self.fading_draws == 0 {
            return Err("fading_draws must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return Err("sweep has no schemes".into());
        }
        Ok(())
    }

    /// Channel seed of a fading draw. The same draws are reused at every sweep value.
    pub fn draw_seed(&self, draw: usize) -> u64 {
        self.seed.wrapping_add(draw as u64)
    }

    pub fn apply(&self, scenario: &Scenario, value: f64) -> Scenario {
        match self.variable {
            SweepVariable::LMin => scenario.with_uniform_l_min(value),
            SweepVariable::PbPower => scenario.with_pb_power(value),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub solve: SolveOptions<f64>,
    /// Record wall-clock solve times. Off keeps the output reproducible.
    pub timing: bool,
}

/// Outcome of one (sweep value, draw, scheme) solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRecord {
    pub value_index: usize,
    pub draw: usize,
    pub scheme: SchemeTag,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    pub solve_ms: f64,
}

impl DrawRecord {
    /// Feasible draws are those not proven infeasible; uncertified solves count.
    pub fn feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub scheme: SchemeTag,
    /// Mean over feasible draws; NaN if there are none.
    pub mean_bits: f64,
    /// Sample standard deviation over feasible draws.
    pub std_bits: f64,
    pub feasible_fraction: f64,
    pub mean_iterations: f64,
    pub mean_solve_ms: f64,
}

/// Solves with the dual method and falls back to the reference solver when
/// the dual result is not certified either way.
pub fn solve(problem: &Problem, opts: &SolveOptions<f64>) -> SolveReport {
    let dual = solve_dual(problem, opts);
    if dual.status != SolveStatus::MaxIterations {
        return dual;
    }
    log::debug!("dual method uncertified (kkt {:e}), trying the reference solver", dual.kkt_residual);
    let reference = solve_reference(problem, opts);
    if reference.status != SolveStatus::MaxIterations
        || reference.kkt_residual < dual.kkt_residual
    {
        reference
    } else {
        dual
    }
}

/// Runs every solve of the sweep. Records come back in (value, draw, scheme)
/// order whatever the completion order.
pub fn run_draws(
    spec: &SweepSpec,
    scenario: &Scenario,
    geometry: &[ChannelGeometry<f64>],
    opts: &SweepOptions,
) -> Result<Vec<DrawRecord>, ScenarioError> {
    let channels = (0..spec.fading_draws)
        .map(|d| {
            let gains = realize_channels(geometry, spec.draw_seed(d))?;
            scenario.with_gains(&gains)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut items = Vec::new();
    for v in 0..spec.values.len() {
        for d in 0..spec.fading_draws {
            for &scheme in &spec.schemes {
                items.push((v, d, scheme));
            }
        }
    }
    let records = items
        .into_par_iter()
        .map(|(value_index, draw, scheme)| {
            let instance = spec.apply(&channels[draw], spec.values[value_index]);
            let problem = restrict(&instance, scheme);
            let start = Instant::now();
            let report = solve(&problem, &opts.solve);
            let solve_ms = if opts.timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            if report.status == SolveStatus::MaxIterations {
                log::warn!(
                    "value {} draw {draw} {scheme}: uncertified (kkt {:e})",
                    spec.values[value_index],
                    report.kkt_residual
                );
            }
            DrawRecord {
                value_index,
                draw,
                scheme,
                status: report.status,
                objective: report.objective,
                iterations: report.iterations,
                solve_ms,
            }
        })
        .collect();
    Ok(records)
}

/// Reduces records to one row per (value, scheme), in spec order.
pub fn aggregate(spec: &SweepSpec, records: &[DrawRecord]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for (v, &sweep_value) in spec.values.iter().enumerate() {
        for &scheme in &spec.schemes {
            let group: Vec<&DrawRecord> = records
                .iter()
                .filter(|r| r.value_index == v && r.scheme == scheme)
                .collect();
            let n = group.len().max(1) as f64;
            let bits: Vec<f64> = group
                .iter()
                .filter(|r| r.feasible())
                .map(|r| r.objective)
                .collect();
            let (mean_bits, std_bits) = mean_std(&bits);
            rows.push(ResultRow {
                sweep_value,
                scheme,
                mean_bits,
                std_bits,
                feasible_fraction: bits.len() as f64 / n,
                mean_iterations: group.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
                mean_solve_ms: group.iter().map(|r| r.solve_ms).sum::<f64>() / n,
            });
        }
    }
    rows
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_sweep(
    spec: &SweepSpec,
    scenario: &Scenario,
    geometry: &[ChannelGeometry<f64>],
    opts: &SweepOptions,
) -> Result<Vec<ResultRow>, ScenarioError> {
    Ok(aggregate(spec, &run_draws(spec, scenario, geometry, opts)?))
}
