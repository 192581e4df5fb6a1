//! Network instance: system constants, per-EU parameters and the channel generator.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use thiserror::Error;

use crate::num::Real;

/// Parameters of the saturating (non-linear) energy harvesting model
/// `F(p) = (c p + d) / (p + v) - d / v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhParams<T> {
    pub c: T,
    /// Watts.
    pub d: T,
    /// Watts.
    pub v: T,
}

impl<T: Real> EhParams<T> {
    /// `c v - d`, the numerator shared by every derivative of the model.
    #[inline]
    pub fn gain_numerator(&self) -> T {
        self.c * self.v - self.d
    }

    /// Saturation level `c - d / v` reached as the input power grows without bound.
    #[inline]
    pub fn saturation(&self) -> T {
        self.c - self.d / self.v
    }
}

/// Parameters of one edge user.
#[derive(Debug, Clone, PartialEq)]
pub struct EuProfile<T> {
    /// Linear power gain PB → EU.
    pub g: T,
    /// Linear power gain EU → MEC server.
    pub h: T,
    pub eh: EhParams<T>,
    pub weight: T,
    /// Watts drawn by the backscatter circuit while backscattering.
    pub backcom_circuit_power: T,
    /// Watts drawn by the active transmitter on top of the radiated power.
    pub at_circuit_power: T,
    /// Effective switched capacitance; local computing costs `ε f³ τ` joules.
    pub capacitance: T,
    /// Hertz.
    pub f_max: T,
    /// Minimum computation bits for this EU within the block.
    pub l_min: T,
}

/// System-wide constants plus the EU roster.
///
/// The roster order is the BackCom/AT turn order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    /// Seconds.
    pub block_length: T,
    /// Hertz.
    pub bandwidth: T,
    /// Watts per hertz.
    pub noise_density: T,
    /// Watts.
    pub pb_power: T,
    /// Linear ratio in `(0, 1]`.
    pub backcom_gap: T,
    pub cycles_per_bit: T,
    pub eus: Vec<EuProfile<T>>,
}

impl<T: Real> Scenario<T> {
    #[inline]
    pub fn num_eus(&self) -> usize {
        self.eus.len()
    }

    /// Noise power over the whole band, `B σ²`.
    #[inline]
    pub fn noise_power(&self) -> T {
        self.bandwidth * self.noise_density
    }

    /// Power incident on EU `k`'s antenna while the PB broadcasts, `P_t g_k`.
    #[inline]
    pub fn incident_power(&self, k: usize) -> T {
        self.pb_power * self.eus[k].g
    }

    /// Harvested power of EU `k` while another EU backscatters, `P_k^h`.
    #[inline]
    pub fn idle_harvest_power(&self, k: usize) -> T {
        crate::phys::harvested_power(self.incident_power(k), &self.eus[k].eh)
    }

    /// SNR per unit reflection coefficient of EU `k`'s BackCom link,
    /// `ξ P_t g h / (B σ²)`.
    #[inline]
    pub fn backcom_snr_gain(&self, k: usize) -> T {
        self.backcom_gap * self.incident_power(k) * self.eus[k].h / self.noise_power()
    }

    /// SNR per watt of EU `k`'s active link, `h / (B σ²)`.
    #[inline]
    pub fn at_snr_gain(&self, k: usize) -> T {
        self.eus[k].h / self.noise_power()
    }

    /// Copy of the scenario with channel gains replaced, in roster order.
    pub fn with_gains(&self, gains: &[ChannelGains<T>]) -> Result<Self, ScenarioError> {
        if gains.len() != self.eus.len() {
            return Err(ScenarioError::GainCount {
                expected: self.eus.len(),
                got: gains.len(),
            });
        }
        let mut out = self.clone();
        for (eu, gain) in out.eus.iter_mut().zip(gains) {
            eu.g = gain.g;
            eu.h = gain.h;
        }
        Ok(out)
    }

    /// Copy with every EU's minimum bits set to `l_min`.
    pub fn with_uniform_l_min(&self, l_min: T) -> Self {
        let mut out = self.clone();
        for eu in &mut out.eus {
            eu.l_min = l_min;
        }
        out
    }

    /// Copy with the PB transmit power replaced.
    pub fn with_pb_power(&self, pb_power: T) -> Self {
        Self {
            pb_power,
            ..self.clone()
        }
    }
}

/// Small-scale power fading law for `g'` and `h'`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Fading {
    /// `g' = h' = 1`: path loss only.
    Unit,
    /// Unit-mean exponential power gain (Rayleigh amplitude).
    #[default]
    Rayleigh,
    /// Unit-mean Gamma(m, 1/m) power gain (Nakagami-m amplitude).
    Nakagami { m: f64 },
}

impl Fading {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64, ScenarioError> {
        Ok(match *self {
            Fading::Unit => 1.0,
            Fading::Rayleigh => Exp1.sample(rng),
            Fading::Nakagami { m } => {
                let law = Gamma::new(m, 1.0 / m).map_err(|_| ScenarioError::Fading(m))?;
                law.sample(rng)
            }
        })
    }
}

/// Placement of one EU relative to the PB and the MEC server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry<T> {
    /// Metres from the EU to the PB.
    pub d0: T,
    /// Metres from the EU to the MEC server.
    pub d1: T,
    pub path_loss_exponent: T,
    pub fading: Fading,
}

/// Realized linear power gains of one EU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains<T> {
    pub g: T,
    pub h: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("geometry list is empty")]
    EmptyGeometry,
    #[error("geometry[{index}]: {field} must be positive, got {value}")]
    Geometry {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("Nakagami shape m must be positive, got {0}")]
    Fading(f64),
    #[error("expected {expected} channel gain pairs, got {got}")]
    GainCount { expected: usize, got: usize },
}

/// Draws `g = g' d0^-β` and `h = h' d1^-β` per EU.
///
/// A pure function of `(geometry, seed)`: fading draws come from a ChaCha8
/// stream seeded with `seed`, two draws per EU (`g'` then `h'`) in order.
pub fn realize_channels<T: Real>(
    geometry: &[ChannelGeometry<T>],
    seed: u64,
) -> Result<Vec<ChannelGains<T>>, ScenarioError> {
    if geometry.is_empty() {
        return Err(ScenarioError::EmptyGeometry);
    }
    for (index, geo) in geometry.iter().enumerate() {
        for (field, value) in [
            ("d0", geo.d0),
            ("d1", geo.d1),
            ("path_loss_exponent", geo.path_loss_exponent),
        ] {
            if !(value > T::zero()) {
                return Err(ScenarioError::Geometry {
                    index,
                    field,
                    value: value.to_f64_lossy(),
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    geometry
        .iter()
        .map(|geo| {
            let g_fade = T::lit(geo.fading.sample(&mut rng)?);
            let h_fade = T::lit(geo.fading.sample(&mut rng)?);
            Ok(ChannelGains {
                g: g_fade * geo.d0.powf(-geo.path_loss_exponent),
                h: h_fade * geo.d1.powf(-geo.path_loss_exponent),
            })
        })
        .collect()
}

/// One violated invariant, identified by field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.rule)
    }
}

/// Checks every scenario invariant and returns all violations found.
pub fn validate<T: Real>(scenario: &Scenario<T>) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut check = |ok: bool, path: String, rule: &'static str| {
        if !ok {
            out.push(Violation { path, rule });
        }
    };
    let zero = T::zero();
    let positive = |x: T| x > zero && x.is_finite();
    let nonnegative = |x: T| x >= zero && x.is_finite();

    check(
        positive(scenario.block_length),
        "system.block_length".into(),
        "T > 0",
    );
    check(
        positive(scenario.bandwidth),
        "system.bandwidth".into(),
        "B > 0",
    );
    check(
        positive(scenario.noise_density),
        "system.noise_density".into(),
        "σ² > 0",
    );
    check(
        positive(scenario.pb_power),
        "system.pb_power".into(),
        "P_t > 0",
    );
    check(
        positive(scenario.backcom_gap) && scenario.backcom_gap <= T::one(),
        "system.backcom_gap".into(),
        "0 < ξ ≤ 1",
    );
    check(
        positive(scenario.cycles_per_bit),
        "system.cycles_per_bit".into(),
        "C_cpu > 0",
    );
    check(!scenario.eus.is_empty(), "eus".into(), "K ≥ 1");

    for (k, eu) in scenario.eus.iter().enumerate() {
        let p = |field: &str| format!("eus[{k}].{field}");
        check(positive(eu.g), p("g"), "g > 0");
        check(positive(eu.h), p("h"), "h > 0");
        check(positive(eu.weight), p("weight"), "w > 0");
        check(
            nonnegative(eu.backcom_circuit_power),
            p("backcom_circuit_power"),
            "P_c ≥ 0",
        );
        check(
            nonnegative(eu.at_circuit_power),
            p("at_circuit_power"),
            "p_c ≥ 0",
        );
        check(positive(eu.capacitance), p("capacitance"), "ε > 0");
        check(positive(eu.f_max), p("f_max"), "f_max > 0");
        check(nonnegative(eu.l_min), p("l_min"), "l_min ≥ 0");
        check(positive(eu.eh.v), p("eh.v"), "v > 0");
        check(eu.eh.gain_numerator() >= zero, p("eh"), "c·v − d ≥ 0");
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// `10^(db/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts dBm (or dBm/Hz) to watts (or watts/Hz).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// EU distances to the PB used by [`default_scenario`], metres.
pub const DEFAULT_D0: [f64; 4] = [12.0, 10.0, 15.0, 13.0];
/// EU distances to the MEC server used by [`default_scenario`], metres.
pub const DEFAULT_D1: [f64; 4] = [30.0, 35.0, 20.0, 25.0];
pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 3.0;

/// Default EU template (channel gains set to 1).
pub fn default_eu<T: Real>() -> EuProfile<T> {
    EuProfile {
        g: T::one(),
        h: T::one(),
        eh: EhParams {
            c: T::lit(2.463),
            d: T::lit(1.635),
            v: T::lit(0.826),
        },
        weight: T::one(),
        backcom_circuit_power: T::lit(1e-4),
        at_circuit_power: T::lit(1e-3),
        capacitance: T::lit(1e-26),
        f_max: T::lit(5e8),
        l_min: T::lit(2e4),
    }
}

/// Default geometry: four EUs with the reference distances and `β = 3`.
pub fn default_geometry<T: Real>(fading: Fading) -> Vec<ChannelGeometry<T>> {
    DEFAULT_D0
        .iter()
        .zip(DEFAULT_D1.iter())
        .map(|(&d0, &d1)| ChannelGeometry {
            d0: T::lit(d0),
            d1: T::lit(d1),
            path_loss_exponent: T::lit(DEFAULT_PATH_LOSS_EXPONENT),
            fading,
        })
        .collect()
}

/// The reference instance with path-loss-only channels (`g' = h' = 1`).
pub fn default_scenario<T: Real>() -> Scenario<T> {
    let gains = realize_channels(&default_geometry::<T>(Fading::Unit), 0)
        .expect("default geometry is valid");
    let eus = gains
        .into_iter()
        .map(|gain| EuProfile {
            g: gain.g,
            h: gain.h,
            ..default_eu()
        })
        .collect();
    Scenario {
        block_length: T::one(),
        bandwidth: T::lit(1e5),
        noise_density: T::lit(dbm_to_watts(-120.0)),
        pb_power: T::lit(3.0),
        backcom_gap: T::lit(db_to_linear(-15.0)),
        cycles_per_bit: T::lit(1000.0),
        eus,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn default_matches_reference_parameters() {
        let s = default_scenario::<f64>();
        assert_eq!(s.num_eus(), 4);
        assert_eq!(s.pb_power, 3.0);
        assert!(close(s.noise_density, 1e-15, 1e-12));
        assert!(close(s.backcom_gap, 10f64.powf(-1.5), 1e-12));
        for eu in &s.eus {
            assert_eq!(eu.eh.c, 2.463);
            assert_eq!(eu.eh.d, 1.635);
            assert_eq!(eu.eh.v, 0.826);
            assert_eq!(eu.l_min, 2e4);
        }
        assert!(close(s.eus[1].g, 1e-3, 1e-12));
        assert!(close(s.eus[2].h, 20f64.powi(-3), 1e-12));
        assert!(validate(&s).is_ok());
    }

    #[test]
    fn unit_fading_is_pure_path_loss() {
        let geo = [ChannelGeometry {
            d0: 10.0,
            d1: 20.0,
            path_loss_exponent: 3.0,
            fading: Fading::Unit,
        }];
        let gains = realize_channels(&geo, 7).unwrap();
        assert!(close(gains[0].g, 1e-3, 1e-12));
        assert!(close(gains[0].h, 1.25e-4, 1e-12));
    }

    #[test]
    fn same_seed_same_channels() {
        let geo = default_geometry::<f64>(Fading::Rayleigh);
        assert_eq!(
            realize_channels(&geo, 42).unwrap(),
            realize_channels(&geo, 42).unwrap()
        );
        assert_ne!(
            realize_channels(&geo, 42).unwrap(),
            realize_channels(&geo, 43).unwrap()
        );
    }

    #[test]
    fn rayleigh_fading_has_unit_mean() {
        let geo = vec![
            ChannelGeometry {
                d0: 10.0,
                d1: 10.0,
                path_loss_exponent: 3.0,
                fading: Fading::Rayleigh,
            };
            100_000
        ];
        let gains = realize_channels(&geo, 1).unwrap();
        let mean = gains.iter().map(|x| x.g / 1e-3).sum::<f64>() / gains.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn nakagami_fading_has_unit_mean() {
        let geo = vec![
            ChannelGeometry {
                d0: 1.0,
                d1: 1.0,
                path_loss_exponent: 2.0,
                fading: Fading::Nakagami { m: 2.0 },
            };
            50_000
        ];
        let gains = realize_channels(&geo, 9).unwrap();
        let mean = gains.iter().map(|x| x.h).sum::<f64>() / gains.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn bad_geometry_is_a_configuration_error() {
        let geo = [ChannelGeometry {
            d0: 0.0,
            d1: 20.0,
            path_loss_exponent: 3.0,
            fading: Fading::Unit,
        }];
        assert!(matches!(
            realize_channels(&geo, 0),
            Err(ScenarioError::Geometry { field: "d0", .. })
        ));
        assert_eq!(
            realize_channels::<f64>(&[], 0),
            Err(ScenarioError::EmptyGeometry)
        );
    }

    #[test]
    fn validate_reports_eh_violations() {
        let mut s = default_scenario::<f64>();
        s.eus[2].eh.v = -0.1;
        let errs = validate(&s).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.path == "eus[2].eh.v" && e.rule == "v > 0"));

        let mut s = default_scenario::<f64>();
        s.eus[0].eh = EhParams {
            c: 1.0,
            d: 2.0,
            v: 1.0,
        };
        let errs = validate(&s).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].to_string(), "eus[0].eh: c·v − d ≥ 0");
    }

    #[test]
    fn validate_collects_every_violation() {
        let mut s = default_scenario::<f64>();
        s.bandwidth = 0.0;
        s.backcom_gap = 1.5;
        s.eus[1].weight = 0.0;
        let errs = validate(&s).unwrap_err();
        assert_eq!(errs.len(), 3);
        s.eus.clear();
        assert!(validate(&s).unwrap_err().iter().any(|e| e.rule == "K ≥ 1"));
    }

    #[test]
    fn dbm_conversion() {
        assert!(close(dbm_to_watts(-120.0), 1e-15, 1e-12));
        assert!(close(dbm_to_watts(30.0), 1.0, 1e-12));
        assert!(close(db_to_linear(-15.0), 0.031622776601683794, 1e-12));
    }
}
