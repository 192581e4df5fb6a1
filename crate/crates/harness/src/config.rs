//! Scenario configuration files.
//!
//! A config is a JSON document with the sections `system`, `eus`,
//! `geometry`, `fading` and an optional `sweep`. Every field is optional and
//! falls back to the reference instance. Power fields take either a
//! `_watts` or a `_dbm` suffix (`noise_density_*` is per hertz), and
//! `backcom_gap` is linear or `backcom_gap_db`. Logarithmic units are
//! converted here, once.
//!
//! ```json
//! {
//!   "system": { "pb_power_watts": 3, "noise_density_dbm": -120 },
//!   "eus": [{ "l_min": 2e4 }, {}],
//!   "geometry": [{ "d0": 12, "d1": 30 }, { "d0": 10, "d1": 35 }],
//!   "fading": "rayleigh",
//!   "sweep": { "variable": "l_min", "values": [5e3, 1e4], "fading_draws": 100 }
//! }
//! ```

use std::path::{Path, PathBuf};

use bmec_core::scenario::{
    db_to_linear, dbm_to_watts, default_eu, default_geometry, default_scenario, realize_channels,
    validate, ChannelGeometry, Fading, Violation, DEFAULT_PATH_LOSS_EXPONENT,
};
use bmec_core::{EhParams, EuProfile, Scenario, SchemeTag};
use serde::Deserialize;
use thiserror::Error;

use crate::sweep::{SweepSpec, SweepVariable};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
    #[error("{path}: {message}")]
    Inconsistent { path: PathBuf, message: String },
}

/// A loaded config: the scenario template (gains from path loss only),
/// one geometry entry per EU and the sweep to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub geometry: Vec<ChannelGeometry<f64>>,
    pub sweep: SweepSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: default_scenario(),
            geometry: default_geometry(Fading::Rayleigh),
            sweep: SweepSpec::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    #[serde(default)]
    system: SystemSection,
    eus: Option<Vec<EuSection>>,
    geometry: Option<Vec<GeometrySection>>,
    fading: Option<FadingSection>,
    sweep: Option<SweepSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    block_length: Option<f64>,
    bandwidth: Option<f64>,
    noise_density_watts: Option<f64>,
    noise_density_dbm: Option<f64>,
    pb_power_watts: Option<f64>,
    pb_power_dbm: Option<f64>,
    backcom_gap: Option<f64>,
    backcom_gap_db: Option<f64>,
    cycles_per_bit: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EuSection {
    weight: Option<f64>,
    backcom_circuit_power_watts: Option<f64>,
    backcom_circuit_power_dbm: Option<f64>,
    at_circuit_power_watts: Option<f64>,
    at_circuit_power_dbm: Option<f64>,
    capacitance: Option<f64>,
    f_max: Option<f64>,
    l_min: Option<f64>,
    eh: Option<EhSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EhSection {
    c: Option<f64>,
    d_watts: Option<f64>,
    d_dbm: Option<f64>,
    v_watts: Option<f64>,
    v_dbm: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    d0: f64,
    d1: f64,
    path_loss_exponent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FadingSection {
    Name(String),
    Law { law: String, m: Option<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    variable: Option<String>,
    values: Option<Vec<f64>>,
    values_dbm: Option<Vec<f64>>,
    fading_draws: Option<usize>,
    seed: Option<u64>,
    schemes: Option<Vec<String>>,
    output: Option<PathBuf>,
}

/// Picks the linear or the logarithmic spelling of one field.
fn either(
    field: &str,
    linear: Option<f64>,
    log: Option<f64>,
    convert: fn(f64) -> f64,
    fallback: f64,
) -> Result<f64, String> {
    match (linear, log) {
        (Some(_), Some(_)) => Err(format!("`{field}` is given in two units")),
        (Some(x), None) => Ok(x),
        (None, Some(x)) => Ok(convert(x)),
        (None, None) => Ok(fallback),
    }
}

fn parse_fading(section: &FadingSection) -> Result<Fading, String> {
    let (law, m) = match section {
        FadingSection::Name(law) => (law.as_str(), None),
        FadingSection::Law { law, m } => (law.as_str(), *m),
    };
    match (law.to_ascii_lowercase().as_str(), m) {
        ("unit" | "none", None) => Ok(Fading::Unit),
        ("rayleigh", None) => Ok(Fading::Rayleigh),
        ("nakagami", Some(m)) => Ok(Fading::Nakagami { m }),
        ("nakagami", None) => Err("nakagami fading needs a shape `m`".into()),
        (_, Some(_)) => Err(format!("fading law `{law}` takes no shape parameter")),
        _ => Err(format!(
            "unknown fading law `{law}` (expected unit, rayleigh or nakagami)"
        )),
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

/// Parses config text; `path` is only used in diagnostics.
pub fn parse_config(text: &str, path: &Path) -> Result<Config, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: File = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        ConfigError::Parse {
            path: path.to_path_buf(),
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    let inconsistent = |message: String| ConfigError::Inconsistent {
        path: path.to_path_buf(),
        message,
    };

    let defaults = default_scenario::<f64>();
    let sys = &file.system;
    let pb_power = either(
        "system.pb_power",
        sys.pb_power_watts,
        sys.pb_power_dbm,
        dbm_to_watts,
        defaults.pb_power,
    )
    .map_err(inconsistent)?;
    let noise_density = either(
        "system.noise_density",
        sys.noise_density_watts,
        sys.noise_density_dbm,
        dbm_to_watts,
        defaults.noise_density,
    )
    .map_err(inconsistent)?;
    let backcom_gap = either(
        "system.backcom_gap",
        sys.backcom_gap,
        sys.backcom_gap_db,
        db_to_linear,
        defaults.backcom_gap,
    )
    .map_err(inconsistent)?;

    let fading = match &file.fading {
        Some(section) => parse_fading(section).map_err(inconsistent)?,
        None => Fading::Rayleigh,
    };

    let geometry: Vec<ChannelGeometry<f64>> = match &file.geometry {
        Some(list) => list
            .iter()
            .map(|g| ChannelGeometry {
                d0: g.d0,
                d1: g.d1,
                path_loss_exponent: g.path_loss_exponent.unwrap_or(DEFAULT_PATH_LOSS_EXPONENT),
                fading,
            })
            .collect(),
        None => {
            let k = file.eus.as_ref().map_or(4, Vec::len);
            if k > 4 {
                return Err(inconsistent(format!(
                    "{k} EUs need an explicit `geometry` list"
                )));
            }
            let mut g = default_geometry(fading);
            g.truncate(k);
            g
        }
    };

    let sections: Vec<EuSection> = match file.eus {
        Some(list) => list,
        None => (0..geometry.len()).map(|_| EuSection::default()).collect(),
    };
    if sections.len() != geometry.len() {
        return Err(inconsistent(format!(
            "`eus` has {} entries but `geometry` has {}",
            sections.len(),
            geometry.len()
        )));
    }
    let base = default_eu::<f64>();
    let mut eus = Vec::with_capacity(sections.len());
    for (i, eu) in sections.iter().enumerate() {
        let eh = eu.eh.as_ref();
        let field = |name: &str| format!("eus[{i}].{name}");
        let profile = EuProfile {
            g: base.g,
            h: base.h,
            eh: EhParams {
                c: eh.and_then(|e| e.c).unwrap_or(base.eh.c),
                d: either(
                    &field("eh.d"),
                    eh.and_then(|e| e.d_watts),
                    eh.and_then(|e| e.d_dbm),
                    dbm_to_watts,
                    base.eh.d,
                )
                .map_err(inconsistent)?,
                v: either(
                    &field("eh.v"),
                    eh.and_then(|e| e.v_watts),
                    eh.and_then(|e| e.v_dbm),
                    dbm_to_watts,
                    base.eh.v,
                )
                .map_err(inconsistent)?,
            },
            weight: eu.weight.unwrap_or(base.weight),
            backcom_circuit_power: either(
                &field("backcom_circuit_power"),
                eu.backcom_circuit_power_watts,
                eu.backcom_circuit_power_dbm,
                dbm_to_watts,
                base.backcom_circuit_power,
            )
            .map_err(inconsistent)?,
            at_circuit_power: either(
                &field("at_circuit_power"),
                eu.at_circuit_power_watts,
                eu.at_circuit_power_dbm,
                dbm_to_watts,
                base.at_circuit_power,
            )
            .map_err(inconsistent)?,
            capacitance: eu.capacitance.unwrap_or(base.capacitance),
            f_max: eu.f_max.unwrap_or(base.f_max),
            l_min: eu.l_min.unwrap_or(base.l_min),
        };
        eus.push(profile);
    }

    let template = Scenario {
        block_length: sys.block_length.unwrap_or(defaults.block_length),
        bandwidth: sys.bandwidth.unwrap_or(defaults.bandwidth),
        noise_density,
        pb_power,
        backcom_gap,
        cycles_per_bit: sys.cycles_per_bit.unwrap_or(defaults.cycles_per_bit),
        eus,
    };
    let unit: Vec<_> = geometry
        .iter()
        .map(|g| ChannelGeometry {
            fading: Fading::Unit,
            ..*g
        })
        .collect();
    let gains = realize_channels(&unit, 0).map_err(|e| inconsistent(e.to_string()))?;
    let scenario = template
        .with_gains(&gains)
        .map_err(|e| inconsistent(e.to_string()))?;
    validate(&scenario).map_err(|violations| ConfigError::Invalid {
        path: path.to_path_buf(),
        violations,
    })?;

    let sweep = match file.sweep {
        Some(s) => parse_sweep(s).map_err(inconsistent)?,
        None => SweepSpec::default(),
    };
    sweep.check().map_err(inconsistent)?;
    Ok(Config {
        scenario,
        geometry,
        sweep,
    })
}

fn parse_sweep(s: SweepSection) -> Result<SweepSpec, String> {
    let defaults = SweepSpec::default();
    let variable = match s.variable.as_deref() {
        None | Some("l_min") => SweepVariable::LMin,
        Some("pb_power") => SweepVariable::PbPower,
        Some(other) => {
            return Err(format!(
                "unknown sweep variable `{other}` (expected l_min or pb_power)"
            ))
        }
    };
    let values = match (s.values, s.values_dbm) {
        (Some(_), Some(_)) => return Err("`sweep.values` is given in two units".into()),
        (None, Some(_)) if variable == SweepVariable::LMin => {
            return Err("`sweep.values_dbm` only applies to pb_power".into())
        }
        (Some(v), None) => v,
        (None, Some(v)) => v.into_iter().map(dbm_to_watts).collect(),
        (None, None) if variable == SweepVariable::LMin => defaults.values.clone(),
        (None, None) => return Err("a pb_power sweep needs `values`".into()),
    };
    let schemes = match s.schemes {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<SchemeTag>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?,
        None => defaults.schemes.clone(),
    };
    Ok(SweepSpec {
        variable,
        values,
        fading_draws: s.fading_draws.unwrap_or(defaults.fading_draws),
        seed: s.seed.unwrap_or(defaults.seed),
        schemes,
        output_path: s.output,
    })
}
