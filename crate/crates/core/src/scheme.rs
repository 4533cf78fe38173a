//! Physical model definition: level geometry, drives, decay channels and
//! photon reservoirs, plus the flat `key = value` scheme file format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Level geometry of the three-level atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigurationKind {
    /// Level 0 is the ground state below both excited levels.
    V,
    /// Level 0 is the common upper level above levels 1 and 2.
    Lambda,
    /// Cascade with `E2 < E0 < E1`.
    CascadeE1aboveE0,
    /// Cascade with `E1 < E0 < E2`.
    CascadeE1belowE0,
}

impl ConfigurationKind {
    pub const ALL: [ConfigurationKind; 4] = [
        ConfigurationKind::V,
        ConfigurationKind::Lambda,
        ConfigurationKind::CascadeE1aboveE0,
        ConfigurationKind::CascadeE1belowE0,
    ];

    /// Name used in scheme files.
    pub fn key(self) -> &'static str {
        match self {
            ConfigurationKind::V => "V",
            ConfigurationKind::Lambda => "Lambda",
            ConfigurationKind::CascadeE1aboveE0 => "CascadeUp",
            ConfigurationKind::CascadeE1belowE0 => "CascadeDown",
        }
    }
}

impl fmt::Display for ConfigurationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ConfigurationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "V" => Ok(ConfigurationKind::V),
            "Lambda" => Ok(ConfigurationKind::Lambda),
            "CascadeUp" | "CascadeE1aboveE0" => Ok(ConfigurationKind::CascadeE1aboveE0),
            "CascadeDown" | "CascadeE1belowE0" => Ok(ConfigurationKind::CascadeE1belowE0),
            other => Err(format!(
                "unknown configuration `{other}` (expected V, Lambda, CascadeUp or CascadeDown)"
            )),
        }
    }
}

/// When laser-driven Rabi oscillation starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RabiOnset {
    /// Absorption out of a resting level produces a ready component; Rabi
    /// oscillation begins once the atom sits in the excited level.
    #[default]
    Delayed,
    /// The resting atom enters Rabi oscillation at once; only spontaneous
    /// emissions produce ready components.
    Immediate,
}

impl FromStr for RabiOnset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delayed" => Ok(RabiOnset::Delayed),
            "immediate" => Ok(RabiOnset::Immediate),
            other => Err(format!("unknown rabi_onset `{other}` (expected delayed or immediate)")),
        }
    }
}

impl fmt::Display for RabiOnset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RabiOnset::Delayed => "delayed",
            RabiOnset::Immediate => "immediate",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("field `{field}`: cannot parse `{value}`: {reason}")]
    Parse {
        field: String,
        value: String,
        reason: String,
    },
    #[error("field `{0}` must be a positive finite number")]
    NonPositive(&'static str),
    #[error("weak decay must be slower than strong decay (gamma_weak < gamma_strong)")]
    WeakNotSlower,
    #[error("field `{0}` must be at least 1 photon")]
    ZeroPhotons(&'static str),
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("section `{0}` not found")]
    NoSection(String),
}

/// Unvalidated scheme fields, as read from a file or assembled by hand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub configuration: Option<ConfigurationKind>,
    pub gamma_strong: Option<f64>,
    pub gamma_weak: Option<f64>,
    pub omega_strong: Option<f64>,
    pub omega_weak: Option<f64>,
    pub n_strong_photons: Option<u64>,
    pub n_weak_photons: Option<u64>,
    pub rabi_onset: Option<RabiOnset>,
    pub stimulated_emission: Option<bool>,
    pub time_scale: Option<f64>,
}

const KNOWN_KEYS: [&str; 11] = [
    "configuration",
    "config",
    "gamma_strong",
    "gamma_weak",
    "omega_strong",
    "omega_weak",
    "n_strong_photons",
    "n_weak_photons",
    "rabi_onset",
    "stimulated_emission",
    "time_scale",
];

fn parse_field<T: FromStr>(field: &str, value: &str) -> Result<T, SchemeError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| SchemeError::Parse {
        field: field.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_switch(field: &str, value: &str) -> Result<bool, SchemeError> {
    match value {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(SchemeError::Parse {
            field: field.to_string(),
            value: value.to_string(),
            reason: "expected on or off".into(),
        }),
    }
}

/// Splits a flat `key = value` text into sections. Keys before any
/// `[section]` header land in the unnamed section `""`.
pub fn parse_sections(text: &str) -> Result<Vec<(String, BTreeMap<String, String>)>, SchemeError> {
    let mut sections: Vec<(String, BTreeMap<String, String>)> = vec![(String::new(), BTreeMap::new())];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push((name.trim().to_string(), BTreeMap::new()));
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SchemeError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            });
        };
        let current = &mut sections.last_mut().expect("at least one section").1;
        current.insert(key.trim().to_string(), value.trim().to_string());
    }
    sections.retain(|(name, map)| !(name.is_empty() && map.is_empty()));
    Ok(sections)
}

impl SchemeConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, SchemeError> {
        let mut cfg = SchemeConfig::default();
        for (key, value) in map {
            match key.as_str() {
                "configuration" | "config" => {
                    cfg.configuration = Some(parse_field("configuration", value)?)
                }
                "gamma_strong" => cfg.gamma_strong = Some(parse_field(key, value)?),
                "gamma_weak" => cfg.gamma_weak = Some(parse_field(key, value)?),
                "omega_strong" => cfg.omega_strong = Some(parse_field(key, value)?),
                "omega_weak" => cfg.omega_weak = Some(parse_field(key, value)?),
                "n_strong_photons" => cfg.n_strong_photons = Some(parse_count(key, value)?),
                "n_weak_photons" => cfg.n_weak_photons = Some(parse_count(key, value)?),
                "rabi_onset" => cfg.rabi_onset = Some(parse_field(key, value)?),
                "stimulated_emission" => cfg.stimulated_emission = Some(parse_switch(key, value)?),
                "time_scale" => cfg.time_scale = Some(parse_field(key, value)?),
                other => {
                    debug_assert!(!KNOWN_KEYS.contains(&other));
                    return Err(SchemeError::UnknownKey(other.to_string()));
                }
            }
        }
        Ok(cfg)
    }

    /// Parses the first section of a scheme file.
    pub fn parse(text: &str) -> Result<Self, SchemeError> {
        let sections = parse_sections(text)?;
        match sections.first() {
            Some((_, map)) => Self::from_map(map),
            None => Self::from_map(&BTreeMap::new()),
        }
    }

    /// Parses the named section of a scheme file.
    pub fn parse_section(text: &str, name: &str) -> Result<Self, SchemeError> {
        parse_sections(text)?
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, map)| Self::from_map(&map))
            .unwrap_or_else(|| Err(SchemeError::NoSection(name.to_string())))
    }
}

/// Photon counts accept plain integers and float notation such as `1e6`.
fn parse_count(field: &str, value: &str) -> Result<u64, SchemeError> {
    if let Ok(n) = value.parse::<u64>() {
        return Ok(n);
    }
    let as_float: f64 = parse_field(field, value)?;
    if as_float.is_finite() && as_float >= 0.0 && as_float.fract() == 0.0 && as_float < 9.0e15 {
        Ok(as_float as u64)
    } else {
        Err(SchemeError::Parse {
            field: field.to_string(),
            value: value.to_string(),
            reason: "expected a nonnegative integer".into(),
        })
    }
}

/// A validated physical model. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub config: ConfigurationKind,
    /// Spontaneous decay rate of the strong (1-0) transition.
    pub gamma_strong: f64,
    /// Spontaneous decay rate of the weak (2-0) transition.
    pub gamma_weak: f64,
    /// Rabi coupling of the 0-1 laser.
    pub omega_strong: f64,
    /// Rabi coupling of the 0-2 laser.
    pub omega_weak: f64,
    pub n_strong_photons: u64,
    pub n_weak_photons: u64,
    pub rabi_onset: RabiOnset,
    pub stimulated_emission: bool,
    /// Seconds per scheme time unit, used only for reporting.
    pub time_scale: f64,
}

fn positive(field: &'static str, value: Option<f64>) -> Result<f64, SchemeError> {
    let v = value.ok_or(SchemeError::Missing(field))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SchemeError::NonPositive(field))
    }
}

/// Validates raw fields into a [`LevelScheme`].
pub fn build_scheme(raw: &SchemeConfig) -> Result<LevelScheme, SchemeError> {
    let config = raw.configuration.ok_or(SchemeError::Missing("configuration"))?;
    let gamma_strong = positive("gamma_strong", raw.gamma_strong)?;
    let gamma_weak = positive("gamma_weak", raw.gamma_weak)?;
    if gamma_weak >= gamma_strong {
        return Err(SchemeError::WeakNotSlower);
    }
    let omega_strong = positive("omega_strong", raw.omega_strong)?;
    let omega_weak = positive("omega_weak", raw.omega_weak)?;
    let n_strong_photons = raw.n_strong_photons.ok_or(SchemeError::Missing("n_strong_photons"))?;
    if n_strong_photons == 0 {
        return Err(SchemeError::ZeroPhotons("n_strong_photons"));
    }
    let n_weak_photons = raw.n_weak_photons.ok_or(SchemeError::Missing("n_weak_photons"))?;
    if n_weak_photons == 0 {
        return Err(SchemeError::ZeroPhotons("n_weak_photons"));
    }
    let time_scale = match raw.time_scale {
        None => 1.0,
        some => positive("time_scale", some)?,
    };
    Ok(LevelScheme {
        config,
        gamma_strong,
        gamma_weak,
        omega_strong,
        omega_weak,
        n_strong_photons,
        n_weak_photons,
        rabi_onset: raw.rabi_onset.unwrap_or_default(),
        stimulated_emission: raw.stimulated_emission.unwrap_or(true),
        time_scale,
    })
}

impl LevelScheme {
    /// Desk-scale V scheme: strong/weak decay ratio 200:1, resolvable by
    /// both the trajectory engines and the brute-force oracle.
    pub fn desk_scale() -> Self {
        build_scheme(&SchemeConfig {
            configuration: Some(ConfigurationKind::V),
            gamma_strong: Some(1.0),
            gamma_weak: Some(0.005),
            omega_strong: Some(0.3),
            omega_weak: Some(0.002),
            n_strong_photons: Some(1_000_000),
            n_weak_photons: Some(1_000_000),
            rabi_onset: None,
            stimulated_emission: None,
            time_scale: None,
        })
        .expect("desk-scale scheme is valid")
    }

    pub fn with_config(mut self, config: ConfigurationKind) -> Self {
        self.config = config;
        self
    }

    pub fn with_onset(mut self, onset: RabiOnset) -> Self {
        self.rabi_onset = onset;
        self
    }

    pub fn to_config(&self) -> SchemeConfig {
        SchemeConfig {
            configuration: Some(self.config),
            gamma_strong: Some(self.gamma_strong),
            gamma_weak: Some(self.gamma_weak),
            omega_strong: Some(self.omega_strong),
            omega_weak: Some(self.omega_weak),
            n_strong_photons: Some(self.n_strong_photons),
            n_weak_photons: Some(self.n_weak_photons),
            rabi_onset: Some(self.rabi_onset),
            stimulated_emission: Some(self.stimulated_emission),
            time_scale: Some(self.time_scale),
        }
    }

    /// Serializes as a flat `key = value` section. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_config_string(&self) -> String {
        format!(
            "configuration = {}\n\
             gamma_strong = {:?}\n\
             gamma_weak = {:?}\n\
             omega_strong = {:?}\n\
             omega_weak = {:?}\n\
             n_strong_photons = {}\n\
             n_weak_photons = {}\n\
             rabi_onset = {}\n\
             stimulated_emission = {}\n\
             time_scale = {:?}\n",
            self.config,
            self.gamma_strong,
            self.gamma_weak,
            self.omega_strong,
            self.omega_weak,
            self.n_strong_photons,
            self.n_weak_photons,
            self.rabi_onset,
            if self.stimulated_emission { "on" } else { "off" },
            self.time_scale,
        )
    }

    /// Stable short identifier derived from the serialized scheme.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_config_string().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Steady-state photon rate of the strongly driven transition alone.
    pub fn bright_emission_rate(&self) -> f64 {
        let (g, o) = (self.gamma_strong, self.omega_strong);
        g * o * o / (g * g + 2.0 * o * o)
    }

    /// Default dark-gap threshold: twenty mean bright inter-photon times.
    pub fn default_gap_threshold(&self) -> f64 {
        20.0 / self.bright_emission_rate()
    }

    pub fn to_si_rate(&self, rate: f64) -> f64 {
        rate / self.time_scale
    }

    pub fn to_si_time(&self, time: f64) -> f64 {
        time * self.time_scale
    }
}

impl FromStr for LevelScheme {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        build_scheme(&SchemeConfig::parse(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk_raw() -> SchemeConfig {
        LevelScheme::desk_scale().to_config()
    }

    #[test]
    fn si_lifetimes_accepted() {
        let raw = SchemeConfig {
            gamma_strong: Some(1.0 / 1e-8),
            gamma_weak: Some(1.0 / 2.0),
            time_scale: Some(1.0),
            ..desk_raw()
        };
        let scheme = build_scheme(&raw).unwrap();
        assert_eq!(scheme.gamma_strong, 1e8);
        assert_eq!(scheme.gamma_weak, 0.5);
    }

    #[test]
    fn equal_rates_rejected() {
        let raw = SchemeConfig {
            gamma_weak: Some(1.0),
            ..desk_raw()
        };
        let err = build_scheme(&raw).unwrap_err();
        assert_eq!(err, SchemeError::WeakNotSlower);
        assert!(err.to_string().contains("weak decay must be slower"));
    }

    #[test]
    fn desk_scale_accepted() {
        let s = LevelScheme::desk_scale();
        assert_eq!(s.config, ConfigurationKind::V);
        assert_eq!(s.rabi_onset, RabiOnset::Delayed);
        assert_eq!((s.n_strong_photons, s.n_weak_photons), (1_000_000, 1_000_000));
    }

    #[test]
    fn each_invalid_field_is_named() {
        let cases: Vec<(SchemeConfig, SchemeError)> = vec![
            (
                SchemeConfig { gamma_strong: Some(0.0), ..desk_raw() },
                SchemeError::NonPositive("gamma_strong"),
            ),
            (
                SchemeConfig { gamma_weak: Some(-1.0), ..desk_raw() },
                SchemeError::NonPositive("gamma_weak"),
            ),
            (
                SchemeConfig { omega_strong: Some(0.0), ..desk_raw() },
                SchemeError::NonPositive("omega_strong"),
            ),
            (
                SchemeConfig { omega_weak: Some(f64::NAN), ..desk_raw() },
                SchemeError::NonPositive("omega_weak"),
            ),
            (
                SchemeConfig { n_strong_photons: Some(0), ..desk_raw() },
                SchemeError::ZeroPhotons("n_strong_photons"),
            ),
            (
                SchemeConfig { n_weak_photons: Some(0), ..desk_raw() },
                SchemeError::ZeroPhotons("n_weak_photons"),
            ),
            (
                SchemeConfig { configuration: None, ..desk_raw() },
                SchemeError::Missing("configuration"),
            ),
        ];
        for (raw, expected) in cases {
            assert_eq!(build_scheme(&raw).unwrap_err(), expected);
        }
    }

    #[test]
    fn parses_flat_file_with_comments_and_sections() {
        let text = "# desk scheme\n[desk]\nconfiguration = Lambda\ngamma_strong = 1\n\
                    gamma_weak = 0.005  # slow\nomega_strong = 0.3\nomega_weak = 0.002\n\
                    n_strong_photons = 1e6\nn_weak_photons = 100\nrabi_onset = immediate\n\
                    stimulated_emission = off\n";
        let s: LevelScheme = text.parse().unwrap();
        assert_eq!(s.config, ConfigurationKind::Lambda);
        assert_eq!(s.n_strong_photons, 1_000_000);
        assert_eq!(s.rabi_onset, RabiOnset::Immediate);
        assert!(!s.stimulated_emission);
        let again = SchemeConfig::parse_section(text, "desk").unwrap();
        assert_eq!(build_scheme(&again).unwrap(), s);
    }

    #[test]
    fn unknown_key_and_bad_syntax() {
        assert!(matches!(
            SchemeConfig::parse("gamma = 1"),
            Err(SchemeError::UnknownKey(k)) if k == "gamma"
        ));
        assert!(matches!(
            SchemeConfig::parse("gamma_strong 1"),
            Err(SchemeError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            SchemeConfig::parse("configuration = T"),
            Err(SchemeError::Parse { .. })
        ));
    }

    #[test]
    fn bright_rate_matches_two_level_steady_state() {
        let s = LevelScheme::desk_scale();
        // 0.09 / 1.18
        assert!((s.bright_emission_rate() - 0.076_271_186_440_677_97).abs() < 1e-15);
    }

    fn arb_raw() -> impl Strategy<Value = SchemeConfig> {
        (
            prop::sample::select(ConfigurationKind::ALL.to_vec()),
            1e-3f64..1e3,
            1e-6f64..0.999,
            1e-4f64..1e2,
            1e-6f64..1e1,
            1u64..10_000_000,
            1u64..10_000_000,
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(config, gs, ratio, os, ow, n, m, immediate, stim)| SchemeConfig {
                configuration: Some(config),
                gamma_strong: Some(gs),
                gamma_weak: Some(gs * ratio),
                omega_strong: Some(os),
                omega_weak: Some(ow),
                n_strong_photons: Some(n),
                n_weak_photons: Some(m),
                rabi_onset: Some(if immediate { RabiOnset::Immediate } else { RabiOnset::Delayed }),
                stimulated_emission: Some(stim),
                time_scale: None,
            })
    }

    proptest! {
        #[test]
        fn build_is_idempotent_through_serialization(raw in arb_raw()) {
            let first = build_scheme(&raw).unwrap();
            let second: LevelScheme = first.to_config_string().parse().unwrap();
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(first.content_hash(), second.content_hash());
        }

        #[test]
        fn accepted_schemes_satisfy_invariants(
            gs in -1.0f64..2.0, gw in -1.0f64..2.0, os in -1.0f64..1.0, ow in -1.0f64..1.0,
            n in 0u64..3, m in 0u64..3,
        ) {
            let raw = SchemeConfig {
                gamma_strong: Some(gs), gamma_weak: Some(gw), omega_strong: Some(os),
                omega_weak: Some(ow), n_strong_photons: Some(n), n_weak_photons: Some(m),
                ..desk_raw()
            };
            if let Ok(s) = build_scheme(&raw) {
                prop_assert!(s.gamma_strong > s.gamma_weak && s.gamma_weak > 0.0);
                prop_assert!(s.omega_strong > 0.0 && s.omega_weak > 0.0);
                prop_assert!(s.n_strong_photons >= 1 && s.n_weak_photons >= 1);
            }
        }
    }
}
