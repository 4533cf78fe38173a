//! Transition programs for the two-level atom and the four three-level
//! geometries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BasisLabel, Channel, EdgeKind, Level, Transition, TransitionRules};
use crate::scheme::{ConfigurationKind, LevelScheme, RabiOnset};

/// Side of a dark period on which the weak photon is released.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionOrdering {
    Before,
    After,
}

impl std::fmt::Display for EmissionOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmissionOrdering::Before => "weak photon before dark time",
            EmissionOrdering::After => "weak photon after dark time",
        })
    }
}

/// A laser-driven, spontaneously decaying pair of levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivenPair {
    pub channel: Channel,
    pub lower: Level,
    pub upper: Level,
    pub rabi: f64,
    pub decay: f64,
    /// Photons initially in the driving laser.
    pub reservoir: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("expected configuration {expected}, found {found}")]
    WrongConfiguration {
        expected: ConfigurationKind,
        found: ConfigurationKind,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelProgram {
    pub pairs: Vec<DrivenPair>,
    pub initial: BasisLabel,
    pub rabi_onset: RabiOnset,
    pub stimulated_emission: bool,
    /// When false, spontaneous channels are removed and the dynamics is
    /// purely coherent.
    pub spontaneous: bool,
    pub configuration: Option<ConfigurationKind>,
    pub expected_ordering: Option<EmissionOrdering>,
}

impl ModelProgram {
    pub fn pair(&self, channel: Channel) -> Option<&DrivenPair> {
        self.pairs.iter().find(|p| p.channel == channel)
    }

    pub fn without_spontaneous(mut self) -> Self {
        self.spontaneous = false;
        self
    }

    pub fn starting_at(mut self, level: Level) -> Self {
        self.initial = BasisLabel::ground(level);
        self
    }

    pub fn with_onset(mut self, onset: RabiOnset) -> Self {
        self.rabi_onset = onset;
        self
    }

    /// Largest Rabi coupling among the drives.
    pub fn max_rabi(&self) -> f64 {
        self.pairs.iter().map(|p| p.rabi).fold(0.0, f64::max)
    }

    /// Period of the radiationless loop through all three levels when
    /// both lasers drive the common level.
    pub fn resonance_loop_period(&self) -> f64 {
        let sum: f64 = self.pairs.iter().map(|p| p.rabi * p.rabi).sum();
        4.0 * std::f64::consts::PI / sum.sqrt()
    }
}

impl TransitionRules for ModelProgram {
    fn rabi_onset(&self) -> RabiOnset {
        self.rabi_onset
    }

    fn transitions(&self, label: &BasisLabel, from_launch: bool) -> Vec<Transition> {
        let mut out = Vec::new();
        for pair in &self.pairs {
            let (ds, dw) = match pair.channel {
                Channel::Strong => (1, 0),
                Channel::Weak => (0, 1),
            };
            if label.level == pair.lower && label.absorbed(pair.channel) < pair.reservoir as i64 {
                out.push(Transition {
                    kind: if from_launch { EdgeKind::Absorption } else { EdgeKind::RabiExchange },
                    channel: pair.channel,
                    target_level: pair.upper,
                    strong_delta: ds,
                    weak_delta: dw,
                    rabi: pair.rabi,
                    decay: pair.decay,
                });
            }
            if label.level == pair.upper {
                let omit = from_launch && !self.stimulated_emission && pair.channel == Channel::Strong;
                if !omit {
                    out.push(Transition {
                        kind: EdgeKind::RabiExchange,
                        channel: pair.channel,
                        target_level: pair.lower,
                        strong_delta: -ds,
                        weak_delta: -dw,
                        rabi: pair.rabi,
                        decay: pair.decay,
                    });
                }
                if self.spontaneous {
                    out.push(Transition {
                        kind: EdgeKind::Spontaneous,
                        channel: pair.channel,
                        target_level: pair.lower,
                        strong_delta: 0,
                        weak_delta: 0,
                        rabi: pair.rabi,
                        decay: pair.decay,
                    });
                }
            }
        }
        out
    }
}

fn strong_pair(scheme: &LevelScheme, lower: Level, upper: Level) -> DrivenPair {
    DrivenPair {
        channel: Channel::Strong,
        lower,
        upper,
        rabi: scheme.omega_strong,
        decay: scheme.gamma_strong,
        reservoir: scheme.n_strong_photons,
    }
}

fn weak_pair(scheme: &LevelScheme, lower: Level, upper: Level) -> DrivenPair {
    DrivenPair {
        channel: Channel::Weak,
        lower,
        upper,
        rabi: scheme.omega_weak,
        decay: scheme.gamma_weak,
        reservoir: scheme.n_weak_photons,
    }
}

fn program(
    scheme: &LevelScheme,
    pairs: Vec<DrivenPair>,
    initial: Level,
    configuration: Option<ConfigurationKind>,
    expected_ordering: Option<EmissionOrdering>,
) -> ModelProgram {
    ModelProgram {
        pairs,
        initial: BasisLabel::ground(initial),
        rabi_onset: scheme.rabi_onset,
        stimulated_emission: scheme.stimulated_emission,
        spontaneous: true,
        configuration,
        expected_ordering,
    }
}

/// Ground level and excited level driven by the strong laser only.
pub fn two_level_model(scheme: &LevelScheme) -> ModelProgram {
    program(
        scheme,
        vec![strong_pair(scheme, Level::A0, Level::A1)],
        Level::A0,
        None,
        None,
    )
}

pub fn three_level_v_model(scheme: &LevelScheme) -> Result<ModelProgram, ModelError> {
    if scheme.config != ConfigurationKind::V {
        return Err(ModelError::WrongConfiguration {
            expected: ConfigurationKind::V,
            found: scheme.config,
        });
    }
    Ok(build_configuration(scheme))
}

/// Level roles per geometry. Level 0 is shared by both pairs; the atom
/// starts in the lowest level.
pub fn build_configuration(scheme: &LevelScheme) -> ModelProgram {
    use Level::*;
    let kind = scheme.config;
    let (strong, weak, initial) = match kind {
        ConfigurationKind::V => (strong_pair(scheme, A0, A1), weak_pair(scheme, A0, A2), A0),
        ConfigurationKind::Lambda => (strong_pair(scheme, A1, A0), weak_pair(scheme, A2, A0), A1),
        ConfigurationKind::CascadeE1aboveE0 => {
            (strong_pair(scheme, A0, A1), weak_pair(scheme, A2, A0), A2)
        }
        ConfigurationKind::CascadeE1belowE0 => {
            (strong_pair(scheme, A1, A0), weak_pair(scheme, A0, A2), A1)
        }
    };
    // Shelving in level 2 releases the weak photon on leaving it (level 2
    // is the upper weak level) or on entering it (level 2 is the lower).
    let ordering = if weak.upper == A2 {
        EmissionOrdering::After
    } else {
        EmissionOrdering::Before
    };
    program(scheme, vec![strong, weak], initial, Some(kind), Some(ordering))
}
