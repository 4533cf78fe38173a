//! Many trajectories in parallel, collected in trajectory order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_program, DynamicsError};
use crate::mcwf::{mcwf_trajectory, McwfModel};
use crate::models::{build_configuration, ModelProgram};
use crate::record::EmissionRecord;
use crate::scheme::LevelScheme;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Ready-component state reduction.
    #[default]
    NRules,
    /// Standard quantum jumps.
    Mcwf,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::NRules => "nrules",
            Engine::Mcwf => "mcwf",
        })
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nrules" => Ok(Engine::NRules),
            "mcwf" => Ok(Engine::Mcwf),
            other => Err(format!("unknown engine `{other}` (expected nrules or mcwf)")),
        }
    }
}

/// Trajectory `i` uses stream `i` of the base seed.
pub fn run_program_ensemble(
    program: &ModelProgram,
    n: usize,
    t_max: f64,
    base_seed: u64,
) -> Result<Vec<EmissionRecord>, DynamicsError> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| run_program(program, t_max, base_seed, i))
        .collect()
}

pub fn run_mcwf_ensemble(model: &McwfModel, n: usize, t_max: f64, base_seed: u64) -> Vec<EmissionRecord> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| mcwf_trajectory(model, t_max, base_seed, i))
        .collect()
}

pub fn run_ensemble(
    scheme: &LevelScheme,
    engine: Engine,
    n: usize,
    t_max: f64,
    base_seed: u64,
) -> Result<Vec<EmissionRecord>, DynamicsError> {
    match engine {
        Engine::NRules => run_program_ensemble(&build_configuration(scheme), n, t_max, base_seed),
        Engine::Mcwf => Ok(run_mcwf_ensemble(&McwfModel::from_scheme(scheme), n, t_max, base_seed)),
    }
}
