//! Run settings gathered from an optional key=value file and flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shelving::ensemble::Engine;
use shelving::scheme::{build_scheme, parse_sections, SchemeConfig};
use shelving::LevelScheme;

use crate::Failure;

/// Everything that determines the contents of `emissions.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scheme: SchemeConfig,
    pub scheme_hash: String,
    pub trajectories: usize,
    pub t_max: f64,
    pub seed: u64,
    pub engine: Engine,
}

impl RunManifest {
    pub fn level_scheme(&self) -> Result<LevelScheme, Failure> {
        build_scheme(&self.scheme).map_err(|e| Failure::config(format!("manifest scheme: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }
}

/// Run settings before defaults are applied. Flags and file entries both
/// land here; flags win.
#[derive(Clone, Debug, Default)]
pub struct RunSettings {
    pub scheme: Option<PathBuf>,
    pub trajectories: Option<usize>,
    pub t_max: Option<f64>,
    pub seed: Option<u64>,
    pub engine: Option<Engine>,
    pub out: Option<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Failure::config(format!("field `{key}`: cannot parse `{value}`: {e}")))
}

impl RunSettings {
    /// Reads a manifest file. Relative paths inside it are taken relative
    /// to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let sections = parse_sections(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut out = RunSettings::default();
        for (_, map) in sections {
            for (key, value) in map {
                match key.as_str() {
                    "scheme" => out.scheme = Some(base.join(value)),
                    "trajectories" | "n_trajectories" => out.trajectories = Some(parse(&key, &value)?),
                    "t_max" => out.t_max = Some(parse(&key, &value)?),
                    "seed" | "base_seed" => out.seed = Some(parse(&key, &value)?),
                    "engine" => out.engine = Some(parse(&key, &value)?),
                    "out" | "output" => out.out = Some(base.join(value)),
                    other => return Err(Failure::config(format!("{}: unknown key `{other}`", path.display()))),
                }
            }
        }
        Ok(out)
    }

    /// Fields set in `self` win over those in `file`.
    pub fn over(self, file: RunSettings) -> RunSettings {
        RunSettings {
            scheme: self.scheme.or(file.scheme),
            trajectories: self.trajectories.or(file.trajectories),
            t_max: self.t_max.or(file.t_max),
            seed: self.seed.or(file.seed),
            engine: self.engine.or(file.engine),
            out: self.out.or(file.out),
        }
    }

    /// Validates and fills defaults: one trajectory, seed 0, the nRules
    /// engine and the current directory.
    pub fn resolve(self) -> Result<(RunManifest, LevelScheme, PathBuf), Failure> {
        let scheme_path = self.scheme.ok_or_else(|| Failure::config("field `scheme`: no scheme file given"))?;
        let scheme = read_scheme(&scheme_path)?;
        let trajectories = self.trajectories.unwrap_or(1);
        if trajectories == 0 {
            return Err(Failure::config("field `trajectories` must be at least 1"));
        }
        let t_max = self.t_max.ok_or_else(|| Failure::config("field `t_max`: no horizon given"))?;
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Failure::config(format!("field `t_max` must be finite and nonnegative, got {t_max}")));
        }
        let manifest = RunManifest {
            scheme: scheme.to_config(),
            scheme_hash: scheme.content_hash(),
            trajectories,
            t_max,
            seed: self.seed.unwrap_or(0),
            engine: self.engine.unwrap_or_default(),
        };
        Ok((manifest, scheme, self.out.unwrap_or_else(|| PathBuf::from("."))))
    }
}

pub fn read_scheme(path: &Path) -> Result<LevelScheme, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let raw = SchemeConfig::parse(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    build_scheme(&raw).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "scheme = desk.conf\ntrajectories = 4\nt_max = 10\nseed = 3\n").unwrap();
        let file = RunSettings::from_file(&path).unwrap();
        let flags = RunSettings {
            seed: Some(9),
            ..RunSettings::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.trajectories, Some(4));
        assert_eq!(merged.scheme, Some(dir.path().join("desk.conf")));
    }

    #[test]
    fn unknown_manifest_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "trajectorys = 4\n").unwrap();
        let err = RunSettings::from_file(&path).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("trajectorys"));
    }

    #[test]
    fn zero_trajectories_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let scheme = dir.path().join("s.conf");
        fs::write(&scheme, LevelScheme::desk_scale().to_config_string()).unwrap();
        let settings = RunSettings {
            scheme: Some(scheme),
            trajectories: Some(0),
            t_max: Some(1.0),
            ..RunSettings::default()
        };
        assert_eq!(settings.resolve().unwrap_err().code, 2);
    }
}
