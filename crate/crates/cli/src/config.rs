use std::path::Path;

use gridloc::pipeline::PipelineConfig;
use gridloc::simulate::{SceneSpec, TrajectorySpec};
use gridloc::{Error, Result};
use serde::{Deserialize, Serialize};

/// Contents of the `--config` file. Every section is optional and falls
/// back to the built-in defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.scene.validate()?;
        cfg.pipeline.validate()?;
        if !(cfg.trajectory.fps > 0.0 && cfg.trajectory.duration >= 0.0 && cfg.trajectory.speed > 0.0) {
            return Err(Error::Config("trajectory fps, duration and speed must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// `<dir>/<stem>.params.toml` for an output file, `<dir>/params.toml` for
/// an output directory.
pub fn dump_path(output: &Path, is_dir: bool) -> std::path::PathBuf {
    if is_dir {
        return output.join("params.toml");
    }
    let stem = output.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.params.toml"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: RunConfig = toml::from_str("[trajectory]\nkind = \"arc\"\nspeed = 0.2\n").unwrap();
        assert_eq!(cfg.trajectory.speed, 0.2);
        assert_eq!(cfg.scene, SceneSpec::default());
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[scenery]\n").is_err());
    }

    #[test]
    fn dump_paths() {
        assert_eq!(dump_path(Path::new("out/traj.csv"), false), Path::new("out/traj.params.toml"));
        assert_eq!(dump_path(Path::new("frames"), true), Path::new("frames/params.toml"));
    }
}
