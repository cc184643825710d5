//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classifier::TrainConfig;
use crate::graphcut::GraphCutParams;
use crate::DEFAULT_GAMMA;

/// Where the scene comes from. Exactly one of `synthetic_seed`,
/// `scene_dir`, or the explicit `volume` / `cameras` / `views` triple.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Generate the default desk scene with this seed.
    pub synthetic_seed: Option<u64>,
    /// Directory written by `voxsel synth`.
    pub scene_dir: Option<PathBuf>,
    pub volume: Option<PathBuf>,
    /// Camera file: reference first, then source views, optionally the
    /// validation view last.
    pub cameras: Option<PathBuf>,
    /// One image per camera, in camera order.
    pub views: Vec<PathBuf>,
    /// Index of the held-out validation camera, excluded from the cost volume.
    pub validation_view: Option<usize>,
    /// Ground-truth voxel labels (label sidecar format), optional.
    pub gt_labels: Option<PathBuf>,
    /// Scribble file; when absent, strokes are drawn from the ground truth.
    pub scribbles: Option<PathBuf>,
    /// Name used in metric records.
    pub scene_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoScribbleConfig {
    pub fg_strokes: usize,
    pub bg_strokes: usize,
    pub seed: u64,
}

impl Default for AutoScribbleConfig {
    fn default() -> Self {
        Self {
            fg_strokes: 3,
            bg_strokes: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Graphcut3d,
    Graphcut2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    /// Run the graph-cut refinement; otherwise the thresholded classifier
    /// output is final.
    pub postprocess: bool,
    /// Include the multi-view cost-volume features.
    pub mvs_features: bool,
    /// Also score the model without multi-view features.
    pub ablate_mvs: bool,
    pub baselines: Vec<BaselineKind>,
    /// Clusters per class for the 2D baseline.
    pub baseline_2d_clusters: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            postprocess: true,
            mvs_features: true,
            ablate_mvs: false,
            baselines: Vec::new(),
            baseline_2d_clusters: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub output_dir: PathBuf,
    /// Model initialization and feature projection seed.
    pub seed: u64,
    /// Transmittance threshold for scribble lifting.
    pub gamma: f64,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
    pub auto_scribbles: AutoScribbleConfig,
    pub train: TrainConfig,
    pub graphcut: GraphCutParams,
    pub stages: StageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            output_dir: PathBuf::from("voxsel-out"),
            seed: 0,
            gamma: DEFAULT_GAMMA,
            workers: None,
            auto_scribbles: AutoScribbleConfig::default(),
            train: TrainConfig::default(),
            graphcut: GraphCutParams::default(),
            stages: StageConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut cfg.input;
        for p in [&mut i.scene_dir, &mut i.volume, &mut i.cameras, &mut i.gt_labels, &mut i.scribbles]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        i.views.iter_mut().for_each(fix);
        fix(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks ranges and that every referenced path exists. Errors name the
    /// offending field.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg_err = |m: String| Err(PipelineError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return cfg_err(format!("gamma: {} is outside (0, 1)", self.gamma));
        }
        if self.workers == Some(0) {
            return cfg_err("workers: must be at least 1".into());
        }
        self.train.validate().map_err(|e| PipelineError::Config(format!("train: {e}")))?;
        self.graphcut
            .validate()
            .map_err(|e| PipelineError::Config(format!("graphcut: {e}")))?;
        if self.stages.baseline_2d_clusters == 0 {
            return cfg_err("stages.baseline_2d_clusters: must be at least 1".into());
        }
        let i = &self.input;
        let explicit = i.volume.is_some() || i.cameras.is_some() || !i.views.is_empty();
        let sources = usize::from(i.synthetic_seed.is_some()) + usize::from(i.scene_dir.is_some()) + usize::from(explicit);
        if sources != 1 {
            return cfg_err(
                "input: set exactly one of synthetic_seed, scene_dir, or volume + cameras + views".into(),
            );
        }
        if explicit {
            if i.volume.is_none() {
                return cfg_err("input.volume: missing volume path".into());
            }
            if i.cameras.is_none() {
                return cfg_err("input.cameras: missing camera file".into());
            }
            if i.views.is_empty() {
                return cfg_err("input.views: no images listed".into());
            }
        }
        let mut paths: Vec<(&str, &PathBuf)> = Vec::new();
        paths.extend(i.scene_dir.iter().map(|p| ("input.scene_dir", p)));
        paths.extend(i.volume.iter().map(|p| ("input.volume", p)));
        paths.extend(i.cameras.iter().map(|p| ("input.cameras", p)));
        paths.extend(i.views.iter().map(|p| ("input.views", p)));
        paths.extend(i.gt_labels.iter().map(|p| ("input.gt_labels", p)));
        paths.extend(i.scribbles.iter().map(|p| ("input.scribbles", p)));
        for (field, p) in paths {
            if !p.exists() {
                return cfg_err(format!("{field}: {} does not exist", p.display()));
            }
        }
        if i.scribbles.is_none() && i.gt_labels.is_none() && explicit {
            return cfg_err("input.scribbles: required when no ground truth is available".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig {
            input: InputConfig {
                synthetic_seed: Some(3),
                ..Default::default()
            },
            ..Default::default()
        };
        let back = PipelineConfig::from_toml(&cfg.to_toml(), Path::new("")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.graphcut.w2, 10.0);
        assert_eq!(back.gamma, 0.01);
    }

    #[test]
    fn relative_paths_resolve() {
        let cfg = PipelineConfig::from_toml("output_dir = \"out\"\n[input]\nscene_dir = \"s\"\n", Path::new("/base")).unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.input.scene_dir, Some(PathBuf::from("/base/s")));
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = PipelineConfig::default();
        cfg.input.cameras = Some("/nonexistent/cams.txt".into());
        cfg.input.views = vec!["/nonexistent/a.png".into()];
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("input.volume"), "{msg}");
        let mut cfg = PipelineConfig::default();
        cfg.input.synthetic_seed = Some(0);
        cfg.gamma = 2.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("gamma"));
        assert!(PipelineConfig::from_toml("bogus = 1", Path::new("")).is_err());
    }
}
