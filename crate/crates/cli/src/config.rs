use std::path::{Path, PathBuf};

use bodyfit::camera::PerspectiveCamera;
use bodyfit::formats::read_json;
use bodyfit::metrics::{COVERED_WEIGHT, UNCOVERED_WEIGHT};
use bodyfit::shape::{default_landmark_map, LandmarkSemanticMap, WidthBands};
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Context};

/// Loss weights for covered and uncovered joints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub covered: f64,
    pub uncovered: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            covered: COVERED_WEIGHT,
            uncovered: UNCOVERED_WEIGHT,
        }
    }
}

/// Optional JSON config; command-line flags take precedence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Camera used by `synth`.
    pub camera: PerspectiveCamera,
    /// Anchor bones for depth estimation (joint names, indices or `"default"`).
    pub anchors: Vec<String>,
    pub weights: Weights,
    pub bands: WidthBands,
    /// Landmark semantic map; relative paths resolve against the config file.
    pub landmark_map: Option<PathBuf>,
    /// Random shapes used to fit the linear measurement model.
    pub measurement_samples: usize,
    /// Largest joint rotation (radians) of synthesized poses.
    pub synth_max_angle: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            camera: PerspectiveCamera::default(),
            anchors: vec!["default".into()],
            weights: Weights::default(),
            bands: WidthBands::default(),
            landmark_map: None,
            measurement_samples: 200,
            synth_max_angle: 0.5,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let ctx = || format!("reading config {}", path.display());
        let mut config: Config = read_json(path).context(ctx())?;
        if let Some(map) = &config.landmark_map {
            if map.is_relative() {
                config.landmark_map = Some(path.parent().unwrap_or(Path::new(".")).join(map));
            }
        }
        config.camera.validate().context(ctx())?;
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn landmark_map(&self) -> CliResult<LandmarkSemanticMap> {
        match &self.landmark_map {
            None => Ok(default_landmark_map()),
            Some(p) => {
                let ctx = || format!("reading landmark map {}", p.display());
                let text = std::fs::read_to_string(p).context(ctx())?;
                LandmarkSemanticMap::from_json(&text).context(ctx())
            }
        }
    }
}
