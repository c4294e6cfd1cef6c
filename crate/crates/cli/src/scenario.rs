//! Scenario files: the inputs a fit consumes, plus optional ground truth.

use std::path::{Path, PathBuf};

use bodyfit::body::{synth_body_model, BodyModel, ShapeParams, DEFAULT_SHAPE_DIMS, DEFAULT_VERTEX_BUDGET};
use bodyfit::camera::PerspectiveCamera;
use bodyfit::formats::{read_json, KeypointsFile, PoseFile, SkeletonFile};
use bodyfit::ik::TwistAngles;
use bodyfit::kinematics::{ClothMask, JointSet, KinematicTree, Pose};
use bodyfit::shape::LandmarkSet;
use bodyfit::Error;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

/// Parameters of the procedural body model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub seed: u64,
    #[serde(default = "default_shape_dims")]
    pub shape_dims: usize,
    #[serde(default = "default_vertex_budget")]
    pub vertex_budget: usize,
}

fn default_shape_dims() -> usize {
    DEFAULT_SHAPE_DIMS
}

fn default_vertex_budget() -> usize {
    DEFAULT_VERTEX_BUDGET
}

impl ModelSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            shape_dims: DEFAULT_SHAPE_DIMS,
            vertex_budget: DEFAULT_VERTEX_BUDGET,
        }
    }

    pub fn build(&self) -> bodyfit::Result<BodyModel> {
        synth_body_model(24, self.shape_dims, self.vertex_budget, self.seed)
    }
}

/// Known answers for synthetic scenes. Joints are camera-space meters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub camera: PerspectiveCamera,
    pub model: ModelSpec,
    /// Skeleton file, relative to the scenario file.
    pub skeleton: PathBuf,
    pub keypoints: KeypointsFile,
    /// Camera depth of the root joint; estimated from the anchor bones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    /// Per-joint depth relative to `depth`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_offsets: Option<Vec<f64>>,
    /// Twist angle of each non-root bone; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twists: Option<Vec<f64>>,
    #[serde(default)]
    pub landmarks: Vec<LandmarkSet>,
    pub cloth_mask: ClothMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

/// A parsed, validated scenario with its model and skeleton.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub scenario: Scenario,
    pub tree: KinematicTree,
    pub model: BodyModel,
}

fn count(what: &'static str, expected: usize, found: usize) -> bodyfit::Result<()> {
    if expected != found {
        return Err(Error::CountMismatch { what, expected, found });
    }
    Ok(())
}

impl Scenario {
    pub fn image_joints(&self) -> Vec<Vector2<f64>> {
        self.keypoints.points.iter().map(|p| Vector2::new(p[0], p[1])).collect()
    }

    pub fn depth_offsets(&self, n: usize) -> Vec<f64> {
        self.depth_offsets.clone().unwrap_or_else(|| vec![0.0; n])
    }

    pub fn twist_angles(&self, n: usize) -> TwistAngles {
        self.twists
            .clone()
            .map_or_else(|| TwistAngles::zeros(n), |phi| TwistAngles { phi })
    }

    /// Joint counts agree across every member.
    pub fn validate(&self, tree: &KinematicTree, model: &BodyModel) -> bodyfit::Result<()> {
        self.camera.validate()?;
        let n = tree.joint_count();
        count("model joints", n, model.joint_count())?;
        if tree.names() != model.tree().names() || tree.parents() != model.tree().parents() {
            return Err(Error::InvalidInput("skeleton does not match the body model hierarchy".into()));
        }
        count("keypoints", n, self.keypoints.points.len())?;
        count("keypoint visibility flags", n, self.keypoints.visible.len())?;
        if self.keypoints.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("keypoints must be finite".into()));
        }
        if let Some(d) = self.depth {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::DegenerateDepth(format!("scenario depth must be positive, got {d}")));
            }
        }
        if let Some(o) = &self.depth_offsets {
            count("depth offsets", n, o.len())?;
        }
        if let Some(t) = &self.twists {
            count("twist angles", n - 1, t.len())?;
        }
        count("cloth mask", n, self.cloth_mask.len())?;
        for set in &self.landmarks {
            set.dimension()?;
        }
        if let Some(gt) = &self.ground_truth {
            if let Some(p) = &gt.pose {
                count("ground-truth rotations", n, p.rotations.len())?;
                p.to_pose()?;
            }
            if let Some(b) = &gt.beta {
                count("ground-truth shape", model.shape_dims(), b.len())?;
            }
            if let Some(j) = &gt.joints {
                count("ground-truth joints", n, j.len())?;
            }
        }
        Ok(())
    }
}

impl GroundTruth {
    pub fn shape(&self) -> Option<ShapeParams> {
        self.beta.clone().map(|beta| ShapeParams { beta })
    }

    /// Camera-space joints: stored, or rebuilt from pose, shape and translation.
    pub fn camera_joints(&self, model: &BodyModel) -> bodyfit::Result<Option<JointSet>> {
        if let Some(j) = &self.joints {
            return Ok(Some(JointSet(j.iter().map(|p| Vector3::from(*p)).collect())));
        }
        match (&self.pose, self.shape(), self.translation) {
            (Some(p), Some(b), Some(t)) => {
                let pose: Pose = p.to_pose()?;
                Ok(Some(model.posed_joints(&b, &pose)?.translated(&Vector3::from(t))))
            }
            _ => Ok(None),
        }
    }
}

impl LoadedScenario {
    pub fn load(path: &Path) -> CliResult<Self> {
        let ctx = format!("reading scenario {}", path.display());
        let scenario: Scenario = read_json(path).context(&ctx)?;
        let skeleton_path = path.parent().unwrap_or(Path::new(".")).join(&scenario.skeleton);
        let skeleton: SkeletonFile = read_json(&skeleton_path)
            .context(format!("reading skeleton {}", skeleton_path.display()))?;
        let tree = skeleton.to_tree().context(format!("reading skeleton {}", skeleton_path.display()))?;
        let model = scenario.model.build().context(&ctx)?;
        scenario.validate(&tree, &model).context(&ctx)?;
        Ok(Self {
            path: path.to_path_buf(),
            scenario,
            tree,
            model,
        })
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.scenario.ground_truth.as_ref()
    }

    pub fn require_ground_truth(&self) -> CliResult<&GroundTruth> {
        self.ground_truth()
            .ok_or_else(|| CliError::input(format!("scenario {}", self.path.display()), "no ground truth"))
    }
}
