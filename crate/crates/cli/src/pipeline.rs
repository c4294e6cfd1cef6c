//! Library compositions behind each command. Commands only add file I/O.

use bodyfit::body::{regress_joints, shape_mesh, skin, BodyModel, Mesh, ShapeParams};
use bodyfit::camera::{
    body_depth, fronto_parallel_pose, lift_joints, place_body, planar_joints, project, AnchorBoneSet,
    PerspectiveCamera,
};
use bodyfit::evolution::{generate_variants, MutationConfig, PoseDatabase};
use bodyfit::formats::{KeypointsFile, PoseFile, SkeletonFile};
use bodyfit::ik::{extract_twists, fit_root_rotation, solve_ik};
use bodyfit::kinematics::{random_pose, ClothMask, JointSet, KinematicTree, Pose};
use bodyfit::metrics::{
    keypoint_loss, kpe_2d, mask_weights, mpjpe_c, pa_mpjpe_c, shape_errors, twist_loss, twist_weights,
    MetricReport,
};
use bodyfit::shape::{
    axial_measurements, band_extremes, build_measurement_model, fit_shape, measurement_index,
    mesh_measurements_with, radial_measurements, sample_shape, LandmarkSemanticMap, LandmarkSet,
    MeasurementModel, MeasurementReport, MeasurementVector, ShapePosterior, WidthBands, MEASUREMENT_NAMES,
};
use bodyfit::seed::rng_for;
use bodyfit::Result;
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Weights};
use crate::scenario::{GroundTruth, LoadedScenario, ModelSpec, Scenario};

/// Garments dressed on synthesized bodies.
pub const SYNTH_GARMENTS: [&str; 2] = ["short_sleeve_top", "skirt"];

/// Shape components at or beyond this index change no measurement, so synthetic
/// shapes leave them at zero to stay recoverable.
pub const OBSERVABLE_SHAPE_DIMS: usize = 7;

const SYNTH_SHAPE_LIMIT: f64 = 2.0;

/// Everything a fit needs beyond the scenario.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub anchors: Vec<String>,
    pub temperature: f64,
    pub seed: u64,
    pub bands: WidthBands,
    pub measurement_samples: usize,
    pub landmark_map: LandmarkSemanticMap,
    pub weights: Weights,
}

impl FitOptions {
    pub fn from_config(config: &Config, seed: u64, temperature: f64, anchors: Option<Vec<String>>) -> crate::CliResult<Self> {
        Ok(Self {
            anchors: anchors.unwrap_or_else(|| config.anchors.clone()),
            temperature,
            seed,
            bands: config.bands,
            measurement_samples: config.measurement_samples,
            landmark_map: config.landmark_map()?,
            weights: config.weights,
        })
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self::from_config(&Config::default(), 0, 0.0, None).expect("default config is valid")
    }
}

/// Measurements read off the inputs, before any shape is known.
#[derive(Clone, Debug)]
pub struct Observation {
    pub anchors: AnchorBoneSet,
    /// Depth used to lift joints and scale pixel landmarks.
    pub depth: f64,
    pub depth_from_scenario: bool,
    pub measurements: MeasurementVector,
}

/// Shape posterior and the drawn coefficients.
#[derive(Clone, Debug)]
pub struct ShapeFit {
    pub measurement_model: MeasurementModel,
    pub posterior: ShapePosterior,
    pub beta: ShapeParams,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub observation: Observation,
    pub shape: ShapeFit,
    /// Adaptive depth at the fitted shape.
    pub depth: f64,
    /// Local rotations; the root sits at the shaped rest root.
    pub pose: Pose,
    pub translation: Vector3<f64>,
    pub joints: JointSet,
    pub mesh: Mesh,
    pub report: FitReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DepthReport {
    pub initial: f64,
    pub initial_source: String,
    pub fitted: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossReport {
    pub keypoint_l1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twist: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub depth: DepthReport,
    pub anchors: Vec<usize>,
    pub observed_measurements: MeasurementReport,
    /// Measurements the inputs did not provide.
    pub absent_measurements: Vec<String>,
    pub fitted_measurements: MeasurementReport,
    pub posterior: PosteriorReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<LossReport>,
}

/// Depth, lifted joints and the measurement vector of a scenario.
pub fn observe(loaded: &LoadedScenario, opts: &FitOptions) -> Result<Observation> {
    let s = &loaded.scenario;
    let model = &loaded.model;
    let tree = &loaded.tree;
    let n = tree.joint_count();
    let anchors = AnchorBoneSet::from_names(&opts.anchors, tree)?;
    let image = s.image_joints();
    let (depth, depth_from_scenario) = match s.depth {
        Some(d) => (d, true),
        None => {
            let mean = ShapeParams::zeros(model.shape_dims());
            let rest = model.rest_joints(&mean)?;
            (body_depth(&s.camera, &rest, &image, &anchors, model.tree())?, false)
        }
    };
    let lifted = lift_joints(&s.camera, &image, depth, &s.depth_offsets(n))?;
    let mut measurements = axial_measurements(tree, &lifted)?;
    for set in &s.landmarks {
        measurements.merge(&radial_measurements(set, &opts.landmark_map, depth, &s.camera)?);
    }
    Ok(Observation {
        anchors,
        depth,
        depth_from_scenario,
        measurements,
    })
}

/// Linear measurement model of `model` for the given options.
pub fn measurement_model(model: &BodyModel, opts: &FitOptions) -> Result<MeasurementModel> {
    build_measurement_model(model, opts.measurement_samples, opts.seed, &opts.bands)
}

/// Posterior under a standard-normal prior, then a draw at `opts.temperature`.
pub fn shape_from_measurements(
    mm: MeasurementModel,
    observed: &MeasurementVector,
    opts: &FitOptions,
) -> Result<ShapeFit> {
    let m = mm.shape_dims();
    let posterior = fit_shape(&mm, observed, &DVector::zeros(m), &DMatrix::identity(m, m))?;
    let beta = sample_shape(&posterior, opts.seed, opts.temperature)?;
    Ok(ShapeFit {
        measurement_model: mm,
        posterior,
        beta,
    })
}

/// Applies `name=value` edits (meters) to a measurement vector.
pub fn apply_edits(observed: &MeasurementVector, edits: &[(String, f64)]) -> Result<MeasurementVector> {
    let mut edited = observed.clone();
    for (name, value) in edits {
        edited.set(name, *value)?;
    }
    Ok(edited)
}

/// Parses `name=value`.
pub fn parse_edit(text: &str) -> Result<(String, f64)> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| bodyfit::Error::InvalidInput(format!("edit `{text}` is not name=value")))?;
    let name = name.trim();
    measurement_index(name)?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| bodyfit::Error::InvalidInput(format!("edit `{text}`: value is not a number")))?;
    Ok((name.to_string(), value))
}

/// Full fit: shape from measurements, then IK, placement and skinning.
pub fn run_fit(loaded: &LoadedScenario, opts: &FitOptions) -> Result<FitResult> {
    let observation = observe(loaded, opts)?;
    let mm = measurement_model(&loaded.model, opts)?;
    let shape = shape_from_measurements(mm, &observation.measurements, opts)?;
    pose_from_shape(loaded, opts, observation, shape)
}

fn pose_from_shape(
    loaded: &LoadedScenario,
    opts: &FitOptions,
    observation: Observation,
    shape: ShapeFit,
) -> Result<FitResult> {
    let s = &loaded.scenario;
    let model = &loaded.model;
    let n = loaded.tree.joint_count();
    let image = s.image_joints();
    let beta = &shape.beta;

    let rest = model.rest_joints(beta)?;
    let shaped = model.shaped_tree(beta)?;
    let depth = body_depth(&s.camera, &rest, &image, &observation.anchors, &shaped)?;
    let lifted = lift_joints(&s.camera, &image, depth, &s.depth_offsets(n))?;
    let root = fit_root_rotation(&shaped, &lifted)?;
    let pose = solve_ik(&shaped, &lifted, &s.twist_angles(n - 1), &root)?.with_root_translation(Vector3::zeros());
    let translation = place_body(&s.camera, &rest, &image, &observation.anchors, &shaped)?;
    let joints = model.posed_joints(beta, &pose)?.translated(&translation);
    let mut mesh = skin(model, beta, &pose)?;
    for v in &mut mesh.vertices {
        *v += translation;
    }

    let (metrics, losses) = match loaded.ground_truth() {
        Some(gt) => {
            let (m, l) = evaluate(model, &shaped, s, gt, &joints, &pose, beta, &opts.weights)?;
            (Some(m), l)
        }
        None => (None, None),
    };
    let fitted = mesh_measurements_with(model, beta, &opts.bands)?;
    let report = FitReport {
        depth: DepthReport {
            initial: observation.depth,
            initial_source: if observation.depth_from_scenario { "scenario" } else { "adaptive" }.into(),
            fitted: depth,
        },
        anchors: observation.anchors.bone_indices.clone(),
        observed_measurements: observation.measurements.clone().into(),
        absent_measurements: absent_names(&observation.measurements),
        fitted_measurements: fitted.into(),
        posterior: posterior_report(&shape.posterior),
        metrics,
        losses,
    };
    Ok(FitResult {
        observation,
        shape,
        depth,
        pose,
        translation,
        joints,
        mesh,
        report,
    })
}

fn absent_names(m: &MeasurementVector) -> Vec<String> {
    MEASUREMENT_NAMES
        .iter()
        .zip(m.values)
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n.to_string())
        .collect()
}

pub fn posterior_report(p: &ShapePosterior) -> PosteriorReport {
    PosteriorReport {
        mean: p.mean.iter().copied().collect(),
        covariance: p.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
}

/// Projects camera-space joints with a zero translation.
pub fn image_of(camera: &PerspectiveCamera, joints: &JointSet) -> Result<Vec<Vector2<f64>>> {
    project(camera, joints.positions(), &Vector3::zeros())
}

/// Metrics of predicted camera-space joints against a scenario's ground truth.
///
/// 2D-KPE compares re-projected joints with the scenario keypoints; shape
/// errors need a ground-truth shape and are omitted otherwise.
pub fn metric_report(
    model: &BodyModel,
    scenario: &Scenario,
    gt: &GroundTruth,
    pred_joints: &JointSet,
    pred_beta: &ShapeParams,
) -> Result<MetricReport> {
    let mask = &scenario.cloth_mask;
    let gt_joints = gt
        .camera_joints(model)?
        .ok_or_else(|| bodyfit::Error::InvalidInput("ground truth lacks joints (or pose, shape and translation)".into()))?;
    let pred2d = image_of(&scenario.camera, pred_joints)?;
    Ok(MetricReport {
        mpjpe_c_mm: Some(mpjpe_c(pred_joints, &gt_joints, mask)?),
        pa_mpjpe_c_mm: Some(pa_mpjpe_c(pred_joints, &gt_joints, mask)?),
        kpe2d_px: Some(kpe_2d(&pred2d, &scenario.image_joints(), mask)?),
        shape_errors_mm: gt.shape().map(|b| shape_errors(model, pred_beta, &b)).transpose()?,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    model: &BodyModel,
    shaped: &KinematicTree,
    scenario: &Scenario,
    gt: &GroundTruth,
    joints: &JointSet,
    pose: &Pose,
    beta: &ShapeParams,
    weights: &Weights,
) -> Result<(MetricReport, Option<LossReport>)> {
    let metrics = metric_report(model, scenario, gt, joints, beta)?;
    let mask = &scenario.cloth_mask;
    let losses = match gt.camera_joints(model)? {
        Some(gt_joints) => {
            let w = mask_weights(mask, weights.covered, weights.uncovered);
            let twist = match &gt.pose {
                Some(p) => {
                    let gt_twists = extract_twists(shaped, &p.to_pose()?)?;
                    let tw = twist_weights(mask, weights.covered, weights.uncovered);
                    Some(twist_loss(&extract_twists(shaped, pose)?, &gt_twists, &tw)?)
                }
                None => None,
            };
            Some(LossReport {
                keypoint_l1: keypoint_loss(joints, &gt_joints, &w)?,
                twist,
            })
        }
        None => None,
    };
    Ok((metrics, losses))
}

/// Variants of the fitted pose; root placement is unchanged.
pub fn run_evolve(
    fit: &FitResult,
    db: &PoseDatabase,
    mask: &ClothMask,
    count: usize,
    epsilon: f64,
    k: usize,
    seed: u64,
) -> Result<Vec<Pose>> {
    let config = MutationConfig::new(epsilon, seed)?;
    generate_variants(db, &fit.pose, mask, count, &config, k)
}

/// Camera-space mesh of `pose` at `translation`.
pub fn posed_mesh(model: &BodyModel, beta: &ShapeParams, pose: &Pose, translation: &Vector3<f64>) -> Result<Mesh> {
    let mut mesh = skin(model, beta, pose)?;
    for v in &mut mesh.vertices {
        *v += translation;
    }
    Ok(mesh)
}

/// A synthetic scene with known answers.
#[derive(Clone, Debug)]
pub struct Synthesized {
    pub scenario: Scenario,
    pub skeleton: SkeletonFile,
    pub database: PoseDatabase,
}

pub const SKELETON_FILE: &str = "skeleton.json";

/// Random fronto-parallel body in front of the camera, seen through its
/// joints' pixels and garment landmarks, plus a random pose database.
pub fn synthesize(seed: u64, db_size: usize, config: &Config) -> Result<Synthesized> {
    let spec = ModelSpec::with_seed(seed);
    let model = spec.build()?;
    let camera = config.camera;
    camera.validate()?;
    let n = model.joint_count();

    let mut rng = rng_for(seed, "synth-shape", 0);
    let beta = ShapeParams {
        beta: (0..model.shape_dims())
            .map(|i| {
                let b: f64 = rng.sample(StandardNormal);
                if i < OBSERVABLE_SHAPE_DIMS { b.clamp(-SYNTH_SHAPE_LIMIT, SYNTH_SHAPE_LIMIT) } else { 0.0 }
            })
            .collect(),
    };
    let shaped = model.shaped_tree(&beta)?;
    let anchors = AnchorBoneSet::from_names(&config.anchors, &shaped)?;

    let mut rng = rng_for(seed, "synth-pose", 0);
    let mut pose = fronto_parallel_pose(&mut rng, &shaped, &anchors, config.synth_max_angle);
    for k in 0..n {
        if shaped.children(k).is_empty() {
            pose.set_rotation(k, nalgebra::Matrix3::identity())?;
        }
    }
    let rest = model.rest_joints(&beta)?;
    let root_camera = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(3.5..4.5));
    let translation = root_camera - rest.0[0];
    let joints = model.posed_joints(&beta, &pose)?.translated(&translation);
    let pixels = image_of(&camera, &joints)?;
    let depth = joints.0[0].z;

    let map = config.landmark_map().map_err(|e| e.source)?;
    let landmarks = synth_landmarks(&model, &shaped, &beta, &pose, &translation, &anchors, &camera, &map, &config.bands)?;
    let cloth_mask = map.cloth_mask(&SYNTH_GARMENTS, &shaped)?;

    let scenario = Scenario {
        camera,
        model: spec,
        skeleton: SKELETON_FILE.into(),
        keypoints: KeypointsFile {
            points: pixels.iter().map(|p| [p.x, p.y]).collect(),
            visible: vec![true; n],
        },
        depth: Some(depth),
        depth_offsets: Some(joints.0.iter().map(|p| p.z - depth).collect()),
        twists: Some(extract_twists(&shaped, &pose)?.phi),
        landmarks,
        cloth_mask,
        ground_truth: Some(GroundTruth {
            pose: Some(PoseFile::from_pose(&pose)),
            beta: Some(beta.beta.clone()),
            translation: Some(translation.into()),
            joints: Some(joints.0.iter().map(|p| (*p).into()).collect()),
        }),
    };

    let mut rng = rng_for(seed, "pose-db", 0);
    let database = PoseDatabase::new(
        (0..db_size)
            .map(|i| (random_pose(&mut rng, n, 1.0).with_root_translation(Vector3::zeros()), format!("db-{i:04}")))
            .collect(),
    )?;
    Ok(Synthesized {
        scenario,
        skeleton: SkeletonFile::from_tree(model.tree()),
        database,
    })
}

/// Landmark pixels for every pair of the synthesized garments.
///
/// Width landmarks are the band-extreme vertices, shoulder landmarks the
/// shoulder joints. Each pair moves rigidly with the nearest joint (from its
/// dominant skinning joint up) that stays parallel to the image plane, so pixel
/// distances scale to the rest widths at the body depth.
#[allow(clippy::too_many_arguments)]
fn synth_landmarks(
    model: &BodyModel,
    shaped: &KinematicTree,
    beta: &ShapeParams,
    pose: &Pose,
    translation: &Vector3<f64>,
    anchors: &AnchorBoneSet,
    camera: &PerspectiveCamera,
    map: &LandmarkSemanticMap,
    bands: &WidthBands,
) -> Result<Vec<LandmarkSet>> {
    let mesh = shape_mesh(model, beta)?;
    let rest = regress_joints(model, &mesh)?;
    let posed = model.posed_joints(beta, pose)?;
    let globals = pose.global_rotations(shaped)?;
    let planar = planar_joints(shaped, anchors);
    let carrier = |mut k: usize| {
        while !planar[k] {
            k = shaped.parent(k).expect("root is planar");
        }
        k
    };
    let dominant = |v: usize| {
        model.skin_weights()[v]
            .iter()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, &(k, w)| if w > best.1 { (k, w) } else { best })
            .0
    };
    let place = |p: Vector3<f64>, k: usize| -> Result<[f64; 2]> {
        let cam = globals[k] * (p - rest.0[k]) + posed.0[k] + translation;
        let uv = project(camera, &[cam], &Vector3::zeros())?[0];
        Ok([uv.x, uv.y])
    };

    let extremes = band_extremes(&mesh, bands);
    let ls = shaped.require("left_shoulder")?;
    let rs = shaped.require("right_shoulder")?;
    let pair_points = |measurement: &str| -> Result<Option<[[f64; 2]; 2]>> {
        let (a, b, k) = match measurement {
            "shoulder_width" => (rest.0[ls], rest.0[rs], carrier(ls)),
            "chest_width" | "waist_width" | "hips_width" => {
                let band = ["chest_width", "waist_width", "hips_width"].iter().position(|m| *m == measurement).unwrap();
                let Some((l, r)) = extremes[band] else { return Ok(None) };
                (mesh.vertices[l], mesh.vertices[r], carrier(dominant(l)))
            }
            _ => return Ok(None),
        };
        Ok(Some([place(a, k)?, place(b, k)?]))
    };

    SYNTH_GARMENTS
        .iter()
        .map(|garment| {
            let mut points = std::collections::BTreeMap::new();
            for pair in &map.category(garment)?.pairs {
                if let Some([a, b]) = pair_points(&pair.measurement)? {
                    points.insert(pair.labels[0].clone(), a.to_vec());
                    points.insert(pair.labels[1].clone(), b.to_vec());
                }
            }
            Ok(LandmarkSet {
                category: garment.to_string(),
                points,
            })
        })
        .collect()
}
