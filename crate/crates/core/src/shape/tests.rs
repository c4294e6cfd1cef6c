use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::body::{default_body_model, shape_mesh, synth_body_model, BodyModel, ShapeParams};
use crate::camera::PerspectiveCamera;
use crate::kinematics::{forward_kinematics, random_pose, JointSet, KinematicTree, TEMPLATE_JOINTS};

fn model() -> &'static BodyModel {
    static MODEL: OnceLock<BodyModel> = OnceLock::new();
    MODEL.get_or_init(|| default_body_model(0))
}

fn measurement_model() -> &'static MeasurementModel {
    static MM: OnceLock<MeasurementModel> = OnceLock::new();
    MM.get_or_init(|| build_measurement_model(model(), 200, 1, &WidthBands::default()).unwrap())
}

fn template_joints() -> JointSet {
    JointSet(TEMPLATE_JOINTS.iter().map(|p| Vector3::from(*p)).collect())
}

fn close(a: Option<f64>, b: f64, tol: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() < tol)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
}

#[test]
fn template_axial_snapshot() {
    let tree = KinematicTree::smpl_default();
    let m = axial_measurements(&tree, &template_joints()).unwrap();
    assert!(close(m.values[HEIGHT], 1.70, 1e-12));
    assert!(close(m.values[LEG_LENGTH], 0.75, 1e-12));
    assert!(close(m.values[ARM_SPAN], 1.52, 1e-12));
    assert!(close(m.values[TORSO_LENGTH], 0.58, 1e-12));
    assert!(m.values[AXIAL_COUNT..].iter().all(|v| v.is_none()));
}

#[test]
fn axial_values_scale_with_skeleton() {
    let tree = KinematicTree::smpl_default();
    let a = axial_measurements(&tree, &template_joints()).unwrap();
    let b = axial_measurements(&tree, &template_joints().scaled(2.0)).unwrap();
    for i in 0..AXIAL_COUNT {
        assert!((b.values[i].unwrap() - 2.0 * a.values[i].unwrap()).abs() < 1e-12);
    }
}

#[test]
fn symmetric_legs_give_single_leg_length() {
    let tree = KinematicTree::smpl_default();
    let j = template_joints();
    let single = (j.0[1] - j.0[4]).norm() + (j.0[4] - j.0[7]).norm();
    let m = axial_measurements(&tree, &j).unwrap();
    assert_eq!(m.values[LEG_LENGTH], Some(single));
}

#[test]
fn axial_values_ignore_pose() {
    let tree = KinematicTree::smpl_default();
    let rest = axial_measurements(&tree, &tree.rest_positions(Vector3::zeros())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let posed = forward_kinematics(&tree, &random_pose(&mut rng, 24, 1.5)).unwrap();
        let m = axial_measurements(&tree, &posed).unwrap();
        for i in 0..AXIAL_COUNT {
            assert!((m.values[i].unwrap() - rest.values[i].unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn axial_requires_named_joints() {
    let tree = crate::kinematics::build_tree(
        &[None, Some(0)],
        &[Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)],
        &["a", "b"],
    )
    .unwrap();
    let joints = tree.rest_positions(Vector3::zeros());
    assert!(axial_measurements(&tree, &joints).is_err());
}

fn landmarks(category: &str, points: &[(&str, Vec<f64>)]) -> LandmarkSet {
    LandmarkSet {
        category: category.into(),
        points: points.iter().map(|(l, p)| (l.to_string(), p.clone())).collect::<BTreeMap<_, _>>(),
    }
}

#[test]
fn pixel_widths_back_project_at_depth() {
    let map = default_landmark_map();
    let cam = PerspectiveCamera::default();
    let set = landmarks(
        "short_sleeve_top",
        &[("left_shoulder_lm", vec![612.0, 300.0]), ("right_shoulder_lm", vec![412.0, 300.0])],
    );
    let m = radial_measurements(&set, &map, 3.0, &cam).unwrap();
    assert!(close(m.values[SHOULDER_WIDTH], 0.6, 1e-12));
    assert_eq!(m.values[CHEST_WIDTH], None);
    let doubled = radial_measurements(&set, &map, 6.0, &cam).unwrap();
    assert!(close(doubled.values[SHOULDER_WIDTH], 1.2, 1e-12));
}

#[test]
fn category_without_hip_pair_leaves_hips_absent() {
    let map = default_landmark_map();
    let set = landmarks(
        "short_sleeve_top",
        &[("left_hip_lm", vec![600.0, 700.0]), ("right_hip_lm", vec![400.0, 700.0])],
    );
    let m = radial_measurements(&set, &map, 3.0, &PerspectiveCamera::default()).unwrap();
    assert_eq!(m.values[HIPS_WIDTH], None);
    let skirt = LandmarkSet {
        category: "skirt".into(),
        ..set
    };
    let m = radial_measurements(&skirt, &map, 3.0, &PerspectiveCamera::default()).unwrap();
    assert!(close(m.values[HIPS_WIDTH], 0.6, 1e-12));
}

#[test]
fn metric_landmarks_ignore_camera() {
    let map = default_landmark_map();
    let set = landmarks(
        "trousers",
        &[("left_waist_lm", vec![0.1, 1.0, 2.0]), ("right_waist_lm", vec![-0.2, 1.0, 2.4])],
    );
    let m = radial_measurements(&set, &map, 123.0, &PerspectiveCamera::default()).unwrap();
    assert!(close(m.values[WAIST_WIDTH], 0.5, 1e-12));
}

#[test]
fn landmark_errors() {
    let map = default_landmark_map();
    let cam = PerspectiveCamera::default();
    let unknown = landmarks("cape", &[]);
    assert!(matches!(radial_measurements(&unknown, &map, 3.0, &cam), Err(crate::Error::UnknownCategory(_))));
    let mixed = landmarks("skirt", &[("left_hip_lm", vec![1.0, 2.0]), ("right_hip_lm", vec![1.0, 2.0, 3.0])]);
    assert!(radial_measurements(&mixed, &map, 3.0, &cam).is_err());
    let bad = r#"{"categories": {"x": {"pairs": [{"measurement": "hips_width", "labels": ["a", "a"]}]}}}"#;
    assert!(LandmarkSemanticMap::from_json(bad).is_err());
    let unknown_name = r#"{"categories": {"x": {"pairs": [{"measurement": "neck_girth", "labels": ["a", "b"]}]}}}"#;
    assert!(LandmarkSemanticMap::from_json(unknown_name).is_err());
    assert_eq!(default_landmark_map().categories.len(), 4);
}

#[test]
fn template_mesh_snapshot() {
    let m = mesh_measurements(model(), &ShapeParams::zeros(10)).unwrap();
    let expected = [1.70, 0.75, 1.52, 0.58, 0.36, 0.32, 0.28, 0.34];
    for (i, e) in expected.iter().enumerate() {
        assert!(close(m.values[i], *e, 1e-9), "{}: {:?}", MEASUREMENT_NAMES[i], m.values[i]);
    }
}

#[test]
fn mesh_height_matches_skeleton_height() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let beta = ShapeParams {
            beta: (0..10).map(|_| rng.random_range(-3.0..3.0)).collect(),
        };
        let m = mesh_measurements(model(), &beta).unwrap();
        let joints = model().rest_joints(&beta).unwrap();
        let axial = axial_measurements(model().tree(), &joints).unwrap();
        assert!((m.values[HEIGHT].unwrap() - axial.values[HEIGHT].unwrap()).abs() < 1e-12);
    }
}

#[test]
fn waist_component_widens_waist() {
    let mut previous = 0.0;
    for step in -6..=6 {
        let mut beta = ShapeParams::zeros(10);
        beta.beta[2] = step as f64 * 0.5;
        let w = mesh_measurements(model(), &beta).unwrap().values[WAIST_WIDTH].unwrap();
        assert!(w > previous);
        previous = w;
    }
}

#[test]
fn band_extremes_span_the_band_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let beta = ShapeParams {
        beta: (0..10).map(|_| rng.random_range(-2.0..2.0)).collect(),
    };
    let mesh = shape_mesh(model(), &beta).unwrap();
    let m = mesh_measurements(model(), &beta).unwrap();
    let extremes = band_extremes(&mesh, &WidthBands::default());
    for (slot, pair) in [CHEST_WIDTH, WAIST_WIDTH, HIPS_WIDTH].iter().zip(extremes) {
        let (l, r) = pair.unwrap();
        let (vl, vr) = (mesh.vertices[l], mesh.vertices[r]);
        assert_eq!(vl.x, -vr.x);
        assert!(((vl - vr).norm() - m.values[*slot].unwrap()).abs() < 1e-12);
    }
}

#[test]
fn empty_band_is_absent() {
    let bands = WidthBands {
        chest: 5.0,
        ..WidthBands::default()
    };
    let m = mesh_measurements_with(model(), &ShapeParams::zeros(10), &bands).unwrap();
    assert_eq!(m.values[CHEST_WIDTH], None);
    assert!(m.values[WAIST_WIDTH].is_some());
}

#[test]
fn linear_model_fits_exactly() {
    let mm = measurement_model();
    assert!(mm.available.iter().all(|a| *a));
    assert!(mm.residual_cov.amax() < 1e-18);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let beta: Vec<f64> = (0..10).map(|_| rng.random_range(-2.5..2.5)).collect();
        let direct = mesh_measurements(model(), &ShapeParams { beta: beta.clone() }).unwrap();
        let predicted = mm.predict(&DVector::from_vec(beta));
        for i in 0..8 {
            assert!((direct.values[i].unwrap() - predicted.values[i].unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn measurement_model_is_deterministic_and_checks_samples() {
    let a = build_measurement_model(model(), 100, 4, &WidthBands::default()).unwrap();
    let b = build_measurement_model(model(), 100, 4, &WidthBands::default()).unwrap();
    assert_eq!(a, b);
    assert!(build_measurement_model(model(), 99, 4, &WidthBands::default()).is_err());
}

fn full_rank_setup() -> (BodyModel, MeasurementModel) {
    let model = synth_body_model(24, 7, 890, 0).unwrap();
    let mm = build_measurement_model(&model, 100, 2, &WidthBands::default()).unwrap();
    (model, mm)
}

#[test]
fn generate_and_fit_recovers_shape() {
    let (model, mm) = full_rank_setup();
    let prior_mean = DVector::zeros(7);
    let prior_cov = DMatrix::identity(7, 7) * 1e4;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let beta: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let omega = mesh_measurements(&model, &ShapeParams { beta: beta.clone() }).unwrap();
        let post = fit_shape(&mm, &omega, &prior_mean, &prior_cov).unwrap();
        for (a, b) in post.mean.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let refit = mesh_measurements(&model, &post.mean_shape()).unwrap();
        for i in 0..8 {
            assert!((refit.values[i].unwrap() - omega.values[i].unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn no_observation_returns_prior() {
    let mm = measurement_model();
    let mean = DVector::from_fn(10, |i, _| i as f64 * 0.1);
    let cov = DMatrix::from_fn(10, 10, |i, j| if i == j { 2.0 } else { 0.1 });
    let post = fit_shape(mm, &MeasurementVector::default(), &mean, &cov).unwrap();
    assert_eq!(post.mean, mean);
    assert_eq!(post.covariance, cov);
}

#[test]
fn height_alone_leaves_width_components_at_prior() {
    let mm = measurement_model();
    let mut omega = MeasurementVector::default();
    omega.set("height", 1.80).unwrap();
    let post = fit_shape(mm, &omega, &DVector::zeros(10), &DMatrix::identity(10, 10)).unwrap();
    assert!(post.mean[0].abs() > 0.1);
    for i in [1, 2, 3, 5, 6] {
        assert!(post.mean[i].abs() < 1e-9, "component {i}: {}", post.mean[i]);
    }
}

#[test]
fn posterior_never_exceeds_prior() {
    let mm = measurement_model();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for trial in 0..20 {
        let beta: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut omega = mesh_measurements(model(), &ShapeParams { beta }).unwrap();
        for i in 0..8 {
            if rng.random_bool(0.4) {
                omega.values[i] = None;
            }
        }
        let g = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
        let prior = &g * g.transpose() * 0.3 + DMatrix::identity(10, 10) * (trial as f64 * 0.01);
        let post = fit_shape(mm, &omega, &DVector::zeros(10), &prior).unwrap();
        assert!((&post.covariance - post.covariance.transpose()).amax() < 1e-9);
        assert!(min_eigenvalue(&post.covariance) > -1e-9);
        assert!(min_eigenvalue(&(&prior - &post.covariance)) > -1e-9);
    }
}

#[test]
fn indefinite_prior_is_rejected() {
    let mm = measurement_model();
    let mut prior = DMatrix::identity(10, 10);
    prior[(3, 3)] = -0.5;
    let err = fit_shape(mm, &MeasurementVector::default(), &DVector::zeros(10), &prior).unwrap_err();
    assert!(matches!(err, crate::Error::NotPsd { .. }));
}

#[test]
fn editing_an_entry_moves_its_prediction_up() {
    let mm = measurement_model();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let beta: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let omega = mesh_measurements(model(), &ShapeParams { beta }).unwrap();
    let prior = DMatrix::identity(10, 10);
    let base = fit_shape(mm, &omega, &DVector::zeros(10), &prior).unwrap();
    let before = mm.predict(&base.mean);
    for i in 0..8 {
        let mut edited = omega.clone();
        edited.values[i] = Some(omega.values[i].unwrap() * 1.05);
        let post = fit_shape(mm, &edited, &DVector::zeros(10), &prior).unwrap();
        let after = mm.predict(&post.mean);
        assert!(after.values[i].unwrap() >= before.values[i].unwrap(), "{}", MEASUREMENT_NAMES[i]);
    }
}

#[test]
fn sampling_contracts() {
    let post = ShapePosterior::new(
        DVector::from_vec(vec![0.5, -1.0, 2.0]),
        DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 0.5, 0.1, 0.0, 0.1, 0.2]),
    )
    .unwrap();
    assert_eq!(sample_shape(&post, 9, 0.0).unwrap().beta, vec![0.5, -1.0, 2.0]);
    assert_eq!(sample_shape(&post, 9, 1.0).unwrap(), sample_shape(&post, 9, 1.0).unwrap());
    assert_ne!(sample_shape(&post, 9, 1.0).unwrap(), sample_shape(&post, 10, 1.0).unwrap());
    assert!(sample_shape(&post, 9, -1.0).is_err());
}

#[test]
fn sample_covariance_matches_posterior() {
    let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 0.5, 0.1, 0.0, 0.1, 0.2]);
    let post = ShapePosterior::new(DVector::from_vec(vec![0.5, -1.0, 2.0]), cov.clone()).unwrap();
    let n = 10_000;
    let samples: Vec<DVector<f64>> = (0..n)
        .map(|s| DVector::from_vec(sample_shape(&post, s, 1.0).unwrap().beta))
        .collect();
    let mean = samples.iter().fold(DVector::zeros(3), |acc, s| acc + s) / n as f64;
    let sample_cov = samples
        .iter()
        .fold(DMatrix::zeros(3, 3), |acc, s| acc + (s - &mean) * (s - &mean).transpose())
        / (n - 1) as f64;
    assert!((sample_cov - &cov).norm() / cov.norm() < 0.1);
}

#[test]
fn measurement_vector_json() {
    let mut m = MeasurementVector::default();
    m.set("height", 1.75).unwrap();
    m.set("hips_width", 0.36).unwrap();
    let text = serde_json::to_string(&m).unwrap();
    assert!(text.contains(r#""chest_width":{"value":null,"available":false}"#));
    let back: MeasurementVector = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert!(m.set("inseam", 0.8).is_err());
    assert!(m.set("height", -1.0).is_err());
    assert!(serde_json::from_str::<MeasurementVector>(r#"{"height":{"value":1.0,"available":false}}"#).is_err());
}

#[test]
fn garment_masks_cover_their_joints() {
    let tree = KinematicTree::smpl_default();
    let map = default_landmark_map();
    let mask = map.cloth_mask(&["short_sleeve_top", "skirt"], &tree).unwrap();
    let covered: Vec<&str> = mask.covered_indices().map(|k| tree.name(k)).collect();
    for name in ["pelvis", "left_hip", "spine1", "spine3", "left_shoulder", "right_collar"] {
        assert!(covered.contains(&name), "{name}");
    }
    assert!(!mask.is_covered(tree.require("left_elbow").unwrap()));
    assert!(!mask.is_covered(tree.require("left_knee").unwrap()));
    assert!(matches!(map.cloth_mask(&["cape"], &tree), Err(Error::UnknownCategory(_))));
}
