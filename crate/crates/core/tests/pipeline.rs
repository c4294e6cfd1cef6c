use bodyfit::body::{default_body_model, parse_obj, skin, write_obj, ShapeParams};
use bodyfit::camera::{
    body_depth, fronto_parallel_pose, lift_joints, place_body, project, AnchorBoneSet, PerspectiveCamera,
};
use bodyfit::evolution::{generate_variants, MutationConfig, PoseDatabase};
use bodyfit::formats::PoseFile;
use bodyfit::ik::{extract_twists, fit_root_rotation, solve_ik};
use bodyfit::kinematics::{forward_kinematics, random_pose, ClothMask};
use bodyfit::shape::{
    axial_measurements, build_measurement_model, fit_shape, mesh_measurements, sample_shape, WidthBands,
};
use bodyfit::seed::rng_for;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

fn shape(values: &[f64]) -> ShapeParams {
    let mut beta = vec![0.0; 10];
    beta[..values.len()].copy_from_slice(values);
    ShapeParams { beta }
}

#[test]
fn ik_on_shaped_skeleton_reproduces_the_skinned_mesh() {
    let model = default_body_model(3);
    let beta = shape(&[0.8, -0.5, 0.3, 1.1, -0.7, 0.4, 0.2]);
    let tree = model.shaped_tree(&beta).unwrap();
    let mut rng = rng_for(3, "pipeline-test", 0);
    for _ in 0..5 {
        let mut pose = random_pose(&mut rng, 24, 1.2).with_root_translation(Vector3::zeros());
        for k in (0..24).filter(|&k| tree.children(k).is_empty()) {
            pose.set_rotation(k, Matrix3::identity()).unwrap();
        }
        let joints = model.posed_joints(&beta, &pose).unwrap();
        let solved = solve_ik(&tree, &joints, &extract_twists(&tree, &pose).unwrap(), &fit_root_rotation(&tree, &joints).unwrap())
            .unwrap()
            .with_root_translation(Vector3::zeros());
        let a = skin(&model, &beta, &pose).unwrap();
        let b = skin(&model, &beta, &solved).unwrap();
        for k in 0..24 {
            assert!((pose.rotation(k) - solved.rotation(k)).amax() < 1e-9, "joint {k}");
        }
        let worst = a.vertices.iter().zip(&b.vertices).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
        let fk = forward_kinematics(&tree, &solved.clone().with_root_translation(joints.0[0])).unwrap();
        for (p, q) in fk.0.iter().zip(&joints.0) {
            assert!((p - q).norm() < 1e-9);
        }
    }
}

#[test]
fn camera_lift_and_place_recover_a_fronto_parallel_body() {
    let model = default_body_model(0);
    let beta = shape(&[-0.4, 0.6, -0.2, 0.1, 0.9, -1.0, 0.5]);
    let tree = model.shaped_tree(&beta).unwrap();
    let camera = PerspectiveCamera::default();
    let anchors = AnchorBoneSet::default_torso(&tree).unwrap();
    let mut rng = rng_for(9, "pipeline-test", 1);
    let pose = fronto_parallel_pose(&mut rng, &tree, &anchors, 0.6);
    let rest = model.rest_joints(&beta).unwrap();
    let t = Vector3::new(0.1, -0.15, 4.0) - rest.0[0];
    let joints = model.posed_joints(&beta, &pose).unwrap().translated(&t);
    let pixels = project(&camera, joints.positions(), &Vector3::zeros()).unwrap();

    let depth = body_depth(&camera, &rest, &pixels, &anchors, &tree).unwrap();
    assert!((depth - 4.0).abs() < 1e-9);
    let offsets: Vec<f64> = joints.0.iter().map(|p| p.z - depth).collect();
    let lifted = lift_joints(&camera, &pixels, depth, &offsets).unwrap();
    for (a, b) in lifted.0.iter().zip(&joints.0) {
        assert!((a - b).norm() < 1e-9);
    }
    assert!((place_body(&camera, &rest, &pixels, &anchors, &tree).unwrap() - t).norm() < 1e-9);

    let skeleton = axial_measurements(&tree, &lifted).unwrap();
    let mesh = mesh_measurements(&model, &beta).unwrap();
    for i in 0..4 {
        assert!((skeleton.values[i].unwrap() - mesh.values[i].unwrap()).abs() < 1e-9, "entry {i}");
    }
}

#[test]
fn measurements_determine_the_observable_shape() {
    let model = default_body_model(1);
    let mm = build_measurement_model(&model, 150, 2, &WidthBands::default()).unwrap();
    let beta = shape(&[1.2, -0.8, 0.4, -1.5, 0.6, 0.9, -0.3]);
    let observed = mesh_measurements(&model, &beta).unwrap();
    let post = fit_shape(&mm, &observed, &DVector::zeros(10), &DMatrix::identity(10, 10)).unwrap();
    let drawn = sample_shape(&post, 0, 0.0).unwrap();
    for (a, b) in drawn.beta.iter().zip(&beta.beta) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    let warm = sample_shape(&post, 5, 1.0).unwrap();
    let refit = mesh_measurements(&model, &warm).unwrap();
    for i in 0..8 {
        assert!((refit.values[i].unwrap() - observed.values[i].unwrap()).abs() < 1e-4, "entry {i}");
    }
}

#[test]
fn variants_survive_file_round_trips() {
    let model = default_body_model(0);
    let mut rng = rng_for(4, "pipeline-test", 2);
    let db = PoseDatabase::new((0..20).map(|i| (random_pose(&mut rng, 24, 1.0), format!("{i}"))).collect()).unwrap();
    let db = PoseDatabase::from_jsonl(&db.to_jsonl().unwrap()).unwrap();
    let estimate = random_pose(&mut rng, 24, 0.8);
    let mask = ClothMask::from_indices(24, &[0, 3, 6, 9, 13, 14]);
    let variants = generate_variants(&db, &estimate, &mask, 4, &MutationConfig::new(0.1, 8).unwrap(), 3).unwrap();
    let beta = shape(&[0.3]);
    for v in &variants {
        let text = serde_json::to_string(&PoseFile::from_pose(v)).unwrap();
        let back = serde_json::from_str::<PoseFile>(&text).unwrap().to_pose().unwrap();
        assert_eq!(&back, v);
        let mesh = skin(&model, &beta, &back).unwrap();
        let mut obj = Vec::new();
        write_obj(&mesh, &mut obj).unwrap();
        let parsed = parse_obj(std::str::from_utf8(&obj).unwrap()).unwrap();
        assert_eq!(parsed.faces, mesh.faces);
    }
}
