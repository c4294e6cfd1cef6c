//! Procedural humanoid built from elliptic tube segments.
//!
//! Layout (y up, +x is the body's left, soles at y = 0, T-pose):
//! a crotch pole, the torso tube from below the pelvis to the neck, the head
//! tube and crown pole, then the left leg, foot and arm tubes, then their
//! mirror images. Every joint is regressed either as the centroid of a ring
//! placed at the joint or, for the head, as the crown pole itself, so the
//! skeleton's head-to-ankle extent equals the mesh height for every shape.
//!
//! Torso ring widths are piecewise constant over three height plateaus
//! (hips, waist, chest). Width bands used by the measurements sit inside
//! these plateaus with margins, which keeps the band widths linear in β over
//! the sampled range.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{BodyModel, SparseRow};
use crate::error::{Error, Result};
use crate::kinematics::{JointSet, KinematicTree, SMPL_PARENTS};
use crate::seed::derive_seed;

/// Height of the template body in meters (sole to crown).
pub const TEMPLATE_HEIGHT: f64 = 1.70;
pub const DEFAULT_VERTEX_BUDGET: usize = 890;
pub const DEFAULT_SHAPE_DIMS: usize = 10;

/// Semantic role of the leading shape components.
pub const SHAPE_COMPONENT_NAMES: [&str; 10] = [
    "height",
    "chest_width",
    "waist_width",
    "hips_width",
    "leg_length",
    "arm_length",
    "shoulder_width",
    "torso_depth",
    "head_size",
    "limb_girth",
];

const HEIGHT_GAIN: f64 = 0.04;
const WIDTH_GAIN: f64 = 0.015;
const LEG_GAIN: f64 = 0.015;
const ARM_GAIN: f64 = 0.03;
const SHOULDER_GAIN: f64 = 0.015;
const DEPTH_GAIN: f64 = 0.01;
const HEAD_GAIN: f64 = 0.006;
const LEG_GIRTH_GAIN: f64 = 0.004;
const ARM_GIRTH_GAIN: f64 = 0.003;
const EXTRA_GAIN: f64 = 0.003;

const HIP_HEIGHT: f64 = 0.75;
const SHOULDER_X: f64 = 0.18;
const HAND_X: f64 = 0.76;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;
const COS8: [f64; 8] = [1.0, SQRT_HALF, 0.0, -SQRT_HALF, -1.0, -SQRT_HALF, 0.0, SQRT_HALF];
const SIN8: [f64; 8] = [0.0, SQRT_HALF, 1.0, SQRT_HALF, 0.0, -SQRT_HALF, -1.0, -SQRT_HALF];
const COS4: [f64; 4] = [1.0, 0.0, -1.0, 0.0];
const SIN4: [f64; 4] = [0.0, 1.0, 0.0, -1.0];

const MIN_TORSO_RINGS: usize = 6;
const MIN_HEAD_RINGS: usize = 2;
const MIN_LEG_RINGS: usize = 3;
const MIN_FOOT_RINGS: usize = 3;
const MIN_ARM_RINGS: usize = 6;
const MIN_RINGS: usize =
    MIN_TORSO_RINGS + MIN_HEAD_RINGS + 2 * (MIN_LEG_RINGS + MIN_FOOT_RINGS + MIN_ARM_RINGS);

#[derive(Clone, Copy, Debug, PartialEq)]
enum Part {
    Torso,
    Head,
    Leg,
    Foot,
    Arm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Frame {
    /// Ring in the xz plane.
    Vertical,
    /// Ring in the yz plane.
    Lateral,
    /// Ring in the xy plane.
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Plateau {
    Hips,
    Waist,
    Chest,
}

#[derive(Clone, Debug)]
struct Ring {
    part: Part,
    frame: Frame,
    center: Vector3<f64>,
    r1: f64,
    r2: f64,
    weights: SparseRow,
    plateau: Option<Plateau>,
    joint: Option<usize>,
}

struct Tube {
    part: Part,
    frame: Frame,
    keys: Vec<[f64; 3]>,
    key_joints: Vec<Option<usize>>,
    /// Joint driving each segment, and whether its start blends with that joint's parent.
    segments: Vec<(usize, bool)>,
    radii: Vec<(f64, f64)>,
}

/// Per-ring shape delta: center displacement and radius changes.
#[derive(Clone, Copy, Default)]
struct RingDelta {
    center: Vector3<f64>,
    r1: f64,
    r2: f64,
}

fn torso_profile(y: f64) -> (f64, f64, Option<Plateau>) {
    let f = y / TEMPLATE_HEIGHT;
    if f < 0.56 {
        (0.17, 0.11, Some(Plateau::Hips))
    } else if f < 0.66 {
        (0.14, 0.10, Some(Plateau::Waist))
    } else if f < 0.80 {
        (0.16, 0.11, Some(Plateau::Chest))
    } else {
        let top = 0.80 * TEMPLATE_HEIGHT;
        let t = ((y - top) / (1.44 - top)).clamp(0.0, 1.0);
        (0.16 - 0.10 * t, 0.11 - 0.06 * t, None)
    }
}

fn left_tubes() -> (Tube, Tube, Tube) {
    let leg = Tube {
        part: Part::Leg,
        frame: Frame::Vertical,
        keys: vec![[0.09, HIP_HEIGHT, 0.0], [0.09, 0.40, 0.0], [0.09, 0.0, 0.0]],
        key_joints: vec![Some(1), Some(4), Some(7)],
        segments: vec![(1, true), (4, true)],
        radii: vec![(0.075, 0.075), (0.05, 0.05), (0.04, 0.04)],
    };
    let foot = Tube {
        part: Part::Foot,
        frame: Frame::Forward,
        keys: vec![[0.09, 0.03, -0.04], [0.09, 0.03, 0.12], [0.09, 0.03, 0.19]],
        key_joints: vec![None, Some(10), None],
        segments: vec![(7, false), (10, false)],
        radii: vec![(0.04, 0.03); 3],
    };
    let arm = Tube {
        part: Part::Arm,
        frame: Frame::Lateral,
        keys: vec![
            [0.07, 1.40, 0.0],
            [SHOULDER_X, 1.40, 0.0],
            [0.44, 1.40, 0.0],
            [0.68, 1.40, 0.0],
            [HAND_X, 1.40, 0.0],
            [0.84, 1.40, 0.0],
        ],
        key_joints: vec![Some(13), Some(16), Some(18), Some(20), Some(22), None],
        segments: vec![(13, true), (16, true), (18, true), (20, true), (22, true)],
        radii: vec![
            (0.05, 0.05),
            (0.045, 0.045),
            (0.04, 0.04),
            (0.032, 0.032),
            (0.03, 0.03),
            (0.02, 0.02),
        ],
    };
    (leg, foot, arm)
}

fn center_tubes() -> (Tube, Tube) {
    let torso_keys = [0.765, 0.86, 0.98, 1.10, 1.24, 1.44];
    let torso = Tube {
        part: Part::Torso,
        frame: Frame::Vertical,
        keys: torso_keys.iter().map(|y| [0.0, *y, 0.0]).collect(),
        key_joints: vec![None, Some(0), Some(3), Some(6), Some(9), Some(12)],
        segments: vec![(0, false), (0, false), (3, true), (6, true), (9, true)],
        radii: Vec::new(),
    };
    let head = Tube {
        part: Part::Head,
        frame: Frame::Vertical,
        keys: vec![[0.0, 1.47, 0.0], [0.0, 1.66, 0.0]],
        key_joints: vec![None, None],
        segments: vec![(12, false)],
        radii: vec![(0.075, 0.09), (0.075, 0.09)],
    };
    (torso, head)
}

/// Distributes `count` rings over the polyline, one ring on every key point.
fn build_rings(tube: &Tube, count: usize) -> Vec<Ring> {
    let segs = tube.keys.len() - 1;
    let lengths: Vec<f64> = (0..segs)
        .map(|j| (Vector3::from(tube.keys[j + 1]) - Vector3::from(tube.keys[j])).norm())
        .collect();
    let total: f64 = lengths.iter().sum();
    let intervals = count - 1;
    let mut per_segment: Vec<usize> = lengths
        .iter()
        .map(|l| ((intervals as f64) * l / total).round().max(1.0) as usize)
        .collect();
    // Fix rounding so the intervals add up exactly.
    loop {
        let sum: usize = per_segment.iter().sum();
        if sum == intervals {
            break;
        }
        let (idx, _) = per_segment
            .iter()
            .enumerate()
            .max_by(|a, b| (lengths[a.0] / *a.1 as f64).total_cmp(&(lengths[b.0] / *b.1 as f64)))
            .unwrap();
        if sum < intervals {
            per_segment[idx] += 1;
        } else {
            let (shrink, _) = per_segment
                .iter()
                .enumerate()
                .filter(|(_, k)| **k > 1)
                .min_by(|a, b| {
                    (lengths[a.0] / *a.1 as f64).total_cmp(&(lengths[b.0] / *b.1 as f64))
                })
                .unwrap();
            per_segment[shrink] -= 1;
        }
    }

    let mut rings = Vec::with_capacity(count);
    for j in 0..segs {
        let a = Vector3::from(tube.keys[j]);
        let b = Vector3::from(tube.keys[j + 1]);
        let last = j + 1 == segs;
        let steps = per_segment[j];
        let upto = if last { steps + 1 } else { steps };
        for i in 0..upto {
            let s = i as f64 / steps as f64;
            let center = if i == steps { b } else { a + (b - a) * s };
            let key = if i == 0 {
                Some(j)
            } else if i == steps {
                Some(j + 1)
            } else {
                None
            };
            let (segment_joint, blend) = tube.segments[j];
            let weights = if blend && s < 0.2 {
                let parent = SMPL_PARENTS[segment_joint].expect("blended joint has a parent");
                let w = 0.5 + 2.5 * s;
                vec![(segment_joint, w), (parent, 1.0 - w)]
            } else {
                vec![(segment_joint, 1.0)]
            };
            let (r1, r2, plateau) = if tube.part == Part::Torso {
                torso_profile(center.y)
            } else {
                let (ra, rb) = (tube.radii[j], tube.radii[j + 1]);
                (ra.0 + (rb.0 - ra.0) * s, ra.1 + (rb.1 - ra.1) * s, None)
            };
            rings.push(Ring {
                part: tube.part,
                frame: tube.frame,
                center,
                r1,
                r2,
                weights,
                plateau,
                joint: key.and_then(|k| tube.key_joints[k]),
            });
        }
    }
    rings
}

fn ring_directions(frame: Frame) -> (Vector3<f64>, Vector3<f64>) {
    match frame {
        Frame::Vertical => (Vector3::x(), Vector3::z()),
        Frame::Lateral => (Vector3::y(), Vector3::z()),
        Frame::Forward => (Vector3::x(), Vector3::y()),
    }
}

/// Shape delta of one left-side or center ring for component `i`.
fn ring_delta(ring: &Ring, i: usize, extra: &mut impl FnMut() -> f64) -> RingDelta {
    let mut d = RingDelta::default();
    match i {
        0 => {
            d.center.y = HEIGHT_GAIN * ring.center.y;
            match ring.frame {
                Frame::Lateral => d.r1 = HEIGHT_GAIN * ring.r1,
                Frame::Forward => d.r2 = HEIGHT_GAIN * ring.r2,
                Frame::Vertical => {}
            }
        }
        1 | 2 | 3 => {
            let target = [Plateau::Chest, Plateau::Waist, Plateau::Hips][i - 1];
            if ring.plateau == Some(target) {
                d.r1 = WIDTH_GAIN;
            }
        }
        4 => {
            d.center.y = match ring.part {
                Part::Torso | Part::Head | Part::Arm => LEG_GAIN,
                Part::Leg => LEG_GAIN * ring.center.y / HIP_HEIGHT,
                Part::Foot => 0.0,
            }
        }
        5 => {
            if ring.part == Part::Arm && ring.center.x > SHOULDER_X {
                d.center.x = ARM_GAIN * ((ring.center.x - SHOULDER_X) / (HAND_X - SHOULDER_X)).min(1.0);
            }
        }
        6 => {
            if ring.part == Part::Arm {
                d.center.x = SHOULDER_GAIN;
            }
        }
        7 => {
            if ring.part == Part::Torso {
                d.r2 = DEPTH_GAIN;
            }
        }
        8 => {
            if ring.part == Part::Head {
                d.r1 = HEAD_GAIN;
                d.r2 = HEAD_GAIN;
            }
        }
        9 => {
            let g = match ring.part {
                Part::Leg => LEG_GIRTH_GAIN,
                Part::Arm => ARM_GIRTH_GAIN,
                _ => 0.0,
            };
            d.r1 = g;
            d.r2 = g;
        }
        _ => {
            if matches!(ring.part, Part::Head | Part::Leg | Part::Arm) {
                let g = EXTRA_GAIN * extra();
                d.r1 = g;
                d.r2 = g;
            }
        }
    }
    d
}

fn pole_delta(position: &Vector3<f64>, i: usize) -> Vector3<f64> {
    match i {
        0 => Vector3::new(0.0, HEIGHT_GAIN * position.y, 0.0),
        4 => Vector3::new(0.0, LEG_GAIN, 0.0),
        _ => Vector3::zeros(),
    }
}

fn mirror_joint(k: usize) -> usize {
    match k {
        1 | 4 | 7 | 10 | 13 | 16 | 18 | 20 | 22 => k + 1,
        2 | 5 | 8 | 11 | 14 | 17 | 19 | 21 | 23 => k - 1,
        other => other,
    }
}

fn mirror(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-v.x, v.y, v.z)
}

/// Ring counts per part: (torso, head, leg, foot, arm).
fn allocate(rings: usize) -> Option<(usize, usize, usize, usize, usize)> {
    let frac = |f: f64| (f * rings as f64).floor() as usize;
    let leg = frac(0.14).max(MIN_LEG_RINGS);
    let foot = frac(0.03).max(MIN_FOOT_RINGS);
    let arm = frac(0.15).max(MIN_ARM_RINGS);
    let head = frac(0.08).max(MIN_HEAD_RINGS);
    let used = 2 * (leg + foot + arm) + head;
    if used + MIN_TORSO_RINGS > rings {
        return None;
    }
    Some((rings - used, head, leg, foot, arm))
}

/// Builds the procedural body model.
///
/// Only the 24-joint layout is supported. `vertex_budget` is an upper bound:
/// the mesh uses `2 + s·rings` vertices with `s = 8` ring vertices (or 4 for
/// small budgets). The seed drives the extra components beyond the ten
/// semantic ones.
pub fn synth_body_model(
    joint_count: usize,
    shape_dims: usize,
    vertex_budget: usize,
    seed: u64,
) -> Result<BodyModel> {
    if joint_count != SMPL_PARENTS.len() {
        return Err(Error::InvalidInput(format!(
            "synthetic body supports the {}-joint layout only, got {joint_count}",
            SMPL_PARENTS.len()
        )));
    }
    if shape_dims == 0 {
        return Err(Error::InvalidInput("shape_dims must be at least 1".into()));
    }
    let ring_size = if vertex_budget >= 2 + 8 * MIN_RINGS {
        8
    } else {
        4
    };
    let required = 2 + 4 * MIN_RINGS;
    let Some((torso_n, head_n, leg_n, foot_n, arm_n)) = allocate((vertex_budget.saturating_sub(2)) / ring_size)
    else {
        return Err(Error::BudgetTooSmall {
            budget: vertex_budget,
            required,
        });
    };
    let (cos, sin): (&[f64], &[f64]) = if ring_size == 8 {
        (&COS8, &SIN8)
    } else {
        (&COS4, &SIN4)
    };

    let (torso_tube, head_tube) = center_tubes();
    let (leg_tube, foot_tube, arm_tube) = left_tubes();
    let torso = build_rings(&torso_tube, torso_n);
    let head = build_rings(&head_tube, head_n);
    let left: Vec<Vec<Ring>> = vec![
        build_rings(&leg_tube, leg_n),
        build_rings(&foot_tube, foot_n),
        build_rings(&arm_tube, arm_n),
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "body-extra-shapes", 0));
    let mut extra_draws: Vec<Vec<f64>> = Vec::new();

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut skin: Vec<SparseRow> = Vec::new();
    let mut shapes: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); shape_dims];
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut regressor: Vec<SparseRow> = vec![Vec::new(); joint_count];

    let push_pole = |position: Vector3<f64>,
                     joint: usize,
                     vertices: &mut Vec<Vector3<f64>>,
                     skin: &mut Vec<SparseRow>,
                     shapes: &mut Vec<Vec<Vector3<f64>>>| {
        vertices.push(position);
        skin.push(vec![(joint, 1.0)]);
        for (i, s) in shapes.iter_mut().enumerate() {
            s.push(pole_delta(&position, i));
        }
        vertices.len() - 1
    };

    // Emits ring vertices; returns the index of the first vertex of each ring.
    let mut emit = |rings: &[Ring],
                    mirrored: bool,
                    extra: &mut Vec<f64>,
                    vertices: &mut Vec<Vector3<f64>>,
                    skin: &mut Vec<SparseRow>,
                    shapes: &mut Vec<Vec<Vector3<f64>>>,
                    regressor: &mut Vec<SparseRow>|
     -> Vec<usize> {
        let mut starts = Vec::with_capacity(rings.len());
        let mut draw_index = 0;
        for ring in rings {
            let start = vertices.len();
            starts.push(start);
            let (d1, d2) = ring_directions(ring.frame);
            let deltas: Vec<RingDelta> = (0..shape_dims)
                .map(|i| {
                    let mut next = || {
                        if !mirrored && draw_index >= extra.len() {
                            extra.push(rng.random_range(-1.0..1.0));
                        }
                        let v = extra[draw_index];
                        draw_index += 1;
                        v
                    };
                    ring_delta(ring, i, &mut next)
                })
                .collect();
            for j in 0..cos.len() {
                let local = d1 * (ring.r1 * cos[j]) + d2 * (ring.r2 * sin[j]);
                let v = ring.center + local;
                let weights: SparseRow = ring
                    .weights
                    .iter()
                    .map(|&(k, w)| (if mirrored { mirror_joint(k) } else { k }, w))
                    .collect();
                vertices.push(if mirrored { mirror(&v) } else { v });
                skin.push(weights);
                for (i, d) in deltas.iter().enumerate() {
                    let disp = d.center + d1 * (d.r1 * cos[j]) + d2 * (d.r2 * sin[j]);
                    shapes[i].push(if mirrored { mirror(&disp) } else { disp });
                }
            }
            if let Some(k) = ring.joint {
                let k = if mirrored { mirror_joint(k) } else { k };
                let w = 1.0 / cos.len() as f64;
                regressor[k] = (start..start + cos.len()).map(|i| (i, w)).collect();
            }
        }
        starts
    };

    let n = cos.len();
    let tube_faces = |starts: &[usize], flip: bool, faces: &mut Vec<[usize; 3]>| {
        for pair in starts.windows(2) {
            for j in 0..n {
                let a = pair[0] + j;
                let b = pair[0] + (j + 1) % n;
                let c = pair[1] + (j + 1) % n;
                let d = pair[1] + j;
                if flip {
                    faces.push([a, c, b]);
                    faces.push([a, d, c]);
                } else {
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
        }
    };
    let fan = |pole: usize, ring: usize, flip: bool, faces: &mut Vec<[usize; 3]>| {
        for j in 0..n {
            let a = ring + j;
            let b = ring + (j + 1) % n;
            faces.push(if flip { [pole, a, b] } else { [pole, b, a] });
        }
    };

    let crotch = push_pole(
        Vector3::new(0.0, 0.74, 0.0),
        0,
        &mut vertices,
        &mut skin,
        &mut shapes,
    );
    let mut scratch = Vec::new();
    let torso_starts = emit(
        &torso,
        false,
        &mut scratch,
        &mut vertices,
        &mut skin,
        &mut shapes,
        &mut regressor,
    );
    let mut head_extra = Vec::new();
    let head_starts = emit(
        &head,
        false,
        &mut head_extra,
        &mut vertices,
        &mut skin,
        &mut shapes,
        &mut regressor,
    );
    let crown = push_pole(
        Vector3::new(0.0, TEMPLATE_HEIGHT, 0.0),
        12,
        &mut vertices,
        &mut skin,
        &mut shapes,
    );
    regressor[15] = vec![(crown, 1.0)];
    fan(crotch, torso_starts[0], false, &mut faces);
    tube_faces(&torso_starts, false, &mut faces);
    tube_faces(&head_starts, false, &mut faces);
    fan(crown, *head_starts.last().unwrap(), true, &mut faces);

    for side in 0..left.len() {
        extra_draws.push(Vec::new());
        let starts = emit(
            &left[side],
            false,
            &mut extra_draws[side],
            &mut vertices,
            &mut skin,
            &mut shapes,
            &mut regressor,
        );
        tube_faces(&starts, false, &mut faces);
    }
    for side in 0..left.len() {
        let starts = emit(
            &left[side],
            true,
            &mut extra_draws[side],
            &mut vertices,
            &mut skin,
            &mut shapes,
            &mut regressor,
        );
        tube_faces(&starts, true, &mut faces);
    }

    let template = JointSet(
        regressor
            .iter()
            .map(|row| row.iter().fold(Vector3::zeros(), |acc, &(i, w)| acc + vertices[i] * w))
            .collect(),
    );
    let tree = KinematicTree::from_rest_joints(&template.0)?;
    BodyModel::new(vertices, faces, shapes, regressor, skin, tree)
}

/// Default-sized model: 24 joints, 10 shape components, 890 vertices.
pub fn default_body_model(seed: u64) -> BodyModel {
    synth_body_model(24, DEFAULT_SHAPE_DIMS, DEFAULT_VERTEX_BUDGET, seed)
        .expect("default body parameters are valid")
}
