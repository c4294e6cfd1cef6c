use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, JointSet, KinematicTree, Pose};

/// Sparse row of `(column, weight)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Template mesh, linear shape space, joint regressor and skinning weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    pub(crate) template_vertices: Vec<Vector3<f64>>,
    pub(crate) faces: Vec<[usize; 3]>,
    pub(crate) blendshapes: Vec<Vec<Vector3<f64>>>,
    pub(crate) joint_regressor: Vec<SparseRow>,
    pub(crate) skin_weights: Vec<SparseRow>,
    pub(crate) tree: KinematicTree,
}

/// Shape coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub beta: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(m: usize) -> Self {
        Self { beta: vec![0.0; m] }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl BodyModel {
    /// Assembles a model, checking index ranges and weight normalization.
    pub fn new(
        template_vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        blendshapes: Vec<Vec<Vector3<f64>>>,
        joint_regressor: Vec<SparseRow>,
        skin_weights: Vec<SparseRow>,
        tree: KinematicTree,
    ) -> Result<Self> {
        let v = template_vertices.len();
        let n = tree.joint_count();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= v)) {
            return Err(Error::InvalidInput(format!("face {f:?} indexes past {v} vertices")));
        }
        for (i, shape) in blendshapes.iter().enumerate() {
            if shape.len() != v {
                return Err(Error::InvalidInput(format!(
                    "blendshape {i} has {} vertices, expected {v}",
                    shape.len()
                )));
            }
        }
        if joint_regressor.len() != n {
            return Err(Error::CountMismatch {
                what: "joint regressor rows",
                expected: n,
                found: joint_regressor.len(),
            });
        }
        if skin_weights.len() != v {
            return Err(Error::CountMismatch {
                what: "skin weight rows",
                expected: v,
                found: skin_weights.len(),
            });
        }
        check_rows(&joint_regressor, v, "joint regressor", usize::MAX)?;
        check_rows(&skin_weights, n, "skin weights", 4)?;
        Ok(Self {
            template_vertices,
            faces,
            blendshapes,
            joint_regressor,
            skin_weights,
            tree,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.template_vertices.len()
    }

    pub fn shape_dims(&self) -> usize {
        self.blendshapes.len()
    }

    pub fn joint_count(&self) -> usize {
        self.tree.joint_count()
    }

    pub fn template_vertices(&self) -> &[Vector3<f64>] {
        &self.template_vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn blendshapes(&self) -> &[Vec<Vector3<f64>>] {
        &self.blendshapes
    }

    pub fn joint_regressor(&self) -> &[SparseRow] {
        &self.joint_regressor
    }

    pub fn skin_weights(&self) -> &[SparseRow] {
        &self.skin_weights
    }

    /// Template skeleton (rest offsets regressed from the template mesh).
    pub fn tree(&self) -> &KinematicTree {
        &self.tree
    }

    fn check_beta(&self, beta: &ShapeParams) -> Result<()> {
        if beta.len() != self.shape_dims() {
            return Err(Error::CountMismatch {
                what: "shape coefficients",
                expected: self.shape_dims(),
                found: beta.len(),
            });
        }
        Ok(())
    }

    /// Skeleton whose rest offsets come from the joints regressed at `beta`.
    pub fn shaped_tree(&self, beta: &ShapeParams) -> Result<KinematicTree> {
        let joints = self.rest_joints(beta)?;
        tree_from_joints(&self.tree, &joints)
    }

    /// Joints regressed from the rest mesh at `beta`.
    pub fn rest_joints(&self, beta: &ShapeParams) -> Result<JointSet> {
        regress_joints(self, &shape_mesh(self, beta)?)
    }

    /// Posed joints in model space: the root sits at its rest position plus the pose's root translation.
    pub fn posed_joints(&self, beta: &ShapeParams, pose: &Pose) -> Result<JointSet> {
        let rest = self.rest_joints(beta)?;
        let tree = tree_from_joints(&self.tree, &rest)?;
        let placed = pose.clone().with_root_translation(rest.0[0] + pose.root_translation());
        forward_kinematics(&tree, &placed)
    }
}

fn check_rows(rows: &[SparseRow], columns: usize, what: &str, max_nonzero: usize) -> Result<()> {
    for (r, row) in rows.iter().enumerate() {
        let mut sum = 0.0;
        let mut nonzero = 0;
        for &(c, w) in row {
            if c >= columns || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("{what} row {r}: bad entry ({c}, {w})")));
            }
            if w > 0.0 {
                nonzero += 1;
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("{what} row {r} sums to {sum}")));
        }
        if nonzero > max_nonzero {
            return Err(Error::InvalidInput(format!(
                "{what} row {r} has {nonzero} nonzero weights (max {max_nonzero})"
            )));
        }
    }
    Ok(())
}

/// Same hierarchy as `template`, offsets taken from `joints`.
pub fn tree_from_joints(template: &KinematicTree, joints: &JointSet) -> Result<KinematicTree> {
    if joints.len() != template.joint_count() {
        return Err(Error::CountMismatch {
            what: "joints",
            expected: template.joint_count(),
            found: joints.len(),
        });
    }
    let offsets = (0..joints.len())
        .map(|k| match template.parent(k) {
            Some(p) => joints.0[k] - joints.0[p],
            None => joints.0[k],
        })
        .collect();
    KinematicTree::new(template.parents().to_vec(), offsets, template.names().to_vec())
}

/// Rest-pose mesh: template plus the β-weighted blendshapes.
pub fn shape_mesh(model: &BodyModel, beta: &ShapeParams) -> Result<Mesh> {
    model.check_beta(beta)?;
    let mut vertices = model.template_vertices.clone();
    for (b, shape) in beta.beta.iter().zip(&model.blendshapes) {
        if *b == 0.0 {
            continue;
        }
        for (v, d) in vertices.iter_mut().zip(shape) {
            *v += d * *b;
        }
    }
    Ok(Mesh {
        vertices,
        faces: model.faces.clone(),
    })
}

/// `joint_regressor · vertices`.
pub fn regress_joints(model: &BodyModel, rest_mesh: &Mesh) -> Result<JointSet> {
    if rest_mesh.vertices.len() != model.vertex_count() {
        return Err(Error::CountMismatch {
            what: "mesh vertices",
            expected: model.vertex_count(),
            found: rest_mesh.vertices.len(),
        });
    }
    Ok(JointSet(
        model
            .joint_regressor
            .iter()
            .map(|row| {
                row.iter()
                    .fold(Vector3::zeros(), |acc, &(i, w)| acc + rest_mesh.vertices[i] * w)
            })
            .collect(),
    ))
}

/// Linear blend skinning of the β-shaped rest mesh into `pose`.
///
/// Joint transforms come from forward kinematics over the joints regressed at
/// `beta`; the root is displaced from its rest position by the pose's root
/// translation.
pub fn skin(model: &BodyModel, beta: &ShapeParams, pose: &Pose) -> Result<Mesh> {
    let rest = shape_mesh(model, beta)?;
    let joints = regress_joints(model, &rest)?;
    let tree = tree_from_joints(&model.tree, &joints)?;
    let placed = pose.clone().with_root_translation(joints.0[0] + pose.root_translation());
    let globals: Vec<Matrix3<f64>> = placed.global_rotations(&tree)?;
    let posed = forward_kinematics(&tree, &placed)?;
    let vertices = rest
        .vertices
        .iter()
        .zip(&model.skin_weights)
        .map(|(v, row)| {
            row.iter().fold(Vector3::zeros(), |acc, &(k, w)| {
                acc + (globals[k] * (v - joints.0[k]) + posed.0[k]) * w
            })
        })
        .collect();
    Ok(Mesh {
        vertices,
        faces: rest.faces,
    })
}

#[derive(Serialize, Deserialize)]
pub(crate) struct BodyModelFile {
    pub template_vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub blendshapes: Vec<Vec<[f64; 3]>>,
    pub joint_regressor: Vec<SparseRow>,
    pub skin_weights: Vec<SparseRow>,
    pub tree: crate::formats::SkeletonFile,
}

impl BodyModel {
    /// Single-document JSON serialization.
    pub fn to_json(&self) -> Result<String> {
        let file = BodyModelFile {
            template_vertices: self.template_vertices.iter().map(|v| (*v).into()).collect(),
            faces: self.faces.clone(),
            blendshapes: self
                .blendshapes
                .iter()
                .map(|s| s.iter().map(|v| (*v).into()).collect())
                .collect(),
            joint_regressor: self.joint_regressor.clone(),
            skin_weights: self.skin_weights.clone(),
            tree: crate::formats::SkeletonFile::from_tree(&self.tree),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BodyModelFile = serde_json::from_str(text)?;
        Self::new(
            file.template_vertices.into_iter().map(Vector3::from).collect(),
            file.faces,
            file.blendshapes
                .into_iter()
                .map(|s| s.into_iter().map(Vector3::from).collect())
                .collect(),
            file.joint_regressor,
            file.skin_weights,
            file.tree.to_tree()?,
        )
    }
}
