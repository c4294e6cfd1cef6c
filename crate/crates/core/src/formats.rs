//! JSON file formats shared by the library and the command line.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{KinematicTree, Pose};
use crate::rotation::{from_row_major, to_row_major};

/// `{"joints": [{"name", "parent", "offset": [x, y, z]}]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub joints: Vec<SkeletonJoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
}

impl SkeletonFile {
    pub fn from_tree(tree: &KinematicTree) -> Self {
        Self {
            joints: (0..tree.joint_count())
                .map(|k| SkeletonJoint {
                    name: tree.name(k).to_string(),
                    parent: tree.parent(k),
                    offset: (*tree.rest_offset(k)).into(),
                })
                .collect(),
        }
    }

    pub fn to_tree(&self) -> Result<KinematicTree> {
        KinematicTree::new(
            self.joints.iter().map(|j| j.parent).collect(),
            self.joints.iter().map(|j| Vector3::from(j.offset)).collect(),
            self.joints.iter().map(|j| j.name.clone()).collect(),
        )
    }
}

/// `{"rotations": [[9 numbers, row-major] × n], "root_translation": [x, y, z]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub rotations: Vec<[f64; 9]>,
    pub root_translation: [f64; 3],
}

impl PoseFile {
    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            rotations: pose.rotations().iter().map(to_row_major).collect(),
            root_translation: (*pose.root_translation()).into(),
        }
    }

    /// Converts to a [`Pose`], validating every rotation.
    pub fn to_pose(&self) -> Result<Pose> {
        Pose::new(
            self.rotations.iter().map(from_row_major).collect::<Vec<Matrix3<f64>>>(),
            Vector3::from(self.root_translation),
        )
    }
}

/// `{"points": [[u, v] × n], "visible": [bool × n]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointsFile {
    pub points: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

/// One line of a pose database: `{"tag", "rotations", "root_translation"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub tag: String,
    pub rotations: Vec<[f64; 9]>,
    pub root_translation: [f64; 3],
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_json_pretty(value)?)?;
    Ok(())
}

pub(crate) fn parse_error(line: usize, err: serde_json::Error) -> Error {
    Error::InvalidInput(format!("line {line}: {err}"))
}
