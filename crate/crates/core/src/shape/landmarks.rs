use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ClothMask, KinematicTree};

use super::measurement_index;

/// Clothing landmarks of one garment: label → `[u, v]` pixels or `[x, y, z]` meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub category: String,
    pub points: BTreeMap<String, Vec<f64>>,
}

impl LandmarkSet {
    /// Point dimension shared by every landmark (2 or 3); `None` when empty.
    pub fn dimension(&self) -> Result<Option<usize>> {
        let mut dim = None;
        for (label, p) in &self.points {
            if p.len() != 2 && p.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "landmark {label} has {} coordinates, expected 2 or 3",
                    p.len()
                )));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("landmark {label} is not finite")));
            }
            match dim {
                None => dim = Some(p.len()),
                Some(d) if d != p.len() => {
                    return Err(Error::InvalidInput(format!(
                        "landmark set `{}` mixes 2D and 3D points",
                        self.category
                    )))
                }
                _ => {}
            }
        }
        Ok(dim)
    }
}

/// How pixel distances become meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// `meters = pixels · depth / focal`.
    #[default]
    DepthOverFocal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPair {
    pub measurement: String,
    pub labels: [String; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub pairs: Vec<LandmarkPair>,
    /// Joints the garment covers.
    #[serde(default)]
    pub covers: Vec<String>,
}

/// Per-category landmark pairs and the measurements they realize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSemanticMap {
    #[serde(default)]
    pub scale_rule: ScaleRule,
    pub categories: BTreeMap<String, CategoryMap>,
}

impl LandmarkSemanticMap {
    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, cat) in &self.categories {
            for pair in &cat.pairs {
                measurement_index(&pair.measurement)?;
                if pair.labels[0] == pair.labels[1] {
                    return Err(Error::InvalidInput(format!(
                        "category {name}: pair for {} repeats label {}",
                        pair.measurement, pair.labels[0]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn category(&self, name: &str) -> Result<&CategoryMap> {
        self.categories
            .get(name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    /// Union of the joints covered by the given garments.
    pub fn cloth_mask<S: AsRef<str>>(&self, categories: &[S], tree: &KinematicTree) -> Result<ClothMask> {
        let mut mask = ClothMask::all(tree.joint_count(), false);
        for c in categories {
            for joint in &self.category(c.as_ref())?.covers {
                mask.covered[tree.require(joint)?] = true;
            }
        }
        Ok(mask)
    }
}

const DEFAULT_MAP: &str = include_str!("landmark_map.json");

/// Shipped map for short/long-sleeve tops, trousers and skirts.
pub fn default_landmark_map() -> LandmarkSemanticMap {
    LandmarkSemanticMap::from_json(DEFAULT_MAP).expect("shipped landmark map is valid")
}
