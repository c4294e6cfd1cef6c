//! Out-of-cloth pose diversification: database crossover and bounded mutation.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{parse_error, PoseRecord};
use crate::kinematics::{ClothMask, Pose};
use crate::rotation::{from_row_major, geodesic_angle, random_rotation, to_row_major};
use crate::seed::{derive_seed, rng_for};

/// Donor poses with tags.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseDatabase {
    entries: Vec<(Pose, String)>,
}

impl PoseDatabase {
    /// Checks that every entry has the same joint count.
    pub fn new(entries: Vec<(Pose, String)>) -> Result<Self> {
        if let Some((first, _)) = entries.first() {
            let n = first.joint_count();
            if let Some((p, _)) = entries.iter().find(|(p, _)| p.joint_count() != n) {
                return Err(Error::CountMismatch {
                    what: "database pose joints",
                    expected: n,
                    found: p.joint_count(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pose(&self, i: usize) -> &Pose {
        &self.entries[i].0
    }

    pub fn tag(&self, i: usize) -> &str {
        &self.entries[i].1
    }

    pub fn entries(&self) -> &[(Pose, String)] {
        &self.entries
    }

    /// Parses JSON lines `{"tag", "rotations", "root_translation"}`; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: PoseRecord = serde_json::from_str(line).map_err(|e| parse_error(i + 1, e))?;
            let pose = Pose::new(
                record.rotations.iter().map(from_row_major).collect(),
                Vector3::from(record.root_translation),
            )
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
            entries.push((pose, record.tag));
        }
        Self::new(entries)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = Vec::new();
        for (pose, tag) in &self.entries {
            let record = PoseRecord {
                tag: tag.clone(),
                rotations: pose.rotations().iter().map(to_row_major).collect(),
                root_translation: (*pose.root_translation()).into(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(String::from_utf8(out).expect("JSON is UTF-8"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }
}

/// Per-joint geodesic bound and seed for mutation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    pub epsilon: f64,
    pub seed: u64,
}

impl MutationConfig {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        let c = Self { epsilon, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn check_counts(a: &Pose, b: &Pose, mask: &ClothMask) -> Result<()> {
    for (what, found) in [("second pose joints", b.joint_count()), ("cloth mask", mask.len())] {
        if found != a.joint_count() {
            return Err(Error::CountMismatch {
                what,
                expected: a.joint_count(),
                found,
            });
        }
    }
    Ok(())
}

/// Sum of geodesic angles between corresponding covered-joint rotations.
pub fn pose_distance(a: &Pose, b: &Pose, mask: &ClothMask) -> Result<f64> {
    check_counts(a, b, mask)?;
    Ok(mask
        .covered_indices()
        .map(|k| geodesic_angle(a.rotation(k), b.rotation(k)))
        .sum())
}

/// Indices of the `k` entries closest to `query` on covered joints, nearest first; ties go to the lower index.
pub fn knn_match(db: &PoseDatabase, query: &Pose, mask: &ClothMask, k: usize) -> Result<Vec<usize>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if k == 0 || k > db.len() {
        return Err(Error::InvalidInput(format!("k must be in 1..={}, got {k}", db.len())));
    }
    let mut scored = db
        .entries
        .iter()
        .enumerate()
        .map(|(i, (p, _))| Ok((pose_distance(query, p, mask)?, i)))
        .collect::<Result<Vec<(f64, usize)>>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Covered joints from `estimate`, uncovered joints from `donor`, root translation from `estimate`.
pub fn crossover(estimate: &Pose, donor: &Pose, mask: &ClothMask) -> Result<Pose> {
    check_counts(estimate, donor, mask)?;
    let rotations = (0..estimate.joint_count())
        .map(|k| {
            if mask.is_covered(k) {
                *estimate.rotation(k)
            } else {
                *donor.rotation(k)
            }
        })
        .collect();
    Ok(Pose::from_parts(rotations, *estimate.root_translation()))
}

/// Right-multiplies each uncovered rotation by a random rotation of angle in `[0, ε)` about a uniform axis.
pub fn mutate(pose: &Pose, mask: &ClothMask, config: &MutationConfig) -> Result<Pose> {
    config.validate()?;
    check_counts(pose, pose, mask)?;
    if config.epsilon == 0.0 {
        return Ok(pose.clone());
    }
    let mut rng = rng_for(config.seed, "mutate", 0);
    let rotations = (0..pose.joint_count())
        .map(|k| {
            if mask.is_covered(k) {
                *pose.rotation(k)
            } else {
                pose.rotation(k) * random_rotation(&mut rng, config.epsilon)
            }
        })
        .collect();
    Ok(Pose::from_parts(rotations, *pose.root_translation()))
}

/// `count` variants: crossover with the `k` nearest donors in turn, then mutation with a per-variant seed.
///
/// `k` is capped at the database size.
pub fn generate_variants(
    db: &PoseDatabase,
    estimate: &Pose,
    mask: &ClothMask,
    count: usize,
    config: &MutationConfig,
    k: usize,
) -> Result<Vec<Pose>> {
    config.validate()?;
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let donors = knn_match(db, estimate, mask, k.min(db.len()))?;
    (0..count)
        .map(|i| {
            let crossed = crossover(estimate, db.pose(donors[i % donors.len()]), mask)?;
            let variant_config = MutationConfig {
                epsilon: config.epsilon,
                seed: derive_seed(config.seed, "mutation", i as u64),
            };
            mutate(&crossed, mask, &variant_config)
        })
        .collect()
}
