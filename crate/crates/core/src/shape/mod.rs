//! Anthropometric measurements and shape inference from them.

mod inference;
mod landmarks;
mod measure;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use inference::{
    build_measurement_model, fit_shape, sample_shape, MeasurementModel, ShapePosterior, NOISE_FLOOR,
};
pub use landmarks::{
    default_landmark_map, CategoryMap, LandmarkPair, LandmarkSemanticMap, LandmarkSet, ScaleRule,
};
pub use measure::{
    axial_measurements, band_extremes, mesh_measurements, mesh_measurements_with, radial_measurements,
    WidthBands,
};

/// Measurement names in vector order: four axial, then four radial.
pub const MEASUREMENT_NAMES: [&str; 8] = [
    "height",
    "leg_length",
    "arm_span",
    "torso_length",
    "shoulder_width",
    "chest_width",
    "waist_width",
    "hips_width",
];

pub const AXIAL_COUNT: usize = 4;

pub const HEIGHT: usize = 0;
pub const LEG_LENGTH: usize = 1;
pub const ARM_SPAN: usize = 2;
pub const TORSO_LENGTH: usize = 3;
pub const SHOULDER_WIDTH: usize = 4;
pub const CHEST_WIDTH: usize = 5;
pub const WAIST_WIDTH: usize = 6;
pub const HIPS_WIDTH: usize = 7;

/// Index of a measurement name.
pub fn measurement_index(name: &str) -> Result<usize> {
    MEASUREMENT_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::UnknownMeasurement(name.to_string()))
}

/// Measurement vector ω in meters; absent entries are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "MeasurementReport", try_from = "MeasurementReport")]
pub struct MeasurementVector {
    pub values: [Option<f64>; 8],
}

impl MeasurementVector {
    pub fn get(&self, name: &str) -> Result<Option<f64>> {
        Ok(self.values[measurement_index(name)?])
    }

    /// Sets an entry; values must be positive and finite.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = measurement_index(name)?;
        check_value(name, value)?;
        self.values[i] = Some(value);
        Ok(())
    }

    pub fn is_available(&self, i: usize) -> bool {
        self.values[i].is_some()
    }

    pub fn available_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Fills entries absent here from `other`.
    pub fn merge(&mut self, other: &MeasurementVector) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            if a.is_none() {
                *a = *b;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in MEASUREMENT_NAMES.iter().zip(&self.values) {
            if let Some(v) = v {
                check_value(name, *v)?;
            }
        }
        Ok(())
    }
}

fn check_value(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidInput(format!(
            "measurement {name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

/// Serialized form: `{"name": {"value": meters or null, "available": bool}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementReport(pub BTreeMap<String, MeasurementEntry>);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub value: Option<f64>,
    pub available: bool,
}

impl From<MeasurementVector> for MeasurementReport {
    fn from(m: MeasurementVector) -> Self {
        MeasurementReport(
            MEASUREMENT_NAMES
                .iter()
                .zip(m.values)
                .map(|(n, v)| {
                    (
                        n.to_string(),
                        MeasurementEntry {
                            value: v,
                            available: v.is_some(),
                        },
                    )
                })
                .collect(),
        )
    }
}

impl TryFrom<MeasurementReport> for MeasurementVector {
    type Error = Error;

    fn try_from(report: MeasurementReport) -> Result<Self> {
        let mut m = MeasurementVector::default();
        for (name, entry) in report.0 {
            let i = measurement_index(&name)?;
            if entry.available != entry.value.is_some() {
                return Err(Error::InvalidInput(format!(
                    "measurement {name}: availability flag disagrees with value"
                )));
            }
            m.values[i] = entry.value;
        }
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
