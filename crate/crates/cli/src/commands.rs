//! Command implementations: argument handling and file output around [`crate::pipeline`].

use std::fs;
use std::path::{Path, PathBuf};

use bodyfit::body::{shape_mesh, write_obj, Mesh, ShapeParams};
use bodyfit::evolution::PoseDatabase;
use bodyfit::formats::{read_json, to_json_pretty, PoseFile};
use bodyfit::kinematics::Pose;
use bodyfit::shape::{mesh_measurements_with, MeasurementReport};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, CliResult, Context};
use crate::pipeline::{
    apply_edits, measurement_model, metric_report, observe, posed_mesh, run_evolve, run_fit, shape_from_measurements,
    synthesize, FitOptions, FitResult, SKELETON_FILE,
};
use crate::scenario::{LoadedScenario, ModelSpec};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const DATABASE_FILE: &str = "pose_db.jsonl";

/// `{"translation": [x, y, z]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationFile {
    pub translation: [f64; 3],
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).context(format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).context(format!("writing {}", path.display()))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = to_json_pretty(value).context(format!("writing {}", path.display()))?;
    write_text(path, &text)
}

fn write_mesh(path: &Path, mesh: &Mesh) -> CliResult<()> {
    let mut buf = Vec::new();
    write_obj(mesh, &mut buf).context(format!("writing {}", path.display()))?;
    fs::write(path, buf).context(format!("writing {}", path.display()))
}

fn read<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    read_json(path).context(format!("reading {what} {}", path.display()))
}

pub fn read_beta(path: &Path) -> CliResult<ShapeParams> {
    read(path, "shape")
}

pub fn read_pose(path: &Path) -> CliResult<Pose> {
    let file: PoseFile = read(path, "pose")?;
    file.to_pose().context(format!("reading pose {}", path.display()))
}

pub fn read_translation(path: &Path) -> CliResult<Vector3<f64>> {
    let file: TranslationFile = read(path, "translation")?;
    Ok(Vector3::from(file.translation))
}

/// `scenario.json`, `skeleton.json` and `pose_db.jsonl` under `out`.
pub fn synth(config: &Config, seed: u64, db_size: usize, out: &Path) -> CliResult<()> {
    let s = synthesize(seed, db_size, config).context("synthesizing scene")?;
    create_dir(out)?;
    write_json_file(&out.join(SCENARIO_FILE), &s.scenario)?;
    write_json_file(&out.join(SKELETON_FILE), &s.skeleton)?;
    let db = s.database.to_jsonl().context("serializing pose database")?;
    write_text(&out.join(DATABASE_FILE), &db)
}

pub fn load_scenario(path: &Path) -> CliResult<LoadedScenario> {
    LoadedScenario::load(path)
}

fn fit_context(path: &Path) -> String {
    format!("fitting {}", path.display())
}

/// `pose.json`, `beta.json`, `translation.json`, `mesh.obj` and `report.json` under `out`.
pub fn fit(scenario: &Path, opts: &FitOptions, out: &Path) -> CliResult<FitResult> {
    let loaded = load_scenario(scenario)?;
    let result = run_fit(&loaded, opts).context(fit_context(scenario))?;
    write_fit(&result, out)?;
    Ok(result)
}

pub fn write_fit(result: &FitResult, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    write_json_file(&out.join("pose.json"), &PoseFile::from_pose(&result.pose))?;
    write_json_file(&out.join("beta.json"), &result.shape.beta)?;
    write_json_file(
        &out.join("translation.json"),
        &TranslationFile {
            translation: result.translation.into(),
        },
    )?;
    write_mesh(&out.join("mesh.obj"), &result.mesh)?;
    write_json_file(&out.join("report.json"), &result.report)
}

/// Fits the scenario, then writes `variant_NNN.json` and `variant_NNN.obj` for each variant.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    scenario: &Path,
    database: &Path,
    opts: &FitOptions,
    count: usize,
    epsilon: f64,
    k: usize,
    out: &Path,
) -> CliResult<Vec<Pose>> {
    let loaded = load_scenario(scenario)?;
    let db = PoseDatabase::load(database).context(format!("reading pose database {}", database.display()))?;
    let fit = run_fit(&loaded, opts).context(fit_context(scenario))?;
    let variants = run_evolve(&fit, &db, &loaded.scenario.cloth_mask, count, epsilon, k, opts.seed)
        .context("generating variants")?;
    create_dir(out)?;
    for (i, pose) in variants.iter().enumerate() {
        write_json_file(&out.join(format!("variant_{i:03}.json")), &PoseFile::from_pose(pose))?;
        let mesh = posed_mesh(&loaded.model, &fit.shape.beta, pose, &fit.translation).context("skinning variant")?;
        write_mesh(&out.join(format!("variant_{i:03}.obj")), &mesh)?;
    }
    Ok(variants)
}

/// Where `measure` takes its observed measurements from.
#[derive(Clone, Debug)]
pub enum MeasureSource {
    Scenario(PathBuf),
    Beta { path: PathBuf, model_seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureReport {
    pub observed: MeasurementReport,
    pub fitted: MeasurementReport,
}

/// Edits the observed measurements, refits the shape and writes `beta.json`,
/// `measurements.json` and optionally the rest-pose `mesh.obj`.
pub fn measure(
    source: &MeasureSource,
    edits: &[(String, f64)],
    opts: &FitOptions,
    write_rest_mesh: bool,
    out: &Path,
) -> CliResult<ShapeParams> {
    let (model, observed) = match source {
        MeasureSource::Scenario(path) => {
            let loaded = load_scenario(path)?;
            let obs = observe(&loaded, opts).context(fit_context(path))?;
            (loaded.model, obs.measurements)
        }
        MeasureSource::Beta { path, model_seed } => {
            let beta = read_beta(path)?;
            let spec = ModelSpec {
                shape_dims: beta.len(),
                ..ModelSpec::with_seed(*model_seed)
            };
            let model = spec.build().context("building body model")?;
            let observed = mesh_measurements_with(&model, &beta, &opts.bands).context("measuring shape")?;
            (model, observed)
        }
    };
    let edited = apply_edits(&observed, edits).context("applying edits")?;
    let mm = measurement_model(&model, opts).context("building measurement model")?;
    let shape = shape_from_measurements(mm, &edited, opts).context("fitting shape")?;
    let fitted = mesh_measurements_with(&model, &shape.beta, &opts.bands).context("measuring fitted shape")?;
    create_dir(out)?;
    write_json_file(&out.join("beta.json"), &shape.beta)?;
    write_json_file(
        &out.join("measurements.json"),
        &MeasureReport {
            observed: edited.into(),
            fitted: fitted.into(),
        },
    )?;
    if write_rest_mesh {
        let mesh = shape_mesh(&model, &shape.beta).context("building mesh")?;
        write_mesh(&out.join("mesh.obj"), &mesh)?;
    }
    Ok(shape.beta)
}

/// Metrics of a fit directory against a scenario's ground truth: `out` (JSON) and `out` with a `.csv` extension.
pub fn eval(pred_dir: &Path, scenario: &Path, out: &Path) -> CliResult<bodyfit::metrics::MetricReport> {
    let loaded = load_scenario(scenario)?;
    let gt = loaded.require_ground_truth()?;
    let pose = read_pose(&pred_dir.join("pose.json"))?;
    let beta = read_beta(&pred_dir.join("beta.json"))?;
    let translation = read_translation(&pred_dir.join("translation.json"))?;
    let ctx = format!("evaluating {}", pred_dir.display());
    let joints = loaded.model.posed_joints(&beta, &pose).context(&ctx)?.translated(&translation);
    let report = metric_report(&loaded.model, &loaded.scenario, gt, &joints, &beta).context(&ctx)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json_file(out, &report)?;
    write_text(&out.with_extension("csv"), &report.to_csv())?;
    Ok(report)
}

/// Rest mesh of `beta`, or the posed camera-space mesh when a pose is given.
pub fn export_mesh(
    beta: &Path,
    pose: Option<&Path>,
    translation: Option<&Path>,
    model_seed: u64,
    out: &Path,
) -> CliResult<()> {
    let beta = read_beta(beta)?;
    let spec = ModelSpec {
        shape_dims: beta.len(),
        ..ModelSpec::with_seed(model_seed)
    };
    let model = spec.build().context("building body model")?;
    let t = translation.map(read_translation).transpose()?.unwrap_or_else(Vector3::zeros);
    let mesh = match pose {
        Some(p) => posed_mesh(&model, &beta, &read_pose(p)?, &t).context("skinning")?,
        None if translation.is_some() => {
            return Err(CliError::input("export-mesh", "--translation needs --pose"));
        }
        None => shape_mesh(&model, &beta).context("building mesh")?,
    };
    write_mesh(out, &mesh)
}
