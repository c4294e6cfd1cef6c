use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::body::{BodyModel, ShapeParams};
use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::{mesh_measurements_with, MeasurementVector, WidthBands, MEASUREMENT_NAMES};

/// Standard deviation (meters) added to every observed measurement's residual.
pub const NOISE_FLOOR: f64 = 1e-6;

const SAMPLE_CLAMP: f64 = 3.0;
const PSD_TOLERANCE: f64 = 1e-9;

/// Linear map `ω ≈ A·β + b` fitted over random shapes, with residual covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub residual_cov: DMatrix<f64>,
    /// Rows the model can predict (measurements present for every sample).
    pub available: Vec<bool>,
    pub bands: WidthBands,
}

impl MeasurementModel {
    pub fn shape_dims(&self) -> usize {
        self.a.ncols()
    }

    /// Predicted measurements for `beta`; unavailable rows are absent.
    pub fn predict(&self, beta: &DVector<f64>) -> MeasurementVector {
        let y = &self.a * beta + &self.b;
        let mut m = MeasurementVector::default();
        for (i, v) in m.values.iter_mut().enumerate() {
            if self.available[i] {
                *v = Some(y[i]);
            }
        }
        m
    }
}

/// Gaussian over shape coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapePosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl ShapePosterior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        psd_factor(&covariance)?;
        if mean.len() != covariance.nrows() {
            return Err(Error::CountMismatch {
                what: "posterior mean",
                expected: covariance.nrows(),
                found: mean.len(),
            });
        }
        Ok(Self { mean, covariance })
    }

    /// Zero mean, identity covariance.
    pub fn standard(m: usize) -> Self {
        Self {
            mean: DVector::zeros(m),
            covariance: DMatrix::identity(m, m),
        }
    }

    pub fn mean_shape(&self) -> ShapeParams {
        ShapeParams {
            beta: self.mean.iter().copied().collect(),
        }
    }
}

/// Fits the measurement model by least squares over `sample_count` seeded shapes.
///
/// Shapes are drawn from a standard normal clamped to ±3 per component.
pub fn build_measurement_model(
    model: &BodyModel,
    sample_count: usize,
    seed: u64,
    bands: &WidthBands,
) -> Result<MeasurementModel> {
    let m = model.shape_dims();
    if sample_count < 10 * m || sample_count <= m + 1 {
        return Err(Error::InvalidInput(format!(
            "measurement model needs at least {} samples for {m} shape dims, got {sample_count}",
            (10 * m).max(m + 2)
        )));
    }
    let k = MEASUREMENT_NAMES.len();
    let mut rng = rng_for(seed, "measurement-model", 0);
    let mut x = DMatrix::<f64>::zeros(sample_count, m + 1);
    let mut y = DMatrix::<f64>::zeros(sample_count, k);
    let mut available = vec![true; k];
    for s in 0..sample_count {
        let beta: Vec<f64> = (0..m)
            .map(|_| rng.sample::<f64, _>(StandardNormal).clamp(-SAMPLE_CLAMP, SAMPLE_CLAMP))
            .collect();
        for (j, b) in beta.iter().enumerate() {
            x[(s, j)] = *b;
        }
        x[(s, m)] = 1.0;
        let omega = mesh_measurements_with(model, &ShapeParams { beta }, bands)?;
        for i in 0..k {
            match omega.values[i] {
                Some(v) => y[(s, i)] = v,
                None => available[i] = false,
            }
        }
    }

    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let null: Vec<Vec<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= 1e-10 * s_max)
        .map(|(i, _)| svd.v_t.as_ref().unwrap().row(i).iter().take(m).copied().collect())
        .collect();
    if !null.is_empty() {
        return Err(Error::RankDeficient { null_directions: null });
    }
    let coeff = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::InvalidInput(format!("least squares failed: {e}")))?;
    let residual = &y - &x * &coeff;
    let dof = (sample_count - m - 1) as f64;
    let mut residual_cov = residual.transpose() * &residual / dof;
    let mut a = coeff.rows(0, m).transpose();
    let mut b: DVector<f64> = coeff.row(m).transpose();
    for i in 0..k {
        if !available[i] {
            a.row_mut(i).fill(0.0);
            b[i] = 0.0;
            residual_cov.row_mut(i).fill(0.0);
            residual_cov.column_mut(i).fill(0.0);
        }
    }
    Ok(MeasurementModel {
        a,
        b,
        residual_cov: symmetrize(&residual_cov),
        available,
        bands: *bands,
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `L` with `L·Lᵀ = cov`, from the eigen decomposition; rejects non-PSD input.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::InvalidInput("covariance is not square".into()));
    }
    let scale = cov.amax().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if asym > PSD_TOLERANCE * scale {
        return Err(Error::InvalidInput(format!("covariance is not symmetric (max asymmetry {asym:e})")));
    }
    let eig = SymmetricEigen::new(symmetrize(cov));
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Conditions the Gaussian prior on the observed, model-available measurements.
///
/// Computed in whitened coordinates `β = μ₀ + L₀·z`, `ỹ = Σ^{-½}(ω − b − A·μ₀)`:
/// with `Σ^{-½}·A·L₀ = U·diag(s)·Vᵀ`, the posterior is
/// `mean = μ₀ + L₀·V·diag(s/(1+s²))·Uᵀ·ỹ` and
/// `cov = L₀·(I − V·diag(s²/(1+s²))·Vᵀ)·L₀ᵀ`.
pub fn fit_shape(
    model: &MeasurementModel,
    observed: &MeasurementVector,
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
) -> Result<ShapePosterior> {
    let m = model.shape_dims();
    if prior_mean.len() != m || prior_cov.nrows() != m {
        return Err(Error::CountMismatch {
            what: "prior dimensions",
            expected: m,
            found: if prior_mean.len() != m { prior_mean.len() } else { prior_cov.nrows() },
        });
    }
    observed.validate()?;
    let l0 = psd_factor(prior_cov)?;
    let rows: Vec<usize> = (0..MEASUREMENT_NAMES.len())
        .filter(|&i| model.available[i] && observed.values[i].is_some())
        .collect();
    if rows.is_empty() {
        return Ok(ShapePosterior {
            mean: prior_mean.clone(),
            covariance: prior_cov.clone(),
        });
    }
    let k = rows.len();
    let a_obs = DMatrix::from_fn(k, m, |r, c| model.a[(rows[r], c)]);
    let resid = DVector::from_fn(k, |r, _| observed.values[rows[r]].unwrap() - model.b[rows[r]]) - &a_obs * prior_mean;
    let sigma = DMatrix::from_fn(k, k, |r, c| {
        model.residual_cov[(rows[r], rows[c])] + if r == c { NOISE_FLOOR * NOISE_FLOOR } else { 0.0 }
    });
    let eig = SymmetricEigen::new(symmetrize(&sigma));
    let inv_roots = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let whiten = &eig.eigenvectors * DMatrix::from_diagonal(&inv_roots) * eig.eigenvectors.transpose();

    let a_tilde = &whiten * a_obs * &l0;
    let y_tilde = &whiten * resid;
    let svd = a_tilde.svd(true, true);
    let u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    let s = svd.singular_values;
    let gain = s.map(|s| s / (1.0 + s * s));
    let shrink = s.map(|s| s * s / (1.0 + s * s));

    let z = &v * DMatrix::from_diagonal(&gain) * u.transpose() * y_tilde;
    let mean = prior_mean + &l0 * z;
    let inner = DMatrix::identity(m, m) - &v * DMatrix::from_diagonal(&shrink) * v.transpose();
    let covariance = symmetrize(&(&l0 * inner * l0.transpose()));
    Ok(ShapePosterior { mean, covariance })
}

/// `mean + temperature · L · n` with `n` standard normal and `L·Lᵀ` the posterior covariance.
pub fn sample_shape(posterior: &ShapePosterior, seed: u64, temperature: f64) -> Result<ShapeParams> {
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!("temperature must be nonnegative, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(posterior.mean_shape());
    }
    let l = psd_factor(&posterior.covariance)?;
    let mut rng = rng_for(seed, "shape-sample", 0);
    let n = DVector::from_fn(posterior.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = &posterior.mean + l * n * temperature;
    Ok(ShapeParams {
        beta: beta.iter().copied().collect(),
    })
}
