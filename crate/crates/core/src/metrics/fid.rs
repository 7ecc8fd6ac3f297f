use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::pca::symmetric_eigen;
use super::Matrix;
use crate::error::{Error, Result};

/// Ridge added to both covariances before taking square roots.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    pub value: f64,
    pub n_real: usize,
    pub n_gen: usize,
    pub feature_dim_raw: usize,
    pub feature_dim_reduced: usize,
    pub epsilon_regularizer: f64,
    /// Set when either sample count does not exceed the feature dimension,
    /// so the covariance estimates are rank deficient.
    pub small_sample_warning: bool,
}

/// Sample mean and unbiased (`n - 1`) covariance of the rows.
pub fn mean_and_covariance(features: &Matrix) -> Result<(DVector<f64>, Matrix)> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 samples, got {n}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("features contain non-finite values".into()));
    }
    let mean: DVector<f64> = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok((mean, cov))
}

fn sqrt_psd(m: Matrix) -> Result<Matrix> {
    let (values, vectors) = symmetric_eigen(m)?;
    let roots = DVector::from_iterator(values.len(), values.iter().map(|v| v.max(0.0).sqrt()));
    Ok(&vectors * Matrix::from_diagonal(&roots) * vectors.transpose())
}

/// `‖μx − μg‖² + Tr(Σx + Σg − 2 (Σx Σg)^{1/2})` with `ε·I` added to both
/// covariances. The cross term is evaluated as
/// `Tr((Σg^{1/2} Σx Σg^{1/2})^{1/2})`, which is real by construction.
pub fn fid_from_statistics(
    mu_x: &DVector<f64>,
    sigma_x: &Matrix,
    mu_g: &DVector<f64>,
    sigma_g: &Matrix,
    epsilon: f64,
) -> Result<f64> {
    let d = mu_x.len();
    if mu_g.len() != d || sigma_x.shape() != (d, d) || sigma_g.shape() != (d, d) {
        return Err(Error::Shape("statistics have mismatched dimensions".into()));
    }
    let ridge = Matrix::identity(d, d) * epsilon;
    let sx = sigma_x + &ridge;
    let sg = sigma_g + &ridge;
    let root_g = sqrt_psd(sg.clone())?;
    let inner = &root_g * &sx * &root_g;
    let (values, _) = symmetric_eigen(inner)?;
    let cross: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    let mean_term = (mu_x - mu_g).norm_squared();
    let value = mean_term + sx.trace() + sg.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("Fréchet distance evaluated to {value}")));
    }
    Ok(value)
}

pub fn compute_fid(real_features: &Matrix, gen_features: &Matrix, epsilon: f64) -> Result<FidReport> {
    if real_features.ncols() != gen_features.ncols() {
        return Err(Error::Shape(format!(
            "real features have {} columns, generated {}",
            real_features.ncols(),
            gen_features.ncols()
        )));
    }
    let (mu_x, sigma_x) = mean_and_covariance(real_features)?;
    let (mu_g, sigma_g) = mean_and_covariance(gen_features)?;
    let value = fid_from_statistics(&mu_x, &sigma_x, &mu_g, &sigma_g, epsilon)?;
    let d = real_features.ncols();
    Ok(FidReport {
        value,
        n_real: real_features.nrows(),
        n_gen: gen_features.nrows(),
        feature_dim_raw: d,
        feature_dim_reduced: d,
        epsilon_regularizer: epsilon,
        small_sample_warning: real_features.nrows() <= d || gen_features.nrows() <= d,
    })
}
