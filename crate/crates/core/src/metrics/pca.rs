use nalgebra::{DVector, SymmetricEigen};

use super::Matrix;
use crate::error::{Error, Result};

/// A fitted principal subspace.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// Orthonormal directions as columns, `d × k`, by decreasing variance.
    pub components: Matrix,
    /// Sample variance captured by each component (non-increasing).
    pub variances: Vec<f64>,
    pub requested_dim: usize,
    /// Set when the requested dimension exceeded `min(n - 1, d)`.
    pub clipped: bool,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// Centers with the fitted mean and projects onto the components.
    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "features have {} columns, basis was fitted on {}",
                features.ncols(),
                self.mean.len()
            )));
        }
        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * &self.components)
    }
}

pub(crate) fn symmetric_eigen(m: Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.nrows();
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, 1e-14, 10_000 + 100 * n)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Fits PCA on `features` (rows are samples) and returns the projected
/// samples with the basis. `k` is clipped to the rank bound `min(n - 1, d)`.
pub fn pca_reduce(features: &Matrix, k: usize) -> Result<(Matrix, PcaBasis)> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(Error::Shape(format!("PCA needs at least 2 samples, got {n}")));
    }
    if k == 0 {
        return Err(Error::Config("PCA target dimension must be positive".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("PCA input contains non-finite values".into()));
    }
    let effective = k.min(n - 1).min(d);
    if effective < k {
        log::warn!("PCA dimension {k} clipped to {effective} ({n} samples, {d} features)");
    }

    let mean: DVector<f64> = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n - 1) as f64;

    let (variances, mut components) = if d <= n {
        let cov = centered.transpose() * &centered / denom;
        let (values, vectors) = symmetric_eigen(cov)?;
        (values[..effective].to_vec(), vectors.columns(0, effective).into_owned())
    } else {
        // Fewer samples than dimensions: diagonalize the n × n Gram matrix and
        // lift its eigenvectors back to feature space.
        let gram = &centered * centered.transpose() / denom;
        let (values, vectors) = symmetric_eigen(gram)?;
        let mut comps = Matrix::zeros(d, effective);
        for j in 0..effective {
            let lifted = centered.transpose() * vectors.column(j);
            let norm = lifted.norm();
            if norm > 0.0 {
                comps.set_column(j, &(lifted / norm));
            }
        }
        (values[..effective].to_vec(), comps)
    };

    // Deterministic orientation: largest-magnitude entry of each component positive.
    for mut col in components.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }

    let basis = PcaBasis {
        mean,
        components,
        variances: variances.into_iter().map(|v| v.max(0.0)).collect(),
        requested_dim: k,
        clipped: effective < k,
    };
    let projected = basis.transform(features)?;
    Ok((projected, basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn three_points_clip_to_two() {
        let x = random(3, 2048, 1);
        let (proj, basis) = pca_reduce(&x, 1024).unwrap();
        assert_eq!(proj.shape(), (3, 2));
        assert!(basis.clipped);
        assert_eq!(basis.requested_dim, 1024);
    }

    #[test]
    fn variances_non_increasing_both_routes() {
        for (n, d) in [(50, 6), (6, 50)] {
            let x = random(n, d, 2);
            let (_, basis) = pca_reduce(&x, 5).unwrap();
            for w in basis.variances.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
            // components orthonormal
            let gram = basis.components.transpose() * &basis.components;
            assert!((gram - Matrix::identity(5, 5)).amax() < 1e-9);
        }
    }

    #[test]
    fn subspace_data_keeps_pairwise_distances() {
        let coords = random(20, 3, 3);
        let lift = random(3, 40, 4);
        let offset = random(1, 40, 5);
        let mut x = coords * lift;
        for mut row in x.row_iter_mut() {
            row += offset.row(0);
        }
        let (proj, basis) = pca_reduce(&x, 3).unwrap();
        assert!(!basis.clipped);
        for i in 0..20 {
            for j in 0..20 {
                let a = (x.row(i) - x.row(j)).norm();
                let b = (proj.row(i) - proj.row(j)).norm();
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn needs_two_samples() {
        assert!(pca_reduce(&random(1, 4, 0), 2).is_err());
    }
}
