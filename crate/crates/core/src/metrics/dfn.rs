use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Distribution of per-image feature-norm ratios `‖φ(G(x))‖ / ‖φ(x)‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfnReport {
    pub ratios: Vec<(String, f64)>,
    pub mean: f64,
    pub q25: f64,
    /// Median; reported next to the mean.
    pub q50: f64,
    pub q75: f64,
    pub iqr: f64,
}

/// Percentile `p ∈ [0, 1]` of ascending `sorted` values, interpolating
/// linearly between the order statistics at ranks `p·(n-1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty list");
    let rank = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Row `i` of `real_features` and `gen_features` must describe the same
/// source image `ids[i]` before and after translation.
pub fn compute_dfn(real_features: &Matrix, gen_features: &Matrix, ids: &[String]) -> Result<DfnReport> {
    if real_features.shape() != gen_features.shape() {
        return Err(Error::Shape(format!(
            "real features {:?} and generated features {:?} differ",
            real_features.shape(),
            gen_features.shape()
        )));
    }
    if ids.len() != real_features.nrows() {
        return Err(Error::Shape(format!(
            "{} ids for {} feature rows",
            ids.len(),
            real_features.nrows()
        )));
    }
    if ids.is_empty() {
        return Err(Error::Shape("no feature rows".into()));
    }
    let mut ratios = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let denom = real_features.row(i).norm();
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numeric(format!(
                "feature norm of real image {id} is {denom}"
            )));
        }
        ratios.push((id.clone(), gen_features.row(i).norm() / denom));
    }
    let mut sorted: Vec<f64> = ratios.iter().map(|(_, g)| *g).collect();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let q25 = percentile(&sorted, 0.25);
    let q50 = percentile(&sorted, 0.5);
    let q75 = percentile(&sorted, 0.75);
    Ok(DfnReport {
        ratios,
        mean,
        q25,
        q50,
        q75,
        iqr: q75 - q25,
    })
}
