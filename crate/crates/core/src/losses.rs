//! Training objectives. Every loss takes probabilities or images as tensors
//! and returns a differentiable scalar tensor; batch reduction is the mean.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPSILON, 1 - EPSILON]` before any log.
pub const EPSILON: f64 = 1e-7;

/// Weights of the auxiliary terms in the generator and discriminator
/// objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Generator attribute-inversion classification term.
    pub lambda1: f64,
    /// Pixel reconstruction term.
    pub lambda2: f64,
    /// Feature matching term.
    pub lambda3: f64,
    /// Discriminator real-image classification term.
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 10.0,
            lambda3: 1.0,
            lambda4: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Scalar values of every objective component for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Minimax adversarial value as seen by the discriminator.
    pub adv: f64,
    /// Non-saturating adversarial term the generator descends.
    pub adv_g: f64,
    pub cls_real: f64,
    pub cls_fake: f64,
    pub rec: f64,
    pub fm: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossBreakdown {
    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("adv", self.adv),
            ("adv_g", self.adv_g),
            ("cls_real", self.cls_real),
            ("cls_fake", self.cls_fake),
            ("rec", self.rec),
            ("fm", self.fm),
            ("total_g", self.total_g),
            ("total_d", self.total_d),
        ]
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.fields().iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

/// The four generator-side terms, either as scalars or as tensors.
#[derive(Debug, Clone)]
pub struct GeneratorTerms<T> {
    pub adv: T,
    pub cls_fake: T,
    pub rec: T,
    pub fm: T,
}

fn check_probabilities(p: &Tensor, what: &str) -> Result<()> {
    let values = p.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("{what} contains {v}, outside [0, 1]")));
    }
    Ok(())
}

fn check_labels(c: &Tensor, p: &Tensor) -> Result<()> {
    if c.dims() != p.dims() {
        return Err(Error::Shape(format!(
            "labels {:?} do not match probabilities {:?}",
            c.dims(),
            p.dims()
        )));
    }
    let values = c.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    if values.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    Ok(())
}

fn clamp_prob(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(EPSILON, 1.0 - EPSILON)?)
}

fn log_one_minus(p: &Tensor) -> Result<Tensor> {
    Ok(clamp_prob(p)?.affine(-1.0, 1.0)?.log()?)
}

/// `mean[log D_s(x)] + mean[log(1 - D_s(G(x)))]`; the discriminator ascends
/// it, its supremum is 0.
pub fn adversarial_loss(ds_real: &Tensor, ds_fake: &Tensor) -> Result<Tensor> {
    check_probabilities(ds_real, "ds_real")?;
    check_probabilities(ds_fake, "ds_fake")?;
    let real = clamp_prob(ds_real)?.log()?.mean_all()?;
    let fake = log_one_minus(ds_fake)?.mean_all()?;
    Ok((real + fake)?)
}

/// Non-saturating generator form `-mean[log D_s(G(x))]`.
pub fn generator_adversarial_loss(ds_fake: &Tensor) -> Result<Tensor> {
    check_probabilities(ds_fake, "ds_fake")?;
    Ok(clamp_prob(ds_fake)?.log()?.mean_all()?.neg()?)
}

fn binary_cross_entropy(p: &Tensor, c: &Tensor) -> Result<Tensor> {
    let c = c.to_dtype(p.dtype())?;
    let pos = (&c * clamp_prob(p)?.log()?)?;
    let neg = (c.affine(-1.0, 1.0)? * log_one_minus(p)?)?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}

/// Attribute classification of real images against their labels `c`.
pub fn cls_real_loss(dcls_real: &Tensor, c: &Tensor) -> Result<Tensor> {
    check_probabilities(dcls_real, "dcls_real")?;
    check_labels(c, dcls_real)?;
    binary_cross_entropy(dcls_real, c)
}

/// Attribute classification of translated images against the inverse labels
/// `1 - c`.
pub fn cls_fake_loss(dcls_fake: &Tensor, c: &Tensor) -> Result<Tensor> {
    check_probabilities(dcls_fake, "dcls_fake")?;
    check_labels(c, dcls_fake)?;
    let inverse = c.to_dtype(dcls_fake.dtype())?.affine(-1.0, 1.0)?;
    binary_cross_entropy(dcls_fake, &inverse)
}

/// Mean absolute difference over every element.
pub fn reconstruction_loss(x: &Tensor, x_rec: &Tensor) -> Result<Tensor> {
    if x.dims() != x_rec.dims() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} does not match input {:?}",
            x_rec.dims(),
            x.dims()
        )));
    }
    Ok((x - x_rec)?.abs()?.mean_all()?)
}

/// Sum over layers of the per-image L1 distance divided by the layer's
/// per-image element count, averaged over the batch.
pub fn feature_matching_loss(features_a: &[Tensor], features_b: &[Tensor]) -> Result<Tensor> {
    if features_a.len() != features_b.len() {
        return Err(Error::Shape(format!(
            "feature lists have {} and {} layers",
            features_a.len(),
            features_b.len()
        )));
    }
    let first = features_a
        .first()
        .ok_or_else(|| Error::Shape("feature lists are empty".into()))?;
    let mut total = Tensor::zeros((), first.dtype(), first.device())?;
    for (i, (a, b)) in features_a.iter().zip(features_b).enumerate() {
        if a.dims() != b.dims() {
            return Err(Error::Shape(format!(
                "layer {i} shapes {:?} and {:?} differ",
                a.dims(),
                b.dims()
            )));
        }
        // (1 / N_i) * mean_batch(sum_elements) == mean over all elements
        total = (total + (a - b)?.abs()?.mean_all()?)?;
    }
    Ok(total)
}

fn ensure_finite(term: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            term: term.to_string(),
            step: None,
        })
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

/// `adv + λ1·cls_fake + λ2·rec + λ3·fm`.
pub fn generator_objective(parts: &GeneratorTerms<f64>, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("adv", parts.adv), ("cls_fake", parts.cls_fake), ("rec", parts.rec), ("fm", parts.fm)] {
        ensure_finite(name, v)?;
    }
    Ok(parts.adv + w.lambda1 * parts.cls_fake + w.lambda2 * parts.rec + w.lambda3 * parts.fm)
}

/// `-adv + λ4·cls_real`.
pub fn discriminator_objective(adv: f64, cls_real: f64, w: &LossWeights) -> Result<f64> {
    ensure_finite("adv", adv)?;
    ensure_finite("cls_real", cls_real)?;
    Ok(-adv + w.lambda4 * cls_real)
}

/// Differentiable form of [`generator_objective`].
pub fn generator_objective_tensor(parts: &GeneratorTerms<Tensor>, w: &LossWeights) -> Result<Tensor> {
    let values = GeneratorTerms {
        adv: scalar(&parts.adv)?,
        cls_fake: scalar(&parts.cls_fake)?,
        rec: scalar(&parts.rec)?,
        fm: scalar(&parts.fm)?,
    };
    generator_objective(&values, w)?;
    let total = (&parts.adv
        + (&parts.cls_fake * w.lambda1)?
        + (&parts.rec * w.lambda2)?
        + (&parts.fm * w.lambda3)?)?;
    Ok(total)
}

/// Differentiable form of [`discriminator_objective`].
pub fn discriminator_objective_tensor(adv: &Tensor, cls_real: &Tensor, w: &LossWeights) -> Result<Tensor> {
    discriminator_objective(scalar(adv)?, scalar(cls_real)?, w)?;
    Ok((adv.neg()? + (cls_real * w.lambda4)?)?)
}
