use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attributes::{Attribute, AttributeTable};
use crate::error::{Error, Result};

/// One epoch of class-balanced row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerPlan {
    pub epoch_indices: Vec<usize>,
    pub positives: usize,
    pub negatives: usize,
}

/// Oversamples the minority class of `attribute` with replacement until both
/// classes contribute equally, then shuffles. Every majority row and every
/// minority row appears at least once.
pub fn make_balanced_sampler(
    table: &AttributeTable,
    attribute: &Attribute,
    seed: u64,
) -> Result<SamplerPlan> {
    let labels = table.labels(attribute)?;
    plan_from_labels(&labels, seed).map_err(|e| name_attribute(e, attribute))
}

fn name_attribute(e: Error, attribute: &Attribute) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("attribute {attribute}: {msg}")),
        other => other,
    }
}

pub(crate) fn plan_from_labels(labels: &[u8], seed: u64) -> Result<SamplerPlan> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i] == 1);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Config(format!(
            "both classes must be present ({} positive, {} negative rows)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (major, minor) = if pos.len() >= neg.len() {
        (&pos, &neg)
    } else {
        (&neg, &pos)
    };
    let mut indices = Vec::with_capacity(2 * major.len());
    indices.extend_from_slice(major);
    indices.extend_from_slice(minor);
    for _ in minor.len()..major.len() {
        indices.push(minor[rng.random_range(0..minor.len())]);
    }
    indices.shuffle(&mut rng);
    Ok(SamplerPlan {
        epoch_indices: indices,
        positives: major.len(),
        negatives: major.len(),
    })
}

/// Endless sequence of balanced epochs. Epoch `e` is planned with a seed
/// derived from `(seed, e)`, so the batch for any step can be recomputed
/// without replaying earlier ones.
#[derive(Debug, Clone)]
pub struct BalancedStream {
    labels: Vec<u8>,
    seed: u64,
    epoch_len: usize,
    cached: Option<(usize, Vec<usize>)>,
}

impl BalancedStream {
    pub fn new(table: &AttributeTable, attribute: &Attribute, seed: u64) -> Result<Self> {
        let labels = table.labels(attribute)?;
        let first = plan_from_labels(&labels, epoch_seed(seed, 0))
            .map_err(|e| name_attribute(e, attribute))?;
        Ok(Self {
            epoch_len: first.epoch_indices.len(),
            cached: Some((0, first.epoch_indices)),
            labels,
            seed,
        })
    }

    pub fn epoch_len(&self) -> usize {
        self.epoch_len
    }

    fn epoch(&mut self, e: usize) -> &[usize] {
        if self.cached.as_ref().map(|(k, _)| *k) != Some(e) {
            let plan = plan_from_labels(&self.labels, epoch_seed(self.seed, e as u64))
                .expect("labels validated at construction");
            self.cached = Some((e, plan.epoch_indices));
        }
        &self.cached.as_ref().unwrap().1
    }

    /// Row indices for the `step`-th batch of `batch_size` rows.
    pub fn batch(&mut self, step: usize, batch_size: usize) -> Vec<usize> {
        let start = step * batch_size;
        (start..start + batch_size)
            .map(|pos| {
                let (e, offset) = (pos / self.epoch_len, pos % self.epoch_len);
                self.epoch(e)[offset]
            })
            .collect()
    }
}

fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
