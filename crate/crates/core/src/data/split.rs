use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attributes::{Attribute, AttributeTable};
use crate::error::{Error, Result};

/// Held-out evaluation ids and the remaining training ids, both in table
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSplit {
    pub test: Vec<String>,
    pub train: Vec<String>,
}

/// Draws `n_per_class` rows of each class of `attribute` (seeded, uniformly
/// without replacement) for testing; everything else is training data.
pub fn split_test(
    table: &AttributeTable,
    attribute: &Attribute,
    n_per_class: usize,
    seed: u64,
) -> Result<TestSplit> {
    let labels = table.labels(attribute)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; labels.len()];
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < n_per_class {
            return Err(Error::Config(format!(
                "attribute {attribute}: class {class} has {} rows, {n_per_class} requested for testing",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_per_class] {
            is_test[i] = true;
        }
    }
    let (mut test, mut train) = (Vec::new(), Vec::new());
    for (row, t) in table.rows().iter().zip(is_test) {
        if t {
            test.push(row.image_id.clone());
        } else {
            train.push(row.image_id.clone());
        }
    }
    Ok(TestSplit { test, train })
}
