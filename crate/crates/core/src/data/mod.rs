//! Dataset ingestion: CelebA attribute lists, image preprocessing, class
//! balancing and the held-out test split.

mod attributes;
mod preprocess;
mod sampler;
mod source;
mod split;
pub mod synthetic;

pub use attributes::{Attribute, AttributeRow, AttributeTable, CELEBA_ATTRIBUTE_COUNT};
pub(crate) use preprocess::check_resolution;
pub use preprocess::{preprocess, RawImage};
pub use sampler::{make_balanced_sampler, BalancedStream, SamplerPlan};
pub use source::{load_image_file, DirectorySource, ImageSource, MemorySource};
pub use split::{split_test, TestSplit};

/// One training example: an image and its binary label `c` for the selected
/// attribute. The inverse label is `1 - c`.
#[derive(Debug, Clone)]
pub struct AttributeExample {
    pub image_id: String,
    pub image: crate::ImageTensor,
    pub label: u8,
}

impl AttributeExample {
    pub fn inverse_label(&self) -> u8 {
        1 - self.label
    }
}
