//! Evaluation metrics for translated images: the discrepancy of feature norm
//! (per-image embedding norm ratio with quartile statistics) and the Fréchet
//! distance between Gaussian fits of two feature sets, optionally after a PCA
//! reduction fitted on both sets.

mod dfn;
mod extractor;
mod fid;
mod pca;
mod report;

pub use dfn::{compute_dfn, percentile, DfnReport};
pub use extractor::{
    DiscriminatorEmbedder, FeatureExtractor, FlattenExtractor, RandomProjectionExtractor,
};
pub use fid::{compute_fid, fid_from_statistics, mean_and_covariance, FidReport, DEFAULT_EPSILON};
pub use pca::{pca_reduce, PcaBasis};
pub use report::{evaluate_pair, write_boxplot_data, Evaluation, SummaryRecord, DEFAULT_REDUCED_DIM};

pub type Matrix = nalgebra::DMatrix<f64>;
