//! Sampling and density primitives the Gibbs sampler is built from.

mod mvn;
pub(crate) mod normal;
mod stream;
mod truncated;

pub use mvn::{sample_mvn_from_precision, PrecisionFactor};
pub use normal::{std_normal_cdf, std_normal_quantile};
pub use stream::RandomStream;
pub use truncated::{sample_truncated_normal, Interval};
