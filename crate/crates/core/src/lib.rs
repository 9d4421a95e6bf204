pub mod config;
pub mod error;
pub mod featuremap;
pub mod inference;
pub mod io;
pub mod mps;
pub mod pipeline;
pub mod reduction;
pub mod tensor;

pub use error::{Error, Result};
pub use featuremap::FeatureMap;
pub use inference::{ClassModel, ModelSet};
pub use io::{Dataset, PixelOrder};
pub use mps::{Canonical, LogComplex, Mps, SpinConfig, VariationalOutcome};
pub use reduction::{ReductionPlan, Strategy};
pub use tensor::{DenseTensor, C64};
