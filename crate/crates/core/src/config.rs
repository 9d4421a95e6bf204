use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::featuremap::FeatureMap;
use crate::io::preprocess::PreprocessConfig;
use crate::io::PixelOrder;
use crate::reduction::{ReductionPlan, Strategy};

/// Environment variable that overrides the worker count of a run.
pub const WORKERS_ENV: &str = "MPSR_WORKERS";

/// Everything a pre-training run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub map: FeatureMap,
    pub chi: usize,
    pub strategy: Strategy,
    /// Defaults to `chi`.
    pub leaf_batch: Option<usize>,
    pub sweeps: usize,
    pub tol: f64,
    pub downscale: usize,
    pub binarize: Option<f64>,
    pub pixel_order: PixelOrder,
    pub seed: u64,
    pub worker_limit: usize,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(train_images: impl Into<PathBuf>, train_labels: impl Into<PathBuf>) -> Self {
        Self {
            map: FeatureMap::CosSin,
            chi: 32,
            strategy: Strategy::Tree,
            leaf_batch: None,
            sweeps: 2,
            tol: 1e-9,
            downscale: 2,
            binarize: None,
            pixel_order: PixelOrder::Raster,
            seed: 0,
            worker_limit: 1,
            train_images: train_images.into(),
            train_labels: train_labels.into(),
            test_images: None,
            test_labels: None,
            output_dir: PathBuf::from("."),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi == 0 || self.chi > 1 << 16 {
            return Err(Error::Config(format!("chi {} outside 1..=65536", self.chi)));
        }
        if self.downscale == 0 {
            return Err(Error::Config("downscale factor must be at least 1".into()));
        }
        if let Some(t) = self.binarize {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("binarize threshold {t} outside [0, 1]")));
            }
        }
        if self.test_images.is_some() != self.test_labels.is_some() {
            return Err(Error::Config("test images and labels must be given together".into()));
        }
        self.plan().validate()
    }

    pub fn plan(&self) -> ReductionPlan {
        ReductionPlan {
            leaf_batch: self.leaf_batch.unwrap_or(self.chi),
            sweeps: self.sweeps,
            tol: self.tol,
            seed: Some(self.seed),
            worker_limit: self.worker_limit,
            ..ReductionPlan::new(self.chi, self.strategy)
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            downscale: self.downscale,
            binarize: self.binarize,
            order: self.pixel_order,
        }
    }
}

/// Worker count after applying an `MPSR_WORKERS`-style override.
pub fn resolve_workers(flag: usize, env: Option<&str>) -> Result<usize> {
    let workers = match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
        None => flag,
    };
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    Ok(workers)
}
