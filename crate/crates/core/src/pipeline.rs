//! End-to-end pre-training over a labelled dataset.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::featuremap::FeatureMap;
use crate::inference::{ClassModel, ModelSet};
use crate::io::Dataset;
use crate::reduction::{self, OverlapOptions, ReductionPlan};

/// One reduced class wavefunction per label of `train`.
///
/// `ln C_Norm` is exact up to the default pair cap and estimated from a
/// seeded sample of pairs beyond it.
pub fn pretrain(train: &Dataset, map: FeatureMap, plan: &ReductionPlan) -> Result<ModelSet> {
    plan.validate()?;
    if train.is_empty() {
        return Err(Error::Consistency("empty training set".into()));
    }
    let overlap = OverlapOptions {
        estimate: true,
        seed: plan.seed.unwrap_or(0),
        ..OverlapOptions::default()
    };
    let mut models = Vec::new();
    for (label, images) in train.by_label() {
        let start = Instant::now();
        let state = reduction::reduce(map, &images, plan)?;
        let log_cnorm = reduction::log_cnorm(map, &images, &overlap)?;
        log::info!(
            "label {label}: {} images, max bond {}, {:.2}s",
            images.len(),
            state.max_bond(),
            start.elapsed().as_secs_f64()
        );
        models.push(ClassModel::new(
            label,
            state,
            map,
            log_cnorm,
            plan.chi,
            train.pixel_order,
        )?);
    }
    let mut set = ModelSet::new(models, train.height, train.width)?
        .with_metadata("strategy", plan.strategy.to_string())
        .with_metadata("leaf_batch", plan.leaf_batch.to_string())
        .with_metadata("sweeps", plan.sweeps.to_string())
        .with_metadata("tol", format!("{:e}", plan.tol));
    for entry in &train.provenance {
        set = set.with_metadata("provenance", entry.clone());
    }
    Ok(set)
}
