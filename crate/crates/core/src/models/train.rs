//! Full-batch Adam training on the train mask.

use serde::{Deserialize, Serialize};

use super::{derive_seed, Model};
use crate::error::{Error, Result};
use crate::expansion::HopNeighborhoods;
use crate::graph::LabeledDataset;
use crate::nn::{adam_step, AdamState};

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_LEARNING_RATE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Drives dropout masks only; initialisation uses the model's own seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            lr: DEFAULT_LEARNING_RATE,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    /// Train loss at the start of each epoch, before its update.
    pub loss_curve: Vec<f64>,
}

pub fn train(
    mut model: Model,
    dataset: &LabeledDataset,
    hops: &HopNeighborhoods,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    if dataset.num_nodes() != model.config().num_nodes {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} nodes, model has {}",
            dataset.num_nodes(),
            model.config().num_nodes
        )));
    }
    if dataset.num_classes > model.config().num_classes {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, model has {}",
            dataset.num_classes,
            model.config().num_classes
        )));
    }
    if !(config.lr > 0.0) || !config.lr.is_finite() {
        return Err(Error::invalid(format!("learning rate {}", config.lr)));
    }
    model.check_neighborhoods(hops)?;
    let mut state = AdamState::new(model.params()).with_weight_decay(config.weight_decay);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let dropout_seed = derive_seed(config.seed, epoch as u64);
        let loss = model.loss_and_gradients(hops, &dataset.labels, &dataset.train_mask, Some(dropout_seed))?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_curve.push(loss);
        adam_step(model.params_mut(), &mut state, config.lr)?;
    }
    Ok(TrainedModel { model, loss_curve })
}
