use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::LabelMap;
use super::featurizer::FeatureMatrix;
use super::model::{softmax, LinearModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f32,
    /// Inverse-time decay: epoch `e` (0-based) uses `lr / (1 + decay * e)`.
    pub lr_decay: f32,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_epochs: 30, learning_rate: 0.5, lr_decay: 0.1, batch_size: 8, patience: 3, seed: 17 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "max_epochs, patience and batch_size must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Weights from the best validation epoch.
    pub model: LinearModel,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation_accuracy: f64,
    /// Validation accuracy after each epoch.
    pub history: Vec<f64>,
}

/// Fraction of rows whose predicted class equals `targets`.
pub fn evaluate(model: &LinearModel, features: &FeatureMatrix, targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = features
        .rows
        .iter()
        .zip(targets)
        .filter(|(x, &y)| model.predict(x).class == y)
        .count();
    hits as f64 / targets.len() as f64
}

/// Minibatch SGD on softmax cross-entropy with early stopping on validation
/// accuracy. Deterministic for a fixed seed.
///
/// With an empty validation set the final epoch is kept and no early
/// stopping happens.
pub fn train(
    labels: &LabelMap,
    train_x: &FeatureMatrix,
    train_y: &[usize],
    val_x: &FeatureMatrix,
    val_y: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if labels.len() < 2 {
        return Err(Error::SingleClass(labels.len()));
    }
    let dim = train_x.dim;
    let k = labels.len();
    let mut model = LinearModel::zeros(labels.clone(), dim);
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probs = Vec::with_capacity(k);
    let mut updates: Vec<(usize, f32)> = Vec::new();
    let mut bias_grad = alloc::vec![0f32; k];

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let lr = config.learning_rate / (1.0 + config.lr_decay * epoch as f32);
        let mut loss = 0f64;
        for batch in order.chunks(config.batch_size) {
            updates.clear();
            bias_grad.iter_mut().for_each(|g| *g = 0.0);
            for &r in batch {
                let x = &train_x.rows[r];
                model.scores(x, &mut probs);
                softmax(&mut probs);
                let y = train_y[r];
                loss -= f64::from(libm::logf(probs[y]));
                for (c, &p) in probs.iter().enumerate() {
                    let g = p - if c == y { 1.0 } else { 0.0 };
                    if g == 0.0 {
                        continue;
                    }
                    bias_grad[c] += g;
                    for (i, v) in x.iter() {
                        updates.push((c * dim + i, g * v));
                    }
                }
            }
            let step = lr / batch.len() as f32;
            for &(w, g) in &updates {
                model.weights[w] -= step * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&bias_grad) {
                *b -= step * g;
            }
        }
        if !loss.is_finite() || model.weights.iter().chain(&model.bias).any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        if val_y.is_empty() {
            history.push(0.0);
            best = model.clone();
            best_epoch = epoch + 1;
            continue;
        }
        let acc = evaluate(&model, val_x, val_y);
        history.push(acc);
        if acc > best_acc {
            best_acc = acc;
            best = model.clone();
            best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        epochs_run: history.len(),
        validation_accuracy: if val_y.is_empty() { 0.0 } else { best_acc },
        history,
    })
}
