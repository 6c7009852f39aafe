use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::bgat::{AnyModel, Policy};
use crate::diffkit::{adam_step, AdamConfig, AdamState, ParamSet};
use crate::error::{Error, Result};
use crate::model::{energy_efficiency, SystemConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 2048-sample batches for up to 1000 epochs.
    pub fn paper() -> Self {
        Self {
            lr: 5e-5,
            batch_size: 2048,
            max_epochs: 1000,
            patience: 10,
            val_fraction: 0.05,
            seed: 0,
        }
    }

    /// 256-sample batches for up to 100 epochs.
    pub fn desk() -> Self {
        Self {
            batch_size: 256,
            max_epochs: 100,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidInput(
                "learning rate, batch size, epochs and patience must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidInput("patience exceeds max epochs".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidInput("validation fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the initial parameters (no update yet).
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub val_ee: f64,
    pub best_val_ee: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_samples: usize,
    pub val_samples: usize,
}

impl TrainHistory {
    pub fn best_val_ee(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.best_val_ee)
    }
}

/// Mean exact EE of a policy over layouts.
pub fn mean_ee(policy: &dyn Policy, params: &ParamSet, cfg: &SystemConfig, data: &Dataset) -> Result<f64> {
    let ees = data
        .layouts
        .par_iter()
        .map(|layout| {
            let c = cfg.with_users(layout.len());
            energy_efficiency(&c, layout, &policy.solve(params, &c, layout)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ees.iter().sum::<f64>() / ees.len() as f64)
}

/// Mean loss and gradient over a batch. Per-sample work runs in parallel;
/// the reduction runs in sample order, so results do not depend on the
/// thread count.
pub fn batch_loss_and_grad(
    policy: &dyn Policy,
    params: &ParamSet,
    cfg: &SystemConfig,
    batch: &[&crate::model::UserLayout],
) -> Result<(f64, Vec<f64>)> {
    let per_sample = batch
        .par_iter()
        .map(|layout| policy.loss_and_grad(params, &cfg.with_users(layout.len()), layout))
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, grad))
}

/// Trains `model` from He-initialized parameters. See [`train_with`].
pub fn train(model: &AnyModel, cfg: &SystemConfig, dataset: &Dataset, tc: &TrainConfig) -> Result<(ParamSet, TrainHistory)> {
    train_with(model, cfg, dataset, tc, |_| {})
}

/// Mini-batch Adam on the unsupervised loss with early stopping on
/// validation mean EE. Returns the best-validation parameters (the initial
/// parameters count as a candidate) and the full history.
pub fn train_with<F: FnMut(&EpochRecord)>(
    model: &AnyModel,
    cfg: &SystemConfig,
    dataset: &Dataset,
    tc: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ParamSet, TrainHistory)> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let policy = model.policy();
    let (train_set, val_set) = if dataset.len() >= 2 {
        dataset.split(tc.val_fraction, tc.seed)?
    } else {
        (dataset.clone(), dataset.clone())
    };
    let mut params = policy.init_params(tc.seed);
    let mut adam = AdamState::new(
        params.len(),
        AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        },
    );
    let start = Instant::now();
    let mut best = params.clone();
    let mut best_ee = mean_ee(policy, &params, cfg, &val_set)?;
    let mut best_epoch = 0;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        train_samples: train_set.len(),
        val_samples: val_set.len(),
    };
    let first = EpochRecord {
        epoch: 0,
        train_loss: None,
        val_ee: best_ee,
        best_val_ee: best_ee,
        seconds: start.elapsed().as_secs_f64(),
    };
    on_epoch(&first);
    history.epochs.push(first);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut since_best = 0;
    for epoch in 1..=tc.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| &train_set.layouts[i]).collect();
            let (loss, grad) = batch_loss_and_grad(policy, &params, cfg, &batch).map_err(|e| match e {
                Error::NonFinite { stage } => Error::NonFinite {
                    stage: format!("epoch {epoch}, batch {b}: {stage}"),
                },
                other => other,
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    stage: format!("epoch {epoch}, batch {b}: loss {loss}"),
                });
            }
            adam_step(&mut params, &grad, &mut adam)?;
            loss_sum += loss;
            batches += 1;
        }
        let val_ee = mean_ee(policy, &params, cfg, &val_set)?;
        if val_ee > best_ee {
            best_ee = val_ee;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        let rec = EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches as f64),
            val_ee,
            best_val_ee: best_ee,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        history.epochs.push(rec);
        if since_best >= tc.patience {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = best_epoch;
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgat::ModelKind;
    use crate::harness::dataset::gen_dataset;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::desk().validate().is_ok());
        assert!(TrainConfig::paper().validate().is_ok());
        let bad = TrainConfig {
            patience: 200,
            ..TrainConfig::desk()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn best_val_is_monotone_and_deterministic() {
        let cfg = SystemConfig::standard(2, 2);
        let ds = gen_dataset(&cfg, 24, 5).unwrap();
        let model = AnyModel::new(ModelKind::Bgat, 2, 2);
        let tc = TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 3,
            patience: 3,
            val_fraction: 0.25,
            seed: 11,
        };
        let (p1, h1) = train(&model, &cfg, &ds, &tc).unwrap();
        let (p2, h2) = train(&model, &cfg, &ds, &tc).unwrap();
        assert_eq!(p1.values, p2.values);
        assert_eq!(h1.epochs.len(), h2.epochs.len());
        for (a, b) in h1.epochs.iter().zip(&h2.epochs) {
            assert_eq!(a.train_loss, b.train_loss);
            assert_eq!(a.val_ee, b.val_ee);
        }
        for w in h1.epochs.windows(2) {
            assert!(w[1].best_val_ee >= w[0].best_val_ee);
        }
    }
}
