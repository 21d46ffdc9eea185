//! Mini-batch SGD with momentum, plateau LR decay and early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{SampleSet, TablModel};
use super::{NnError, Parametric};
use crate::par::{map_indexed, Execution};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs without validation improvement before the LR is cut.
    pub plateau_patience: usize,
    pub lr_factor: f64,
    /// Epochs without validation improvement before training halts.
    pub early_stop_patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            plateau_patience: 5,
            lr_factor: 0.1,
            early_stop_patience: 10,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
    /// Set when the LR was cut at the end of this epoch.
    pub lr_dropped: bool,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: TablModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Mean eval-mode loss and arg-max accuracy over a sample set.
pub fn evaluate(model: &TablModel, data: &dyn SampleSet, exec: Execution) -> Result<(f64, f64), NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let rows = map_indexed(data.len(), exec, |i| {
        let s = data.sample(i);
        Ok::<_, NnError>((model.eval_loss(&s)?, model.is_correct(&s)?))
    });
    let (mut loss, mut correct) = (0.0, 0usize);
    for r in rows {
        let (l, c) = r?;
        loss += l;
        correct += usize::from(c);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn train(mut model: TablModel, train_set: &dyn SampleSet, val_set: &dyn SampleSet, schedule: &TrainSchedule) -> Result<TrainOutcome, NnError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if schedule.batch_size == 0 {
        return Err(NnError::Config("batch size must be positive".into()));
    }
    let exec = schedule.execution;
    let mut velocity = model.zeros_like();
    let mut lr = schedule.learning_rate;
    let (mut best_val, _) = evaluate(&model, val_set, exec)?;
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut plateau = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=schedule.max_epochs {
        let mut shuffle = rng_for(schedule.seed, &format!("train/shuffle/{epoch}"));
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let current = &model;
            let results = map_indexed(batch.len(), exec, |j| {
                let idx = batch[j];
                let mut rng = rng_for(schedule.seed, &format!("train/dropout/{epoch}/{idx}"));
                current.loss_and_grad(&train_set.sample(idx), Some(&mut rng))
            });
            let mut grad = model.zeros_like();
            for r in results {
                let (l, g) = r?;
                epoch_loss += l;
                grad.add_assign_tensors(&g);
            }
            let scale = 1.0 / batch.len() as f64;
            let grads: Vec<_> = grad.tensors().into_iter().map(|(_, t)| t * scale).collect();
            for ((p, v), g) in model.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(grads) {
                v.zip_mut_with(&g, |vi, gi| *vi = schedule.momentum * *vi + gi);
                p.scaled_add(-lr, v);
            }
            model.clamp_constrained();
        }
        let (val_loss, val_accuracy) = evaluate(&model, val_set, exec)?;
        let improved = val_loss < best_val;
        let epoch_lr = lr;
        let mut lr_dropped = false;
        if improved {
            best_val = val_loss;
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
            plateau = 0;
        } else {
            since_best += 1;
            plateau += 1;
            if plateau >= schedule.plateau_patience {
                lr *= schedule.lr_factor;
                plateau = 0;
                lr_dropped = true;
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            val_accuracy,
            learning_rate: epoch_lr,
            lr_dropped,
            improved,
        });
        if since_best >= schedule.early_stop_patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        best_val_loss: best_val,
        stopped_early,
    })
}

/// Loss history as CSV text.
pub fn history_csv(history: &[EpochRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in history {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Head, ModelConfig, Sample, Target};
    use ndarray::Array2;
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            book_features: 4,
            msg_features: 2,
            window: 5,
            hidden_features: 3,
            hidden_time: 2,
            tabl_features: 3,
            out_time: 2,
            ..ModelConfig::new(Head::OrderType)
        }
    }

    fn data(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = rng_for(seed, "toy");
        (0..n)
            .map(|i| {
                let y = (i % 2) as u8;
                let book = Array2::from_shape_fn((4, 5), |_| rng.random::<f64>());
                let msg = Array2::from_shape_fn((2, 5), |(r, _)| if r == 0 { f64::from(y) } else { rng.random() });
                Sample { book, msg, target: Target::Binary(y) }
            })
            .collect()
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let model = TablModel::new(tiny()).unwrap();
        let sched = TrainSchedule { max_epochs: 3, learning_rate: 0.0, early_stop_patience: 100, ..Default::default() };
        let out = train(model.clone(), &data(20, 1), &data(10, 2), &sched).unwrap();
        assert_eq!(out.model, model);
        let v: Vec<f64> = out.history.iter().map(|h| h.val_loss).collect();
        assert!(v.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn empty_data_is_an_error() {
        let model = TablModel::new(tiny()).unwrap();
        let empty: Vec<Sample> = Vec::new();
        assert!(matches!(train(model, &empty, &data(4, 2), &TrainSchedule::default()), Err(NnError::EmptyDataset)));
    }

    #[test]
    fn history_serializes() {
        let rec = EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.4, val_accuracy: 0.9, learning_rate: 1e-3, lr_dropped: false, improved: true };
        let csv = history_csv(&[rec]).unwrap();
        assert!(csv.starts_with("epoch,train_loss,val_loss"));
        assert_eq!(csv.lines().count(), 2);
    }
}
