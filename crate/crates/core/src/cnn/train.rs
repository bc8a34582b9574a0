use rand::seq::SliceRandom;

use super::Cnn;
use crate::dataset::ImageSet;
use crate::engine::{self, Adam, AdamConfig, Graph, Mode, Scalar, Tensor};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

pub const EPOCH_CSV_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Forces sequential kernels.
    pub deterministic: bool,
    /// Epochs between periodic checkpoint callbacks.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 42,
            deterministic: false,
            checkpoint_interval: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.checkpoint_interval == 0 {
            return Err(Error::InvalidArgument("epochs and checkpoint interval must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2 for batchnorm".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }
}

pub struct TrainOutcome<T> {
    /// Weights after the last epoch.
    pub model: Cnn<T>,
    /// Weights of the epoch with the highest validation accuracy (earliest on ties).
    pub best: Cnn<T>,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
}

impl<T> TrainOutcome<T> {
    pub fn best_val_accuracy(&self) -> f64 {
        self.logs[self.best_epoch - 1].val_acc
    }
}

/// Splits a permutation into batches of `size`, folding a trailing
/// single-sample batch into its predecessor.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

fn divergence(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Diverged { epoch },
        other => other,
    }
}

/// Mean cross-entropy and accuracy of the model in eval mode.
pub(crate) fn evaluate<T: Scalar>(model: &Cnn<T>, set: &ImageSet) -> Result<(f64, f64)> {
    let (logits, _) = model.infer(&set.images.cast(), 64)?;
    let mut g = Graph::new();
    let z = g.constant(logits.clone());
    let loss = g.softmax_cross_entropy(z, &set.labels)?;
    let correct = logits.argmax_rows().iter().zip(&set.labels).filter(|(p, l)| p == l).count();
    Ok((g.value(loss).item().as_f64(), correct as f64 / set.len() as f64))
}

/// Trains with Adam on sparse cross-entropy. `on_epoch` runs after every
/// epoch with its log and the current weights.
pub fn train<T: Scalar>(
    mut model: Cnn<T>,
    train_set: &ImageSet,
    val_set: &ImageSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Cnn<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if !(train_set.labels.contains(&0) && train_set.labels.contains(&1)) {
        return Err(Error::InvalidArgument("training split needs both classes".into()));
    }
    if train_set.len() < 2 || val_set.is_empty() {
        return Err(Error::InvalidArgument("need at least 2 training and 1 validation image".into()));
    }
    engine::set_parallel(!config.deterministic);
    let images: Tensor<T> = train_set.images.cast();
    let per: usize = images.shape()[1..].iter().product();
    let mut rng = seeded(derive_seed(config.seed, 1));
    let mut adam = Adam::new(AdamConfig::with_learning_rate(config.learning_rate));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(Cnn<T>, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(&order, config.batch_size) {
            let mut data = Vec::with_capacity(batch.len() * per);
            for &i in batch {
                data.extend_from_slice(&images.data()[i * per..(i + 1) * per]);
            }
            let mut shape = images.shape().to_vec();
            shape[0] = batch.len();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();

            let mut g = Graph::new();
            let x = g.constant(Tensor::new(shape, data)?);
            let (out, stats) = model.forward(&mut g, x, Mode::Train, &mut rng, true).map_err(divergence(epoch))?;
            let loss = g.softmax_cross_entropy(out.logits, &labels).map_err(divergence(epoch))?;
            let loss_value = g.value(loss).item().as_f64();
            if !loss_value.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss_value * batch.len() as f64;
            correct += g
                .value(out.logits)
                .argmax_rows()
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();

            let grads = g.backward(loss)?;
            let grad_tensors: Vec<Tensor<T>> = out
                .params
                .iter()
                .zip(model.parameters())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            let grad_refs: Vec<&Tensor<T>> = grad_tensors.iter().collect();
            let mut param_refs: Vec<&mut Tensor<T>> = model.parameters_mut().iter_mut().collect();
            adam.step(&mut param_refs, &grad_refs).map_err(divergence(epoch))?;
            model.set_bn_stats(stats);
        }
        model.set_epochs_trained(model.epochs_trained() + 1);
        if model.parameters().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let (val_loss, val_acc) = evaluate(&model, val_set).map_err(divergence(epoch))?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss,
            val_acc,
        };
        log::info!("{}", log.csv_row());
        if best.as_ref().is_none_or(|(_, _, acc)| val_acc > *acc) {
            best = Some((model.clone(), epoch, val_acc));
        }
        on_epoch(&log, &model)?;
        logs.push(log);
    }
    let (best, best_epoch, _) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..7).collect();
        let b = batches(&order, 3);
        assert_eq!(b, vec![&[0, 1, 2][..], &[3, 4, 5, 6][..]]);
        let b = batches(&order[..6], 3);
        assert_eq!(b.len(), 2);
        assert_eq!(batches(&order[..2], 32), vec![&[0, 1][..]]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
