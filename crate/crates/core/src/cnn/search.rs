use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{train, Cnn, ConvSpec, ModelSpec, TrainConfig};
use crate::dataset::ImageSet;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

/// Hyperparameter ranges sampled uniformly per trial.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub dropout: (f64, f64),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            filters: vec![16, 32, 64, 128],
            kernels: vec![3, 5],
            dropout: (0.2, 0.5),
            learning_rate: (1e-4, 1e-2),
            batch_sizes: vec![16, 32, 64],
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        let empty = self.filters.is_empty() || self.kernels.is_empty() || self.batch_sizes.is_empty();
        let bad_range = !(self.dropout.0 <= self.dropout.1 && self.dropout.0 >= 0.0 && self.dropout.1 < 1.0)
            || !(self.learning_rate.0 > 0.0 && self.learning_rate.0 <= self.learning_rate.1);
        if empty || bad_range {
            return Err(Error::InvalidArgument("search space is empty or has an invalid range".into()));
        }
        Ok(())
    }

    fn sample(&self, base: &ModelSpec, base_config: &TrainConfig, seed: u64) -> (ModelSpec, TrainConfig) {
        let mut rng = seeded(seed);
        let convs = (0..super::CONV_LAYERS)
            .map(|_| {
                let f = *self.filters.choose(&mut rng).expect("nonempty");
                let k = *self.kernels.choose(&mut rng).expect("nonempty");
                ConvSpec::same(f, k)
            })
            .collect();
        let dropout = if self.dropout.0 == self.dropout.1 {
            self.dropout.0
        } else {
            rng.gen_range(self.dropout.0..self.dropout.1)
        };
        let (lo, hi) = (self.learning_rate.0.ln(), self.learning_rate.1.ln());
        let lr = if lo == hi { self.learning_rate.0 } else { rng.gen_range(lo..hi).exp() };
        let batch = *self.batch_sizes.choose(&mut rng).expect("nonempty");
        let spec = ModelSpec {
            convs,
            dropout,
            ..base.clone()
        };
        let config = TrainConfig {
            batch_size: batch,
            learning_rate: lr,
            seed,
            ..base_config.clone()
        };
        (spec, config)
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub index: usize,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    /// Best validation accuracy over the trial's epochs; 0 when diverged.
    pub val_accuracy: f64,
    /// Validation loss at that epoch; infinite when diverged.
    pub val_loss: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub trials: Vec<TrialResult>,
    /// Index into `trials` of the winner.
    pub best: usize,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &TrialResult {
        &self.trials[self.best]
    }
}

/// Random search over `space`. Trial `i` draws its hyperparameters and
/// training seed from `derive_seed(seed, i)` and trains for `budget_epochs`.
/// The winner has the highest validation accuracy, then the lowest
/// validation loss, then the lowest index.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    space: &SearchSpace,
    base_spec: &ModelSpec,
    base_config: &TrainConfig,
    trials: usize,
    budget_epochs: usize,
    seed: u64,
    train_set: &ImageSet,
    val_set: &ImageSet,
) -> Result<SearchOutcome> {
    if trials == 0 || budget_epochs == 0 {
        return Err(Error::InvalidArgument("random search needs at least one trial and one epoch".into()));
    }
    space.validate()?;
    let mut results = Vec::with_capacity(trials);
    for index in 0..trials {
        let trial_seed = derive_seed(seed, index as u64);
        let (spec, mut config) = space.sample(base_spec, base_config, trial_seed);
        config.epochs = budget_epochs;
        let model = Cnn::<f32>::new(spec.clone(), trial_seed)?;
        let (val_accuracy, val_loss, diverged) = match train(model, train_set, val_set, &config, |_, _| Ok(())) {
            Ok(outcome) => {
                let log = outcome.logs[outcome.best_epoch - 1];
                (log.val_acc, log.val_loss, false)
            }
            Err(Error::Diverged { epoch }) => {
                log::warn!("trial {index} diverged at epoch {epoch}; scored 0");
                (0.0, f64::INFINITY, true)
            }
            Err(e) => return Err(e),
        };
        log::info!("trial {index}: val_acc {val_accuracy:.4} val_loss {val_loss:.4}");
        results.push(TrialResult {
            index,
            spec,
            config,
            val_accuracy,
            val_loss,
            diverged,
        });
    }
    let best = results
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            b.val_accuracy
                .total_cmp(&a.val_accuracy)
                .then(a.val_loss.total_cmp(&b.val_loss))
                .then(a.index.cmp(&b.index))
        })
        .map(|(i, _)| i)
        .expect("at least one trial");
    Ok(SearchOutcome { trials: results, best })
}
