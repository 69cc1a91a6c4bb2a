use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{LossKind, Targets};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Validation loss must drop by more than this to count as an improvement.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 10_000,
            patience: 100,
            batch_size: 0,
            dropout_rate: 0.0,
            seed: 0,
            loss: LossKind::SparseCce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1e-6..=1.0).contains(&self.learning_rate) {
            return Err(Error::OutOfRange(format!("learning rate {} outside [1e-6, 1]", self.learning_rate)));
        }
        if self.patience > self.max_epochs {
            return Err(Error::OutOfRange(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..=0.5).contains(&self.dropout_rate) {
            return Err(Error::OutOfRange(format!("dropout rate {} outside [0, 0.5]", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Targets,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Targets) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("{} inputs vs {} targets", x.nrows(), y.len())));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(rows),
        }
    }
}

/// A model the training loop can drive. Gradients are returned in the same
/// order as [`Trainable::params_mut`] yields parameter slices.
pub trait Trainable: Clone {
    fn param_lens(&self) -> Vec<usize>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    /// Train-mode mean batch loss and gradients.
    fn loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        y: &Targets,
        loss: LossKind,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)>;

    /// Inference-mode mean loss.
    fn eval_loss(&self, x: ArrayView2<f64>, y: &Targets, loss: LossKind) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl History {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

/// Mini-batch Adam with early stopping on the validation loss. On return the
/// model holds the parameters of the best validation epoch.
pub fn train_loop<M: Trainable>(model: &mut M, train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<History> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid("training and validation sets must be non-empty".into()));
    }
    let mut shuffle_rng = rng::stream(config.seed, "shuffle");
    let mut dropout_rng = rng::stream(config.seed, "dropout");
    let mut adam = AdamState::new(&model.param_lens());
    let n = train.len();
    let batch = if config.batch_size == 0 || config.batch_size >= n { n } else { config.batch_size };
    let mut order: Vec<usize> = (0..n).collect();

    let mut history = History {
        best_val_loss: f64::INFINITY,
        ..History::default()
    };
    let mut best = model.clone();
    let mut waited = 0;
    for epoch in 0..config.max_epochs {
        let mut epoch_loss = 0.0;
        if batch == n {
            let (loss, grads) = model.loss_and_grads(train.x.view(), &train.y, config.loss, config.dropout_rate, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam_step(&mut model.params_mut(), &g, &mut adam, config.learning_rate)?;
            epoch_loss = loss;
        } else {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(batch) {
                let part = train.select(chunk);
                let (loss, grads) = model.loss_and_grads(part.x.view(), &part.y, config.loss, config.dropout_rate, &mut dropout_rng)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
                adam_step(&mut model.params_mut(), &g, &mut adam, config.learning_rate)?;
                epoch_loss += loss * chunk.len() as f64 / n as f64;
            }
        }
        let val_loss = model.eval_loss(val.x.view(), &val.y, config.loss)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.train_loss.push(epoch_loss);
        history.val_loss.push(val_loss);
        if val_loss < history.best_val_loss - IMPROVEMENT_THRESHOLD {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.clone();
            waited = 0;
        } else {
            waited += 1;
            if waited > config.patience {
                break;
            }
        }
    }
    *model = best;
    Ok(history)
}

impl Trainable for super::DenseStack {
    fn param_lens(&self) -> Vec<usize> {
        super::DenseStack::param_lens(self)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.param_slices_mut()
    }

    fn loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        y: &Targets,
        loss: LossKind,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let (out, cache) = self.forward(x, super::Mode::Train, dropout_rate, rng)?;
        let (l, g) = super::batch_loss_and_grad(out.view(), y, loss)?;
        let (grads, _) = self.backward(&cache, g.view())?;
        Ok((
            l,
            grads
                .into_iter()
                .flat_map(|g| [g.weights.into_raw_vec_and_offset().0, g.bias.into_raw_vec_and_offset().0])
                .collect(),
        ))
    }

    fn eval_loss(&self, x: ArrayView2<f64>, y: &Targets, loss: LossKind) -> Result<f64> {
        let out = self.infer(x)?;
        Ok(super::batch_loss_and_grad(out.view(), y, loss)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseStack};

    fn toy(seed: u64, n: usize) -> Dataset {
        // two Gaussian-free clusters separated by the plane x0 + x1 = 0 with margin 0.5
        let mut r = rng::stream(seed, "toy");
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        use rand::Rng as _;
        while labels.len() < n {
            let a: f64 = r.random_range(-2.0..2.0);
            let b: f64 = r.random_range(-2.0..2.0);
            let s = a + b;
            if s.abs() < 0.5 {
                continue;
            }
            rows.extend([a, b]);
            labels.push(usize::from(s > 0.0));
        }
        Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), Targets::Classes(labels)).unwrap()
    }

    fn net(seed: u64) -> DenseStack {
        DenseStack::glorot(&[2, 8, 2], &[Activation::Relu, Activation::Identity], &mut rng::stream(seed, "init")).unwrap()
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let data = toy(1, 60);
        let mut model = net(1);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 500,
            patience: 500,
            ..TrainConfig::default()
        };
        train_loop(&mut model, &data, &data, &cfg).unwrap();
        let out = model.infer(data.x.view()).unwrap();
        let Targets::Classes(labels) = &data.y else { unreachable!() };
        let correct = out
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &y)| usize::from(row[1] > row[0]) == y)
            .count();
        assert_eq!(correct, 60);
    }

    #[test]
    fn patience_zero_stops_on_first_stall() {
        let data = toy(2, 20);
        let mut model = net(2);
        // a huge rate makes validation loss bounce quickly
        let cfg = TrainConfig {
            learning_rate: 1.0,
            max_epochs: 200,
            patience: 0,
            ..TrainConfig::default()
        };
        let h = train_loop(&mut model, &data, &data, &cfg).unwrap();
        let first_stall = (1..h.val_loss.len())
            .find(|&e| {
                let best_before = h.val_loss[..e].iter().cloned().fold(f64::INFINITY, f64::min);
                h.val_loss[e] >= best_before - IMPROVEMENT_THRESHOLD
            })
            .expect("a stall happens");
        assert_eq!(h.epochs_run(), first_stall + 1);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let data = toy(3, 40);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 50,
            patience: 10,
            batch_size: 8,
            dropout_rate: 0.2,
            seed: 11,
            ..TrainConfig::default()
        };
        let (mut a, mut b) = (net(5), net(5));
        let ha = train_loop(&mut a, &data, &data, &cfg).unwrap();
        let hb = train_loop(&mut b, &data, &data, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.layers(), b.layers());
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            patience: 20,
            max_epochs: 10,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig { learning_rate: 2.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { dropout_rate: 0.6, ..TrainConfig::default() }.validate().is_err());
        let data = toy(4, 4);
        let empty = data.select(&[]);
        assert!(train_loop(&mut net(0), &data, &empty, &TrainConfig::default()).is_err());
    }
}
