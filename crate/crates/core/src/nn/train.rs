//! Mini-batch training loop with SGD or Adam and early stopping on
//! validation accuracy.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::model::{Grads, Sequential};
use super::tensor::{argmax, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::adam(1e-3),
            batch_size: 32,
            epochs: 50,
            patience: Some(10),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it freezes the parameters
        if !(self.optimizer.lr() >= 0.0 && self.optimizer.lr().is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.optimizer.lr())));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_acc: f64,
    /// `None` without a validation set.
    pub val_acc: Option<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl History {
    /// `epoch,train_acc,val_acc,loss`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_acc,val_acc,loss\n");
        for e in &self.epochs {
            let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.6},{},{:.6}", e.epoch, e.train_acc, val, e.loss);
        }
        s
    }
}

/// Fraction of `data` whose inference-mode prediction matches its label.
pub fn evaluate<T: Scalar>(model: &Sequential<T>, data: &[(Tensor<T>, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (x, y) in data {
        if model.predict(x)?.0 == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

struct OptState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> OptState<T> {
    fn new(model: &Sequential<T>) -> Self {
        let zeros: Vec<Vec<T>> = model
            .param_slices()
            .iter()
            .map(|s| vec![T::zero(); s.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, opt: &Optimizer, model: &mut Sequential<T>, grads: &Grads<T>) {
        self.t += 1;
        let gs = grads.slices();
        match *opt {
            Optimizer::Sgd { lr } => {
                let lr = T::from_f64(lr);
                for (p, g) in model.param_slices_mut().into_iter().zip(gs) {
                    for (pi, &gi) in p.iter_mut().zip(g) {
                        *pi = *pi - lr * gi;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let step = T::from_f64(lr * c2.sqrt() / c1);
                let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
                let (ob1, ob2) = (T::one() - b1, T::one() - b2);
                let eps = T::from_f64(eps * c2.sqrt());
                for (k, (p, g)) in model.param_slices_mut().into_iter().zip(gs).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + ob1 * g[i];
                        v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                        p[i] = p[i] - step * m[i] / (v[i].sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Trains `model` in place on softmax cross-entropy and keeps the parameters
/// of the best validation epoch (the last epoch when `val` is empty).
pub fn train<T: Scalar>(
    model: &mut Sequential<T>,
    train: &[(Tensor<T>, usize)],
    val: &[(Tensor<T>, usize)],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut counts = vec![0usize; model.n_classes];
    for (_, y) in train {
        if *y >= model.n_classes {
            return Err(Error::ShapeMismatch(format!(
                "label {y} for a {}-class model",
                model.n_classes
            )));
        }
        counts[*y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }

    let mut state = OptState::new(model);
    let mut history = History::default();
    let mut best: Option<(f64, Sequential<T>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Grads::zeros_like(model);
            for &i in batch {
                let (x, y) = &train[i];
                let mut r = rng::stream(cfg.seed, &[tag::DROPOUT, epoch as u64, i as u64]);
                let (loss, logits, g, _) = model.loss_and_grads(x, *y, &mut r, false)?;
                let loss = Scalar::to_f64(loss);
                if !loss.is_finite() {
                    return Err(Error::DivergenceDetected { epoch });
                }
                loss_sum += loss;
                hits += (argmax(&logits) == *y) as usize;
                acc.add_assign(&g);
            }
            acc.scale(T::from_f64(1.0 / batch.len() as f64));
            state.step(&cfg.optimizer, model, &acc);
        }
        if model.param_slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::DivergenceDetected { epoch });
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(evaluate(model, val)?)
        };
        history.epochs.push(EpochStats {
            epoch,
            train_acc: hits as f64 / train.len() as f64,
            val_acc,
            loss: loss_sum / train.len() as f64,
        });
        if let Some(v) = val_acc {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, model.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::NetworkConfig;

    fn toy(n: usize) -> Vec<(Tensor<f32>, usize)> {
        (0..n)
            .map(|i| {
                let y = i % 2;
                let v = if y == 0 { 0.0 } else { 1.0 };
                (Tensor::from_fn(vec![1, 8, 8], |_| v), y)
            })
            .collect()
    }

    fn small_net() -> Sequential<f32> {
        let cfg = NetworkConfig {
            input: (1, 8, 8),
            block_widths: [4, 4, 4],
            dense1_units: 8,
            n_classes: 2,
            ..NetworkConfig::default()
        };
        Sequential::cnn(&cfg, 1).unwrap()
    }

    #[test]
    fn separable_constants_fit_within_five_epochs() {
        let data = toy(40);
        let mut net = small_net();
        let cfg = TrainConfig {
            optimizer: Optimizer::adam(1e-2),
            batch_size: 8,
            epochs: 5,
            patience: None,
            seed: 4,
        };
        train(&mut net, &data, &[], &cfg).unwrap();
        assert_eq!(evaluate(&net, &data).unwrap(), 1.0);
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let data = toy(10);
        let mut net = small_net();
        let before = net.clone();
        for opt in [Optimizer::Sgd { lr: 0.0 }, Optimizer::adam(0.0)] {
            let cfg = TrainConfig {
                optimizer: opt,
                epochs: 3,
                ..TrainConfig::default()
            };
            train(&mut net, &data, &[], &cfg).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn same_seed_same_history() {
        let data = toy(20);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut a = small_net();
        let mut b = small_net();
        let ha = train(&mut a, &data, &data[..6], &cfg).unwrap();
        let hb = train(&mut b, &data, &data[..6], &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn missing_class_is_rejected() {
        let data: Vec<_> = toy(10).into_iter().filter(|(_, y)| *y == 0).collect();
        let mut net = small_net();
        assert!(matches!(
            train(&mut net, &data, &[], &TrainConfig::default()),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn history_csv_layout() {
        let h = History {
            epochs: vec![EpochStats {
                epoch: 1,
                train_acc: 0.5,
                val_acc: Some(0.25),
                loss: 1.0,
            }],
            best_epoch: 1,
        };
        assert_eq!(h.to_csv(), "epoch,train_acc,val_acc,loss\n1,0.500000,0.250000,1.000000\n");
    }
}
