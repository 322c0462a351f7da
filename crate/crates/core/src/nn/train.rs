use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{argmax, backward, cross_entropy, forward, weight_init, Architecture, DropoutMask, Mode, ModelParams, Tensor3};
use crate::data::{split, Labeled, SplitSpec};
use crate::error::{Error, Result};
use crate::quanv::FeatureMap;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// Keeps the training stream independent of the init and split streams.
const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub dropout_rate: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Output width; `None` uses the largest class index present plus one.
    pub num_classes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            dropout_rate: 0.5,
            seed: 0,
            val_fraction: 0.2,
            num_classes: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// A feature map with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub map: FeatureMap,
    pub class: usize,
}

impl Labeled for Sample {
    fn label(&self) -> u32 {
        self.class as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![vec![0; classes]; classes] }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        self.counts
            .iter()
            .map(|r| r.iter().map(u64::to_string).collect::<Vec<_>>().join(",") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub num_classes: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub epochs: Vec<EpochMetrics>,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

fn to_input(map: &FeatureMap) -> Tensor3 {
    Tensor3::from(map)
}

/// Eval-mode loss, accuracy and confusion matrix over `samples`.
pub fn evaluate(params: &ModelParams, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Size("evaluation needs at least one sample".into()));
    }
    let c = params.arch.num_classes;
    let outcomes = samples
        .par_iter()
        .map(|s| {
            if s.class >= c {
                return Err(Error::Argument(format!("class {} out of range for {c} classes", s.class)));
            }
            let fp = forward(params, &to_input(&s.map), Mode::Eval)?;
            Ok((cross_entropy(&fp.probs, s.class)?, argmax(&fp.probs)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = ConfusionMatrix::new(c);
    let mut loss = 0.0;
    for (s, (l, pred)) in samples.iter().zip(outcomes) {
        loss += l;
        confusion.record(s.class, pred);
    }
    Ok(Evaluation {
        loss: loss / samples.len() as f64,
        accuracy: confusion.accuracy(),
        confusion,
    })
}

struct AdamState {
    step: i32,
    m: ModelParams,
    v: ModelParams,
}

fn apply_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    config: &TrainConfig,
    adam: &mut AdamState,
) {
    match config.optimizer {
        Optimizer::Sgd => params.add_scaled(grads, -config.learning_rate),
        Optimizer::Adam => {
            adam.step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(adam.step);
            let c2 = 1.0 - ADAM_BETA2.powi(adam.step);
            let groups = params
                .groups_mut()
                .into_iter()
                .zip(grads.groups())
                .zip(adam.m.groups_mut())
                .zip(adam.v.groups_mut());
            for (((p, g), m), v) in groups {
                for i in 0..p.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
}

/// Seeded split, init and minibatch training.
///
/// Per-sample gradients inside a batch are computed in parallel and summed in
/// sample order, so the result is bit-identical for a given `config.seed`
/// regardless of thread count. Train and validation loss/accuracy are both
/// measured in eval mode (no dropout) at the end of each epoch. The final
/// confusion matrix is on the validation split.
pub fn train(samples: &[Sample], config: &TrainConfig) -> Result<(ModelParams, Metrics)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let mut classes: Vec<usize> = samples.iter().map(|s| s.class).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least two classes, found {:?}",
            classes
        )));
    }
    let num_classes = config.num_classes.unwrap_or(classes[classes.len() - 1] + 1);
    if classes[classes.len() - 1] >= num_classes {
        return Err(Error::Config(format!(
            "class index {} does not fit {num_classes} outputs",
            classes[classes.len() - 1]
        )));
    }
    let dims = samples[0].map.dims();
    if let Some(s) = samples.iter().find(|s| s.map.dims() != dims) {
        return Err(Error::Shape(format!(
            "feature maps differ in size: {:?} vs {:?}",
            dims,
            s.map.dims()
        )));
    }

    let (train_set, val_set) = split(
        samples,
        &SplitSpec { val_fraction: config.val_fraction, seed: config.seed },
    )?;
    let arch = Architecture::new(dims.0, dims.1, num_classes);
    let mut params = weight_init(arch, config.seed)?;
    let mut adam = AdamState {
        step: 0,
        m: ModelParams::zeros(arch)?,
        v: ModelParams::zeros(arch)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ TRAIN_STREAM);
    let inputs: Vec<Tensor3> = train_set.iter().map(|s| to_input(&s.map)).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let masks = batch
                .iter()
                .map(|_| DropoutMask::sample(arch.hidden, config.dropout_rate, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let results = batch
                .par_iter()
                .zip(masks.par_iter())
                .map(|(&i, mask)| {
                    backward(&params, &inputs[i], train_set[i].class, Some(mask)).map(|(g, _)| g)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = ModelParams::zeros(arch)?;
            for grads in &results {
                total.add_scaled(grads, 1.0);
            }
            let inv = 1.0 / batch.len() as f64;
            for g in total.groups_mut() {
                g.iter_mut().for_each(|v| *v *= inv);
            }
            apply_update(&mut params, &total, config, &mut adam);
        }
        let fit = evaluate(&params, &train_set)?;
        let val = evaluate(&params, &val_set)?;
        let m = EpochMetrics {
            epoch,
            train_loss: fit.loss,
            val_loss: val.loss,
            train_acc: fit.accuracy,
            val_acc: val.accuracy,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4}",
            m.train_loss,
            m.train_acc,
            m.val_loss,
            m.val_acc
        );
        epochs.push(m);
    }

    let val = evaluate(&params, &val_set)?;
    let metrics = Metrics {
        num_classes,
        train_size: train_set.len(),
        val_size: val_set.len(),
        epochs,
        val_loss: val.loss,
        val_accuracy: val.accuracy,
        confusion: val.confusion,
    };
    Ok((params, metrics))
}
