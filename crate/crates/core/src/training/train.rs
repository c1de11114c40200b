use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::loss::{ohem_ce_loss, OhemConfig};
use super::metrics::{argmax_labels, ConfusionMatrix, MiouReport};
use super::optim::{poly_lr, sgd_step, OptimizerState, SgdConfig};
use crate::data::{collate, Sample};
use crate::engine::{Graph, Mode};
use crate::error::{Error, Result};
use crate::network::{forward, infer, NetworkConfig};
use crate::params::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch: usize,
    /// A metric record is emitted every `log_every` iterations and after the last.
    pub log_every: usize,
    /// Validation mIoU is added every `eval_every` iterations (0: last record only).
    pub eval_every: usize,
    pub sgd: SgdConfig,
    pub ohem: OhemConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            batch: 4,
            log_every: 50,
            eval_every: 500,
            sgd: SgdConfig::default(),
            ohem: OhemConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.log_every == 0 {
            return Err(Error::InvalidConfig("train: batch and log_every must be positive".into()));
        }
        self.sgd.validate()?;
        self.ohem.validate()?;
        self.augment.validate()
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iter: usize,
    pub lr: f64,
    /// Mean loss over the iterations since the previous record.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub miou: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<MetricRecord>,
    pub final_loss: Option<f64>,
    pub final_eval: Option<MiouReport>,
}

/// Eval-mode segmentation quality on `samples`, in batches of `batch`.
pub fn evaluate(cfg: &NetworkConfig, store: &ParamStore, samples: &[Sample], batch: usize) -> Result<MiouReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut cm = ConfusionMatrix::new(cfg.num_classes);
    for chunk in samples.chunks(batch.max(1)) {
        let (x, labels) = collate(chunk)?;
        let (logits, _) = infer(store, cfg, &x)?;
        cm.add(&argmax_labels(&logits), &labels, crate::data::IGNORE_LABEL)?;
    }
    Ok(cm.report())
}

/// Yields dataset indices epoch by epoch, each epoch a fresh permutation.
struct Sampler {
    len: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(len: usize, seed: u64) -> Self {
        Self {
            len,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(self.epoch);
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut rng);
            self.epoch += 1;
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// SGD with poly schedule and OHEM loss on augmented mini-batches.
///
/// Sample `k` of the run (counting across batches) is augmented with its own
/// ChaCha8 stream `k`, so the run is a pure function of the inputs. Each
/// record is handed to `on_record` as soon as it exists. A non-finite loss
/// aborts with [`Error::NonFinite`].
pub fn train_loop(
    net: &NetworkConfig,
    store: &mut ParamStore,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    on_record: &mut dyn FnMut(&MetricRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sampler = Sampler::new(train.len(), cfg.seed);
    let mut optim = OptimizerState::new(cfg.sgd);
    let mut records = Vec::new();
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let mut final_loss = None;
    let mut sample_counter = 0u64;

    for t in 0..cfg.iters {
        let mut batch = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let idx = sampler.next_index();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6175_676d);
            rng.set_stream(sample_counter);
            sample_counter += 1;
            batch.push(augment(&train[idx], &cfg.augment, &mut rng)?);
        }
        let (x, labels) = collate(&batch)?;

        let lr = poly_lr(t, cfg.iters, &cfg.sgd);
        let mut g = Graph::new();
        let xv = g.input(x);
        let out = forward(&mut g, store, net, xv, Mode::Train)?;
        let loss = ohem_ce_loss(g.value(out.logits), &labels, &cfg.ohem).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { op: "training logits" },
            other => other,
        })?;
        if !loss.loss.is_finite() {
            return Err(Error::NonFinite { op: "training loss" });
        }
        let grads = g.backward(out.logits, loss.grad)?;
        store.apply_bn_updates(&g.take_bn_updates())?;
        sgd_step(store, &grads.params, &mut optim, lr)?;

        loss_sum += loss.loss;
        loss_count += 1;
        final_loss = Some(loss.loss);
        let done = t + 1;
        if done % cfg.log_every == 0 || done == cfg.iters {
            let eval_now = !val.is_empty()
                && (done == cfg.iters || (cfg.eval_every > 0 && done % cfg.eval_every == 0));
            let miou = if eval_now {
                Some(evaluate(net, store, val, cfg.batch)?.miou)
            } else {
                None
            };
            let rec = MetricRecord {
                iter: done,
                lr,
                loss: loss_sum / loss_count as f64,
                miou,
            };
            on_record(&rec)?;
            records.push(rec);
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    let final_eval = if val.is_empty() {
        None
    } else {
        Some(evaluate(net, store, val, cfg.batch)?)
    };
    Ok(TrainOutcome {
        records,
        final_loss,
        final_eval,
    })
}
