use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use crate::autodiff::{adam_step, Tape, Tensor, Var};
use crate::corpus::{Dataset, TrainingStep};
use crate::model::{Model, ModelKind};
use crate::raster::BinaryImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops early once this many optimizer steps have run.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub lr: f32,
    pub clip_norm: Option<f32>,
    /// Dev NLL is measured every this many epochs (and after the last one).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 8, epochs: 10, max_steps: None, seed: 0, lr: 3e-4, clip_norm: Some(1.0), eval_every: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub split: Split,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurvePoint>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f32>,
}

/// The loss curve as `epoch,split,nll` CSV.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,split,nll\n");
    for p in curve {
        let split = match p.split {
            Split::Train => "train",
            Split::Dev => "dev",
        };
        out.push_str(&format!("{},{},{:.9}\n", p.epoch, split, p.nll));
    }
    out
}

/// Examples a model kind trains on: every sub-example for the full model,
/// whole pairs (terminal steps) for the baseline.
pub fn training_items(kind: ModelKind, data: &Dataset) -> Vec<&TrainingStep> {
    match kind {
        ModelKind::Full => data.steps.iter().collect(),
        ModelKind::Baseline => data.terminal_steps().collect(),
    }
}

/// `[N, 1, H, W]` tensor of target pixel values (white = 1).
pub fn target_tensor(images: &[&BinaryImage]) -> Result<Tensor> {
    let (h, w) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if img.height() != h || img.width() != w {
            return Err(Error::shape("targets of different sizes in one batch"));
        }
        data.extend(img.pixels().iter().map(|&p| p as f32));
    }
    Tensor::new([images.len(), 1, h, w], data)
}

/// Mean per-pixel binary cross-entropy in nats between logits and binary targets.
pub fn pixel_loss(tape: &mut Tape, logits: Var, targets: &[&BinaryImage]) -> Result<Var> {
    let target = target_tensor(targets)?;
    tape.bce_with_logits(logits, &target)
}

fn batch_loss(model: &Model, tape: &mut Tape, items: &[&TrainingStep]) -> Result<Var> {
    let sources: Vec<&BinaryImage> = items.iter().map(|s| &s.source_image).collect();
    let partials: Vec<&BinaryImage> = items.iter().map(|s| &s.partial_input).collect();
    let targets: Vec<&BinaryImage> = items.iter().map(|s| &s.target).collect();
    let logits = model.logits(tape, &sources, &partials)?;
    pixel_loss(tape, logits, &targets)
}

/// Teacher-forced mean pixel NLL of `model` over the items it trains on.
pub fn dataset_nll(model: &Model, data: &Dataset, batch_size: usize) -> Result<f64> {
    items_nll(model, &training_items(model.kind(), data), batch_size)
}

/// Mean pixel NLL over `items`, evaluated in batches without recording gradients.
pub fn items_nll(model: &Model, items: &[&TrainingStep], batch_size: usize) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0f64;
    for chunk in items.chunks(batch_size.max(1)) {
        let mut tape = Tape::no_grad();
        let loss = batch_loss(model, &mut tape, chunk)?;
        total += tape.value(loss).item() as f64 * chunk.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Runs minibatch Adam from `start`. Deterministic given the seed, the
/// configuration and the dataset.
pub fn train(config: &TrainConfig, start: Checkpoint, data: &Dataset, dev: Option<&Dataset>) -> Result<TrainRun> {
    config.validate()?;
    let mut ckpt = start;
    let kind = ckpt.model.kind();
    let items = training_items(kind, data);
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    log::info!(
        "training {kind} model on {} items, seed {}, batch {}, lr {}",
        items.len(),
        config.seed,
        config.batch_size,
        config.lr
    );
    ckpt.optimizer.lr = config.lr;
    ckpt.optimizer.clip_norm = config.clip_norm;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut curve = Vec::new();
    let mut step_losses = Vec::new();
    let reached = |ckpt: &Checkpoint| config.max_steps.is_some_and(|m| ckpt.step >= m);

    for epoch in 1..=config.epochs {
        if reached(&ckpt) {
            break;
        }
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0f64;
        let mut epoch_items = 0usize;
        for batch in order.chunks(config.batch_size) {
            if reached(&ckpt) {
                break;
            }
            let batch: Vec<&TrainingStep> = batch.iter().map(|&i| items[i]).collect();
            let mut tape = Tape::new();
            let loss = batch_loss(&ckpt.model, &mut tape, &batch)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite { step: ckpt.step as usize + 1, loss: value });
            }
            let grads = tape.backward(loss)?.for_params(&tape, ckpt.model.params());
            drop(tape);
            let norm = adam_step(ckpt.model.params_mut(), &grads, &mut ckpt.optimizer)?;
            ckpt.step += 1;
            step_losses.push(value);
            epoch_total += value as f64 * batch.len() as f64;
            epoch_items += batch.len();
            log::debug!("step {} loss {value:.6} grad norm {norm:.4}", ckpt.step);
        }
        if epoch_items == 0 {
            break;
        }
        let train_nll = epoch_total / epoch_items as f64;
        curve.push(CurvePoint { epoch, split: Split::Train, nll: train_nll });
        let last = epoch == config.epochs || reached(&ckpt);
        let mut line = format!("epoch {epoch} step {} train nll {train_nll:.6}", ckpt.step);
        if let Some(dev) = dev.filter(|_| epoch % config.eval_every == 0 || last) {
            let nll = dataset_nll(&ckpt.model, dev, config.batch_size)?;
            curve.push(CurvePoint { epoch, split: Split::Dev, nll });
            line.push_str(&format!(" dev nll {nll:.6}"));
        }
        log::info!("{line}");
    }
    Ok(TrainRun { checkpoint: ckpt, curve, step_losses })
}
