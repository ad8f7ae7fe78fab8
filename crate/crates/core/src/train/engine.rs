//! Epoch loop, validation, and evaluation-set scoring.
//!
//! One trainer owns the model and optimizer. Each batch goes through
//! augment → fix-length → forward → loss → backward → optimizer step, with
//! per-sample gradients accumulated in sample order and batch-norm running
//! statistics folded in the same order, so a (data, seed) pair maps to
//! exactly one parameter trajectory regardless of thread count.

use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{
    fix_length, rawboost_series, read_wav, resolve_audio_path, AugmentConfig, BatchItem, Label,
    make_batches, ProtocolEntry,
};
use crate::error::Error;
use crate::layers::Mode;
use crate::metrics::{compute_eer, LabeledScore, ScoreSet};
use crate::model::{score_from_logits, Model};
use crate::param::Grads;
use crate::rng::{fnv1a64, Rng};
use crate::Result;

use super::checkpoint::{select_and_average, Checkpoint};
use super::loss::{weighted_cross_entropy, ClassWeights, DEFAULT_CLASS_WEIGHTS};
use super::optim::{AdamConfig, OptimState};

/// Tag separating the per-sample augmentation/crop stream from every other
/// seeded stream.
const STREAM_SAMPLE: u64 = 0x73616d70;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: AdamConfig,
    pub class_weights: ClassWeights,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// How many of the best checkpoints (by validation metric) are averaged
    /// into the final model.
    pub checkpoint_top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            optim: AdamConfig::default(),
            class_weights: DEFAULT_CLASS_WEIGHTS,
            augment: AugmentConfig::default(),
            seed: 1,
            checkpoint_top_k: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.checkpoint_top_k == 0 {
            return Err(Error::config("checkpoint_top_k must be at least 1"));
        }
        if !(self.class_weights.0 > 0.0 && self.class_weights.1 > 0.0) {
            return Err(Error::config(format!(
                "class weights must be positive, got {:?}",
                self.class_weights
            )));
        }
        self.optim.validate()
    }
}

/// A trial list plus where its audio lives.
#[derive(Debug, Clone, Copy)]
pub struct DataSource<'a> {
    pub entries: &'a [ProtocolEntry],
    pub audio_root: &'a Path,
    /// Path template with an `{utt}` placeholder; `None` = `{utt}.wav`.
    pub path_template: Option<&'a str>,
}

impl<'a> DataSource<'a> {
    pub fn new(entries: &'a [ProtocolEntry], audio_root: &'a Path) -> Self {
        DataSource {
            entries,
            audio_root,
            path_template: None,
        }
    }

    fn load_train_item(
        &self,
        entry: &ProtocolEntry,
        segment_len: usize,
        augment: &AugmentConfig,
        seed: u64,
        epoch: usize,
    ) -> Result<BatchItem> {
        let path = resolve_audio_path(self.audio_root, self.path_template, &entry.utt_id)?;
        let wave = read_wav(&path)?;
        let duration_s = wave.duration_s();
        // one private stream per (seed, epoch, utterance): the augmentation
        // and crop draws never depend on batch composition
        let mut rng = Rng::new(seed).derive(&[
            STREAM_SAMPLE,
            epoch as u64,
            fnv1a64(entry.utt_id.as_bytes()),
        ]);
        let wave = rawboost_series(&wave, augment, &mut rng)?;
        let wave = fix_length(&wave, segment_len, Mode::Train, &mut rng)?;
        Ok(BatchItem {
            utt_id: entry.utt_id.clone(),
            label: entry.label,
            wave,
            duration_s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Weight-normalized mean training loss over the epoch.
    pub mean_loss: f64,
    /// Fraction of training samples whose argmax logit matched the label.
    pub accuracy: f64,
}

/// Validation metric used to rank checkpoints; lower is better for both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValMetric {
    Eer(f64),
    /// Fallback when the validation split contains a single class and an
    /// EER is undefined.
    Loss(f64),
}

impl ValMetric {
    pub fn value(self) -> f64 {
        match self {
            ValMetric::Eer(v) | ValMetric::Loss(v) => v,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            ValMetric::Eer(_) => "eer",
            ValMetric::Loss(_) => "loss",
        }
    }
}

fn attach_batch(e: Error, batch: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::numeric(format!("batch {batch}: {m}")),
        other => other,
    }
}

/// Run one full pass over the training set, updating the model in place.
pub fn train_epoch(
    model: &mut Model,
    optim: &mut OptimState,
    data: &DataSource,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    cfg.validate()?;
    let segment_len = model.cfg.segment_len;
    let plan = make_batches(data.entries.len(), cfg.batch_size, cfg.seed, epoch)?;
    let mut loss_sum = 0.0;
    let mut weight_sum = 0.0;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (b, batch) in plan.iter().enumerate() {
        let mut items = Vec::with_capacity(batch.len());
        for &idx in batch {
            items.push(data.load_train_item(
                &data.entries[idx],
                segment_len,
                &cfg.augment,
                cfg.seed,
                epoch,
            )?);
        }
        let mut logits = Vec::with_capacity(items.len());
        let mut caches = Vec::with_capacity(items.len());
        let mut bn_updates = Vec::with_capacity(items.len());
        for item in &items {
            let (z, cache, updates) = model
                .forward_utterance(&item.wave.tensor()?, Mode::Train)
                .map_err(|e| attach_batch(e, b))?;
            logits.push(z);
            caches.push(cache);
            bn_updates.push(updates);
        }
        let labels: Vec<usize> = items.iter().map(|i| i.label.class_index()).collect();
        let (loss, dlogits) = weighted_cross_entropy(&logits, &labels, cfg.class_weights)
            .map_err(|e| attach_batch(e, b))?;
        let mut grads = Grads::zeros_like(&model.ps);
        for (cache, dz) in caches.iter().zip(&dlogits) {
            model
                .backward(cache, dz, &mut grads)
                .map_err(|e| attach_batch(e, b))?;
        }
        for updates in &bn_updates {
            model.apply_bn_updates(updates);
        }
        optim
            .step(&mut model.ps, &grads)
            .map_err(|e| attach_batch(e, b))?;

        let batch_weight: f64 = labels
            .iter()
            .map(|&y| if y == 0 { cfg.class_weights.0 } else { cfg.class_weights.1 })
            .sum();
        loss_sum += loss * batch_weight;
        weight_sum += batch_weight;
        for (z, &y) in logits.iter().zip(&labels) {
            let pred = usize::from(z.data()[1] > z.data()[0]);
            correct += usize::from(pred == y);
        }
        total += labels.len();
    }
    Ok(EpochStats {
        epoch,
        mean_loss: loss_sum / weight_sum,
        accuracy: correct as f64 / total as f64,
    })
}

/// Score every validation utterance (head segment, running statistics) and
/// return the EER, falling back to the weighted loss when the split has
/// only one class.
pub fn validate_model(
    model: &Model,
    data: &DataSource,
    class_weights: ClassWeights,
) -> Result<ValMetric> {
    if data.entries.is_empty() {
        return Err(Error::data("validation split is empty"));
    }
    let segment_len = model.cfg.segment_len;
    let mut rng = Rng::new(0); // eval-mode fix_length never draws
    let mut bonafide = Vec::new();
    let mut spoof = Vec::new();
    let mut logits_all = Vec::with_capacity(data.entries.len());
    let mut labels = Vec::with_capacity(data.entries.len());
    for entry in data.entries {
        let path = resolve_audio_path(data.audio_root, data.path_template, &entry.utt_id)?;
        let wave = read_wav(&path)?;
        let fixed = fix_length(&wave, segment_len, Mode::Eval, &mut rng)?;
        let z = model.infer_utterance(&fixed.tensor()?)?;
        let score = score_from_logits(&z);
        match entry.label {
            Label::Bonafide => bonafide.push(score),
            Label::Spoof => spoof.push(score),
        }
        logits_all.push(z);
        labels.push(entry.label.class_index());
    }
    if !bonafide.is_empty() && !spoof.is_empty() {
        let (eer, _threshold) = compute_eer(&ScoreSet::new(bonafide, spoof)?)?;
        Ok(ValMetric::Eer(eer))
    } else {
        let (loss, _) = weighted_cross_entropy(&logits_all, &labels, class_weights)?;
        Ok(ValMetric::Loss(loss))
    }
}

/// Result of scoring an evaluation list: records in input order plus the
/// utterances that had to be skipped (unreadable or unusable audio), each
/// with the reason.
#[derive(Debug)]
pub struct ScoringOutcome {
    pub records: Vec<LabeledScore>,
    pub skipped: Vec<(String, String)>,
}

/// Score every entry with the model as-is (no augmentation, head segment).
/// Unreadable files are skipped and reported, not fatal.
pub fn score_entries(model: &Model, data: &DataSource) -> Result<ScoringOutcome> {
    let segment_len = model.cfg.segment_len;
    let mut rng = Rng::new(0); // eval-mode fix_length never draws
    let mut records = Vec::with_capacity(data.entries.len());
    let mut skipped = Vec::new();
    for entry in data.entries {
        let path = resolve_audio_path(data.audio_root, data.path_template, &entry.utt_id)?;
        let wave = match read_wav(&path) {
            Ok(w) => w,
            Err(e) => {
                skipped.push((entry.utt_id.clone(), e.to_string()));
                continue;
            }
        };
        let fixed = match fix_length(&wave, segment_len, Mode::Eval, &mut rng) {
            Ok(f) => f,
            Err(Error::Data(m)) => {
                skipped.push((entry.utt_id.clone(), format!("data error: {m}")));
                continue;
            }
            Err(e) => return Err(e),
        };
        let z = model.infer_utterance(&fixed.tensor()?)?;
        records.push(LabeledScore {
            utt_id: entry.utt_id.clone(),
            score: score_from_logits(&z),
            bonafide: entry.label == Label::Bonafide,
            duration_s: wave.duration_s(),
        });
    }
    Ok(ScoringOutcome { records, skipped })
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub stats: EpochStats,
    pub val: ValMetric,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub epochs: Vec<EpochReport>,
    pub averaged_checkpoint: PathBuf,
    /// Validation metric of the averaged model.
    pub final_val: ValMetric,
}

/// Full training run: per-epoch optimization, validation, one checkpoint
/// per epoch under `checkpoint_dir`, and a final top-k average applied back
/// to `model` and saved as `averaged.ckpt`.
pub fn fit(
    model: &mut Model,
    train_data: &DataSource,
    dev_data: &DataSource,
    cfg: &TrainConfig,
    checkpoint_dir: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<FitReport> {
    cfg.validate()?;
    if train_data.entries.is_empty() {
        return Err(Error::data("training split is empty"));
    }
    fs::create_dir_all(checkpoint_dir)
        .map_err(|e| Error::io(checkpoint_dir.display().to_string(), e))?;
    let mut optim = OptimState::new(&model.ps, cfg.optim.clone())?;
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = train_epoch(model, &mut optim, train_data, cfg, epoch)?;
        let val = validate_model(model, dev_data, cfg.class_weights)?;
        let ck = Checkpoint::from_model(model, epoch as u64, val.value());
        let path = checkpoint_dir.join(format!("epoch_{epoch:04}.ckpt"));
        ck.save(&path)?;
        log(&format!(
            "epoch {epoch:>4}  train_loss {:.6}  train_acc {:.4}  val_{} {:.6}",
            stats.mean_loss,
            stats.accuracy,
            val.kind(),
            val.value()
        ));
        checkpoints.push(ck);
        reports.push(EpochReport {
            stats,
            val,
            checkpoint: path,
        });
    }
    let averaged = select_and_average(&checkpoints, cfg.checkpoint_top_k)?;
    averaged.apply_to(model)?;
    let averaged_path = checkpoint_dir.join("averaged.ckpt");
    averaged.save(&averaged_path)?;
    let final_val = validate_model(model, dev_data, cfg.class_weights)?;
    log(&format!(
        "averaged top-{} checkpoints  val_{} {:.6}",
        cfg.checkpoint_top_k.min(cfg.epochs),
        final_val.kind(),
        final_val.value()
    ));
    Ok(FitReport {
        epochs: reports,
        averaged_checkpoint: averaged_path,
        final_val,
    })
}
