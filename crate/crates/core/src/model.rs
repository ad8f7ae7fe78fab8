//! Full model assembly: waveform → band-pass frontend → residual 2D
//! frontend → time-frequency block stack → two-logit classifier.
//!
//! Pipeline:
//! ```text
//! wave[L] → sinc bank (valid conv) → |·| → time max-pool(3)
//!        → [1, F, T] → residual stem (filters.0) → n × SE-Res2 blocks
//!          (filters.1), each ending in a pool from the frontend schedule
//!        → stack of TF blocks (width 2·tau), 2×2/2 max-pool after the
//!          blocks listed in `pool_positions`
//!        → mean over frequency → 1D conv (width → 2, kernel 1, bias)
//!        → mean over time → logits[2]
//! ```
//! Class convention: index 0 = spoof, index 1 = bonafide; the detection
//! score of a wave is `logits[1] − logits[0]`.
//!
//! `tau` names the model variant and controls the stack width `2·tau`.
//! The split inside each TF block then gives each branch `tau` channels,
//! which is what the width parameter counts.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::layers::activation::{abs_backward, abs_forward};
use crate::layers::batchnorm::BnUpdate;
use crate::layers::conv::{Conv1d, Conv1dCache};
use crate::layers::pooling::{mean_axis_backward, mean_axis_forward, MaxPool1d, MaxPool2d, MaxPoolCache};
use crate::layers::res2::{DwsSeRes2Block, Res2BlockCache, Res2Config, ResNetStem, ResNetStemCache};
use crate::layers::sinc::{SincBank, SincCache};
use crate::layers::Mode;
use crate::param::{Grads, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::tfconv::{TfConvBlock, TfConvBlockCache, TfConvConfig};
use crate::Result;

/// Everything needed to build the network. All counts are per-layer
/// hyperparameters; `validate` names the offending field on bad input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Variant width: each TF-block branch gets `tau` channels, so the
    /// stack runs at `2·tau` channels.
    pub tau: usize,
    pub n_tf_blocks: usize,
    pub sinc_filters: usize,
    pub sinc_kernel_len: usize,
    /// Window/stride of the time max-pool right after the sinc frontend.
    pub sinc_pool: usize,
    /// (stem filters, SE-Res2 block filters).
    pub frontend_filters: (usize, usize),
    pub n_se_blocks: usize,
    pub res2_scale: usize,
    pub res2_dilation: usize,
    pub se_reduction: usize,
    /// Pool window after each frontend block: index 0 = stem, then one per
    /// SE-Res2 block (length must be `1 + n_se_blocks`).
    pub frontend_pool_schedule: Vec<(usize, usize)>,
    /// TF-block indices (1-based) after which a 2×2 stride-2 pool runs.
    pub pool_positions: BTreeSet<usize>,
    pub enable_freq_branch: bool,
    pub enable_time_branch: bool,
    pub enable_shuffle: bool,
    pub shuffle_groups: usize,
    pub sample_rate: u32,
    pub segment_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            tau: 32,
            n_tf_blocks: 9,
            sinc_filters: 70,
            sinc_kernel_len: 129,
            sinc_pool: 3,
            frontend_filters: (32, 64),
            n_se_blocks: 3,
            res2_scale: 4,
            res2_dilation: 2,
            se_reduction: 8,
            frontend_pool_schedule: vec![(1, 6), (1, 3), (1, 3), (1, 2)],
            pool_positions: BTreeSet::from([3, 6]),
            enable_freq_branch: true,
            enable_time_branch: true,
            enable_shuffle: true,
            shuffle_groups: 2,
            sample_rate: 16000,
            segment_len: 64000,
        }
    }
}

impl ModelConfig {
    /// Channel width of the TF-block stack.
    pub fn stack_width(&self) -> usize {
        2 * self.tau
    }

    /// Reduced configuration that trains in minutes on one CPU: smaller
    /// band-pass frontend, 1-second segments, 3 TF blocks.
    pub fn tiny() -> Self {
        ModelConfig {
            tau: 16,
            n_tf_blocks: 3,
            sinc_filters: 12,
            sinc_kernel_len: 33,
            frontend_filters: (8, 16),
            frontend_pool_schedule: vec![(1, 6), (1, 2), (1, 2), (1, 2)],
            pool_positions: BTreeSet::from([2]),
            segment_len: 16000,
            ..ModelConfig::default()
        }
    }

    /// Smallest config that still exercises every layer type once; used by
    /// gradient checks and the straight-line forward reference.
    pub fn micro() -> Self {
        ModelConfig {
            tau: 4,
            n_tf_blocks: 1,
            sinc_filters: 4,
            sinc_kernel_len: 17,
            sinc_pool: 3,
            frontend_filters: (8, 8),
            n_se_blocks: 0,
            frontend_pool_schedule: vec![(1, 3)],
            pool_positions: BTreeSet::new(),
            se_reduction: 2,
            segment_len: 2000,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::config(format!("{field}: {why}")));
        if self.tau == 0 {
            return bad("tau", "must be >= 1".into());
        }
        if self.n_tf_blocks == 0 {
            return bad("n_tf_blocks", "must be >= 1".into());
        }
        if self.sinc_filters == 0 {
            return bad("sinc_filters", "must be >= 1".into());
        }
        if self.sinc_kernel_len < 3 || self.sinc_kernel_len % 2 == 0 {
            return bad(
                "sinc_kernel_len",
                format!("must be an odd length >= 3, got {}", self.sinc_kernel_len),
            );
        }
        if self.sinc_pool == 0 {
            return bad("sinc_pool", "must be >= 1".into());
        }
        if self.frontend_filters.0 == 0 || self.frontend_filters.1 == 0 {
            return bad("frontend_filters", "both widths must be >= 1".into());
        }
        if self.res2_scale == 0 || self.frontend_filters.1 % self.res2_scale != 0 {
            return bad(
                "res2_scale",
                format!(
                    "SE-Res2 filters {} must be divisible by scale {}",
                    self.frontend_filters.1, self.res2_scale
                ),
            );
        }
        if self.frontend_pool_schedule.len() != 1 + self.n_se_blocks {
            return bad(
                "frontend_pool_schedule",
                format!(
                    "need {} windows (stem + {} SE-Res2 blocks), got {}",
                    1 + self.n_se_blocks,
                    self.n_se_blocks,
                    self.frontend_pool_schedule.len()
                ),
            );
        }
        if self
            .frontend_pool_schedule
            .iter()
            .any(|&(h, w)| h == 0 || w == 0)
        {
            return bad("frontend_pool_schedule", "windows must be >= 1".into());
        }
        for &p in &self.pool_positions {
            if p == 0 || p > self.n_tf_blocks {
                return bad(
                    "pool_positions",
                    format!("position {p} outside 1..={}", self.n_tf_blocks),
                );
            }
        }
        if !self.enable_freq_branch && !self.enable_time_branch {
            return bad(
                "enable_freq_branch/enable_time_branch",
                "at least one branch must be enabled".into(),
            );
        }
        if self.enable_shuffle
            && (self.shuffle_groups == 0 || self.stack_width() % self.shuffle_groups != 0)
        {
            return bad(
                "shuffle_groups",
                format!(
                    "stack width {} not divisible into {} groups",
                    self.stack_width(),
                    self.shuffle_groups
                ),
            );
        }
        if self.sample_rate == 0 {
            return bad("sample_rate", "must be positive".into());
        }
        if self.segment_len < self.sinc_kernel_len {
            return bad(
                "segment_len",
                format!(
                    "{} is shorter than the sinc kernel ({})",
                    self.segment_len, self.sinc_kernel_len
                ),
            );
        }
        Ok(())
    }

    /// Canonical one-line rendering of every field, hashed into checkpoint
    /// fingerprints so a checkpoint can only be loaded into the same
    /// architecture.
    pub fn fingerprint_string(&self) -> String {
        let pools: Vec<String> = self
            .frontend_pool_schedule
            .iter()
            .map(|&(h, w)| format!("{h}x{w}"))
            .collect();
        let positions: Vec<String> = self.pool_positions.iter().map(|p| p.to_string()).collect();
        format!(
            "tau={};n_tf_blocks={};sinc_filters={};sinc_kernel_len={};sinc_pool={};\
             frontend_filters={},{};n_se_blocks={};res2_scale={};res2_dilation={};\
             se_reduction={};frontend_pool_schedule={};pool_positions={};\
             freq_branch={};time_branch={};shuffle={};shuffle_groups={};\
             sample_rate={};segment_len={}",
            self.tau,
            self.n_tf_blocks,
            self.sinc_filters,
            self.sinc_kernel_len,
            self.sinc_pool,
            self.frontend_filters.0,
            self.frontend_filters.1,
            self.n_se_blocks,
            self.res2_scale,
            self.res2_dilation,
            self.se_reduction,
            pools.join("|"),
            positions.join("|"),
            self.enable_freq_branch,
            self.enable_time_branch,
            self.enable_shuffle,
            self.shuffle_groups,
            self.sample_rate,
            self.segment_len,
        )
    }
}

/// A built network: the parameter store plus the layer graph.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub ps: ParamStore,
    pub sinc: SincBank,
    pub sinc_pool: MaxPool1d,
    pub stem: ResNetStem,
    pub se_blocks: Vec<DwsSeRes2Block>,
    pub tf_blocks: Vec<TfConvBlock>,
    /// One entry per TF block: the pool applied after it, if any.
    pub tf_pools: Vec<Option<MaxPool2d>>,
    pub classifier: Conv1d,
}

/// All forward intermediates needed by `backward`.
#[derive(Debug)]
pub struct ModelCache {
    sinc: SincCache,
    abs: Tensor,
    sinc_pool: MaxPoolCache,
    stem: ResNetStemCache,
    se: Vec<Res2BlockCache>,
    tf: Vec<(TfConvBlockCache, Option<MaxPoolCache>)>,
    /// Shape of the map entering the frequency mean.
    pre_freq_pool_shape: Vec<usize>,
    cls: Conv1dCache,
    /// Shape of the map entering the time mean (`[2, T]`).
    pre_time_pool_shape: Vec<usize>,
}

impl Model {
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let mut ps = ParamStore::new();
        let mut rng = Rng::new(seed);
        let sinc = SincBank::new(
            &mut ps,
            "sinc",
            cfg.sinc_filters,
            cfg.sinc_kernel_len,
            cfg.sample_rate as f64,
            &mut rng,
        )?;
        let stem = ResNetStem::new(
            &mut ps,
            "stem",
            cfg.frontend_filters.0,
            cfg.frontend_pool_schedule[0],
            &mut rng,
        )?;
        let mut se_blocks = Vec::new();
        let mut channels = cfg.frontend_filters.0;
        for i in 0..cfg.n_se_blocks {
            let block = DwsSeRes2Block::new(
                &mut ps,
                format!("se_res2_{}", i + 1),
                Res2Config {
                    in_channels: channels,
                    filters: cfg.frontend_filters.1,
                    scale: cfg.res2_scale,
                    dilation: cfg.res2_dilation,
                    se_reduction: cfg.se_reduction,
                    pool: cfg.frontend_pool_schedule[i + 1],
                },
                &mut rng,
            )?;
            channels = cfg.frontend_filters.1;
            se_blocks.push(block);
        }
        let width = cfg.stack_width();
        let mut tf_blocks = Vec::new();
        let mut tf_pools = Vec::new();
        for i in 0..cfg.n_tf_blocks {
            let in_channels = if i == 0 { channels } else { width };
            tf_blocks.push(TfConvBlock::new(
                &mut ps,
                format!("tf_{}", i + 1),
                TfConvConfig {
                    in_channels,
                    out_channels: width,
                    enable_freq_branch: cfg.enable_freq_branch,
                    enable_time_branch: cfg.enable_time_branch,
                    enable_shuffle: cfg.enable_shuffle,
                    shuffle_groups: cfg.shuffle_groups,
                },
                &mut rng,
            )?);
            tf_pools.push(if cfg.pool_positions.contains(&(i + 1)) {
                Some(MaxPool2d::new((2, 2), (2, 2)))
            } else {
                None
            });
        }
        let classifier = Conv1d::new(&mut ps, "classifier", width, 2, 1, 1, 0, true, &mut rng)?;
        Ok(Model {
            cfg: cfg.clone(),
            ps,
            sinc,
            sinc_pool: MaxPool1d::new(cfg.sinc_pool, cfg.sinc_pool),
            stem,
            se_blocks,
            tf_blocks,
            tf_pools,
            classifier,
        })
    }

    fn check_wave(&self, wave: &Tensor) -> Result<()> {
        if wave.shape() != [self.cfg.segment_len] {
            return Err(Error::dim(format!(
                "expected a wave of {} samples, got shape {:?}",
                self.cfg.segment_len,
                wave.shape()
            )));
        }
        Ok(())
    }

    /// Training/eval forward with caches. Batch-norm running-stat updates
    /// are returned, not applied; the caller applies them in sample order.
    pub fn forward_utterance(
        &self,
        wave: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, ModelCache, Vec<BnUpdate>)> {
        self.check_wave(wave)?;
        let mut updates = Vec::new();
        let (y, sinc_c) = self.sinc.forward(&self.ps, wave)?;
        let (y, abs_c) = abs_forward(&y);
        let (y, pool_c) = self.sinc_pool.forward(&y)?;
        let (f, t) = (y.shape()[0], y.shape()[1]);
        let y = y.reshape(&[1, f, t])?;
        let (mut y, stem_c) = self.stem.forward(&self.ps, &y, mode, &mut updates)?;
        let mut se_caches = Vec::new();
        for block in &self.se_blocks {
            let (next, c) = block.forward(&self.ps, &y, mode, &mut updates)?;
            y = next;
            se_caches.push(c);
        }
        let mut tf_caches = Vec::new();
        for (block, pool) in self.tf_blocks.iter().zip(&self.tf_pools) {
            let (next, c) = block.forward(&self.ps, &y, mode, &mut updates)?;
            y = next;
            let pool_cache = match pool {
                Some(p) => {
                    let (pooled, pc) = p.forward(&y)?;
                    y = pooled;
                    Some(pc)
                }
                None => None,
            };
            tf_caches.push((c, pool_cache));
        }
        let pre_freq_pool_shape = y.shape().to_vec();
        let y = mean_axis_forward(&y, 1)?; // [C, 1, T]
        let (c, t) = (y.shape()[0], y.shape()[2]);
        let y = y.reshape(&[c, t])?;
        let (y, cls_c) = self.classifier.forward(&self.ps, &y)?;
        let pre_time_pool_shape = y.shape().to_vec();
        let logits = mean_axis_forward(&y, 1)?.reshape(&[2])?;
        Ok((
            logits,
            ModelCache {
                sinc: sinc_c,
                abs: abs_c,
                sinc_pool: pool_c,
                stem: stem_c,
                se: se_caches,
                tf: tf_caches,
                pre_freq_pool_shape,
                cls: cls_c,
                pre_time_pool_shape,
            },
            updates,
        ))
    }

    /// Deterministic eval forward without caches (BN running stats).
    pub fn infer_utterance(&self, wave: &Tensor) -> Result<Tensor> {
        self.check_wave(wave)?;
        let y = self.sinc.infer(&self.ps, wave)?;
        let y = y.map(f64::abs);
        let y = self.sinc_pool.infer(&y)?;
        let (f, t) = (y.shape()[0], y.shape()[1]);
        let mut y = self.stem.infer(&self.ps, &y.reshape(&[1, f, t])?)?;
        for block in &self.se_blocks {
            y = block.infer(&self.ps, &y)?;
        }
        for (block, pool) in self.tf_blocks.iter().zip(&self.tf_pools) {
            y = block.infer(&self.ps, &y)?;
            if let Some(p) = pool {
                y = p.infer(&y)?;
            }
        }
        let y = mean_axis_forward(&y, 1)?;
        let (c, t) = (y.shape()[0], y.shape()[2]);
        let y = self.classifier.infer(&self.ps, &y.reshape(&[c, t])?)?;
        mean_axis_forward(&y, 1)?.reshape(&[2])
    }

    /// Accumulate parameter gradients for one utterance. Returns the wave
    /// gradient (rarely needed; useful for diagnostics).
    pub fn backward(
        &self,
        cache: &ModelCache,
        dlogits: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let dy = dlogits.reshape(&[2, 1])?;
        let dy = mean_axis_backward(&dy, &cache.pre_time_pool_shape, 1, grads);
        let dy = self
            .classifier
            .backward(&self.ps, &cache.cls, &dy, grads)?;
        let (c, t) = (dy.shape()[0], dy.shape()[1]);
        let dy = dy.reshape(&[c, 1, t])?;
        let mut dy = mean_axis_backward(&dy, &cache.pre_freq_pool_shape, 1, grads);
        for i in (0..self.tf_blocks.len()).rev() {
            let (block_c, pool_c) = &cache.tf[i];
            if let (Some(pool), Some(pc)) = (&self.tf_pools[i], pool_c) {
                dy = pool.backward(pc, &dy)?;
            }
            dy = self.tf_blocks[i].backward(&self.ps, block_c, &dy, grads)?;
        }
        for i in (0..self.se_blocks.len()).rev() {
            dy = self.se_blocks[i].backward(&self.ps, &cache.se[i], &dy, grads)?;
        }
        let dy = self.stem.backward(&self.ps, &cache.stem, &dy, grads)?;
        let (f, t) = (dy.shape()[1], dy.shape()[2]);
        let dy = dy.reshape(&[f, t])?;
        let dy = self.sinc_pool.backward(&cache.sinc_pool, &dy)?;
        let dy = abs_backward(&dy, &cache.abs);
        self.sinc.backward(&self.ps, &cache.sinc, &dy, grads)
    }

    /// Apply deferred batch-norm running-stat updates in collection order.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate]) {
        for u in updates {
            u.apply(&mut self.ps);
        }
    }
}

/// Detection score: bonafide logit minus spoof logit.
pub fn score_from_logits(logits: &Tensor) -> f64 {
    logits.data()[1] - logits.data()[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;

    #[test]
    fn default_config_validates() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
    }

    #[test]
    fn validation_names_offending_field() {
        let mut cfg = ModelConfig::default();
        cfg.pool_positions = BTreeSet::from([99]);
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err}").contains("pool_positions"), "{err}");

        let mut cfg = ModelConfig::default();
        cfg.segment_len = 10;
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err}").contains("segment_len"), "{err}");

        let mut cfg = ModelConfig::default();
        cfg.enable_freq_branch = false;
        cfg.enable_time_branch = false;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn width_grows_with_tau_and_counts_are_monotone() {
        let m16 = Model::build(
            &ModelConfig {
                tau: 16,
                ..ModelConfig::default()
            },
            7,
        )
        .unwrap();
        let m32 = Model::build(&ModelConfig::default(), 7).unwrap();
        assert!(m32.ps.n_trainable_scalars() > m16.ps.n_trainable_scalars());
    }

    #[test]
    fn same_seed_builds_identical_parameters() {
        let cfg = ModelConfig::micro();
        let a = Model::build(&cfg, 42).unwrap();
        let b = Model::build(&cfg, 42).unwrap();
        assert_eq!(a.ps.len(), b.ps.len());
        for id in a.ps.ids() {
            assert_eq!(a.ps.get(id).data(), b.ps.get(id).data());
        }
    }

    #[test]
    fn eval_forward_is_deterministic_and_finite() {
        let cfg = ModelConfig::micro();
        let model = Model::build(&cfg, 3).unwrap();
        let mut rng = Rng::new(11);
        let wave = rng.uniform_tensor(&[cfg.segment_len], -0.5, 0.5);
        let a = model.infer_utterance(&wave).unwrap();
        let b = model.infer_utterance(&wave).unwrap();
        assert_eq!(a.shape(), &[2]);
        assert_eq!(a.data(), b.data());
        assert!(score_from_logits(&a).is_finite());
    }

    #[test]
    fn eval_mode_forward_matches_infer() {
        let cfg = ModelConfig::micro();
        let model = Model::build(&cfg, 5).unwrap();
        let mut rng = Rng::new(12);
        let wave = rng.uniform_tensor(&[cfg.segment_len], -0.5, 0.5);
        let (logits, _, updates) = model.forward_utterance(&wave, Mode::Eval).unwrap();
        assert!(updates.is_empty());
        let direct = model.infer_utterance(&wave).unwrap();
        assert!(max_abs_diff(&logits, &direct) < 1e-12);
    }

    #[test]
    fn wrong_wave_length_is_dim_error() {
        let model = Model::build(&ModelConfig::micro(), 1).unwrap();
        let wave = Tensor::zeros(&[123]);
        assert!(matches!(
            model.infer_utterance(&wave),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn fingerprint_changes_with_architecture() {
        let a = ModelConfig::default().fingerprint_string();
        let b = ModelConfig {
            tau: 16,
            ..ModelConfig::default()
        }
        .fingerprint_string();
        assert_ne!(a, b);
        assert_eq!(a, ModelConfig::default().fingerprint_string());
    }

    #[test]
    fn train_mode_produces_bn_updates_and_grads_flow() {
        let cfg = ModelConfig::micro();
        let mut model = Model::build(&cfg, 9).unwrap();
        let mut rng = Rng::new(13);
        let wave = rng.uniform_tensor(&[cfg.segment_len], -0.5, 0.5);
        let (logits, cache, updates) = model.forward_utterance(&wave, Mode::Train).unwrap();
        assert!(!updates.is_empty());
        let mut grads = Grads::zeros_like(&model.ps);
        let dlogits = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        model.backward(&cache, &dlogits, &mut grads).unwrap();
        // every trainable parameter should receive some gradient signal
        let mut nonzero = 0usize;
        let mut total = 0usize;
        for id in model.ps.ids() {
            if model.ps.entry(id).trainable {
                total += 1;
                if grads.get(id).data().iter().any(|&g| g != 0.0) {
                    nonzero += 1;
                }
            }
        }
        assert!(
            nonzero * 10 >= total * 9,
            "only {nonzero}/{total} trainable tensors saw gradient"
        );
        model.apply_bn_updates(&updates);
        assert!(logits.data().iter().all(|v| v.is_finite()));
    }
}
