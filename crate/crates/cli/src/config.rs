//! Flat dotted-key run configuration.
//!
//! A run is described by a fixed schema of `section.key` entries. Values come
//! from, in increasing precedence: built-in defaults, a TOML config file
//! (two-level tables whose leaves map onto the dotted keys), and command-line
//! flags named exactly like the keys (`--model.tau 16`). [`Config::render`]
//! writes the resolved configuration back as TOML that parses to the same
//! values, so the file dropped into a run directory is itself a valid input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rawtfnet::audio::AugmentConfig;
use rawtfnet::model::ModelConfig;
use rawtfnet::train::{AdamConfig, TrainConfig};
use rawtfnet::{Error, Result};

/// Value kinds a key can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfgKind {
    Int,
    Float,
    Bool,
    Str,
}

impl CfgKind {
    fn name(self) -> &'static str {
        match self {
            CfgKind::Int => "integer",
            CfgKind::Float => "float",
            CfgKind::Bool => "bool",
            CfgKind::Str => "string",
        }
    }
}

/// A resolved configuration value.
#[derive(Debug, Clone, PartialEq)]
pub enum CfgValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

/// One schema entry: dotted key, kind, default (in the same syntax the CLI
/// accepts), and help text for `--help`.
pub struct SchemaEntry {
    pub key: &'static str,
    pub kind: CfgKind,
    pub default: &'static str,
    pub help: &'static str,
}

macro_rules! entry {
    ($key:literal, $kind:ident, $default:literal, $help:literal) => {
        SchemaEntry {
            key: $key,
            kind: CfgKind::$kind,
            default: $default,
            help: $help,
        }
    };
}

/// Every recognized configuration key. Sections: `model` (architecture),
/// `augment` (training-time waveform augmentation), `optim` (Adam),
/// `train` (loop hyperparameters), `data` (corpus locations and outputs).
pub const SCHEMA: &[SchemaEntry] = &[
    // model
    entry!("model.tau", Int, "32", "per-branch channel width; the trunk runs at 2*tau"),
    entry!("model.n_tf_blocks", Int, "9", "number of time-frequency blocks"),
    entry!("model.sinc_filters", Int, "70", "learnable band-pass filters in the frontend"),
    entry!("model.sinc_kernel_len", Int, "129", "sinc filter kernel length (odd)"),
    entry!("model.sinc_pool", Int, "3", "max-pool window/stride after the sinc frontend"),
    entry!("model.stem_filters", Int, "32", "stem block output channels"),
    entry!("model.res2_filters", Int, "64", "SE-Res2 block output channels"),
    entry!("model.n_se_blocks", Int, "3", "number of SE-Res2 frontend blocks"),
    entry!("model.res2_scale", Int, "4", "Res2 hierarchical split count"),
    entry!("model.res2_dilation", Int, "2", "dilation of the Res2 3x3 convolutions"),
    entry!("model.se_reduction", Int, "8", "squeeze-excitation bottleneck reduction"),
    entry!(
        "model.pool_schedule",
        Str,
        "1x6,1x3,1x3,1x2",
        "FxT pool windows after the stem and each SE-Res2 block (count = 1 + n_se_blocks)"
    ),
    entry!(
        "model.tf_pool_positions",
        Str,
        "3,6",
        "1-based TF-block indices followed by a 2x2 stride-2 pool"
    ),
    entry!("model.enable_freq_branch", Bool, "true", "keep the frequency branch"),
    entry!("model.enable_time_branch", Bool, "true", "keep the temporal branch"),
    entry!("model.enable_shuffle", Bool, "true", "keep the channel shuffle"),
    entry!("model.shuffle_groups", Int, "2", "channel shuffle group count"),
    entry!("model.sample_rate", Int, "16000", "expected audio sample rate (Hz)"),
    entry!("model.segment_len", Int, "64000", "fixed training/scoring segment length (samples)"),
    // augment
    entry!("augment.convolutive", Bool, "true", "apply the convolutive (notched filter) stage"),
    entry!("augment.impulsive", Bool, "true", "apply the impulsive noise stage"),
    entry!("augment.stationary", Bool, "true", "apply the stationary additive noise stage"),
    entry!("augment.n_notch_bands", Int, "5", "notch dips in the convolutive filter"),
    entry!("augment.notch_width_hz_min", Float, "20.0", "minimum notch width (Hz)"),
    entry!("augment.notch_width_hz_max", Float, "1000.0", "maximum notch width (Hz)"),
    entry!("augment.impulses_per_1000_min", Float, "0.0", "minimum impulses per 1000 samples"),
    entry!("augment.impulses_per_1000_max", Float, "10.0", "maximum impulses per 1000 samples"),
    entry!("augment.snr_db_min", Float, "10.0", "minimum stationary-noise SNR (dB)"),
    entry!("augment.snr_db_max", Float, "40.0", "maximum stationary-noise SNR (dB)"),
    // optim
    entry!("optim.lr", Float, "1e-4", "Adam learning rate"),
    entry!("optim.beta1", Float, "0.9", "Adam first-moment decay"),
    entry!("optim.beta2", Float, "0.999", "Adam second-moment decay"),
    entry!("optim.eps", Float, "1e-8", "Adam denominator epsilon"),
    entry!("optim.weight_decay", Float, "1e-4", "decoupled weight decay"),
    // train
    entry!("train.epochs", Int, "100", "training epochs"),
    entry!("train.batch_size", Int, "32", "utterances per batch"),
    entry!("train.seed", Int, "1", "run seed (initialization, shuffling, augmentation)"),
    entry!("train.top_k", Int, "5", "checkpoints averaged into the final model"),
    entry!("train.class_weight_bonafide", Float, "0.1", "cross-entropy weight for bonafide"),
    entry!("train.class_weight_spoof", Float, "0.9", "cross-entropy weight for spoof"),
    // data
    entry!("data.audio_root", Str, "", "directory holding the WAV files"),
    entry!("data.train_protocol", Str, "", "training trial list"),
    entry!("data.dev_protocol", Str, "", "validation trial list"),
    entry!("data.out_dir", Str, "run", "output directory (checkpoints, log, resolved config)"),
    entry!(
        "data.path_template",
        Str,
        "",
        "audio path template with an {utt} placeholder; empty = {utt}.wav"
    ),
];

fn schema_entry(key: &str) -> Option<&'static SchemaEntry> {
    SCHEMA.iter().find(|e| e.key == key)
}

/// Parse one value in the syntax shared by defaults, CLI flags, and strings.
fn parse_value(kind: CfgKind, raw: &str, key: &str) -> Result<CfgValue> {
    match kind {
        CfgKind::Int => raw
            .parse::<i64>()
            .map(CfgValue::Int)
            .map_err(|_| Error::config(format!("{key}: expected an integer, got `{raw}`"))),
        CfgKind::Float => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(CfgValue::Float)
            .ok_or_else(|| Error::config(format!("{key}: expected a finite float, got `{raw}`"))),
        CfgKind::Bool => match raw {
            "true" => Ok(CfgValue::Bool(true)),
            "false" => Ok(CfgValue::Bool(false)),
            _ => Err(Error::config(format!(
                "{key}: expected `true` or `false`, got `{raw}`"
            ))),
        },
        CfgKind::Str => Ok(CfgValue::Str(raw.to_string())),
    }
}

/// A fully resolved run configuration: one value per schema key.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, CfgValue>,
}

impl Default for Config {
    fn default() -> Self {
        let mut values = BTreeMap::new();
        for e in SCHEMA {
            let v = parse_value(e.kind, e.default, e.key)
                .expect("schema defaults must parse under their own kind");
            values.insert(e.key, v);
        }
        Config { values }
    }
}

impl Config {
    /// Override one key from its string form (CLI flag or file scalar).
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let entry = schema_entry(key)
            .ok_or_else(|| Error::config(format!("unknown configuration key `{key}`")))?;
        let v = parse_value(entry.kind, raw, key)?;
        self.values.insert(entry.key, v);
        Ok(())
    }

    /// Override one key from a parsed TOML scalar. Integers are accepted for
    /// float keys (`lr = 0` means 0.0); everything else must match the kind.
    fn set_toml(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        let entry = schema_entry(key)
            .ok_or_else(|| Error::config(format!("unknown configuration key `{key}`")))?;
        let v = match (entry.kind, value) {
            (CfgKind::Int, toml::Value::Integer(i)) => CfgValue::Int(*i),
            (CfgKind::Float, toml::Value::Float(f)) if f.is_finite() => CfgValue::Float(*f),
            (CfgKind::Float, toml::Value::Integer(i)) => CfgValue::Float(*i as f64),
            (CfgKind::Bool, toml::Value::Boolean(b)) => CfgValue::Bool(*b),
            (CfgKind::Str, toml::Value::String(s)) => CfgValue::Str(s.clone()),
            _ => {
                return Err(Error::config(format!(
                    "{key}: expected a {}, got `{value}`",
                    entry.kind.name()
                )))
            }
        };
        self.values.insert(entry.key, v);
        Ok(())
    }

    /// Merge a TOML config file over the current values. The file holds
    /// two-level tables (`[model]`, `[train]`, ...) whose leaves map onto the
    /// dotted keys; unknown sections or keys are configuration errors.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        self.apply_toml_str(&text, &path.display().to_string())
    }

    /// Merge TOML text over the current values (see [`Config::apply_file`]).
    pub fn apply_toml_str(&mut self, text: &str, source: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::config(format!("{source}: {e}")))?;
        for (section, node) in &table {
            let sub = node.as_table().ok_or_else(|| {
                Error::config(format!(
                    "{source}: `{section}` must be a table of settings, got `{node}`"
                ))
            })?;
            for (leaf, value) in sub {
                let key = format!("{section}.{leaf}");
                self.set_toml(&key, value)
                    .map_err(|e| Error::config(format!("{source}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Render as TOML. Parsing the output with [`Config::apply_toml_str`]
    /// reproduces the same values (round-trip).
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, v) in &self.values {
            let (sec, leaf) = key.split_once('.').expect("schema keys are dotted");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let rendered = match v {
                CfgValue::Int(i) => i.to_string(),
                // {:?} prints the shortest representation that parses back to
                // the same f64, always with a `.` or exponent (valid TOML).
                CfgValue::Float(f) => format!("{f:?}"),
                CfgValue::Bool(b) => b.to_string(),
                CfgValue::Str(s) => {
                    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
                }
            };
            let _ = writeln!(out, "{leaf} = {rendered}");
        }
        out
    }

    fn value(&self, key: &str) -> &CfgValue {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key `{key}` is not in the schema"))
    }

    pub fn get_i64(&self, key: &str) -> i64 {
        match self.value(key) {
            CfgValue::Int(i) => *i,
            other => panic!("key `{key}` is not an integer: {other:?}"),
        }
    }

    pub fn get_f64(&self, key: &str) -> f64 {
        match self.value(key) {
            CfgValue::Float(f) => *f,
            other => panic!("key `{key}` is not a float: {other:?}"),
        }
    }

    pub fn get_bool(&self, key: &str) -> bool {
        match self.value(key) {
            CfgValue::Bool(b) => *b,
            other => panic!("key `{key}` is not a bool: {other:?}"),
        }
    }

    pub fn get_str(&self, key: &str) -> &str {
        match self.value(key) {
            CfgValue::Str(s) => s,
            other => panic!("key `{key}` is not a string: {other:?}"),
        }
    }

    /// Integer key checked to be nonnegative and in `usize` range.
    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get_i64(key);
        usize::try_from(v)
            .map_err(|_| Error::config(format!("{key}: expected a nonnegative integer, got {v}")))
    }

    /// Build the architecture description from the `model.*` keys.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let sample_rate = self.get_i64("model.sample_rate");
        let sample_rate = u32::try_from(sample_rate).map_err(|_| {
            Error::config(format!(
                "model.sample_rate: expected a positive integer, got {sample_rate}"
            ))
        })?;
        Ok(ModelConfig {
            tau: self.get_usize("model.tau")?,
            n_tf_blocks: self.get_usize("model.n_tf_blocks")?,
            sinc_filters: self.get_usize("model.sinc_filters")?,
            sinc_kernel_len: self.get_usize("model.sinc_kernel_len")?,
            sinc_pool: self.get_usize("model.sinc_pool")?,
            frontend_filters: (
                self.get_usize("model.stem_filters")?,
                self.get_usize("model.res2_filters")?,
            ),
            n_se_blocks: self.get_usize("model.n_se_blocks")?,
            res2_scale: self.get_usize("model.res2_scale")?,
            res2_dilation: self.get_usize("model.res2_dilation")?,
            se_reduction: self.get_usize("model.se_reduction")?,
            frontend_pool_schedule: parse_pool_schedule(self.get_str("model.pool_schedule"))?,
            pool_positions: parse_positions(self.get_str("model.tf_pool_positions"))?,
            enable_freq_branch: self.get_bool("model.enable_freq_branch"),
            enable_time_branch: self.get_bool("model.enable_time_branch"),
            enable_shuffle: self.get_bool("model.enable_shuffle"),
            shuffle_groups: self.get_usize("model.shuffle_groups")?,
            sample_rate,
            segment_len: self.get_usize("model.segment_len")?,
        })
    }

    /// Build the augmentation settings from the `augment.*` keys.
    pub fn augment_config(&self) -> Result<AugmentConfig> {
        Ok(AugmentConfig {
            convolutive: self.get_bool("augment.convolutive"),
            impulsive: self.get_bool("augment.impulsive"),
            stationary: self.get_bool("augment.stationary"),
            n_notch_bands: self.get_usize("augment.n_notch_bands")?,
            notch_width_hz: (
                self.get_f64("augment.notch_width_hz_min"),
                self.get_f64("augment.notch_width_hz_max"),
            ),
            impulses_per_1000: (
                self.get_f64("augment.impulses_per_1000_min"),
                self.get_f64("augment.impulses_per_1000_max"),
            ),
            snr_db: (
                self.get_f64("augment.snr_db_min"),
                self.get_f64("augment.snr_db_max"),
            ),
        })
    }

    /// Build the optimizer settings from the `optim.*` keys.
    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.get_f64("optim.lr"),
            beta1: self.get_f64("optim.beta1"),
            beta2: self.get_f64("optim.beta2"),
            eps: self.get_f64("optim.eps"),
            weight_decay: self.get_f64("optim.weight_decay"),
        }
    }

    /// Build the training-loop settings from the `train.*` keys.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let seed = self.get_i64("train.seed");
        let seed = u64::try_from(seed).map_err(|_| {
            Error::config(format!("train.seed: expected a nonnegative integer, got {seed}"))
        })?;
        Ok(TrainConfig {
            epochs: self.get_usize("train.epochs")?,
            batch_size: self.get_usize("train.batch_size")?,
            optim: self.adam_config(),
            class_weights: (
                self.get_f64("train.class_weight_bonafide"),
                self.get_f64("train.class_weight_spoof"),
            ),
            augment: self.augment_config()?,
            seed,
            checkpoint_top_k: self.get_usize("train.top_k")?,
        })
    }

    /// `data.path_template` with empty meaning "use the default".
    pub fn path_template(&self) -> Option<&str> {
        let t = self.get_str("data.path_template");
        if t.is_empty() {
            None
        } else {
            Some(t)
        }
    }
}

/// Parse a pool schedule like `"1x6,1x3,1x3,1x2"` into (F, T) windows.
pub fn parse_pool_schedule(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (f, t) = part.split_once(['x', 'X']).ok_or_else(|| {
            Error::config(format!(
                "model.pool_schedule: expected FxT entries like `1x6`, got `{part}`"
            ))
        })?;
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| {
                Error::config(format!(
                    "model.pool_schedule: expected positive integers in `{part}`"
                ))
            })
        };
        out.push((parse(f)?, parse(t)?));
    }
    Ok(out)
}

/// Parse 1-based block positions like `"3,6"`. Empty means "no pools".
pub fn parse_positions(text: &str) -> Result<BTreeSet<usize>> {
    let mut out = BTreeSet::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v = part.parse::<usize>().map_err(|_| {
            Error::config(format!(
                "model.tf_pool_positions: expected integers like `3,6`, got `{part}`"
            ))
        })?;
        out.insert(v);
    }
    Ok(out)
}
