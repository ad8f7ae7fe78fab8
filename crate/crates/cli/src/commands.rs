//! Subcommand implementations. Each returns the process exit code on the
//! success path (`0`, or `1` for a partial scoring run); errors bubble up as
//! [`rawtfnet::Error`] and are mapped to exit codes in `main`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ArgMatches;

use rawtfnet::audio::{parse_protocol, read_wav, resolve_audio_path, Label};
use rawtfnet::complexity::analyze;
use rawtfnet::metrics::{
    compute_eer, compute_min_tdcf, duration_bucketed_eer, render_buckets_machine,
    render_buckets_table, LabeledScore, ScoreSet, TdcfCosts, DEFAULT_BUCKET_EDGES_S,
};
use rawtfnet::model::Model;
use rawtfnet::synth::{generate_dataset, SynthConfig};
use rawtfnet::train::{
    fit, parse_score_file, score_entries, write_score_file, Checkpoint, DataSource,
};
use rawtfnet::{Error, Result};

use crate::config::{Config, SCHEMA};

/// String value of a flag, `None` when absent or not defined on this command.
fn flag_value(m: &ArgMatches, id: &str) -> Option<String> {
    m.try_get_one::<String>(id).ok().flatten().cloned()
}

/// True when a boolean flag is present (and defined on this command).
fn flag_set(m: &ArgMatches, id: &str) -> bool {
    m.try_get_one::<bool>(id)
        .ok()
        .flatten()
        .copied()
        .unwrap_or(false)
}

fn parse_usize(raw: &str, what: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|_| Error::config(format!("{what}: expected a nonnegative integer, got `{raw}`")))
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config(format!("{what}: `{s}` is not a finite number")))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Resolve the configuration for this invocation: defaults, then the
/// `--config` file, then dotted-key flags, then the convenience aliases
/// (`--epochs`, `--lr`, `--seed`) and ablation switches.
pub fn resolve_config(m: &ArgMatches) -> Result<Config> {
    resolve_config_with(m, None)
}

/// Like [`resolve_config`], but when `--config` is absent falls back to
/// `fallback` if that file exists (used by `score` to pick up the
/// `config.toml` that `train` writes next to its checkpoints).
fn resolve_config_with(m: &ArgMatches, fallback: Option<&Path>) -> Result<Config> {
    let mut cfg = Config::default();
    match flag_value(m, "config") {
        Some(path) => cfg.apply_file(Path::new(&path))?,
        None => {
            if let Some(p) = fallback.filter(|p| p.is_file()) {
                cfg.apply_file(p)?;
            }
        }
    }
    for e in SCHEMA {
        if let Some(raw) = flag_value(m, e.key) {
            cfg.set_str(e.key, &raw)?;
        }
    }
    for (alias, key) in [
        ("epochs", "train.epochs"),
        ("lr", "optim.lr"),
        ("seed", "train.seed"),
    ] {
        if let Some(raw) = flag_value(m, alias) {
            cfg.set_str(key, &raw)?;
        }
    }
    for (flag, key) in [
        ("no-freq-branch", "model.enable_freq_branch"),
        ("no-time-branch", "model.enable_time_branch"),
        ("no-shuffle", "model.enable_shuffle"),
    ] {
        if flag_set(m, flag) {
            cfg.set_str(key, "false")?;
        }
    }
    Ok(cfg)
}

/// Size the global worker pool when `--threads` is given. Scoring and
/// training results do not depend on the pool size; only wall time does.
fn configure_threads(m: &ArgMatches) -> Result<()> {
    if let Some(raw) = flag_value(m, "threads") {
        let n = parse_usize(&raw, "--threads")?;
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::state(format!("worker pool already initialized: {e}")))?;
    }
    Ok(())
}

/// `required` path flag (clap enforces presence).
fn required<'a>(m: &'a ArgMatches, id: &str) -> &'a str {
    m.get_one::<String>(id).expect("flag is declared required")
}

fn check_exists(key: &str, val: &str, want_dir: bool) -> Result<()> {
    if val.is_empty() {
        return Err(Error::config(format!("{key} must be set")));
    }
    let p = Path::new(val);
    if want_dir && !p.is_dir() {
        return Err(Error::config(format!("{key}: `{val}` is not a directory")));
    }
    if !want_dir && !p.is_file() {
        return Err(Error::config(format!("{key}: `{val}` does not exist")));
    }
    Ok(())
}

pub fn cmd_train(m: &ArgMatches) -> Result<i32> {
    configure_threads(m)?;
    let cfg = resolve_config(m)?;
    let model_cfg = cfg.model_config()?;
    let tcfg = cfg.train_config()?;
    tcfg.validate()?;

    let audio_root = cfg.get_str("data.audio_root").to_string();
    let train_protocol = cfg.get_str("data.train_protocol").to_string();
    let dev_protocol = cfg.get_str("data.dev_protocol").to_string();
    check_exists("data.audio_root", &audio_root, true)?;
    check_exists("data.train_protocol", &train_protocol, false)?;
    check_exists("data.dev_protocol", &dev_protocol, false)?;

    let train_entries = parse_protocol(&train_protocol)?;
    let dev_entries = parse_protocol(&dev_protocol)?;
    let audio_root = PathBuf::from(audio_root);
    let template = cfg.path_template();
    let train_src = DataSource {
        entries: &train_entries,
        audio_root: &audio_root,
        path_template: template,
    };
    let dev_src = DataSource {
        entries: &dev_entries,
        audio_root: &audio_root,
        path_template: template,
    };

    let out_dir = PathBuf::from(cfg.get_str("data.out_dir"));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    // the resolved configuration is itself a valid input for a rerun
    write_text(&out_dir.join("config.toml"), &cfg.render())?;

    let mut model = Model::build(&model_cfg, tcfg.seed)?;
    let mut log_lines: Vec<String> = Vec::new();
    let report = fit(&mut model, &train_src, &dev_src, &tcfg, &out_dir, &mut |line| {
        println!("{line}");
        log_lines.push(line.to_string());
    })?;
    let mut log_text = log_lines.join("\n");
    log_text.push('\n');
    write_text(&out_dir.join("train.log"), &log_text)?;

    println!(
        "finished {} epoch(s); averaged model val_{} {:.6}; artifacts in {}",
        report.epochs.len(),
        report.final_val.kind(),
        report.final_val.value(),
        out_dir.display()
    );
    Ok(0)
}

pub fn cmd_score(m: &ArgMatches) -> Result<i32> {
    configure_threads(m)?;
    let ckpt_path = required(m, "model");
    // The fingerprint check below still guards against a stale or
    // mismatched fallback config.
    let sibling = Path::new(ckpt_path).with_file_name("config.toml");
    let cfg = resolve_config_with(m, Some(&sibling))?;
    let model_cfg = cfg.model_config()?;
    let protocol = required(m, "protocol");
    let audio_root = PathBuf::from(required(m, "audio-root"));
    let out = required(m, "out");
    let template = flag_value(m, "template");

    let ckpt = Checkpoint::load(ckpt_path)?;
    let mut model = Model::build(&model_cfg, 0)?;
    ckpt.apply_to(&mut model)?;

    let entries = parse_protocol(protocol)?;
    let src = DataSource {
        entries: &entries,
        audio_root: &audio_root,
        path_template: template.as_deref(),
    };
    let outcome = score_entries(&model, &src)?;
    for (utt, reason) in &outcome.skipped {
        eprintln!("warning: skipped {utt}: {reason}");
    }
    write_score_file(out, &outcome.records)?;
    println!(
        "scored {} utterance(s), skipped {} -> {}",
        outcome.records.len(),
        outcome.skipped.len(),
        out
    );
    Ok(if outcome.skipped.is_empty() { 0 } else { 1 })
}

/// Look up every scored utterance's label; unknown IDs are listed (config
/// contract: the protocol must cover the score file).
fn label_scores<'a>(
    scored: &'a [(String, f64)],
    labels: &BTreeMap<&str, Label>,
) -> Result<Vec<(&'a str, f64, Label)>> {
    let mut unknown = Vec::new();
    let mut out = Vec::with_capacity(scored.len());
    for (utt, score) in scored {
        match labels.get(utt.as_str()) {
            Some(&label) => out.push((utt.as_str(), *score, label)),
            None => unknown.push(utt.as_str()),
        }
    }
    if !unknown.is_empty() {
        let shown = unknown.iter().take(20).copied().collect::<Vec<_>>().join(", ");
        let more = unknown.len().saturating_sub(20);
        let suffix = if more > 0 {
            format!(" (and {more} more)")
        } else {
            String::new()
        };
        return Err(Error::data(format!(
            "{} scored utterance(s) missing from the protocol: {shown}{suffix}",
            unknown.len()
        )));
    }
    Ok(out)
}

/// `--c0/--c1/--c2` must be given all together or not at all.
fn tdcf_costs(m: &ArgMatches) -> Result<Option<TdcfCosts>> {
    let vals: Vec<Option<String>> = ["c0", "c1", "c2"]
        .iter()
        .map(|id| flag_value(m, id))
        .collect();
    let given = vals.iter().filter(|v| v.is_some()).count();
    if given == 0 {
        return Ok(None);
    }
    if given != 3 {
        return Err(Error::config(
            "detection costs need all three of --c0, --c1, --c2",
        ));
    }
    let mut parsed = [0.0; 3];
    for (i, (raw, name)) in vals.iter().zip(["--c0", "--c1", "--c2"]).enumerate() {
        let raw = raw.as_deref().expect("checked above");
        parsed[i] = raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::config(format!("{name}: `{raw}` is not a finite number")))?;
    }
    let costs = TdcfCosts {
        c0: parsed[0],
        c1: parsed[1],
        c2: parsed[2],
    };
    costs.validate()?;
    Ok(Some(costs))
}

pub fn cmd_evaluate(m: &ArgMatches) -> Result<i32> {
    let scores_path = required(m, "scores");
    let protocol = required(m, "protocol");
    let scored = parse_score_file(scores_path)?;
    let entries = parse_protocol(protocol)?;
    let labels: BTreeMap<&str, Label> = entries
        .iter()
        .map(|e| (e.utt_id.as_str(), e.label))
        .collect();
    let labeled = label_scores(&scored, &labels)?;

    let mut bonafide = Vec::new();
    let mut spoof = Vec::new();
    for (_, score, label) in &labeled {
        match label {
            Label::Bonafide => bonafide.push(*score),
            Label::Spoof => spoof.push(*score),
        }
    }
    let set = ScoreSet::new(bonafide, spoof)?;
    let (eer, eer_threshold) = compute_eer(&set)?;
    println!("EER {:.3}%", eer * 100.0);

    let mut report = String::new();
    let _ = writeln!(report, "n_scores\t{}", labeled.len());
    let _ = writeln!(report, "n_bonafide\t{}", set.bonafide.len());
    let _ = writeln!(report, "n_spoof\t{}", set.spoof.len());
    let _ = writeln!(report, "eer\t{eer:.9e}");
    let _ = writeln!(report, "eer_threshold\t{eer_threshold:.9e}");
    if let Some(costs) = tdcf_costs(m)? {
        let (tdcf, tdcf_threshold) = compute_min_tdcf(&set, &costs)?;
        println!("min t-DCF {tdcf:.6}");
        let _ = writeln!(report, "min_tdcf\t{tdcf:.9e}");
        let _ = writeln!(report, "min_tdcf_threshold\t{tdcf_threshold:.9e}");
    }
    let report_path = flag_value(m, "report")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(format!("{scores_path}.report")));
    write_text(&report_path, &report)?;
    Ok(0)
}

pub fn cmd_analyze_durations(m: &ArgMatches) -> Result<i32> {
    let scores_path = required(m, "scores");
    let protocol = required(m, "protocol");
    let audio_root = PathBuf::from(required(m, "audio-root"));
    let template = flag_value(m, "template");
    let scored = parse_score_file(scores_path)?;
    let entries = parse_protocol(protocol)?;
    let labels: BTreeMap<&str, Label> = entries
        .iter()
        .map(|e| (e.utt_id.as_str(), e.label))
        .collect();
    let labeled = label_scores(&scored, &labels)?;

    let mut records = Vec::with_capacity(labeled.len());
    for (utt, score, label) in labeled {
        let path = resolve_audio_path(&audio_root, template.as_deref(), utt)?;
        let wave = read_wav(&path)?;
        records.push(LabeledScore {
            utt_id: utt.to_string(),
            score,
            bonafide: label == Label::Bonafide,
            duration_s: wave.duration_s(),
        });
    }
    let edges = match flag_value(m, "edges") {
        Some(raw) => parse_f64_list(&raw, "--edges")?,
        None => DEFAULT_BUCKET_EDGES_S.to_vec(),
    };
    let buckets = duration_bucketed_eer(&records, &edges)?;
    print!("{}", render_buckets_table(&buckets));
    if let Some(report) = flag_value(m, "report") {
        write_text(Path::new(&report), &render_buckets_machine(&buckets))?;
    }
    Ok(0)
}

pub fn cmd_complexity(m: &ArgMatches) -> Result<i32> {
    let cfg = resolve_config(m)?;
    let model_cfg = cfg.model_config()?;
    let input_len = match flag_value(m, "input-len") {
        Some(raw) => {
            let n = parse_usize(&raw, "--input-len")?;
            if n == 0 {
                return Err(Error::config("--input-len must be at least 1"));
            }
            n
        }
        None => model_cfg.segment_len,
    };
    let model = Model::build(&model_cfg, 0)?;
    let report = analyze(&model, input_len)?;
    if flag_set(m, "machine") {
        print!("{}", report.render_machine());
    } else {
        print!("{}", report.render_table());
    }
    Ok(0)
}

pub fn cmd_gen_synthetic(m: &ArgMatches) -> Result<i32> {
    let out = PathBuf::from(required(m, "out"));
    let mut cfg = SynthConfig::default();
    if let Some(raw) = flag_value(m, "n-train") {
        cfg.n_train = parse_usize(&raw, "--n-train")?;
    }
    if let Some(raw) = flag_value(m, "n-dev") {
        cfg.n_dev = parse_usize(&raw, "--n-dev")?;
    }
    if let Some(raw) = flag_value(m, "n-eval") {
        cfg.n_eval = parse_usize(&raw, "--n-eval")?;
    }
    if let Some(raw) = flag_value(m, "seed") {
        cfg.seed = raw.parse::<u64>().map_err(|_| {
            Error::config(format!("--seed: expected a nonnegative integer, got `{raw}`"))
        })?;
    }
    if let Some(raw) = flag_value(m, "durations") {
        cfg.durations_s = parse_f64_list(&raw, "--durations")?;
    }
    let layout = generate_dataset(&out, &cfg)?;
    println!(
        "wrote {} WAV file(s) under {}",
        layout.n_files,
        layout.wav_dir.display()
    );
    println!("train protocol: {}", layout.train_protocol.display());
    println!("dev protocol:   {}", layout.dev_protocol.display());
    println!("eval protocol:  {}", layout.eval_protocol.display());
    Ok(0)
}
