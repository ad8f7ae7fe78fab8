//! `rawtfnet`: raw-waveform anti-spoofing from the command line.
//!
//! Subcommands: `train`, `score`, `evaluate`, `analyze-durations`,
//! `complexity`, `gen-synthetic`. Exit codes: 0 success, 1 partial
//! (some utterances skipped), 2 usage/configuration error, 3 numeric failure.

mod commands;
mod config;

use clap::{Arg, ArgAction, Command};

fn arg_config() -> Arg {
    Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("TOML run configuration; flags below override its keys")
}

fn arg_threads() -> Arg {
    Arg::new("threads")
        .long("threads")
        .value_name("N")
        .help("worker pool size (results never depend on it)")
}

/// Add one value-taking flag per configuration key (`--model.tau 16`),
/// the convenience aliases, and the ablation switches.
fn with_config_flags(mut cmd: Command) -> Command {
    cmd = cmd
        .arg(arg_config())
        .arg(
            Arg::new("epochs")
                .long("epochs")
                .value_name("N")
                .help("alias for --train.epochs"),
        )
        .arg(
            Arg::new("lr")
                .long("lr")
                .value_name("F")
                .help("alias for --optim.lr"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("N")
                .help("alias for --train.seed"),
        )
        .arg(
            Arg::new("no-freq-branch")
                .long("no-freq-branch")
                .action(ArgAction::SetTrue)
                .help("drop the frequency branch (sets model.enable_freq_branch = false)"),
        )
        .arg(
            Arg::new("no-time-branch")
                .long("no-time-branch")
                .action(ArgAction::SetTrue)
                .help("drop the temporal branch (sets model.enable_time_branch = false)"),
        )
        .arg(
            Arg::new("no-shuffle")
                .long("no-shuffle")
                .action(ArgAction::SetTrue)
                .help("drop the channel shuffle (sets model.enable_shuffle = false)"),
        );
    for e in config::SCHEMA {
        cmd = cmd.arg(
            Arg::new(e.key)
                .long(e.key)
                .value_name(match e.kind {
                    config::CfgKind::Int => "INT",
                    config::CfgKind::Float => "FLOAT",
                    config::CfgKind::Bool => "BOOL",
                    config::CfgKind::Str => "STR",
                })
                .help(e.help)
                .help_heading("Configuration keys"),
        );
    }
    cmd
}

fn cli() -> Command {
    Command::new("rawtfnet")
        .version(env!("CARGO_PKG_VERSION"))
        .about("raw-waveform anti-spoofing: training, scoring, and evaluation")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_flags(
            Command::new("train")
                .about("train a model; writes per-epoch checkpoints, a log, and a top-k average")
                .arg(arg_threads()),
        ))
        .subcommand(with_config_flags(
            Command::new("score")
                .about("score a trial list with a trained checkpoint")
                .arg(
                    Arg::new("model")
                        .long("model")
                        .value_name("CKPT")
                        .required(true)
                        .help("checkpoint to load (its fingerprint must match the configuration)"),
                )
                .arg(
                    Arg::new("protocol")
                        .long("protocol")
                        .value_name("FILE")
                        .required(true)
                        .help("trial list to score"),
                )
                .arg(
                    Arg::new("audio-root")
                        .long("audio-root")
                        .value_name("DIR")
                        .required(true)
                        .help("directory holding the WAV files"),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("FILE")
                        .required(true)
                        .help("score file to write"),
                )
                .arg(
                    Arg::new("template")
                        .long("template")
                        .value_name("TPL")
                        .help("audio path template with an {utt} placeholder (default {utt}.wav)"),
                )
                .arg(arg_threads()),
        ))
        .subcommand(
            Command::new("evaluate")
                .about("compute EER (and min t-DCF when costs are given) from a score file")
                .arg(
                    Arg::new("scores")
                        .long("scores")
                        .value_name("FILE")
                        .required(true)
                        .help("score file (utt_id score per line)"),
                )
                .arg(
                    Arg::new("protocol")
                        .long("protocol")
                        .value_name("FILE")
                        .required(true)
                        .help("trial list with ground-truth labels"),
                )
                .arg(Arg::new("c0").long("c0").value_name("F").help("t-DCF constant cost"))
                .arg(Arg::new("c1").long("c1").value_name("F").help("t-DCF miss cost"))
                .arg(Arg::new("c2").long("c2").value_name("F").help("t-DCF false-alarm cost"))
                .arg(
                    Arg::new("report")
                        .long("report")
                        .value_name("FILE")
                        .help("machine-readable report path (default: <scores>.report)"),
                ),
        )
        .subcommand(
            Command::new("analyze-durations")
                .about("per-duration-bucket EER table for a score file")
                .arg(
                    Arg::new("scores")
                        .long("scores")
                        .value_name("FILE")
                        .required(true)
                        .help("score file (utt_id score per line)"),
                )
                .arg(
                    Arg::new("protocol")
                        .long("protocol")
                        .value_name("FILE")
                        .required(true)
                        .help("trial list with ground-truth labels"),
                )
                .arg(
                    Arg::new("audio-root")
                        .long("audio-root")
                        .value_name("DIR")
                        .required(true)
                        .help("directory holding the WAV files (for durations)"),
                )
                .arg(
                    Arg::new("template")
                        .long("template")
                        .value_name("TPL")
                        .help("audio path template with an {utt} placeholder (default {utt}.wav)"),
                )
                .arg(
                    Arg::new("edges")
                        .long("edges")
                        .value_name("LIST")
                        .help("bucket edges in seconds, e.g. 0,2,4,6,8 (last bucket is open)"),
                )
                .arg(
                    Arg::new("report")
                        .long("report")
                        .value_name("FILE")
                        .help("also write a tab-separated report here"),
                ),
        )
        .subcommand(with_config_flags(
            Command::new("complexity")
                .about("per-layer parameter and multiply-accumulate counts")
                .arg(
                    Arg::new("input-len")
                        .long("input-len")
                        .value_name("N")
                        .help("input length in samples (default: model.segment_len)"),
                )
                .arg(
                    Arg::new("machine")
                        .long("machine")
                        .action(ArgAction::SetTrue)
                        .help("tab-separated output instead of the aligned table"),
                ),
        ))
        .subcommand(
            Command::new("gen-synthetic")
                .about("generate the bundled two-class synthetic corpus")
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("DIR")
                        .required(true)
                        .help("corpus root to create"),
                )
                .arg(Arg::new("n-train").long("n-train").value_name("N").help("training utterances (default 200)"))
                .arg(Arg::new("n-dev").long("n-dev").value_name("N").help("validation utterances (default 100)"))
                .arg(Arg::new("n-eval").long("n-eval").value_name("N").help("evaluation utterances (default 100)"))
                .arg(Arg::new("seed").long("seed").value_name("N").help("corpus seed (default 7)"))
                .arg(
                    Arg::new("durations")
                        .long("durations")
                        .value_name("LIST")
                        .help("durations in seconds cycled across files, e.g. 1.2,2.7,4.3"),
                ),
        )
}

fn main() {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        // clap prints the diagnostic itself; usage errors exit 2
        Err(e) => e.exit(),
    };
    let result = match matches.subcommand() {
        Some(("train", m)) => commands::cmd_train(m),
        Some(("score", m)) => commands::cmd_score(m),
        Some(("evaluate", m)) => commands::cmd_evaluate(m),
        Some(("analyze-durations", m)) => commands::cmd_analyze_durations(m),
        Some(("complexity", m)) => commands::cmd_complexity(m),
        Some(("gen-synthetic", m)) => commands::cmd_gen_synthetic(m),
        _ => unreachable!("subcommand_required"),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
