//! Trial-list ("protocol") parsing and emission.
//!
//! A protocol file is plain text with one trial per line and five
//! whitespace-separated columns:
//!
//! ```text
//! <speaker_id> <utt_id> <aux> <system_id> <key>
//! ```
//!
//! where `<key>` is `bonafide` or `spoof` and `<system_id>` is `-` for
//! bonafide trials. Blank lines are skipped; anything else malformed is a
//! parse error carrying the 1-based line number.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::Result;

/// Ground-truth key of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }

    /// Class index used by the loss/softmax head: spoof = 0, bonafide = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Spoof => 0,
            Label::Bonafide => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of a protocol file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolEntry {
    pub speaker_id: String,
    pub utt_id: String,
    pub aux: String,
    pub system_id: String,
    pub label: Label,
}

impl ProtocolEntry {
    fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.speaker_id, self.utt_id, self.aux, self.system_id, self.label
        )
    }
}

/// Parse protocol text. `source` names the input in error messages.
pub fn parse_protocol_str(text: &str, source: &str) -> Result<Vec<ProtocolEntry>> {
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 5 columns, found {}", cols.len()),
            ));
        }
        let label = match cols[4] {
            "bonafide" => Label::Bonafide,
            "spoof" => Label::Spoof,
            other => {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("unknown key {other:?}, expected \"bonafide\" or \"spoof\""),
                ))
            }
        };
        if !seen.insert(cols[1].to_string()) {
            return Err(Error::parse(
                source,
                lineno,
                format!("duplicate utterance id {:?}", cols[1]),
            ));
        }
        entries.push(ProtocolEntry {
            speaker_id: cols[0].to_string(),
            utt_id: cols[1].to_string(),
            aux: cols[2].to_string(),
            system_id: cols[3].to_string(),
            label,
        });
    }
    Ok(entries)
}

/// Parse a protocol file from disk.
pub fn parse_protocol(path: impl AsRef<Path>) -> Result<Vec<ProtocolEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_protocol_str(&text, &path.display().to_string())
}

/// Render entries back to protocol text (single-space separated, one trial
/// per line, trailing newline). Parsing the output reproduces the input.
pub fn emit_protocol(entries: &[ProtocolEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

/// Map an utterance id to its audio file under `root`.
///
/// `template` must contain the placeholder `{utt}`; `None` means the default
/// layout `{utt}.wav` directly under `root`.
pub fn resolve_audio_path(root: &Path, template: Option<&str>, utt_id: &str) -> Result<PathBuf> {
    let template = template.unwrap_or("{utt}.wav");
    if !template.contains("{utt}") {
        return Err(Error::config(format!(
            "audio path template {template:?} has no {{utt}} placeholder"
        )));
    }
    Ok(root.join(template.replace("{utt}", utt_id)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "LA_0079 LA_T_1138215 - - bonafide\nLA_0079 LA_T_0000001 - A01 spoof\n";

    #[test]
    fn parses_both_keys() {
        let entries = parse_protocol_str(SAMPLE, "test").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].speaker_id, "LA_0079");
        assert_eq!(entries[0].utt_id, "LA_T_1138215");
        assert_eq!(entries[0].system_id, "-");
        assert_eq!(entries[0].label, Label::Bonafide);
        assert_eq!(entries[1].system_id, "A01");
        assert_eq!(entries[1].label, Label::Spoof);
    }

    #[test]
    fn blank_lines_are_skipped() {
        let text = format!("\n{SAMPLE}\n   \n");
        let entries = parse_protocol_str(&text, "test").unwrap();
        assert_eq!(entries.len(), 2);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let err = parse_protocol_str("a b - - spoof\nx y z\n", "test").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_line() {
        let err = parse_protocol_str("a b - - genuine\n", "test").unwrap_err();
        match &err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(*line, 1);
                assert!(msg.contains("genuine"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_utt_id_is_rejected() {
        let text = "a u1 - - spoof\nb u1 - - bonafide\n";
        let err = parse_protocol_str(text, "test").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn emit_round_trips() {
        let entries = parse_protocol_str(SAMPLE, "test").unwrap();
        let text = emit_protocol(&entries);
        assert_eq!(text, SAMPLE);
        let again = parse_protocol_str(&text, "emitted").unwrap();
        assert_eq!(again, entries);
    }

    #[test]
    fn class_indices() {
        assert_eq!(Label::Spoof.class_index(), 0);
        assert_eq!(Label::Bonafide.class_index(), 1);
    }

    #[test]
    fn path_resolution_default_and_template() {
        let root = Path::new("/data/wav");
        assert_eq!(
            resolve_audio_path(root, None, "LA_T_1").unwrap(),
            Path::new("/data/wav/LA_T_1.wav")
        );
        assert_eq!(
            resolve_audio_path(root, Some("flac/{utt}.wav"), "u7").unwrap(),
            Path::new("/data/wav/flac/u7.wav")
        );
        assert!(resolve_audio_path(root, Some("fixed.wav"), "u7").is_err());
    }
}
