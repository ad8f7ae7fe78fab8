//! Score file reading and writing.
//!
//! A score file carries one `utt_id<SPACE>score` pair per line, in the
//! order the utterances were scored. Scores are printed in scientific
//! notation with nine digits after the point, which round-trips any
//! realistic detection score through the text format to well under 1e-9.

use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::metrics::LabeledScore;
use crate::Result;

/// Render score lines ("utt_id score\n" each).
pub fn format_score_lines(records: &[LabeledScore]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("{} {:.9e}\n", r.utt_id, r.score));
    }
    out
}

pub fn write_score_file(path: impl AsRef<Path>, records: &[LabeledScore]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_score_lines(records))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse score text into (utt_id, score) pairs, preserving order.
pub fn parse_score_str(text: &str, source: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected \"utt_id score\", found {} columns", cols.len()),
            ));
        }
        let score: f64 = cols[1].parse().map_err(|_| {
            Error::parse(source, lineno, format!("unparseable score {:?}", cols[1]))
        })?;
        if !score.is_finite() {
            return Err(Error::parse(
                source,
                lineno,
                format!("non-finite score {score}"),
            ));
        }
        out.push((cols[0].to_string(), score));
    }
    Ok(out)
}

pub fn parse_score_file(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_score_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(utt: &str, score: f64) -> LabeledScore {
        LabeledScore {
            utt_id: utt.to_string(),
            score,
            bonafide: true,
            duration_s: 1.0,
        }
    }

    #[test]
    fn lines_preserve_input_order() {
        let text = format_score_lines(&[rec("b", 1.0), rec("a", -2.0), rec("c", 0.5)]);
        let ids: Vec<&str> = text.lines().map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
    }

    #[test]
    fn scores_round_trip_to_1e_minus_9() {
        let originals = [
            0.123456789123,
            -3.987654321987,
            1.0 / 3.0,
            -2.718281828459045,
            9.876543210123,
            -0.000012345678,
            7.5,
        ];
        let records: Vec<LabeledScore> = originals
            .iter()
            .enumerate()
            .map(|(i, &s)| rec(&format!("u{i}"), s))
            .collect();
        let text = format_score_lines(&records);
        let parsed = parse_score_str(&text, "test").unwrap();
        assert_eq!(parsed.len(), originals.len());
        for ((_, back), &orig) in parsed.iter().zip(&originals) {
            assert!(
                (back - orig).abs() < 1e-9,
                "{orig} round-tripped to {back}"
            );
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("rawtfnet-score-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("scores.txt");
        let records = vec![rec("LA_E_1", 2.345678912), rec("LA_E_2", -0.5)];
        write_score_file(&p, &records).unwrap();
        let parsed = parse_score_file(&p).unwrap();
        assert_eq!(parsed[0].0, "LA_E_1");
        assert!((parsed[0].1 - 2.345678912).abs() < 1e-9);
        assert!((parsed[1].1 + 0.5).abs() < 1e-12);
    }

    #[test]
    fn malformed_lines_name_their_line_number() {
        let err = parse_score_str("u1 1.0\nu2\n", "test").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let err = parse_score_str("u1 abc\n", "test").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_score_str("u1 inf\n", "test").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn blank_lines_are_skipped() {
        let parsed = parse_score_str("\nu1 1.5\n\n", "test").unwrap();
        assert_eq!(parsed.len(), 1);
    }
}
