use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SCORE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub text_a: String,
    pub text_b: String,
    pub score: f64,
    /// 1-based line in the source file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPairDataset {
    pub name: String,
    pub source: Option<PathBuf>,
    pub rows: Vec<AnnotatedPair>,
}

impl AnnotatedPairDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }
}

/// Linearly map scores from `[lo, hi]` onto `[0, 5]` (for word-pair sets
/// annotated on other scales).
pub fn rescale_scores(rows: &mut [(String, String, f64)], lo: f64, hi: f64) -> Result<()> {
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::invalid("rescale range must satisfy lo < hi"));
    }
    for r in rows.iter_mut() {
        if r.2 < lo || r.2 > hi {
            return Err(Error::invalid(format!("score {} outside [{lo}, {hi}]", r.2)));
        }
        r.2 = (r.2 - lo) / (hi - lo) * MAX_SCORE;
    }
    Ok(())
}

fn parse_score(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|s| s.is_finite())
}

/// Parse `text_a<TAB>text_b<TAB>score` lines. A first line whose score field
/// is not numeric is treated as a header; blank lines are skipped.
pub fn parse_pairs_tsv<R: BufRead>(input: R, name: impl Into<String>) -> Result<AnnotatedPairDataset> {
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("expected 3 tab-separated columns, found {}", fields.len()),
            });
        }
        let score = match parse_score(fields[2]) {
            Some(s) => s,
            None if line_no == 1 => continue,
            None => {
                return Err(Error::Parse {
                    line: line_no,
                    detail: format!("score {:?} is not a number", fields[2]),
                })
            }
        };
        if !(0.0..=MAX_SCORE).contains(&score) {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("score {score} outside [0, {MAX_SCORE}]"),
            });
        }
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(Error::Parse { line: line_no, detail: "empty text field".into() });
        }
        rows.push(AnnotatedPair {
            text_a: fields[0].to_string(),
            text_b: fields[1].to_string(),
            score,
            line: line_no,
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid("dataset has no rows"));
    }
    Ok(AnnotatedPairDataset { name: name.into(), source: None, rows })
}

pub fn load_pairs_tsv(path: impl AsRef<Path>) -> Result<AnnotatedPairDataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut ds = parse_pairs_tsv(BufReader::new(File::open(path)?), name)?;
    ds.source = Some(path.to_path_buf());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<AnnotatedPairDataset> {
        parse_pairs_tsv(s.as_bytes(), "t")
    }

    #[test]
    fn three_lines_three_rows() {
        let ds = parse("a dog\ta puppy\t4.2\na cat\ta car\t0.5\nsky\tsea\t2\n").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.rows[1].text_b, "a car");
        assert_eq!(ds.scores(), vec![4.2, 0.5, 2.0]);
        assert_eq!(ds.rows[2].line, 3);
    }

    #[test]
    fn header_and_blank_lines_are_skipped() {
        let ds = parse("sentence1\tsentence2\tscore\r\n\nx\ty\t1.0\r\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.rows[0].line, 3);
    }

    #[test]
    fn out_of_range_score_reports_line() {
        match parse("x\ty\t1\nx\ty\t6.0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("x\ty\t-0.1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse("x\ty\t1\nx\ty\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("x\ty\t1\nx\ty\tnan\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("x\ty\t1\nx\ty\tgood\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("x\t\t1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("a\tb\tc\td\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse("h1\th2\th3\n").is_err());
    }

    #[test]
    fn row_count_matches_file_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sts_dev.tsv");
        let body: String = (0..57).map(|i| format!("s{i}\tt{i}\t{}\n", (i % 6) as f64 * 0.9)).collect();
        std::fs::write(&path, &body).unwrap();
        let ds = load_pairs_tsv(&path).unwrap();
        assert_eq!(ds.len(), body.lines().count());
        assert_eq!(ds.name, "sts_dev");
        assert_eq!(ds.source.as_deref(), Some(path.as_path()));
    }

    #[test]
    fn rescaling_word_pair_scores() {
        let mut rows = vec![("a".into(), "b".into(), 0.0), ("c".into(), "d".into(), 10.0), ("e".into(), "f".into(), 4.0)];
        rescale_scores(&mut rows, 0.0, 10.0).unwrap();
        assert_eq!(rows.iter().map(|r| r.2).collect::<Vec<_>>(), vec![0.0, 5.0, 2.0]);
        assert!(rescale_scores(&mut rows, 1.0, 1.0).is_err());
    }
}
