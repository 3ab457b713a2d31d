//! Input vector files: one signed decimal integer per line, or a JSON array.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::TermVector;

/// Parses the line format. Blank lines are ignored; anything else must be an
/// integer. Exactly `n` values are required.
pub fn parse_lines(text: &str, n: usize, bound: i64) -> Result<TermVector> {
    let mut values = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {line:?}: {e}", lineno + 1)))?;
        values.push(v);
    }
    finish(values, n, bound)
}

pub fn parse_json(text: &str, n: usize, bound: i64) -> Result<TermVector> {
    let values: Vec<i64> =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("json vector: {e}")))?;
    finish(values, n, bound)
}

/// Dispatches on the first non-blank character: `[` means JSON.
pub fn parse_vector(text: &str, n: usize, bound: i64) -> Result<TermVector> {
    if text.trim_start().starts_with('[') {
        parse_json(text, n, bound)
    } else {
        parse_lines(text, n, bound)
    }
}

pub fn read_vector_file(path: impl AsRef<Path>, n: usize, bound: i64) -> Result<TermVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_vector(&text, n, bound)
}

pub fn to_lines(v: &TermVector) -> String {
    let mut s = String::with_capacity(v.len() * 4);
    for x in v.values() {
        s.push_str(&x.to_string());
        s.push('\n');
    }
    s
}

fn finish(values: Vec<i64>, n: usize, bound: i64) -> Result<TermVector> {
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: values.len(),
        });
    }
    let v = TermVector(values);
    v.check_bound(bound)?;
    Ok(v)
}
