use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::TextError;

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    pub dim: usize,
    pub table: HashMap<String, Vec<f64>>,
}

fn read(path: &Path) -> Result<String, TextError> {
    if !path.exists() {
        return Err(TextError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| TextError::Io { path: path.to_path_buf(), source })
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectors, TextError> {
    parse_word_vectors(&read(path)?)
}

/// Parses the `"<count> <dim>"` header followed by `"<word> v1 … v_dim"` lines.
pub fn parse_word_vectors(text: &str) -> Result<WordVectors, TextError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| TextError::MalformedLine { line: 1, detail: "missing header".into() })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| s.parse::<usize>().ok();
    let (count, dim) = match head.as_slice() {
        [c, d] => match (parse_usize(c), parse_usize(d)) {
            (Some(c), Some(d)) if d > 0 => (c, d),
            _ => return Err(TextError::MalformedLine { line: 1, detail: format!("bad header {header:?}") }),
        },
        _ => return Err(TextError::MalformedLine { line: 1, detail: format!("bad header {header:?}") }),
    };
    let mut table = HashMap::with_capacity(count);
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut parts = raw.split_whitespace();
        let word = parts.next().unwrap();
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| TextError::MalformedLine { line, detail: e.to_string() })?;
        if values.len() != dim {
            return Err(TextError::DimMismatch { line, expected: dim, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TextError::MalformedLine { line, detail: "non-finite component".into() });
        }
        table.insert(word.to_string(), values);
    }
    if table.len() != count {
        log::warn!("word-vector header declares {count} entries, found {}", table.len());
    }
    Ok(WordVectors { dim, table })
}

/// Mean of the in-vocabulary token vectors; zero vector when none are known.
pub fn avg_embed<S: AsRef<str>>(vectors: &WordVectors, tokens: &[S]) -> Vec<f64> {
    let mut acc = vec![0.0; vectors.dim];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = vectors.table.get(t.as_ref()) {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            n += 1;
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

pub fn load_doc_vectors(
    path: &Path,
    expected_dim: usize,
    requested: &[String],
) -> Result<BTreeMap<String, Vec<f64>>, TextError> {
    parse_doc_vectors(&read(path)?, expected_dim, requested)
}

/// Parses `"<id>\tv1 v2 … v_dim"` lines and returns the requested ids.
pub fn parse_doc_vectors(
    text: &str,
    expected_dim: usize,
    requested: &[String],
) -> Result<BTreeMap<String, Vec<f64>>, TextError> {
    let mut all = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (id, rest) = raw
            .split_once('\t')
            .ok_or_else(|| TextError::MalformedLine { line, detail: "expected <id>\\t<values>".into() })?;
        let values = rest
            .split_whitespace()
            .map(|p| p.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| TextError::MalformedLine { line, detail: e.to_string() })?;
        all.insert(id.to_string(), values);
    }
    let missing: Vec<String> = requested.iter().filter(|id| !all.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(TextError::MissingId(missing));
    }
    let mut out = BTreeMap::new();
    for id in requested {
        let v = all.remove(id).unwrap_or_default();
        if v.len() != expected_dim {
            return Err(TextError::DocDimMismatch { id: id.clone(), expected: expected_dim, found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(TextError::NonFiniteValue(id.clone()));
        }
        out.insert(id.clone(), v);
    }
    Ok(out)
}
