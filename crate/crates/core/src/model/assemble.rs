use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::linalg::Matrix;
use crate::tabular::EncodedMatrix;
use crate::textfeat::DocFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Structured,
    Text,
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Structured, Variant::Text, Variant::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Structured => "structured",
            Variant::Text => "text",
            Variant::Combined => "combined",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// One named block of document vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBlock {
    pub name: String,
    pub features: Vec<DocFeatures>,
}

/// Concatenates the sources required by `variant`: structured columns
/// first, then each text block in order. Text rows are aligned by id to
/// the structured rows (or to the first block when there are none).
pub fn assemble(
    variant: Variant,
    structured: Option<&EncodedMatrix<f64>>,
    texts: &[TextBlock],
) -> Result<EncodedMatrix<f64>, ModelError> {
    let use_structured = matches!(variant, Variant::Structured | Variant::Combined);
    let use_text = matches!(variant, Variant::Text | Variant::Combined);
    if use_structured && structured.is_none() {
        return Err(ModelError::EmptySource(variant));
    }
    if use_text && texts.is_empty() {
        return Err(ModelError::EmptySource(variant));
    }

    let ids: Vec<String> = match (use_structured, structured) {
        (true, Some(s)) => s.ids.clone(),
        _ => texts[0].features.iter().map(|f| f.id.clone()).collect(),
    };
    let mut parts: Vec<Matrix<f64>> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    if use_structured {
        let s = structured.unwrap();
        parts.push(s.data.clone());
        columns.extend(s.columns.iter().map(|c| format!("structured:{c}")));
    }
    if use_text {
        for block in texts {
            if block.features.len() != ids.len() {
                return Err(ModelError::RowMismatch(format!(
                    "block {:?} has {} rows, expected {}",
                    block.name,
                    block.features.len(),
                    ids.len()
                )));
            }
            let by_id: HashMap<&str, &DocFeatures> = block.features.iter().map(|f| (f.id.as_str(), f)).collect();
            let dim = block.features.first().map_or(0, DocFeatures::dim);
            let mut m = Matrix::zeros(ids.len(), dim);
            for (r, id) in ids.iter().enumerate() {
                let f = by_id
                    .get(id.as_str())
                    .ok_or_else(|| ModelError::RowMismatch(format!("block {:?} lacks id {id:?}", block.name)))?;
                if f.dim() != dim {
                    return Err(ModelError::Shape(format!("block {:?}: ragged vectors at {id:?}", block.name)));
                }
                m.row_mut(r).copy_from_slice(&f.values);
            }
            parts.push(m);
            columns.extend((0..dim).map(|i| format!("{}:{i}", block.name)));
        }
    }
    let refs: Vec<&Matrix<f64>> = parts.iter().collect();
    let data = if refs.is_empty() { Matrix::zeros(ids.len(), 0) } else { Matrix::hstack(&refs) };
    Ok(EncodedMatrix::new(ids, columns, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textfeat::FeatureSource;

    fn structured(n: usize, cols: usize) -> EncodedMatrix<f64> {
        EncodedMatrix::new(
            (0..n).map(|i| format!("id{i}")).collect(),
            (0..cols).map(|c| format!("f{c}")).collect(),
            Matrix::zeros(n, cols),
        )
    }

    fn block(name: &str, n: usize, dim: usize, reverse: bool) -> TextBlock {
        let mut features: Vec<DocFeatures> = (0..n)
            .map(|i| DocFeatures {
                id: format!("id{i}"),
                source: FeatureSource::Docvec(name.into()),
                values: vec![i as f64; dim],
                truncated: false,
            })
            .collect();
        if reverse {
            features.reverse();
        }
        TextBlock { name: name.into(), features }
    }

    #[test]
    fn combined_widths() {
        let s = structured(4, 18);
        let lda = block("lda", 4, 30, true);
        let m = assemble(Variant::Combined, Some(&s), &[lda]).unwrap();
        assert_eq!(m.data.cols(), 48);
        assert_eq!(m.columns[18], "lda:0");
        // aligned by id despite reversed block order
        assert_eq!(m.data.get(3, 18), 3.0);
    }

    #[test]
    fn text_concatenation_and_structured_only() {
        let human = block("human", 3, 768, false);
        let refined = block("refined", 3, 768, false);
        let m = assemble(Variant::Text, None, &[human.clone(), refined]).unwrap();
        assert_eq!(m.data.cols(), 1536);
        let s = structured(3, 18);
        assert_eq!(assemble(Variant::Structured, Some(&s), &[human]).unwrap().data.cols(), 18);
    }

    #[test]
    fn errors() {
        let s = structured(3, 2);
        assert!(matches!(assemble(Variant::Combined, Some(&s), &[]), Err(ModelError::EmptySource(_))));
        assert!(matches!(assemble(Variant::Structured, None, &[]), Err(ModelError::EmptySource(_))));
        let mut other = block("x", 3, 2, false);
        other.features[1].id = "zzz".into();
        assert!(matches!(assemble(Variant::Combined, Some(&s), &[other]), Err(ModelError::RowMismatch(_))));
    }
}
