//! Precomputed embedding rows and cosine similarity.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Row identifier: integer ids for images, questions and pairs; text for
/// prompts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmbeddingKey {
    Int(u64),
    Text(String),
}

impl fmt::Display for EmbeddingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Int(i) => write!(f, "{i}"),
            Self::Text(s) => write!(f, "{s:?}"),
        }
    }
}

/// `|ids| x dim` row-major matrix of `f32` with an id-to-row map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<EmbeddingKey>,
    rows: Vec<f32>,
    norms: Vec<f64>,
    int_index: BTreeMap<u64, usize>,
    text_index: BTreeMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, ids: Vec<EmbeddingKey>, rows: Vec<f32>) -> Result<Self> {
        if rows.len() != ids.len() * dim {
            return Err(Error::ShapeMismatch {
                expected_rows: ids.len(),
                expected_dim: dim,
                rows: rows.len().checked_div(dim).unwrap_or(0),
                dim,
            });
        }
        let mut int_index = BTreeMap::new();
        let mut text_index = BTreeMap::new();
        let mut norms = Vec::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            let row = &rows[i * dim..(i + 1) * dim];
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(id.to_string()));
            }
            norms.push(libm::sqrt(dot(row, row)));
            let fresh = match id {
                EmbeddingKey::Int(k) => int_index.insert(*k, i).is_none(),
                EmbeddingKey::Text(s) => text_index.insert(s.clone(), i).is_none(),
            };
            if !fresh {
                return Err(Error::DuplicateEmbeddingId(id.to_string()));
            }
        }
        Ok(Self { dim, ids, rows, norms, int_index, text_index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[EmbeddingKey] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.rows
    }

    pub fn row(&self, pos: usize) -> &[f32] {
        &self.rows[pos * self.dim..(pos + 1) * self.dim]
    }

    pub fn norm(&self, pos: usize) -> f64 {
        self.norms[pos]
    }

    pub fn position_int(&self, id: u64) -> Option<usize> {
        self.int_index.get(&id).copied()
    }

    pub fn position_text(&self, id: &str) -> Option<usize> {
        self.text_index.get(id).copied()
    }

    pub fn require_int(&self, id: u64) -> Result<usize> {
        self.position_int(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn require_text(&self, id: &str) -> Result<usize> {
        self.position_text(id).ok_or_else(|| Error::MissingEmbedding(alloc::format!("{id:?}")))
    }

    /// Cosine between row `pos` of `self` and row `other_pos` of `other`,
    /// computed on unit-normalized rows.
    pub fn cosine_with(&self, pos: usize, other: &EmbeddingMatrix, other_pos: usize) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let (na, nb) = (self.norms[pos], other.norms[other_pos]);
        if na == 0.0 {
            return Err(Error::ZeroVector(self.ids[pos].to_string()));
        }
        if nb == 0.0 {
            return Err(Error::ZeroVector(other.ids[other_pos].to_string()));
        }
        Ok(clamp_unit(dot(self.row(pos), other.row(other_pos)) / (na * nb)))
    }
}

/// Dot product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Cosine similarity of two rows; `None` when either has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let na = libm::sqrt(dot(a, a));
    let nb = libm::sqrt(dot(b, b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(clamp_unit(dot(a, b) / (na * nb)))
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn cosine_of_row_with_itself_is_one() {
        assert_eq!(cosine(&[0.3, -4.0, 2.5], &[0.3, -4.0, 2.5]), Some(1.0));
    }

    #[test]
    fn orthogonal_rows_have_zero_cosine() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), Some(0.0));
    }

    #[test]
    fn zero_row_is_reported() {
        let m = EmbeddingMatrix::new(2, vec![EmbeddingKey::Int(1), EmbeddingKey::Int(2)], vec![0.0, 0.0, 1.0, 0.0])
            .unwrap();
        assert_eq!(m.cosine_with(1, &m, 0), Err(Error::ZeroVector("1".into())));
    }

    #[test]
    fn shape_and_finiteness_are_validated() {
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![EmbeddingKey::Int(1)], vec![1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, vec![EmbeddingKey::Int(1)], vec![f32::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, vec![EmbeddingKey::Int(1), EmbeddingKey::Int(1)], vec![1.0, 1.0]),
            Err(Error::DuplicateEmbeddingId(_))
        ));
    }

    #[test]
    fn lookup_by_text_and_int() {
        let m = EmbeddingMatrix::new(
            1,
            vec![EmbeddingKey::Text("a photo of dog".into()), EmbeddingKey::Int(7)],
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_eq!(m.position_text("a photo of dog"), Some(0));
        assert_eq!(m.position_int(7), Some(1));
        assert!(m.require_int(8).is_err());
    }
}
