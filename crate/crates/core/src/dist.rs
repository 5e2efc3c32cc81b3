//! Answer vocabulary and dense answer distributions over it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{AnswerId, Error, Result};

/// Ordered answer set shared by every distribution in a run.
///
/// Entries are ordered by descending frequency with ties broken
/// lexicographically, so two builds over the same counts are identical.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnswerVocab {
    entries: Vec<String>,
    index: BTreeMap<String, AnswerId>,
}

impl AnswerVocab {
    /// Builds a vocabulary from answer occurrence counts, keeping answers
    /// seen at least `min_count` times.
    pub fn from_counts(counts: &BTreeMap<String, usize>, min_count: usize) -> Self {
        let mut kept: Vec<(&String, usize)> =
            counts.iter().filter(|(_, &n)| n >= min_count && n > 0).map(|(a, &n)| (a, n)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(kept.into_iter().map(|(a, _)| a.clone()).collect()).expect("count keys are unique")
    }

    /// Builds a vocabulary with the given order. Fails on duplicates.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i as AnswerId).is_some() {
                return Err(Error::Inconsistent(alloc::format!("duplicate vocabulary entry {e:?}")));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, answer: &str) -> Option<AnswerId> {
        self.index.get(answer).copied()
    }

    pub fn answer(&self, id: AnswerId) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

/// Non-negative weights over an answer vocabulary that sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerDistribution(Vec<f64>);

impl AnswerDistribution {
    /// Clamps negative entries to zero and renormalizes.
    ///
    /// Rows without positive mass (or with non-finite entries) are rejected
    /// with [`Error::DegenerateRow`] carrying `row`.
    pub fn normalized(mut weights: Vec<f64>, row: usize) -> Result<Self> {
        let mut total = 0.0;
        for w in weights.iter_mut() {
            if !w.is_finite() {
                return Err(Error::DegenerateRow(row));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
            total += *w;
        }
        if total <= 0.0 {
            return Err(Error::DegenerateRow(row));
        }
        if total != 1.0 {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(Self(weights))
    }

    /// Wraps weights that are already a distribution. No checks.
    pub fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn one_hot(len: usize, id: AnswerId) -> Self {
        let mut v = vec![0.0; len];
        v[id as usize] = 1.0;
        Self(v)
    }

    /// Dense distribution from sparse `(id, weight)` entries, normalized.
    pub fn from_sparse(len: usize, entries: &[(AnswerId, f64)]) -> Result<Self> {
        let mut v = vec![0.0; len];
        for &(id, w) in entries {
            let slot =
                v.get_mut(id as usize).ok_or(Error::DimensionMismatch { expected: len, found: id as usize + 1 })?;
            *slot += w;
        }
        Self::normalized(v, 0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, id: AnswerId) -> f64 {
        self.0.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// True when every entry is finite and non-negative and the total is
    /// within `tol` of one.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|w| w.is_finite() && *w >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }

    /// Highest-weight answer; ties go to the smaller id.
    pub fn argmax(&self) -> Option<AnswerId> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &w) in self.0.iter().enumerate() {
            match best {
                Some((_, bw)) if w <= bw => {}
                _ => best = Some((i, w)),
            }
        }
        best.map(|(i, _)| i as AnswerId)
    }

    /// Entries with weight at least `min_weight`, in id order.
    pub fn to_sparse(&self, min_weight: f64) -> Vec<(AnswerId, f64)> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &w)| w >= min_weight && w > 0.0)
            .map(|(i, &w)| (i as AnswerId, w))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn counts(items: &[(&str, usize)]) -> BTreeMap<String, usize> {
        items.iter().map(|(a, n)| (a.to_string(), *n)).collect()
    }

    #[test]
    fn vocab_respects_min_count() {
        let v = AnswerVocab::from_counts(&counts(&[("a", 3), ("b", 1)]), 2);
        assert_eq!(v.entries(), &["a".to_string()]);
    }

    #[test]
    fn vocab_min_count_zero_keeps_everything() {
        let v = AnswerVocab::from_counts(&counts(&[("a", 3), ("b", 1)]), 0);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn vocab_orders_by_frequency_then_lexicographically() {
        let v = AnswerVocab::from_counts(&counts(&[("zebra", 2), ("apple", 2), ("yes", 9)]), 1);
        assert_eq!(v.entries(), &["yes", "apple", "zebra"]);
        for (i, e) in v.entries().iter().enumerate() {
            assert_eq!(v.id(e), Some(i as AnswerId));
        }
    }

    #[test]
    fn normalization_rescales_and_clamps() {
        let d = AnswerDistribution::normalized(vec![2.0, 2.0], 0).unwrap();
        assert_eq!(d.as_slice(), &[0.5, 0.5]);
        let d = AnswerDistribution::normalized(vec![-1.0, 3.0], 0).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 1.0]);
        let d = AnswerDistribution::normalized(vec![0.2, 0.8], 0).unwrap();
        assert_eq!(d.as_slice(), &[0.2, 0.8]);
    }

    #[test]
    fn zero_row_is_degenerate() {
        assert_eq!(AnswerDistribution::normalized(vec![0.0, 0.0], 4), Err(Error::DegenerateRow(4)));
    }

    #[test]
    fn argmax_prefers_smaller_id_on_ties() {
        let d = AnswerDistribution::from_raw(vec![0.25, 0.375, 0.375]);
        assert_eq!(d.argmax(), Some(1));
    }
}
