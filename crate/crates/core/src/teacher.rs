//! Teacher answer distributions: prediction tables loaded from external
//! models and deterministic reference teachers for testing.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::AnswerDistribution;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TeacherKind {
    /// Predictions produced outside the engine and loaded from a file.
    External,
    /// Returns the question-type prior unchanged.
    Bias,
    /// Uniform over the vocabulary.
    Uniform,
    /// `(1 - lambda) * prior + lambda * r`, with `r` a seeded random
    /// simplex point that depends only on `(seed, pair_id)`.
    PerturbedBias { lambda: f64, seed: u64 },
    /// Looks rows up in a stored prediction table.
    Table,
}

impl TeacherKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::External => "external",
            Self::Bias => "bias",
            Self::Uniform => "uniform",
            Self::PerturbedBias { .. } => "perturbed_bias",
            Self::Table => "table",
        }
    }

    /// Whether predictions come from a prediction table.
    pub fn is_tabular(&self) -> bool {
        matches!(self, Self::External | Self::Table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSpec {
    pub name: String,
    pub kind: TeacherKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPrediction {
    pub pair_id: u64,
    pub distribution: AnswerDistribution,
}

/// Row-per-pair prediction matrix over the shared vocabulary.
///
/// Rows are kept as stored and normalized on access: negative entries are
/// clamped to zero and the row is rescaled to sum to one. Rows without
/// positive mass are rejected when the table is built.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    dim: usize,
    rows: Vec<f32>,
}

impl PredictionTable {
    pub fn new(rows: Vec<f32>, dim: usize, expected_rows: usize, vocab_len: usize) -> Result<Self> {
        let found_rows = rows.len().checked_div(dim).unwrap_or(0);
        if dim != vocab_len || rows.len() != expected_rows * dim {
            return Err(Error::ShapeMismatch { expected_rows, expected_dim: vocab_len, rows: found_rows, dim });
        }
        for (i, row) in rows.chunks_exact(dim.max(1)).enumerate() {
            let mass: f64 = row.iter().filter(|x| **x > 0.0).map(|&x| x as f64).sum();
            if mass <= 0.0 || mass.is_nan() || row.iter().any(|x| !x.is_finite()) {
                return Err(Error::DegenerateRow(i));
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, pair_id: u64) -> Result<AnswerDistribution> {
        let i = pair_id as usize;
        if i >= self.len() {
            return Err(Error::MissingTableRow(pair_id));
        }
        let row = &self.rows[i * self.dim..(i + 1) * self.dim];
        AnswerDistribution::normalized(row.iter().map(|&x| x as f64).collect(), i)
    }

    /// All rows, normalized.
    pub fn predictions(&self) -> Result<Vec<TeacherPrediction>> {
        (0..self.len() as u64)
            .map(|pair_id| Ok(TeacherPrediction { pair_id, distribution: self.get(pair_id)? }))
            .collect()
    }
}

/// Uniform Dirichlet draw of dimension `len`, deterministic in
/// `(seed, stream)`.
pub fn random_simplex_point(len: usize, seed: u64, stream: u64) -> AnswerDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let draws: Vec<f64> = (0..len)
        .map(|_| {
            // (0, 1]: keeps the log finite
            let u: f64 = 1.0 - rng.random::<f64>();
            -libm::log(u)
        })
        .collect();
    AnswerDistribution::normalized(draws, 0).unwrap_or_else(|_| AnswerDistribution::uniform(len))
}

/// Prediction of a built-in teacher for one pair. `bias` is the prior of
/// the pair's question type; `table` backs [`TeacherKind::Table`].
pub fn reference_predict(
    spec: &TeacherSpec,
    pair_id: u64,
    bias: &AnswerDistribution,
    table: Option<&PredictionTable>,
) -> Result<AnswerDistribution> {
    match &spec.kind {
        TeacherKind::Bias => Ok(bias.clone()),
        TeacherKind::Uniform => Ok(AnswerDistribution::uniform(bias.len())),
        TeacherKind::PerturbedBias { lambda, seed } => {
            if !(0.0..=1.0).contains(lambda) {
                return Err(Error::InvalidTeacherParam(alloc::format!("lambda {lambda} outside [0, 1]")));
            }
            if *lambda == 0.0 {
                return Ok(bias.clone());
            }
            let noise = random_simplex_point(bias.len(), *seed, pair_id);
            let mixed =
                bias.as_slice().iter().zip(noise.as_slice()).map(|(b, r)| (1.0 - lambda) * b + lambda * r).collect();
            Ok(AnswerDistribution::from_raw(mixed))
        }
        TeacherKind::Table => table.ok_or(Error::MissingTableRow(pair_id))?.get(pair_id),
        TeacherKind::External => Err(Error::ExternalTeacher(spec.name.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec(kind: TeacherKind) -> TeacherSpec {
        TeacherSpec { name: "t".into(), kind }
    }

    #[test]
    fn table_rows_are_normalized() {
        let t = PredictionTable::new(vec![0.2, 0.8, 2.0, 2.0], 2, 2, 2).unwrap();
        assert_eq!(
            t.get(0).unwrap().as_slice(),
            &[0.2f32 as f64 / (0.2f32 as f64 + 0.8f32 as f64), 0.8f32 as f64 / (0.2f32 as f64 + 0.8f32 as f64)]
        );
        assert_eq!(t.get(1).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(t.get(2), Err(Error::MissingTableRow(2)));
    }

    #[test]
    fn zero_row_is_rejected() {
        assert_eq!(PredictionTable::new(vec![0.2, 0.8, 0.0, 0.0], 2, 2, 2), Err(Error::DegenerateRow(1)));
        assert_eq!(PredictionTable::new(vec![-1.0, 0.0], 2, 1, 2), Err(Error::DegenerateRow(0)));
    }

    #[test]
    fn shape_is_checked() {
        assert!(matches!(PredictionTable::new(vec![1.0; 6], 3, 2, 2), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(PredictionTable::new(vec![1.0; 6], 2, 2, 2), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn bias_and_uniform_teachers() {
        let bias = AnswerDistribution::from_raw(vec![0.7, 0.1, 0.1, 0.1]);
        assert_eq!(reference_predict(&spec(TeacherKind::Bias), 3, &bias, None).unwrap(), bias);
        assert_eq!(reference_predict(&spec(TeacherKind::Uniform), 3, &bias, None).unwrap().as_slice(), &[0.25; 4]);
    }

    #[test]
    fn perturbed_teacher() {
        let bias = AnswerDistribution::from_raw(vec![0.7, 0.2, 0.1]);
        let zero = spec(TeacherKind::PerturbedBias { lambda: 0.0, seed: 5 });
        assert_eq!(reference_predict(&zero, 9, &bias, None).unwrap(), bias);
        let half = spec(TeacherKind::PerturbedBias { lambda: 0.5, seed: 5 });
        let a = reference_predict(&half, 9, &bias, None).unwrap();
        let b = reference_predict(&half, 9, &bias, None).unwrap();
        let c = reference_predict(&half, 10, &bias, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.is_valid(1e-12));
        assert!(a.as_slice().iter().zip(bias.as_slice()).all(|(x, b)| *x >= 0.5 * b));
        let bad = spec(TeacherKind::PerturbedBias { lambda: 1.5, seed: 5 });
        assert!(reference_predict(&bad, 0, &bias, None).is_err());
    }

    #[test]
    fn external_teacher_cannot_predict() {
        let bias = AnswerDistribution::uniform(2);
        assert!(matches!(
            reference_predict(&spec(TeacherKind::External), 0, &bias, None),
            Err(Error::ExternalTeacher(_))
        ));
    }
}
