//! JSON Lines record types exchanged between pipeline stages and with
//! external models.

use std::collections::BTreeMap;

use augforge_core::compose::{CandidatePair, Origin};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

fn parse_origin(s: &str) -> Result<Origin> {
    s.parse().map_err(|_| AppError::Shape(format!("unknown pair origin {s:?}")))
}

/// Candidate-pair dump written by `compose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub image_id: u64,
    pub question_id: u64,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_question_id: Option<u64>,
}

impl From<&CandidatePair> for CandidateRecord {
    fn from(p: &CandidatePair) -> Self {
        Self {
            image_id: p.image_id,
            question_id: p.question_id,
            origin: p.origin.as_str().into(),
            source_question_id: p.source_question_id,
        }
    }
}

impl CandidateRecord {
    pub fn to_pair(&self) -> Result<CandidatePair> {
        let mut p = CandidatePair::new(self.image_id, self.question_id, parse_origin(&self.origin)?);
        p.source_question_id = self.source_question_id;
        Ok(p)
    }
}

/// Final pair list written by `score`; `pair_id` is the row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub pair_id: u64,
    pub image_id: u64,
    pub question_id: u64,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_question_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
}

impl ScoredRecord {
    pub fn new(pair_id: u64, p: &CandidatePair) -> Self {
        Self {
            pair_id,
            image_id: p.image_id,
            question_id: p.question_id,
            origin: p.origin.as_str().into(),
            source_question_id: p.source_question_id,
            relevance: p.relevance,
            rank: p.rank,
        }
    }

    pub fn to_pair(&self) -> Result<CandidatePair> {
        let mut p = CandidatePair::new(self.image_id, self.question_id, parse_origin(&self.origin)?);
        p.source_question_id = self.source_question_id;
        p.relevance = self.relevance;
        p.rank = self.rank;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRequest {
    pub pair_id: u64,
    pub image_id: u64,
    pub question_id: u64,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPromptRequest {
    pub pair_id: u64,
    pub prompt: String,
}

/// Fused label of one pair at full precision; `labels` keeps the entries
/// at or above the emission floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedRecord {
    pub pair_id: u64,
    pub mode: String,
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_id: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_ood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_id: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ood: Option<f64>,
    pub labels: Vec<(u32, f64)>,
}

/// One line of the emitted soft-label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelRecord {
    pub question_id: u64,
    pub image_id: u64,
    pub labels: Vec<(u32, f64)>,
    pub mode: String,
    pub w_id: Option<f64>,
    pub w_ood: Option<f64>,
    pub origin: String,
    pub relevance: Option<f64>,
    pub original_question_id: u64,
    #[serde(default)]
    pub source_question_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabFile {
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: u64,
    pub answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComposeSummary {
    pub original_questions: usize,
    pub original_per_category: BTreeMap<String, usize>,
    pub images: usize,
    pub yesno_fraction: f64,
    pub question_types: usize,
    pub pruned_questions: usize,
    pub prune_fraction: f64,
    pub planned_questions: usize,
    pub yesno_groups: usize,
    pub yesno_sampled_questions: usize,
    pub reasonable_pairs: usize,
    pub paraphrase_pairs: usize,
    pub paraphrase_overlap_removed: usize,
    pub paraphrase_sources_without_labels: usize,
    pub candidates: usize,
    pub vocab_size: usize,
    pub bias_dropped_answers: usize,
    pub bias_uniform_fallback_types: Vec<String>,
    pub per_origin: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub scored_pairs: usize,
    pub kept_pairs: usize,
    pub paraphrase_pairs: usize,
    pub pairs: usize,
    pub rule_covered: usize,
    pub qa_prompts: usize,
    pub prompt_failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Counts {
    pub origin: BTreeMap<String, usize>,
    pub answer_category: BTreeMap<String, usize>,
    pub mode: BTreeMap<String, usize>,
    pub rule: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetHeader {
    pub engine_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub alpha_percent: f64,
    pub delta_percent: f64,
    pub mode: String,
    pub samples: usize,
    /// Emitted question ids are `question_id_offset + pair_id`.
    pub question_id_offset: u64,
    pub vocab_size: usize,
    pub teachers: BTreeMap<String, String>,
    pub counts: Counts,
}
