//! Run configuration: a single JSON file whose relative paths resolve
//! against the file's directory, with command-line overrides on top.

use std::path::{Path, PathBuf};

use augforge_core::corpus::DetectionThresholds;
use augforge_core::kd::{FusionConfig, Weighting};
use augforge_core::teacher::{TeacherKind, TeacherSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};
use crate::formats::read_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Yes/No, Number, Color and What questions only.
    Basic,
    Extra,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::Extra => "extra",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingPaths {
    pub images: PathBuf,
    pub noun_prompts: PathBuf,
    /// Question sentence embeddings; paraphrase pairs are skipped without.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<PathBuf>,
    /// Embeddings of the generated QA prompts; defaults to
    /// `<output_dir>/predictions/qa_prompts`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa_prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKindName {
    External,
    Bias,
    Uniform,
    PerturbedBias,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub name: String,
    pub kind: TeacherKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Prediction matrix basename for external and table teachers;
    /// external teachers default to `<output_dir>/predictions/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherPair {
    pub id: TeacherConfig,
    pub ood: TeacherConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(default = "defaults::object_threshold")]
    pub object_threshold: f64,
    #[serde(default = "defaults::attribute_threshold")]
    pub attribute_threshold: f64,
    #[serde(default = "defaults::max_objects")]
    pub max_objects: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        let d = DetectionThresholds::default();
        Self { object_threshold: d.object, attribute_threshold: d.attribute, max_objects: d.max_objects }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSet {
    pub annotations: PathBuf,
    /// JSON Lines `{"question_id", "answer"}`.
    pub predictions: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<EvalSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<EvalSet>,
}

mod defaults {
    use augforge_core::corpus::DetectionThresholds;

    pub fn alpha() -> f64 {
        10.0
    }
    pub fn delta() -> f64 {
        100.0
    }
    pub fn k() -> usize {
        3
    }
    pub fn threshold() -> f64 {
        0.95
    }
    pub fn top_k() -> usize {
        3
    }
    pub fn mode() -> super::Mode {
        super::Mode::Extra
    }
    pub fn eps() -> f64 {
        augforge_core::kd::DEFAULT_EPS
    }
    pub fn min_count() -> usize {
        1
    }
    pub fn object_threshold() -> f64 {
        DetectionThresholds::default().object
    }
    pub fn attribute_threshold() -> f64 {
        DetectionThresholds::default().attribute
    }
    pub fn max_objects() -> usize {
        DetectionThresholds::default().max_objects
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub questions: PathBuf,
    pub annotations: PathBuf,
    pub detections: PathBuf,
    pub embeddings: EmbeddingPaths,
    pub teachers: TeacherPair,
    pub output_dir: PathBuf,
    #[serde(default = "defaults::alpha")]
    pub alpha_percent: f64,
    #[serde(default = "defaults::delta")]
    pub delta_percent: f64,
    #[serde(default = "defaults::k")]
    pub yesno_sample_k: usize,
    #[serde(default = "defaults::threshold")]
    pub paraphrase_threshold: f64,
    #[serde(default = "defaults::top_k")]
    pub paraphrase_top_k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::mode")]
    pub mode: Mode,
    /// Constant OOD teacher weight; dynamic weighting when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_w_ood: Option<f64>,
    #[serde(default = "defaults::eps")]
    pub fusion_eps: f64,
    #[serde(default = "defaults::min_count")]
    pub min_answer_count: usize,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_overrides: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub alpha_percent: Option<f64>,
    pub delta_percent: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path).map_err(|e| match e {
            AppError::MalformedFile { path, line, message } => {
                AppError::Config(format!("{}:{line}: {message}", path.display()))
            }
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(a) = o.alpha_percent {
            self.alpha_percent = a;
        }
        if let Some(d) = o.delta_percent {
            self.delta_percent = d;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(AppError::Config(m));
        if !(self.alpha_percent > 0.0 && self.alpha_percent <= 100.0) {
            return fail(format!("alpha_percent must be in (0, 100], got {}", self.alpha_percent));
        }
        if !(0.0..=100.0).contains(&self.delta_percent) {
            return fail(format!("delta_percent must be in [0, 100], got {}", self.delta_percent));
        }
        if self.yesno_sample_k == 0 {
            return fail("yesno_sample_k must be at least 1".into());
        }
        if !(self.paraphrase_threshold > 0.0 && self.paraphrase_threshold <= 1.0) {
            return fail(format!("paraphrase_threshold must be in (0, 1], got {}", self.paraphrase_threshold));
        }
        if self.paraphrase_top_k == 0 {
            return fail("paraphrase_top_k must be at least 1".into());
        }
        if self.min_answer_count == 0 {
            return fail("min_answer_count must be at least 1".into());
        }
        let d = &self.detection;
        if !(0.0..=1.0).contains(&d.object_threshold) || !(0.0..=1.0).contains(&d.attribute_threshold) {
            return fail("detection thresholds must be in [0, 1]".into());
        }
        if d.max_objects == 0 {
            return fail("detection.max_objects must be at least 1".into());
        }
        self.fusion().validate().map_err(|e| AppError::Config(e.to_string()))?;
        if self.teachers.id.name == self.teachers.ood.name {
            return fail(format!("teacher names must differ, both are {:?}", self.teachers.id.name));
        }
        for t in [&self.teachers.id, &self.teachers.ood] {
            if t.name.is_empty() {
                return fail("teacher names must be non-empty".into());
            }
            match t.kind {
                TeacherKindName::PerturbedBias => match t.lambda {
                    Some(l) if (0.0..=1.0).contains(&l) => {}
                    _ => return fail(format!("teacher {:?} needs lambda in [0, 1]", t.name)),
                },
                TeacherKindName::Table if t.path.is_none() => {
                    return fail(format!("table teacher {:?} needs a path", t.name));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn layout(&self) -> Layout {
        Layout { root: self.output_dir() }
    }

    pub fn thresholds(&self) -> DetectionThresholds {
        DetectionThresholds {
            object: self.detection.object_threshold,
            attribute: self.detection.attribute_threshold,
            max_objects: self.detection.max_objects,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            eps: self.fusion_eps,
            weighting: match self.fixed_w_ood {
                Some(w_ood) => Weighting::Fixed { w_ood },
                None => Weighting::Dynamic,
            },
        }
    }

    pub fn teacher_spec(t: &TeacherConfig) -> TeacherSpec {
        let kind = match t.kind {
            TeacherKindName::External => TeacherKind::External,
            TeacherKindName::Bias => TeacherKind::Bias,
            TeacherKindName::Uniform => TeacherKind::Uniform,
            TeacherKindName::PerturbedBias => {
                TeacherKind::PerturbedBias { lambda: t.lambda.unwrap_or(0.0), seed: t.seed.unwrap_or(0) }
            }
            TeacherKindName::Table => TeacherKind::Table,
        };
        TeacherSpec { name: t.name.clone(), kind }
    }

    /// Prediction matrix basename of a tabular teacher.
    pub fn prediction_path(&self, t: &TeacherConfig) -> PathBuf {
        match &t.path {
            Some(p) => self.resolve(p),
            None => self.layout().predictions_dir().join(&t.name),
        }
    }

    pub fn qa_prompt_embeddings(&self) -> PathBuf {
        match &self.embeddings.qa_prompts {
            Some(p) => self.resolve(p),
            None => self.layout().predictions_dir().join("qa_prompts"),
        }
    }

    /// SHA-256 of the resolved configuration as canonical JSON.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Locations of every file a run reads from or writes to its output
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    fn work(&self, name: &str) -> PathBuf {
        self.root.join("work").join(name)
    }

    fn dataset(&self, name: &str) -> PathBuf {
        self.root.join("dataset").join(name)
    }

    pub fn vocab(&self) -> PathBuf {
        self.work("answer_vocab.json")
    }
    pub fn candidates(&self) -> PathBuf {
        self.work("candidates.jsonl")
    }
    pub fn compose_summary(&self) -> PathBuf {
        self.work("compose_summary.json")
    }
    pub fn scored(&self) -> PathBuf {
        self.work("scored.jsonl")
    }
    pub fn assigned(&self) -> PathBuf {
        self.work("assigned.jsonl")
    }
    pub fn requests_dir(&self) -> PathBuf {
        self.root.join("requests")
    }
    pub fn teacher_requests(&self) -> PathBuf {
        self.requests_dir().join("teacher_requests.jsonl")
    }
    pub fn qa_prompts(&self) -> PathBuf {
        self.requests_dir().join("qa_prompts.jsonl")
    }
    pub fn predictions_dir(&self) -> PathBuf {
        self.root.join("predictions")
    }
    pub fn questions_aug(&self) -> PathBuf {
        self.dataset("questions_aug.json")
    }
    pub fn soft_labels(&self) -> PathBuf {
        self.dataset("soft_labels.jsonl")
    }
    pub fn header(&self) -> PathBuf {
        self.dataset("header.json")
    }
    pub fn dataset_vocab(&self) -> PathBuf {
        self.dataset("answer_vocab.json")
    }
    pub fn stats_json(&self) -> PathBuf {
        self.root.join("stats.json")
    }
    pub fn stats_txt(&self) -> PathBuf {
        self.root.join("stats.txt")
    }
    pub fn eval_json(&self) -> PathBuf {
        self.root.join("eval").join("report.json")
    }
    pub fn eval_txt(&self) -> PathBuf {
        self.root.join("eval").join("report.txt")
    }
}
