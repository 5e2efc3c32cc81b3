//! On-disk formats: VQA question/annotation JSON, detection and record
//! JSON Lines, and row-major `f32` matrices with a JSON sidecar.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use augforge_core::corpus::{
    Attribute, Corpus, DetectedObject, DetectionThresholds, RawAnnotation, RawDetection, RawQuestion,
};
use augforge_core::embedding::{EmbeddingKey, EmbeddingMatrix};
use augforge_core::teacher::PredictionTable;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| AppError::malformed(path, e.line(), e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Internal(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AppError::malformed(path, i + 1, e))?);
    }
    Ok(out)
}

/// Buffered JSON Lines output; [`JsonlWriter::finish`] flushes.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| AppError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value).map_err(|e| AppError::Internal(e.to_string()))?;
        self.write_raw("")
    }

    /// Writes `line` followed by a newline; `line` must be one JSON value.
    pub fn write_raw(&mut self, line: &str) -> Result<()> {
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| AppError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| AppError::io(&self.path, e))
    }
}

/// Decimal rendering with 9 significant digits and no trailing zeros.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { "null".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    trim_zeros(&fixed).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionEntry {
    pub image_id: u64,
    pub question: String,
    pub question_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionsFile {
    pub questions: Vec<QuestionEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerEntry {
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub question_id: u64,
    pub image_id: u64,
    pub question_type: String,
    pub answer_type: String,
    pub answers: Vec<AnswerEntry>,
    pub multiple_choice_answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationsFile {
    pub annotations: Vec<AnnotationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub category: String,
    pub score: f64,
    #[serde(default)]
    pub attributes: Vec<AttributeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub image_id: u64,
    pub objects: Vec<ObjectEntry>,
}

impl From<AnnotationEntry> for RawAnnotation {
    fn from(a: AnnotationEntry) -> Self {
        RawAnnotation {
            question_id: a.question_id,
            image_id: a.image_id,
            question_type: a.question_type,
            answer_type: a.answer_type,
            answers: a.answers.into_iter().map(|x| x.answer).collect(),
            multiple_choice_answer: a.multiple_choice_answer,
        }
    }
}

impl From<DetectionEntry> for RawDetection {
    fn from(d: DetectionEntry) -> Self {
        RawDetection {
            image_id: d.image_id,
            objects: d
                .objects
                .into_iter()
                .map(|o| DetectedObject {
                    category: o.category,
                    score: o.score,
                    attributes: o.attributes.into_iter().map(|a| Attribute { name: a.name, score: a.score }).collect(),
                })
                .collect(),
        }
    }
}

pub fn load_corpus(
    questions: &Path,
    annotations: &Path,
    detections: &Path,
    thresholds: &DetectionThresholds,
) -> Result<Corpus> {
    let qs: QuestionsFile = read_json(questions)?;
    let anns: AnnotationsFile = read_json(annotations)?;
    let dets: Vec<DetectionEntry> = read_jsonl(detections)?;
    let corpus = Corpus::build(
        qs.questions
            .into_iter()
            .map(|q| RawQuestion { question_id: q.question_id, image_id: q.image_id, text: q.question })
            .collect(),
        anns.annotations.into_iter().map(Into::into).collect(),
        dets.into_iter().map(Into::into).collect(),
        thresholds,
    )?;
    Ok(corpus)
}

/// Optional lexicon override file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconOverrides {
    #[serde(default)]
    pub stop_nouns: Vec<String>,
    /// singular -> plural
    #[serde(default)]
    pub irregular_plurals: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdKind {
    Image,
    NounPrompt,
    QaPrompt,
    Question,
    PairPrediction,
}

impl IdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Image => "image",
            Self::NounPrompt => "noun_prompt",
            Self::QaPrompt => "qa_prompt",
            Self::Question => "question",
            Self::PairPrediction => "pair_prediction",
        }
    }

    fn text_ids(self) -> bool {
        matches!(self, Self::NounPrompt | Self::QaPrompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub dim: usize,
    pub count: usize,
    pub ids: Vec<serde_json::Value>,
    pub id_kind: IdKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_name: Option<String>,
}

/// `(matrix, sidecar)` paths for a basename; a trailing `.bin` or `.json`
/// is ignored.
pub fn matrix_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut bin = stem.clone().into_os_string();
    bin.push(".bin");
    let mut json = stem.into_os_string();
    json.push(".json");
    (bin.into(), json.into())
}

pub fn matrix_exists(base: &Path) -> bool {
    let (bin, json) = matrix_paths(base);
    bin.is_file() && json.is_file()
}

pub fn read_matrix(base: &Path) -> Result<(MatrixSidecar, Vec<f32>)> {
    let (bin, json) = matrix_paths(base);
    let sidecar: MatrixSidecar = read_json(&json)?;
    let bytes = std::fs::read(&bin).map_err(|e| AppError::io(&bin, e))?;
    if sidecar.ids.len() != sidecar.count {
        return Err(AppError::Shape(format!(
            "{}: sidecar lists {} ids for count {}",
            json.display(),
            sidecar.ids.len(),
            sidecar.count
        )));
    }
    let expected = sidecar.dim * sidecar.count * 4;
    if bytes.len() != expected {
        return Err(AppError::Shape(format!(
            "{}: {} bytes, expected {} for {}x{} f32",
            bin.display(),
            bytes.len(),
            expected,
            sidecar.count,
            sidecar.dim
        )));
    }
    let rows = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((sidecar, rows))
}

pub fn write_matrix(base: &Path, sidecar: &MatrixSidecar, rows: &[f32]) -> Result<()> {
    if rows.len() != sidecar.dim * sidecar.count || sidecar.ids.len() != sidecar.count {
        return Err(AppError::Internal(format!(
            "matrix of {} values does not match sidecar {}x{}",
            rows.len(),
            sidecar.count,
            sidecar.dim
        )));
    }
    let (bin, json) = matrix_paths(base);
    if let Some(dir) = bin.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut bytes = Vec::with_capacity(rows.len() * 4);
    for x in rows {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::write(&bin, bytes).map_err(|e| AppError::io(&bin, e))?;
    write_json(&json, sidecar)
}

fn key_of(v: &serde_json::Value, kind: IdKind, json: &Path) -> Result<EmbeddingKey> {
    let key = if kind.text_ids() {
        v.as_str().map(|s| EmbeddingKey::Text(s.to_string()))
    } else {
        v.as_u64().map(EmbeddingKey::Int)
    };
    key.ok_or_else(|| AppError::Shape(format!("{}: id {v} is not valid for id_kind {}", json.display(), kind.as_str())))
}

pub fn load_embeddings(base: &Path, kind: IdKind) -> Result<EmbeddingMatrix> {
    let (sidecar, rows) = read_matrix(base)?;
    let json = matrix_paths(base).1;
    if sidecar.id_kind != kind {
        return Err(AppError::Shape(format!(
            "{}: id_kind {} where {} was expected",
            json.display(),
            sidecar.id_kind.as_str(),
            kind.as_str()
        )));
    }
    let ids = sidecar.ids.iter().map(|v| key_of(v, kind, &json)).collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingMatrix::new(sidecar.dim, ids, rows)?)
}

/// Prediction matrix for `pairs` pairs; row `i` must carry pair id `i`.
pub fn load_predictions(base: &Path, teacher_name: &str, pairs: usize, vocab_len: usize) -> Result<PredictionTable> {
    let (sidecar, rows) = read_matrix(base)?;
    let json = matrix_paths(base).1;
    if sidecar.id_kind != IdKind::PairPrediction {
        return Err(AppError::Shape(format!("{}: id_kind must be pair_prediction", json.display())));
    }
    if let Some(name) = &sidecar.teacher_name {
        if name != teacher_name {
            return Err(AppError::Config(format!(
                "{} holds predictions of teacher {name:?}, configured as {teacher_name:?}",
                json.display()
            )));
        }
    }
    for (i, v) in sidecar.ids.iter().enumerate() {
        if v.as_u64() != Some(i as u64) {
            return Err(AppError::Shape(format!("{}: row {i} has pair id {v}", json.display())));
        }
    }
    Ok(PredictionTable::new(rows, sidecar.dim, pairs, vocab_len)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_rendering() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(0.5), "0.5");
        assert_eq!(fmt_sig9(0.391412685266581), "0.391412685");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(1234567890.0), "1.23456789e9");
        assert_eq!(fmt_sig9(2.5e-7), "2.5e-7");
        assert_eq!(fmt_sig9(0.99999999999), "1");
        assert_eq!(fmt_sig9(-0.25), "-0.25");
        assert_eq!(fmt_sig9(0.000012345678912), "0.0000123456789");
    }

    #[test]
    fn sig9_parses_back_within_tolerance() {
        for x in [0.123456789123, 7.77e-6, 0.999999, 1e-6, 0.5] {
            let y: f64 = fmt_sig9(x).parse().unwrap();
            assert!((x - y).abs() <= 5e-9 * x.abs(), "{x} -> {y}");
        }
    }

    #[test]
    fn matrix_paths_strip_extension() {
        let (b, j) = matrix_paths(Path::new("dir/x.bin"));
        assert_eq!((b, j), (PathBuf::from("dir/x.bin"), PathBuf::from("dir/x.json")));
        let (b, _) = matrix_paths(Path::new("dir/x"));
        assert_eq!(b, PathBuf::from("dir/x.bin"));
    }
}
