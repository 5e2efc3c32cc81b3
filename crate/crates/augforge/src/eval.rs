//! ID/OOD evaluation report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use augforge_core::corpus::AnswerCategory;
use augforge_core::metrics::{evaluate, harmonic_mean, EvalResult};
use serde::{Deserialize, Serialize};

use crate::config::{EvalSet, RunConfig};
use crate::error::{AppError, Result};
use crate::formats::{read_json, read_jsonl, write_json, write_text, AnnotationsFile};
use crate::records::PredictionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub n: usize,
    pub overall: f64,
    /// Category name to `(n, accuracy)`.
    pub per_category: BTreeMap<String, (usize, f64)>,
}

impl From<&EvalResult> for SetReport {
    fn from(r: &EvalResult) -> Self {
        Self {
            n: r.n,
            overall: r.overall,
            per_category: r.per_category.iter().map(|(c, a)| (c.as_str().to_string(), (a.n, a.accuracy))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub id: Option<SetReport>,
    pub ood: Option<SetReport>,
    /// Present when both sets are evaluated and both accuracies are positive.
    pub hm: Option<f64>,
}

type TruthMap = BTreeMap<u64, (AnswerCategory, Vec<String>)>;

pub fn load_truth(path: &Path) -> Result<TruthMap> {
    let file: AnnotationsFile = read_json(path)?;
    let mut map = TruthMap::new();
    for a in file.annotations {
        let cat = AnswerCategory::from_answer_type(&a.answer_type);
        let answers = a.answers.into_iter().map(|x| x.answer).collect();
        if map.insert(a.question_id, (cat, answers)).is_some() {
            return Err(AppError::Core(augforge_core::Error::DuplicateId { kind: "annotation", id: a.question_id }));
        }
    }
    Ok(map)
}

pub fn load_predictions_file(path: &Path) -> Result<Vec<(u64, String)>> {
    let records: Vec<PredictionRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.question_id, r.answer)).collect())
}

pub fn evaluate_set(set: &EvalSet, cfg: &RunConfig) -> Result<EvalResult> {
    let truth = load_truth(&cfg.resolve(&set.annotations))?;
    let preds = load_predictions_file(&cfg.resolve(&set.predictions))?;
    Ok(evaluate(&preds, &truth)?)
}

impl EvalReport {
    pub fn from_results(id: Option<&EvalResult>, ood: Option<&EvalResult>) -> Result<Self> {
        let hm = match (id, ood) {
            (Some(a), Some(b)) if a.overall > 0.0 && b.overall > 0.0 => Some(harmonic_mean(a.overall, b.overall)?),
            _ => None,
        };
        Ok(Self { id: id.map(SetReport::from), ood: ood.map(SetReport::from), hm })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<6} {:>8} {:>8} {:>8} {:>8} {:>8}", "set", "n", "All", "Y/N", "Num", "Other");
        for (name, set) in [("ID", &self.id), ("OOD", &self.ood)] {
            let Some(r) = set else { continue };
            let cell = |c: AnswerCategory| {
                r.per_category.get(c.as_str()).map_or_else(|| "-".to_string(), |(_, a)| format!("{a:.2}"))
            };
            let _ = writeln!(
                s,
                "{:<6} {:>8} {:>8.2} {:>8} {:>8} {:>8}",
                name,
                r.n,
                r.overall,
                cell(AnswerCategory::YesNo),
                cell(AnswerCategory::Number),
                cell(AnswerCategory::Other)
            );
        }
        if let Some(hm) = self.hm {
            let _ = writeln!(s, "{:<6} {:>8} {:>8.2}", "HM", "", hm);
        }
        s
    }
}

/// `eval` stage.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let ec = cfg.eval.as_ref().ok_or_else(|| AppError::Config("no eval section in config".into()))?;
    if ec.id.is_none() && ec.ood.is_none() {
        return Err(AppError::Config("eval section names no prediction set".into()));
    }
    let id = ec.id.as_ref().map(|s| evaluate_set(s, cfg)).transpose()?;
    let ood = ec.ood.as_ref().map(|s| evaluate_set(s, cfg)).transpose()?;
    let report = EvalReport::from_results(id.as_ref(), ood.as_ref())?;
    let layout = cfg.layout();
    write_json(&layout.eval_json(), &report)?;
    write_text(&layout.eval_txt(), &report.to_text())?;
    Ok(report)
}
