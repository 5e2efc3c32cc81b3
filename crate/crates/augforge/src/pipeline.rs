//! The staged pipeline. Each stage reads the previous stage's files from
//! the output directory, so running the stages one by one produces the
//! same bytes as a monolithic run.
//!
//! Work is split into fixed-size chunks and collected in order; output
//! never depends on the number of worker threads.

use std::collections::BTreeMap;
use std::path::PathBuf;

use augforge_core::compose::{
    merge_paraphrases, paraphrases_for, question_rows, remove_overlap, CandidatePair, ComposeConfig, ComposePlan,
    InvertedIndex, Origin, ParaphraseConfig,
};
use augforge_core::corpus::{BiasPrior, BiasReport, Corpus};
use augforge_core::dist::{AnswerDistribution, AnswerVocab};
use augforge_core::embedding::EmbeddingMatrix;
use augforge_core::initial::{InitialAnswer, InitialRules};
use augforge_core::kd::{assign_one, top_delta_mask, FusionInput, PseudoAnswer};
use augforge_core::nouns::{extract_all, prune_nounless, NounLexicon, PruneReport};
use augforge_core::relevance::{clip_rank_prompt, filter_top, rank_by_answer_quality, score_pairs, QaSample};
use augforge_core::teacher::{reference_predict, PredictionTable, TeacherKind, TeacherSpec};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::config::{Mode, RunConfig, TeacherConfig, TeacherKindName};
use crate::error::{AppError, Result};
use crate::formats::{
    fmt_sig9, load_corpus, load_embeddings, load_predictions, matrix_exists, read_json, read_jsonl, write_json, IdKind,
    JsonlWriter, LexiconOverrides, QuestionEntry,
};
use crate::records::{
    AssignedRecord, CandidateRecord, ComposeSummary, Counts, DatasetHeader, QaPromptRequest, ScoreSummary,
    ScoredRecord, SoftLabelRecord, TeacherRequest, VocabFile,
};

/// Work unit of every parallel map.
pub const CHUNK: usize = 2048;
/// Smallest label weight written to the dataset.
pub const EMIT_FLOOR: f64 = 1e-6;
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Corpus with nouns, vocabulary and bias prior, rebuilt identically by
/// every stage.
pub struct Prepared {
    pub corpus: Corpus,
    pub lexicon: NounLexicon,
    pub prune: PruneReport,
    pub vocab: AnswerVocab,
    pub bias: BiasPrior,
    pub bias_report: BiasReport,
}

impl Prepared {
    /// Normalized in-vocabulary soft scores of an original question.
    pub fn source_label(&self, question_id: u64) -> Option<AnswerDistribution> {
        let (scores, _) = self.corpus.truth(question_id)?.soft_scores_in(&self.vocab);
        AnswerDistribution::from_sparse(self.vocab.len(), &scores).ok()
    }

    fn bias_of(&self, question_id: u64) -> Result<&AnswerDistribution> {
        let q = self.corpus.question(question_id).ok_or_else(|| dangling(question_id))?;
        self.bias
            .get(&q.question_type)
            .ok_or_else(|| AppError::Internal(format!("no prior for question type {:?}", q.question_type)))
    }

    fn rules<'a>(&'a self, cfg: &RunConfig) -> InitialRules<'a> {
        match &cfg.color_words {
            Some(words) => InitialRules::with_colors(&self.corpus, &self.vocab, words.iter().map(String::as_str)),
            None => InitialRules::new(&self.corpus, &self.vocab),
        }
    }
}

fn dangling(question_id: u64) -> AppError {
    AppError::Core(augforge_core::Error::DanglingReference { kind: "question", id: question_id })
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let mut corpus = load_corpus(
        &cfg.resolve(&cfg.questions),
        &cfg.resolve(&cfg.annotations),
        &cfg.resolve(&cfg.detections),
        &cfg.thresholds(),
    )?;
    let overrides: LexiconOverrides = match &cfg.lexicon_overrides {
        Some(p) => read_json(&cfg.resolve(p))?,
        None => LexiconOverrides::default(),
    };
    let lexicon = NounLexicon::from_corpus(
        &corpus,
        overrides.stop_nouns.iter().map(String::as_str),
        overrides.irregular_plurals.iter().map(|(s, p)| (s.as_str(), p.as_str())),
    );
    extract_all(&mut corpus, &lexicon);
    let prune = prune_nounless(&mut corpus);
    let vocab = corpus.build_answer_vocab(cfg.min_answer_count);
    if vocab.is_empty() {
        return Err(AppError::Config(format!("no answer occurs at least {} times", cfg.min_answer_count)));
    }
    let (bias, bias_report) = BiasPrior::build(&corpus, &vocab)?;
    Ok(Prepared { corpus, lexicon, prune, vocab, bias, bias_report })
}

pub fn compose_config(cfg: &RunConfig) -> ComposeConfig {
    ComposeConfig { yesno_sample_k: cfg.yesno_sample_k, seed: cfg.seed, basic_only: cfg.mode == Mode::Basic }
}

pub struct Composition {
    /// Sorted by `(question_id, image_id)`.
    pub candidates: Vec<CandidatePair>,
    pub summary: ComposeSummary,
}

/// Reasonable pairs (with Yes/No sampling) plus paraphrase pairs.
pub fn compose_candidates(cfg: &RunConfig, p: &Prepared, pool: &ThreadPool) -> Result<Composition> {
    let ccfg = compose_config(cfg);
    let index = InvertedIndex::build(&p.corpus);
    let plan = ComposePlan::new(&p.corpus, &ccfg);
    let composed: Vec<CandidatePair> = pool.install(|| {
        plan.entries
            .par_chunks(CHUNK)
            .map(|entries| ComposePlan::pairs_for(&p.corpus, &index, entries))
            .collect::<Vec<_>>()
            .concat()
    });
    let reasonable = composed.len();

    let mut unlabeled = 0;
    let paraphrases = match &cfg.embeddings.questions {
        Some(path) => {
            let emb = load_embeddings(&cfg.resolve(path), IdKind::Question)?;
            let pcfg = ParaphraseConfig { threshold: cfg.paraphrase_threshold, top_k: cfg.paraphrase_top_k };
            let rows = question_rows(&p.corpus, &emb)?;
            let n = p.corpus.questions().len();
            let shards: Vec<_> = (0..n).step_by(CHUNK / 8).map(|s| s..(s + CHUNK / 8).min(n)).collect();
            let scored = pool.install(|| {
                shards
                    .into_par_iter()
                    .map(|r| paraphrases_for(&p.corpus, &emb, &rows, r, &pcfg, &|q| ccfg.admits(q)))
                    .collect::<augforge_core::Result<Vec<_>>>()
            })?;
            let merged = merge_paraphrases(scored.concat());
            let before = merged.len();
            let kept: Vec<CandidatePair> =
                merged.into_iter().filter(|c| c.source_question_id.and_then(|s| p.source_label(s)).is_some()).collect();
            unlabeled = before - kept.len();
            kept
        }
        None => Vec::new(),
    };
    let composed = remove_overlap(composed, &paraphrases);
    let overlap = reasonable - composed.len();
    let paraphrase_pairs = paraphrases.len();
    let mut candidates = composed;
    candidates.extend(paraphrases);
    candidates.sort_by_key(CandidatePair::key);

    let stats = p.corpus.stats();
    let report = plan.report(reasonable);
    let mut per_origin = BTreeMap::new();
    for c in &candidates {
        *per_origin.entry(c.origin.as_str().to_string()).or_insert(0) += 1;
    }
    let summary = ComposeSummary {
        original_questions: stats.questions,
        original_per_category: stats.per_category.iter().map(|(c, n)| (c.as_str().to_string(), *n)).collect(),
        images: stats.images,
        yesno_fraction: stats.yesno_fraction,
        question_types: stats.question_types,
        pruned_questions: p.prune.removed,
        prune_fraction: p.prune.fraction(),
        planned_questions: report.planned_questions,
        yesno_groups: report.yesno_groups,
        yesno_sampled_questions: report.yesno_sampled_questions,
        reasonable_pairs: reasonable,
        paraphrase_pairs,
        paraphrase_overlap_removed: overlap,
        paraphrase_sources_without_labels: unlabeled,
        candidates: candidates.len(),
        vocab_size: p.vocab.len(),
        bias_dropped_answers: p.bias_report.dropped_answers,
        bias_uniform_fallback_types: p.bias_report.uniform_fallback_types.clone(),
        per_origin,
    };
    Ok(Composition { candidates, summary })
}

/// `compose` stage: candidate dump, vocabulary and summary.
pub fn compose(cfg: &RunConfig, pool: &ThreadPool) -> Result<ComposeSummary> {
    let p = prepare(cfg)?;
    let c = compose_candidates(cfg, &p, pool)?;
    let layout = cfg.layout();
    write_json(&layout.vocab(), &VocabFile { answers: p.vocab.entries().to_vec() })?;
    let mut w = JsonlWriter::create(&layout.candidates())?;
    for pair in &c.candidates {
        w.write(&CandidateRecord::from(pair))?;
    }
    w.finish()?;
    write_json(&layout.compose_summary(), &c.summary)?;
    log::info!(
        "compose: {} candidates ({} reasonable, {} paraphrase) from {} questions",
        c.summary.candidates,
        c.summary.reasonable_pairs,
        c.summary.paraphrase_pairs,
        c.summary.original_questions
    );
    Ok(c.summary)
}

fn read_candidates(cfg: &RunConfig) -> Result<Vec<CandidatePair>> {
    let records: Vec<CandidateRecord> = read_jsonl(&cfg.layout().candidates())?;
    records.iter().map(CandidateRecord::to_pair).collect()
}

/// Relevance for the non-paraphrase candidates, then the top-alpha cut.
/// Paraphrase pairs pass through. Output sorted by key.
pub fn filter_candidates(
    cfg: &RunConfig,
    p: &Prepared,
    candidates: Vec<CandidatePair>,
    pool: &ThreadPool,
) -> Result<(Vec<CandidatePair>, usize)> {
    let (paraphrases, mut composed): (Vec<_>, Vec<_>) =
        candidates.into_iter().partition(|c| c.origin == Origin::Paraphrase);
    let scored = composed.len();
    let kept = if composed.is_empty() {
        Vec::new()
    } else {
        let images = load_embeddings(&cfg.resolve(&cfg.embeddings.images), IdKind::Image)?;
        let prompts = load_embeddings(&cfg.resolve(&cfg.embeddings.noun_prompts), IdKind::NounPrompt)?;
        let scores: Vec<Vec<f64>> = pool.install(|| {
            composed
                .par_chunks(CHUNK)
                .map(|c| score_pairs(c, &images, &prompts, &p.corpus))
                .collect::<augforge_core::Result<_>>()
        })?;
        for (pair, s) in composed.iter_mut().zip(scores.into_iter().flatten()) {
            pair.relevance = Some(s);
        }
        filter_top(composed, cfg.alpha_percent)?
    };
    let mut pairs = kept;
    pairs.extend(paraphrases);
    pairs.sort_by_key(CandidatePair::key);
    Ok((pairs, scored))
}

/// Rule answer and, when the rule fires, the answer-quality prompt.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptOutcome {
    NotCovered,
    Prompt(String),
    /// Rule-covered but the question text does not admit a prompt.
    Failed,
}

fn prompt_for(p: &Prepared, rules: &InitialRules<'_>, pair: &CandidatePair) -> PromptOutcome {
    let a = rules.assign(pair);
    let Some(dist) = a.distribution.as_ref() else {
        return PromptOutcome::NotCovered;
    };
    let answer = dist.argmax().and_then(|id| p.vocab.answer(id));
    let q = p.corpus.question(pair.question_id);
    match (q, answer) {
        (Some(q), Some(ans)) => match clip_rank_prompt(q, ans, &p.lexicon) {
            Ok(s) => PromptOutcome::Prompt(s),
            Err(_) => PromptOutcome::Failed,
        },
        _ => PromptOutcome::Failed,
    }
}

pub fn prompts(cfg: &RunConfig, p: &Prepared, pairs: &[CandidatePair], pool: &ThreadPool) -> Vec<PromptOutcome> {
    let rules = p.rules(cfg);
    pool.install(|| {
        pairs
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|pair| prompt_for(p, &rules, pair)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .concat()
    })
}

/// `score` stage: final pair list, teacher requests and QA prompts.
pub fn score(cfg: &RunConfig, pool: &ThreadPool) -> Result<ScoreSummary> {
    let p = prepare(cfg)?;
    let candidates = read_candidates(cfg)?;
    let (pairs, scored) = filter_candidates(cfg, &p, candidates, pool)?;
    let outcomes = prompts(cfg, &p, &pairs, pool);
    let layout = cfg.layout();

    let mut w = JsonlWriter::create(&layout.scored())?;
    for (i, pair) in pairs.iter().enumerate() {
        w.write(&ScoredRecord::new(i as u64, pair))?;
    }
    w.finish()?;
    let mut w = JsonlWriter::create(&layout.teacher_requests())?;
    for (i, pair) in pairs.iter().enumerate() {
        let q = p.corpus.question(pair.question_id).ok_or_else(|| dangling(pair.question_id))?;
        w.write(&TeacherRequest {
            pair_id: i as u64,
            image_id: pair.image_id,
            question_id: pair.question_id,
            question: q.text.clone(),
        })?;
    }
    w.finish()?;
    let mut w = JsonlWriter::create(&layout.qa_prompts())?;
    let (mut covered, mut written, mut failed) = (0, 0, 0);
    for (i, o) in outcomes.iter().enumerate() {
        match o {
            PromptOutcome::NotCovered => {}
            PromptOutcome::Prompt(prompt) => {
                covered += 1;
                written += 1;
                w.write(&QaPromptRequest { pair_id: i as u64, prompt: prompt.clone() })?;
            }
            PromptOutcome::Failed => {
                covered += 1;
                failed += 1;
            }
        }
    }
    w.finish()?;
    let kept = pairs.iter().filter(|c| c.origin != Origin::Paraphrase).count();
    let summary = ScoreSummary {
        scored_pairs: scored,
        kept_pairs: kept,
        paraphrase_pairs: pairs.len() - kept,
        pairs: pairs.len(),
        rule_covered: covered,
        qa_prompts: written,
        prompt_failures: failed,
    };
    log::info!("score: kept {} of {} scored pairs at alpha {}%", kept, scored, cfg.alpha_percent);
    Ok(summary)
}

fn read_scored(cfg: &RunConfig) -> Result<Vec<CandidatePair>> {
    let path = cfg.layout().scored();
    let records: Vec<ScoredRecord> = read_jsonl(&path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.pair_id != i as u64 {
                return Err(AppError::malformed(&path, i + 1, format!("pair_id {} out of sequence", r.pair_id)));
            }
            r.to_pair()
        })
        .collect()
}

/// A teacher ready to predict for the current pair list.
pub enum LoadedTeacher {
    Table(TeacherSpec, PredictionTable),
    Reference(TeacherSpec),
}

impl LoadedTeacher {
    pub fn load(cfg: &RunConfig, t: &TeacherConfig, pairs: usize, vocab_len: usize) -> Result<Self> {
        let spec = RunConfig::teacher_spec(t);
        if spec.kind.is_tabular() {
            let table = load_predictions(&cfg.prediction_path(t), &t.name, pairs, vocab_len)?;
            Ok(Self::Table(spec, table))
        } else {
            Ok(Self::Reference(spec))
        }
    }

    pub fn predict(&self, pair_id: u64, bias: &AnswerDistribution) -> Result<AnswerDistribution> {
        Ok(match self {
            Self::Table(spec, table) => reference_predict(
                &TeacherSpec { kind: TeacherKind::Table, ..spec.clone() },
                pair_id,
                bias,
                Some(table),
            )?,
            Self::Reference(spec) => reference_predict(spec, pair_id, bias, None)?,
        })
    }
}

/// Inputs a two-phase run still waits for: missing external prediction
/// matrices and, when the delta split needs a ranking, QA prompt
/// embeddings.
pub fn missing_phase_two_inputs(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut missing = Vec::new();
    for t in [&cfg.teachers.id, &cfg.teachers.ood] {
        let path = cfg.prediction_path(t);
        if t.kind == TeacherKindName::External && !matrix_exists(&path) {
            missing.push(path);
        }
    }
    if needs_ranking(cfg) {
        let prompts: Vec<QaPromptRequest> = read_jsonl(&cfg.layout().qa_prompts())?;
        let path = cfg.qa_prompt_embeddings();
        if !prompts.is_empty() && !matrix_exists(&path) {
            missing.push(path);
        }
    }
    Ok(missing)
}

fn needs_ranking(cfg: &RunConfig) -> bool {
    cfg.delta_percent > 0.0 && cfg.delta_percent < 100.0
}

/// Rule-covered pair indices, best first. Pairs whose prompt could not be
/// built rank last in pair order.
pub fn answer_quality_ranking(
    cfg: &RunConfig,
    pairs: &[CandidatePair],
    outcomes: &[PromptOutcome],
) -> Result<Vec<usize>> {
    let covered: Vec<usize> = (0..pairs.len()).filter(|&i| outcomes[i] != PromptOutcome::NotCovered).collect();
    if !needs_ranking(cfg) {
        return Ok(covered);
    }
    let mut samples = Vec::new();
    let mut index = Vec::new();
    for &i in &covered {
        if let PromptOutcome::Prompt(prompt) = &outcomes[i] {
            samples.push(QaSample {
                question_id: pairs[i].question_id,
                image_id: pairs[i].image_id,
                prompt: prompt.clone(),
            });
            index.push(i);
        }
    }
    let mut ranking = Vec::with_capacity(covered.len());
    if !samples.is_empty() {
        let images = load_embeddings(&cfg.resolve(&cfg.embeddings.images), IdKind::Image)?;
        let qa = load_embeddings(&cfg.qa_prompt_embeddings(), IdKind::QaPrompt)?;
        ranking.extend(rank_by_answer_quality(&samples, &images, &qa)?.into_iter().map(|r| index[r.index]));
    }
    ranking.extend(covered.iter().copied().filter(|&i| outcomes[i] == PromptOutcome::Failed));
    Ok(ranking)
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AssignSummary {
    pub pairs: usize,
    pub rule_covered: usize,
    pub init_anchored: usize,
    pub per_mode: BTreeMap<String, usize>,
    /// Largest `|sum - 1|` over the fused distributions.
    pub max_sum_error: f64,
    pub min_entry: f64,
}

/// One fused pair with the rule outcome that fed it.
pub struct Assigned {
    pub answer: PseudoAnswer,
    pub initial: InitialAnswer,
}

/// Fuses every pair, handing results to `sink` chunk by chunk in pair
/// order.
pub fn assign_pairs(
    cfg: &RunConfig,
    p: &Prepared,
    pairs: &[CandidatePair],
    pool: &ThreadPool,
    mut sink: impl FnMut(&[Assigned]) -> Result<()>,
) -> Result<AssignSummary> {
    let fusion = cfg.fusion();
    let outcomes = prompts(cfg, p, pairs, pool);
    let ranking = answer_quality_ranking(cfg, pairs, &outcomes)?;
    let selected = top_delta_mask(pairs.len(), &ranking, cfg.delta_percent)?;
    let id = LoadedTeacher::load(cfg, &cfg.teachers.id, pairs.len(), p.vocab.len())?;
    let ood = LoadedTeacher::load(cfg, &cfg.teachers.ood, pairs.len(), p.vocab.len())?;
    let rules = p.rules(cfg);

    let fuse_one = |i: usize| -> Result<Assigned> {
        let pair = &pairs[i];
        let pair_id = i as u64;
        let bias = p.bias_of(pair.question_id)?;
        let initial = rules.assign(pair);
        let truth = match (pair.origin, pair.source_question_id) {
            (Origin::Paraphrase, Some(s)) => p.source_label(s),
            _ => None,
        };
        let pred_id = id.predict(pair_id, bias)?;
        let pred_ood = ood.predict(pair_id, bias)?;
        let input = FusionInput {
            pair_id,
            origin: pair.origin,
            bias,
            initial: initial.distribution.as_ref(),
            ground_truth: truth.as_ref(),
            pred_id: &pred_id,
            pred_ood: &pred_ood,
        };
        let answer = assign_one(&input, selected[i], &fusion)?;
        Ok(Assigned { answer, initial })
    };

    let mut summary = AssignSummary {
        pairs: pairs.len(),
        rule_covered: ranking.len(),
        init_anchored: selected.iter().filter(|s| **s).count(),
        min_entry: f64::INFINITY,
        ..Default::default()
    };
    let starts: Vec<usize> = (0..pairs.len()).step_by(CHUNK * 8).collect();
    for start in starts {
        let end = (start + CHUNK * 8).min(pairs.len());
        let chunk: Vec<Assigned> =
            pool.install(|| (start..end).into_par_iter().with_min_len(64).map(fuse_one).collect::<Result<_>>())?;
        for a in &chunk {
            let d = &a.answer.distribution;
            summary.max_sum_error = summary.max_sum_error.max((d.sum() - 1.0).abs());
            let lo = d.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            summary.min_entry = summary.min_entry.min(lo);
            *summary.per_mode.entry(a.answer.mode.as_str().to_string()).or_insert(0) += 1;
        }
        sink(&chunk)?;
    }
    if pairs.is_empty() {
        summary.min_entry = 0.0;
    }
    Ok(summary)
}

/// `assign` stage.
pub fn assign(cfg: &RunConfig, pool: &ThreadPool) -> Result<AssignSummary> {
    let p = prepare(cfg)?;
    let pairs = read_scored(cfg)?;
    let mut w = JsonlWriter::create(&cfg.layout().assigned())?;
    let summary = assign_pairs(cfg, &p, &pairs, pool, |chunk| {
        for a in chunk {
            let ans = &a.answer;
            let wt = ans.weights;
            w.write(&AssignedRecord {
                pair_id: ans.pair_id,
                mode: ans.mode.as_str().into(),
                rule: a.initial.rule.as_str().into(),
                anchor: wt.map(|x| x.anchor.as_str().into()),
                w_id: wt.map(|x| x.w_id),
                w_ood: wt.map(|x| x.w_ood),
                c_id: wt.map(|x| x.c_id),
                c_ood: wt.map(|x| x.c_ood),
                labels: ans.distribution.to_sparse(EMIT_FLOOR),
            })?;
        }
        Ok(())
    })?;
    w.finish()?;
    log::info!(
        "assign: {} pairs, {} of {} rule-covered anchored on initial answers",
        summary.pairs,
        summary.init_anchored,
        summary.rule_covered
    );
    Ok(summary)
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "null".into(), fmt_sig9)
}

fn soft_label_line(qid: u64, pair: &CandidatePair, a: &AssignedRecord) -> String {
    let mut labels = String::with_capacity(a.labels.len() * 16);
    for (i, (id, w)) in a.labels.iter().enumerate() {
        if i > 0 {
            labels.push(',');
        }
        labels.push_str(&format!("[{id},{}]", fmt_sig9(*w)));
    }
    let source = pair.source_question_id.map_or_else(|| "null".into(), |s| s.to_string());
    format!(
        "{{\"question_id\":{qid},\"image_id\":{},\"labels\":[{labels}],\"mode\":\"{}\",\"w_id\":{},\"w_ood\":{},\"origin\":\"{}\",\"relevance\":{},\"original_question_id\":{},\"source_question_id\":{source}}}",
        pair.image_id,
        a.mode,
        opt_num(a.w_id),
        opt_num(a.w_ood),
        pair.origin.as_str(),
        opt_num(pair.relevance),
        pair.question_id,
    )
}

/// `emit` stage: augmented questions, soft labels, vocabulary and header.
pub fn emit(cfg: &RunConfig) -> Result<DatasetHeader> {
    let p = prepare(cfg)?;
    let pairs = read_scored(cfg)?;
    let layout = cfg.layout();
    let assigned: Vec<AssignedRecord> = read_jsonl(&layout.assigned())?;
    if assigned.len() != pairs.len() {
        return Err(AppError::Shape(format!("{} assigned labels for {} pairs", assigned.len(), pairs.len())));
    }
    let offset = p.corpus.max_question_id().map_or(0, |m| m + 1);
    let mut counts = Counts {
        origin: BTreeMap::new(),
        answer_category: BTreeMap::new(),
        mode: BTreeMap::new(),
        rule: BTreeMap::new(),
    };

    let mut questions = String::from("{\"questions\":[\n");
    let mut labels = JsonlWriter::create(&layout.soft_labels())?;
    for (i, (pair, a)) in pairs.iter().zip(&assigned).enumerate() {
        if a.pair_id != i as u64 {
            return Err(AppError::malformed(
                layout.assigned(),
                i + 1,
                format!("pair_id {} out of sequence", a.pair_id),
            ));
        }
        let q = p.corpus.question(pair.question_id).ok_or_else(|| dangling(pair.question_id))?;
        let qid = offset + i as u64;
        if i > 0 {
            questions.push_str(",\n");
        }
        let entry = QuestionEntry { image_id: pair.image_id, question: q.text.clone(), question_id: qid };
        questions.push_str(&serde_json::to_string(&entry).map_err(|e| AppError::Internal(e.to_string()))?);
        labels.write_raw(&soft_label_line(qid, pair, a))?;
        *counts.origin.entry(pair.origin.as_str().into()).or_insert(0) += 1;
        *counts.answer_category.entry(q.answer_category.as_str().into()).or_insert(0) += 1;
        *counts.mode.entry(a.mode.clone()).or_insert(0) += 1;
        *counts.rule.entry(a.rule.clone()).or_insert(0) += 1;
    }
    questions.push_str(if pairs.is_empty() { "]}\n" } else { "\n]}\n" });
    labels.finish()?;
    crate::formats::write_text(&layout.questions_aug(), &questions)?;
    write_json(&layout.dataset_vocab(), &VocabFile { answers: p.vocab.entries().to_vec() })?;

    let header = DatasetHeader {
        engine_version: ENGINE_VERSION.into(),
        config_digest: cfg.digest(),
        seed: cfg.seed,
        alpha_percent: cfg.alpha_percent,
        delta_percent: cfg.delta_percent,
        mode: cfg.mode.as_str().into(),
        samples: pairs.len(),
        question_id_offset: offset,
        vocab_size: p.vocab.len(),
        teachers: [
            ("id".to_string(), cfg.teachers.id.name.clone()),
            ("ood".to_string(), cfg.teachers.ood.name.clone()),
        ]
        .into_iter()
        .collect(),
        counts,
    };
    write_json(&layout.header(), &header)?;
    log::info!("emit: {} samples, question ids from {}", header.samples, offset);
    Ok(header)
}

/// Emitted soft labels, as written.
pub fn read_soft_labels(cfg: &RunConfig) -> Result<Vec<SoftLabelRecord>> {
    read_jsonl(&cfg.layout().soft_labels())
}

/// Dense distribution of an emitted label record.
pub fn dense_labels(record: &SoftLabelRecord, vocab_len: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; vocab_len];
    for &(id, w) in &record.labels {
        *v.get_mut(id as usize)
            .ok_or_else(|| AppError::Shape(format!("label id {id} outside vocabulary of {vocab_len}")))? = w;
    }
    Ok(v)
}

pub fn load_embeddings_for(cfg: &RunConfig) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    Ok((
        load_embeddings(&cfg.resolve(&cfg.embeddings.images), IdKind::Image)?,
        load_embeddings(&cfg.resolve(&cfg.embeddings.noun_prompts), IdKind::NounPrompt)?,
    ))
}

/// Result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// Phase one finished; these inputs must be produced before resuming.
    AwaitingInputs(Vec<PathBuf>),
}

pub fn run(cfg: &RunConfig, pool: &ThreadPool) -> Result<RunOutcome> {
    compose(cfg, pool)?;
    score(cfg, pool)?;
    let missing = missing_phase_two_inputs(cfg)?;
    if !missing.is_empty() {
        for m in &missing {
            log::warn!("waiting for {}", m.display());
        }
        return Ok(RunOutcome::AwaitingInputs(missing));
    }
    assign(cfg, pool)?;
    emit(cfg)?;
    crate::stats::stats(cfg)?;
    Ok(RunOutcome::Completed)
}

pub fn thread_pool(jobs: Option<usize>) -> Result<ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(AppError::Config("jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| AppError::Internal(e.to_string()))
}
