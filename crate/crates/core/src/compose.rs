//! Reasonable image-question pair composition.
//!
//! A question is reasonable for an image when every meaningful noun of the
//! question is a detected category of the image. Yes/No questions are
//! grouped by noun set and only `k` of each group are paired, and
//! paraphrase pairs reuse an original sample's image and answer with an
//! embedding-similar question.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnswerCategory, Corpus, QuestionRecord};
use crate::embedding::EmbeddingMatrix;
use crate::{Error, ImageId, QuestionId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Composed,
    Paraphrase,
    YesNoSampled,
}

impl Origin {
    pub const ALL: [Origin; 3] = [Self::Composed, Self::Paraphrase, Self::YesNoSampled];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Composed => "composed",
            Self::Paraphrase => "paraphrase",
            Self::YesNoSampled => "yesno_sampled",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composed" => Ok(Self::Composed),
            "paraphrase" => Ok(Self::Paraphrase),
            "yesno_sampled" => Ok(Self::YesNoSampled),
            other => Err(Error::Inconsistent(alloc::format!("unknown origin {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub image_id: ImageId,
    pub question_id: QuestionId,
    pub origin: Origin,
    /// Original sample whose answer a paraphrase pair inherits.
    pub source_question_id: Option<QuestionId>,
    pub relevance: Option<f64>,
    pub rank: Option<u32>,
}

impl CandidatePair {
    pub fn new(image_id: ImageId, question_id: QuestionId, origin: Origin) -> Self {
        Self { image_id, question_id, origin, source_question_id: None, relevance: None, rank: None }
    }

    pub fn key(&self) -> (QuestionId, ImageId) {
        (self.question_id, self.image_id)
    }
}

/// Category to sorted, duplicate-free image ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvertedIndex {
    by_category: BTreeMap<String, Vec<ImageId>>,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut by_category: BTreeMap<String, Vec<ImageId>> = BTreeMap::new();
        // images are sorted by id, so every posting list comes out sorted
        for img in corpus.images() {
            for (cat, &n) in &img.category_counts {
                if n > 0 {
                    by_category.entry(cat.clone()).or_default().push(img.image_id);
                }
            }
        }
        Self { by_category }
    }

    pub fn lookup(&self, category: &str) -> &[ImageId] {
        self.by_category.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.by_category.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.by_category.is_empty()
    }

    /// Images containing every category of `nouns`, ascending. Empty input
    /// matches nothing.
    pub fn images_with_all(&self, nouns: &[String]) -> Vec<ImageId> {
        let mut lists: Vec<&[ImageId]> = nouns.iter().map(|n| self.lookup(n)).collect();
        if lists.is_empty() {
            return Vec::new();
        }
        lists.sort_by_key(|l| l.len());
        let mut acc: Vec<ImageId> = lists[0].to_vec();
        for other in &lists[1..] {
            if acc.is_empty() {
                break;
            }
            acc = intersect_sorted(&acc, other);
        }
        acc
    }
}

fn intersect_sorted(a: &[ImageId], b: &[ImageId]) -> Vec<ImageId> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YesNoGroup {
    pub noun_set: Vec<String>,
    pub question_ids: Vec<QuestionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComposeConfig {
    pub yesno_sample_k: usize,
    pub seed: u64,
    /// Restrict to the Yes/No, Number, Color and What families.
    pub basic_only: bool,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self { yesno_sample_k: 3, seed: 0, basic_only: false }
    }
}

impl ComposeConfig {
    pub fn admits(&self, q: &QuestionRecord) -> bool {
        !self.basic_only || q.kind.is_basic()
    }
}

/// Questions selected for pairing, in question-id order, together with the
/// Yes/No groups they were sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposePlan {
    /// `(question position, origin)`, ascending question id.
    pub entries: Vec<(usize, Origin)>,
    pub groups: Vec<YesNoGroup>,
    pub sampled: Vec<YesNoGroup>,
}

impl ComposePlan {
    /// Groups Yes/No questions by noun set (sorted keys) and draws
    /// `min(k, |group|)` members of each without replacement from one
    /// seeded generator, visiting groups in key order.
    pub fn new(corpus: &Corpus, config: &ComposeConfig) -> Self {
        let mut by_nouns: BTreeMap<&[String], Vec<(usize, QuestionId)>> = BTreeMap::new();
        let mut entries = Vec::new();
        for (pos, q) in corpus.questions().iter().enumerate() {
            if !q.composable || q.nouns.is_empty() || !config.admits(q) {
                continue;
            }
            if q.answer_category == AnswerCategory::YesNo {
                by_nouns.entry(q.nouns.as_slice()).or_default().push((pos, q.question_id));
            } else {
                entries.push((pos, Origin::Composed));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut groups = Vec::with_capacity(by_nouns.len());
        let mut sampled = Vec::with_capacity(by_nouns.len());
        for (nouns, members) in by_nouns {
            // members are already in question-id order
            let chosen: Vec<(usize, QuestionId)> = if members.len() <= config.yesno_sample_k {
                members.clone()
            } else {
                let mut idx = rand::seq::index::sample(&mut rng, members.len(), config.yesno_sample_k).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| members[i]).collect()
            };
            entries.extend(chosen.iter().map(|&(pos, _)| (pos, Origin::YesNoSampled)));
            groups.push(YesNoGroup { noun_set: nouns.to_vec(), question_ids: members.iter().map(|m| m.1).collect() });
            sampled.push(YesNoGroup { noun_set: nouns.to_vec(), question_ids: chosen.iter().map(|m| m.1).collect() });
        }
        entries.sort_by_key(|&(pos, _)| pos);
        Self { entries, groups, sampled }
    }

    /// Pairs for a slice of plan entries. Concatenating the output of
    /// consecutive slices equals the output for the whole plan.
    pub fn pairs_for(corpus: &Corpus, index: &InvertedIndex, entries: &[(usize, Origin)]) -> Vec<CandidatePair> {
        let mut out = Vec::new();
        for &(pos, origin) in entries {
            let q = &corpus.questions()[pos];
            for image_id in index.images_with_all(&q.nouns) {
                if image_id != q.source_image_id {
                    out.push(CandidatePair::new(image_id, q.question_id, origin));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposeReport {
    pub planned_questions: usize,
    pub yesno_groups: usize,
    pub yesno_sampled_questions: usize,
    pub pairs: usize,
}

/// Every reasonable pair, sorted by `(question_id, image_id)`. Original
/// training pairs are excluded.
pub fn compose_reasonable(
    corpus: &Corpus,
    index: &InvertedIndex,
    config: &ComposeConfig,
) -> (Vec<CandidatePair>, ComposePlan) {
    let plan = ComposePlan::new(corpus, config);
    let pairs = ComposePlan::pairs_for(corpus, index, &plan.entries);
    (pairs, plan)
}

impl ComposePlan {
    pub fn report(&self, pairs: usize) -> ComposeReport {
        ComposeReport {
            planned_questions: self.entries.len(),
            yesno_groups: self.groups.len(),
            yesno_sampled_questions: self.sampled.iter().map(|g| g.question_ids.len()).sum(),
            pairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaphraseConfig {
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for ParaphraseConfig {
    fn default() -> Self {
        Self { threshold: 0.95, top_k: 3 }
    }
}

/// A paraphrase candidate with the similarity that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredParaphrase {
    pub pair: CandidatePair,
    pub similarity: f64,
}

/// Resolves one embedding row per question, in question order.
pub fn question_rows(corpus: &Corpus, embeddings: &EmbeddingMatrix) -> Result<Vec<usize>> {
    if embeddings.dim() == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    corpus
        .questions()
        .iter()
        .map(|q| {
            let pos = embeddings.require_int(q.question_id)?;
            if embeddings.norm(pos) == 0.0 {
                return Err(Error::ZeroVector(alloc::format!("{}", q.question_id)));
            }
            Ok(pos)
        })
        .collect()
}

/// Paraphrase candidates whose source sample lies in `sources` (question
/// positions). For each source `i`, the `top_k` questions `j != i` with
/// cosine at least `threshold` (ties to the smaller question id) yield the
/// pair `(image of i, j)`.
pub fn paraphrases_for(
    corpus: &Corpus,
    embeddings: &EmbeddingMatrix,
    rows: &[usize],
    sources: core::ops::Range<usize>,
    config: &ParaphraseConfig,
    admits: &dyn Fn(&QuestionRecord) -> bool,
) -> Result<Vec<ScoredParaphrase>> {
    let questions = corpus.questions();
    let mut out = Vec::new();
    let mut hits: Vec<(f64, usize)> = Vec::new();
    for i in sources {
        hits.clear();
        for (j, qj) in questions.iter().enumerate() {
            if j == i || !admits(qj) {
                continue;
            }
            let sim = embeddings.cosine_with(rows[i], embeddings, rows[j])?;
            if sim >= config.threshold {
                hits.push((sim, j));
            }
        }
        // positions follow question-id order, so the index breaks ties
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let source = &questions[i];
        for &(sim, j) in hits.iter().take(config.top_k) {
            let target = &questions[j];
            if target.source_image_id == source.source_image_id {
                continue;
            }
            let mut pair = CandidatePair::new(source.source_image_id, target.question_id, Origin::Paraphrase);
            pair.source_question_id = Some(source.question_id);
            out.push(ScoredParaphrase { pair, similarity: sim });
        }
    }
    Ok(out)
}

/// Deduplicates paraphrase candidates on `(question, image)`, keeping the
/// most similar source (ties to the smaller source id), sorted by key.
pub fn merge_paraphrases(mut scored: Vec<ScoredParaphrase>) -> Vec<CandidatePair> {
    scored.sort_by(|a, b| {
        a.pair
            .key()
            .cmp(&b.pair.key())
            .then(b.similarity.total_cmp(&a.similarity))
            .then(a.pair.source_question_id.cmp(&b.pair.source_question_id))
    });
    scored.dedup_by(|later, earlier| later.pair.key() == earlier.pair.key());
    scored.into_iter().map(|s| s.pair).collect()
}

pub fn compose_paraphrases(
    corpus: &Corpus,
    embeddings: &EmbeddingMatrix,
    config: &ParaphraseConfig,
    admits: &dyn Fn(&QuestionRecord) -> bool,
) -> Result<Vec<CandidatePair>> {
    let rows = question_rows(corpus, embeddings)?;
    let scored = paraphrases_for(corpus, embeddings, &rows, 0..corpus.questions().len(), config, admits)?;
    Ok(merge_paraphrases(scored))
}

/// Drops composed pairs that duplicate a paraphrase pair; both inputs
/// sorted by key.
pub fn remove_overlap(composed: Vec<CandidatePair>, paraphrases: &[CandidatePair]) -> Vec<CandidatePair> {
    let mut j = 0;
    composed
        .into_iter()
        .filter(|c| {
            while j < paraphrases.len() && paraphrases[j].key() < c.key() {
                j += 1;
            }
            !(j < paraphrases.len() && paraphrases[j].key() == c.key())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DetectedObject, DetectionThresholds, RawAnnotation, RawDetection, RawQuestion};
    use crate::embedding::EmbeddingKey;
    use crate::nouns::{extract_all, prune_nounless, NounLexicon};
    use alloc::string::ToString;
    use alloc::vec;

    fn det(image_id: u64, cats: &[&str]) -> RawDetection {
        RawDetection {
            image_id,
            objects: cats
                .iter()
                .map(|c| DetectedObject { category: c.to_string(), score: 0.9, attributes: vec![] })
                .collect(),
        }
    }

    fn corpus(qs: &[(u64, u64, &str, &str)], dets: Vec<RawDetection>) -> Corpus {
        let questions = qs
            .iter()
            .map(|&(id, img, text, _)| RawQuestion { question_id: id, image_id: img, text: text.into() })
            .collect();
        let annotations = qs
            .iter()
            .map(|&(id, img, _, at)| RawAnnotation {
                question_id: id,
                image_id: img,
                question_type: if at == "yes/no" { "is the".into() } else { "what".into() },
                answer_type: at.into(),
                answers: vec!["x".into(); 10],
                multiple_choice_answer: "x".into(),
            })
            .collect();
        let mut c = Corpus::build(questions, annotations, dets, &DetectionThresholds::default()).unwrap();
        let lex = NounLexicon::from_corpus(&c, [], []);
        extract_all(&mut c, &lex);
        prune_nounless(&mut c);
        c
    }

    #[test]
    fn index_posting_lists() {
        let c = corpus(&[], vec![det(1, &["dog"]), det(2, &["dog", "cat"])]);
        let idx = InvertedIndex::build(&c);
        assert_eq!(idx.lookup("dog"), &[1, 2]);
        assert_eq!(idx.lookup("cat"), &[2]);
        assert!(InvertedIndex::build(&corpus(&[], vec![])).is_empty());
    }

    #[test]
    fn subset_rule() {
        let c = corpus(
            &[
                (1, 9, "What is the girl holding near the sock?", "other"),
                (2, 9, "Why is the suitcase in the trunk?", "other"),
            ],
            vec![det(1, &["girl", "sock", "bed"]), det(2, &["suitcase", "car"]), det(9, &["trunk"])],
        );
        let idx = InvertedIndex::build(&c);
        let (pairs, _) = compose_reasonable(&c, &idx, &ComposeConfig::default());
        let keys: Vec<_> = pairs.iter().map(|p| p.key()).collect();
        assert!(keys.contains(&(1, 1)));
        assert!(!keys.contains(&(2, 2)));
    }

    #[test]
    fn original_pair_is_excluded() {
        let c = corpus(&[(1, 1, "Is the dog asleep?", "other")], vec![det(1, &["dog"]), det(2, &["dog"])]);
        let idx = InvertedIndex::build(&c);
        let (pairs, _) = compose_reasonable(&c, &idx, &ComposeConfig::default());
        assert_eq!(pairs.iter().map(|p| p.key()).collect::<Vec<_>>(), vec![(1, 2)]);
    }

    #[test]
    fn yesno_groups_are_capped_and_deterministic() {
        let qs: Vec<(u64, u64, &str, &str)> = (0..5).map(|i| (i, 100, "Is the dog happy?", "yes/no")).collect();
        let c = corpus(&qs, vec![det(100, &["dog"]), det(1, &["dog"]), det(2, &["dog"])]);
        let idx = InvertedIndex::build(&c);
        let cfg = ComposeConfig { yesno_sample_k: 3, seed: 11, basic_only: false };
        let (a, plan) = compose_reasonable(&c, &idx, &cfg);
        let (b, _) = compose_reasonable(&c, &idx, &cfg);
        assert_eq!(a, b);
        assert_eq!(plan.groups.len(), 1);
        assert_eq!(plan.sampled[0].question_ids.len(), 3);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|p| p.origin == Origin::YesNoSampled));
    }

    fn emb(rows: &[(u64, [f32; 2])]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            2,
            rows.iter().map(|r| EmbeddingKey::Int(r.0)).collect(),
            rows.iter().flat_map(|r| r.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_embeddings_make_paraphrases_orthogonal_do_not() {
        let c = corpus(
            &[(1, 10, "What is it?", "other"), (2, 20, "What is that?", "other"), (3, 30, "Why?", "other")],
            vec![det(10, &[]), det(20, &[]), det(30, &[])],
        );
        let e = emb(&[(1, [1.0, 0.0]), (2, [1.0, 0.0]), (3, [0.0, 1.0])]);
        let pairs = compose_paraphrases(&c, &e, &ParaphraseConfig::default(), &|_| true).unwrap();
        let keys: Vec<_> = pairs.iter().map(|p| (p.key(), p.source_question_id)).collect();
        assert_eq!(keys, vec![((1, 20), Some(2)), ((2, 10), Some(1))]);
    }

    #[test]
    fn missing_question_embedding() {
        let c = corpus(&[(1, 10, "What?", "other")], vec![det(10, &[])]);
        let e = emb(&[(2, [1.0, 0.0])]);
        assert!(matches!(
            compose_paraphrases(&c, &e, &ParaphraseConfig::default(), &|_| true),
            Err(Error::MissingEmbedding(_))
        ));
    }

    #[test]
    fn overlap_removal_keeps_paraphrase() {
        let composed = vec![
            CandidatePair::new(1, 1, Origin::Composed),
            CandidatePair::new(2, 1, Origin::Composed),
            CandidatePair::new(1, 3, Origin::Composed),
        ];
        let para = vec![CandidatePair::new(2, 1, Origin::Paraphrase)];
        let kept = remove_overlap(composed, &para);
        assert_eq!(kept.iter().map(|p| p.key()).collect::<Vec<_>>(), vec![(1, 1), (3, 1)]);
    }
}
