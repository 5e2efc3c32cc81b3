//! Validated in-memory corpus of questions, annotations and detections.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dist::{AnswerDistribution, AnswerVocab};
use crate::nouns::normalize_phrase;
use crate::{AnswerId, Error, ImageId, QuestionId, Result};

/// Answer category as given by the dataset's `answer_type` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnswerCategory {
    YesNo,
    Number,
    Other,
}

impl AnswerCategory {
    pub const ALL: [AnswerCategory; 3] = [Self::YesNo, Self::Number, Self::Other];

    pub fn from_answer_type(answer_type: &str) -> Self {
        match answer_type.trim().to_lowercase().as_str() {
            "yes/no" | "yesno" | "yes_no" => Self::YesNo,
            "number" => Self::Number,
            _ => Self::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::YesNo => "yes/no",
            Self::Number => "number",
            Self::Other => "other",
        }
    }
}

/// Coarse question family used by the initial-answer rules and by the
/// basic/extra dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuestionKind {
    YesNo,
    Number,
    Color,
    What,
    Other,
}

impl QuestionKind {
    pub fn classify(question_type: &str, category: AnswerCategory) -> Self {
        let t = question_type.trim().to_lowercase();
        let first = t.split_whitespace().next().unwrap_or("");
        match category {
            AnswerCategory::YesNo => Self::YesNo,
            _ if t.starts_with("what color") => Self::Color,
            AnswerCategory::Number => Self::Number,
            _ if first == "what" => Self::What,
            _ => Self::Other,
        }
    }

    /// Whether the kind belongs to the four families of the basic split.
    pub fn is_basic(self) -> bool {
        !matches!(self, Self::Other)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    pub category: String,
    pub score: f64,
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub objects: Vec<DetectedObject>,
    pub category_counts: BTreeMap<String, u32>,
}

impl ImageRecord {
    pub fn new(image_id: ImageId, objects: Vec<DetectedObject>) -> Self {
        let mut category_counts = BTreeMap::new();
        for o in &objects {
            *category_counts.entry(o.category.clone()).or_insert(0) += 1;
        }
        Self { image_id, objects, category_counts }
    }

    pub fn count(&self, category: &str) -> u32 {
        self.category_counts.get(category).copied().unwrap_or(0)
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.count(category) > 0
    }
}

/// Confidence cut-offs applied to detector output at ingestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionThresholds {
    pub object: f64,
    pub attribute: f64,
    pub max_objects: usize,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self { object: 0.8, attribute: 0.4, max_objects: 36 }
    }
}

/// Validates scores, normalizes names, and keeps the confident detections:
/// the `max_objects` highest-scoring objects at or above the object
/// threshold, each with its attributes at or above the attribute threshold.
pub fn filter_detections(
    image_id: ImageId,
    objects: Vec<DetectedObject>,
    thresholds: &DetectionThresholds,
) -> Result<Vec<DetectedObject>> {
    let mut kept = Vec::with_capacity(objects.len().min(thresholds.max_objects));
    for o in objects {
        check_score(o.score, || format!("object {:?} of image {image_id}", o.category))?;
        for a in &o.attributes {
            check_score(a.score, || format!("attribute {:?} of image {image_id}", a.name))?;
        }
        if o.score < thresholds.object {
            continue;
        }
        let category = normalize_phrase(&o.category);
        if category.is_empty() {
            continue;
        }
        let attributes = o
            .attributes
            .into_iter()
            .filter(|a| a.score >= thresholds.attribute)
            .map(|a| Attribute { name: normalize_phrase(&a.name), score: a.score })
            .filter(|a| !a.name.is_empty())
            .collect();
        kept.push(DetectedObject { category, score: o.score, attributes });
    }
    // stable: equal scores keep detector order
    kept.sort_by(|a, b| b.score.total_cmp(&a.score));
    kept.truncate(thresholds.max_objects);
    Ok(kept)
}

fn check_score(value: f64, what: impl FnOnce() -> String) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ScoreOutOfRange { what: what(), value })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRecord {
    pub question_id: QuestionId,
    pub source_image_id: ImageId,
    pub text: String,
    pub question_type: String,
    pub answer_category: AnswerCategory,
    pub kind: QuestionKind,
    /// Canonical meaningful nouns, sorted and deduplicated.
    pub nouns: Vec<String>,
    /// Cleared by pruning when the question has no meaningful noun.
    pub composable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub question_id: QuestionId,
    pub raw_answers: Vec<String>,
    pub multiple_choice_answer: String,
}

impl GroundTruth {
    /// Standard VQA soft score of every distinct raw answer:
    /// `min(#annotators giving it / 3, 1)`.
    pub fn soft_scores(&self) -> BTreeMap<&str, f64> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for a in &self.raw_answers {
            *counts.entry(a.as_str()).or_insert(0) += 1;
        }
        counts.into_iter().map(|(a, n)| (a, soft_score(n))).collect()
    }

    /// Soft scores restricted to `vocab`, sorted by answer id. The second
    /// value counts distinct answers dropped for being out of vocabulary.
    pub fn soft_scores_in(&self, vocab: &AnswerVocab) -> (Vec<(AnswerId, f64)>, usize) {
        let mut dropped = 0;
        let mut out: Vec<(AnswerId, f64)> = Vec::new();
        for (a, s) in self.soft_scores() {
            match vocab.id(a) {
                Some(id) => out.push((id, s)),
                None => dropped += 1,
            }
        }
        out.sort_by_key(|e| e.0);
        (out, dropped)
    }
}

/// `min(count / 3, 1)`.
pub fn soft_score(matching_annotators: usize) -> f64 {
    if matching_annotators >= 3 {
        1.0
    } else {
        matching_annotators as f64 / 3.0
    }
}

pub struct RawQuestion {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    pub text: String,
}

pub struct RawAnnotation {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    pub question_type: String,
    pub answer_type: String,
    pub answers: Vec<String>,
    pub multiple_choice_answer: String,
}

pub struct RawDetection {
    pub image_id: ImageId,
    pub objects: Vec<DetectedObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    images: Vec<ImageRecord>,
    questions: Vec<QuestionRecord>,
    truths: Vec<GroundTruth>,
    image_index: BTreeMap<ImageId, usize>,
    question_index: BTreeMap<QuestionId, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub questions: usize,
    pub images: usize,
    pub annotations: usize,
    pub yesno_fraction: f64,
    pub per_category: BTreeMap<AnswerCategory, usize>,
    pub question_types: usize,
}

impl Corpus {
    /// Cross-references the three inputs. Every annotation must name an
    /// existing question, every question an existing image, and every
    /// question must carry exactly one annotation.
    pub fn build(
        questions: Vec<RawQuestion>,
        annotations: Vec<RawAnnotation>,
        detections: Vec<RawDetection>,
        thresholds: &DetectionThresholds,
    ) -> Result<Self> {
        let mut images = Vec::with_capacity(detections.len());
        for d in detections {
            let objects = filter_detections(d.image_id, d.objects, thresholds)?;
            images.push(ImageRecord::new(d.image_id, objects));
        }
        images.sort_by_key(|i| i.image_id);
        let mut image_index = BTreeMap::new();
        for (pos, img) in images.iter().enumerate() {
            if image_index.insert(img.image_id, pos).is_some() {
                return Err(Error::DuplicateId { kind: "image", id: img.image_id });
            }
        }

        let mut raw_questions: BTreeMap<QuestionId, RawQuestion> = BTreeMap::new();
        for q in questions {
            if !image_index.contains_key(&q.image_id) {
                return Err(Error::DanglingReference { kind: "image", id: q.image_id });
            }
            let id = q.question_id;
            if raw_questions.insert(id, q).is_some() {
                return Err(Error::DuplicateId { kind: "question", id });
            }
        }

        let mut by_question: BTreeMap<QuestionId, RawAnnotation> = BTreeMap::new();
        for a in annotations {
            let Some(q) = raw_questions.get(&a.question_id) else {
                return Err(Error::DanglingReference { kind: "question", id: a.question_id });
            };
            if q.image_id != a.image_id {
                return Err(Error::InconsistentReference {
                    question_id: a.question_id,
                    question_image: q.image_id,
                    annotation_image: a.image_id,
                });
            }
            let id = a.question_id;
            if by_question.insert(id, a).is_some() {
                return Err(Error::DuplicateId { kind: "annotation", id });
            }
        }

        let mut records = Vec::with_capacity(raw_questions.len());
        let mut truths = Vec::with_capacity(raw_questions.len());
        for (id, q) in raw_questions {
            let a = by_question.remove(&id).ok_or(Error::MissingAnnotation(id))?;
            let answer_category = AnswerCategory::from_answer_type(&a.answer_type);
            let question_type = a.question_type.trim().to_lowercase();
            records.push(QuestionRecord {
                question_id: id,
                source_image_id: q.image_id,
                text: q.text,
                kind: QuestionKind::classify(&question_type, answer_category),
                question_type,
                answer_category,
                nouns: Vec::new(),
                composable: true,
            });
            truths.push(GroundTruth {
                question_id: id,
                raw_answers: a.answers,
                multiple_choice_answer: a.multiple_choice_answer,
            });
        }
        let question_index = records.iter().enumerate().map(|(i, q)| (q.question_id, i)).collect();
        Ok(Self { images, questions: records, truths, image_index, question_index })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn questions(&self) -> &[QuestionRecord] {
        &self.questions
    }

    pub(crate) fn questions_mut(&mut self) -> &mut [QuestionRecord] {
        &mut self.questions
    }

    /// Ground truth aligned with [`Corpus::questions`].
    pub fn truths(&self) -> &[GroundTruth] {
        &self.truths
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.image_index.get(&id).map(|&i| &self.images[i])
    }

    pub fn question_position(&self, id: QuestionId) -> Option<usize> {
        self.question_index.get(&id).copied()
    }

    pub fn question(&self, id: QuestionId) -> Option<&QuestionRecord> {
        self.question_position(id).map(|i| &self.questions[i])
    }

    pub fn truth(&self, id: QuestionId) -> Option<&GroundTruth> {
        self.question_position(id).map(|i| &self.truths[i])
    }

    pub fn max_question_id(&self) -> Option<QuestionId> {
        self.questions.last().map(|q| q.question_id)
    }

    /// All distinct detected categories.
    pub fn categories(&self) -> BTreeSet<&str> {
        self.images.iter().flat_map(|i| i.category_counts.keys().map(String::as_str)).collect()
    }

    /// Occurrences of each answer string among all raw annotator answers.
    pub fn answer_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.truths {
            for a in &t.raw_answers {
                *counts.entry(a.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn build_answer_vocab(&self, min_count: usize) -> AnswerVocab {
        AnswerVocab::from_counts(&self.answer_counts(), min_count)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut per_category = BTreeMap::new();
        let mut types = BTreeSet::new();
        for q in &self.questions {
            *per_category.entry(q.answer_category).or_insert(0) += 1;
            types.insert(q.question_type.as_str());
        }
        let n = self.questions.len();
        let yes = per_category.get(&AnswerCategory::YesNo).copied().unwrap_or(0);
        CorpusStats {
            questions: n,
            images: self.images.len(),
            annotations: self.truths.len(),
            yesno_fraction: if n == 0 { 0.0 } else { yes as f64 / n as f64 },
            per_category,
            question_types: types.len(),
        }
    }
}

/// Per-question-type answer prior computed from training soft scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPrior {
    pub per_type: BTreeMap<String, AnswerDistribution>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BiasReport {
    /// Distinct (question, answer) soft-score entries outside the vocabulary.
    pub dropped_answers: usize,
    /// Question types whose in-vocabulary mass was zero; these get a
    /// uniform prior.
    pub uniform_fallback_types: Vec<String>,
}

impl BiasPrior {
    /// `prior(t)(a)` is proportional to the summed soft score of `a` over
    /// the questions of type `t`.
    pub fn build(corpus: &Corpus, vocab: &AnswerVocab) -> Result<(Self, BiasReport)> {
        let mut sums: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
        let mut report = BiasReport::default();
        for (q, t) in corpus.questions().iter().zip(corpus.truths()) {
            let entry = sums.entry(q.question_type.as_str()).or_insert_with(|| (0, alloc::vec![0.0; vocab.len()]));
            entry.0 += 1;
            let (scores, dropped) = t.soft_scores_in(vocab);
            report.dropped_answers += dropped;
            for (id, s) in scores {
                entry.1[id as usize] += s;
            }
        }
        let mut per_type = BTreeMap::new();
        for (ty, (n, weights)) in sums {
            if n == 0 {
                return Err(Error::EmptyType(ty.into()));
            }
            let dist = match AnswerDistribution::normalized(weights, 0) {
                Ok(d) => d,
                Err(_) if !vocab.is_empty() => {
                    report.uniform_fallback_types.push(ty.into());
                    AnswerDistribution::uniform(vocab.len())
                }
                Err(_) => {
                    return Err(Error::Inconsistent(format!("empty answer vocabulary while building prior for {ty:?}")))
                }
            };
            per_type.insert(String::from(ty), dist);
        }
        Ok((Self { per_type }, report))
    }

    pub fn get(&self, question_type: &str) -> Option<&AnswerDistribution> {
        self.per_type.get(question_type)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn obj(cat: &str, score: f64) -> DetectedObject {
        DetectedObject { category: cat.into(), score, attributes: vec![] }
    }

    fn ann(qid: u64, img: u64, ty: &str, at: &str, answers: &[&str]) -> RawAnnotation {
        RawAnnotation {
            question_id: qid,
            image_id: img,
            question_type: ty.into(),
            answer_type: at.into(),
            answers: answers.iter().map(|a| a.to_string()).collect(),
            multiple_choice_answer: answers[0].into(),
        }
    }

    fn q(qid: u64, img: u64, text: &str) -> RawQuestion {
        RawQuestion { question_id: qid, image_id: img, text: text.into() }
    }

    fn fixture() -> (Vec<RawQuestion>, Vec<RawAnnotation>, Vec<RawDetection>) {
        let questions =
            vec![q(1, 10, "Is there a dog?"), q(2, 10, "How many cats?"), q(3, 20, "What is the dog chasing?")];
        let annotations = vec![
            ann(1, 10, "is there a", "yes/no", &["yes"; 10]),
            ann(2, 10, "how many", "number", &["2"; 10]),
            ann(3, 20, "what is the", "other", &["ball"; 10]),
        ];
        let detections = vec![
            RawDetection { image_id: 10, objects: vec![obj("dog", 0.9), obj("cat", 0.95)] },
            RawDetection { image_id: 20, objects: vec![obj("dog", 0.85), obj("ball", 0.5)] },
        ];
        (questions, annotations, detections)
    }

    #[test]
    fn builds_cross_referenced_corpus() {
        let (qs, an, de) = fixture();
        let c = Corpus::build(qs, an, de, &DetectionThresholds::default()).unwrap();
        assert_eq!(c.questions().len(), 3);
        assert_eq!(c.images().len(), 2);
        assert!(!c.image(20).unwrap().has_category("ball"));
        assert_eq!(c.question(2).unwrap().kind, QuestionKind::Number);
        assert_eq!(c.question(3).unwrap().kind, QuestionKind::What);
    }

    #[test]
    fn unknown_question_in_annotation_is_dangling() {
        let (qs, mut an, de) = fixture();
        an.push(ann(99, 10, "is there a", "yes/no", &["no"]));
        assert_eq!(
            Corpus::build(qs, an, de, &DetectionThresholds::default()),
            Err(Error::DanglingReference { kind: "question", id: 99 })
        );
    }

    #[test]
    fn unknown_image_in_question_is_dangling() {
        let (mut qs, an, de) = fixture();
        qs.push(q(4, 77, "Where?"));
        assert_eq!(
            Corpus::build(qs, an, de, &DetectionThresholds::default()),
            Err(Error::DanglingReference { kind: "image", id: 77 })
        );
    }

    #[test]
    fn duplicate_question_id_is_rejected() {
        let (mut qs, an, de) = fixture();
        qs.push(q(1, 10, "again"));
        assert_eq!(
            Corpus::build(qs, an, de, &DetectionThresholds::default()),
            Err(Error::DuplicateId { kind: "question", id: 1 })
        );
    }

    #[test]
    fn detection_filter_applies_thresholds_and_cap() {
        let mut objects: Vec<DetectedObject> = (0..40).map(|i| obj("cup", 0.8 + i as f64 * 0.001)).collect();
        objects.push(obj("plate", 0.79));
        objects[0].attributes =
            vec![Attribute { name: "Red".into(), score: 0.4 }, Attribute { name: "wooden".into(), score: 0.39 }];
        let kept = filter_detections(1, objects, &DetectionThresholds::default()).unwrap();
        assert_eq!(kept.len(), 36);
        assert!(kept.iter().all(|o| o.category == "cup" && o.score >= 0.8));
        // object 0 has the lowest score, so it is cut by the cap
        assert!(kept.iter().all(|o| o.attributes.is_empty()));
        let kept = filter_detections(
            1,
            vec![DetectedObject {
                category: "Cup".into(),
                score: 0.9,
                attributes: vec![
                    Attribute { name: "Red".into(), score: 0.4 },
                    Attribute { name: "wooden".into(), score: 0.39 },
                ],
            }],
            &DetectionThresholds::default(),
        )
        .unwrap();
        assert_eq!(kept[0].category, "cup");
        assert_eq!(kept[0].attributes, vec![Attribute { name: "red".into(), score: 0.4 }]);
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        assert!(matches!(
            filter_detections(1, vec![obj("cup", 1.2)], &DetectionThresholds::default()),
            Err(Error::ScoreOutOfRange { .. })
        ));
    }

    #[test]
    fn soft_score_rule_matches_brute_force_counter() {
        let answers: Vec<String> =
            ["a", "a", "b", "a", "c", "a", "b", "d", "d", "d"].iter().map(|s| s.to_string()).collect();
        let gt = GroundTruth { question_id: 1, raw_answers: answers.clone(), multiple_choice_answer: "a".into() };
        for (a, s) in gt.soft_scores() {
            let n = answers.iter().filter(|x| x.as_str() == a).count();
            let expected = if n as f64 / 3.0 > 1.0 { 1.0 } else { n as f64 / 3.0 };
            assert_eq!(s, expected);
        }
    }

    fn prior_corpus(answer_sets: &[&[&str]]) -> Corpus {
        let mut qs = vec![];
        let mut an = vec![];
        for (i, answers) in answer_sets.iter().enumerate() {
            qs.push(q(i as u64, 1, "is it?"));
            an.push(ann(i as u64, 1, "is it", "yes/no", answers));
        }
        let de = vec![RawDetection { image_id: 1, objects: vec![] }];
        Corpus::build(qs, an, de, &DetectionThresholds::default()).unwrap()
    }

    #[test]
    fn symmetric_prior() {
        let c = prior_corpus(&[&["yes"; 10], &["no"; 10]]);
        let vocab = c.build_answer_vocab(1);
        let (prior, _) = BiasPrior::build(&c, &vocab).unwrap();
        let d = prior.get("is it").unwrap();
        assert_eq!(d.get(vocab.id("yes").unwrap()), 0.5);
        assert_eq!(d.get(vocab.id("no").unwrap()), 0.5);
    }

    #[test]
    fn prior_is_normalized_sum_of_soft_scores() {
        // soft scores {yes:1.0} and {yes:1.0, no:1/3}: prior(no) = (1/3)/(2 + 1/3)
        let c = prior_corpus(&[&["yes"; 10], &["yes", "yes", "yes", "yes", "yes", "yes", "yes", "yes", "yes", "no"]]);
        let vocab = c.build_answer_vocab(1);
        let (prior, _) = BiasPrior::build(&c, &vocab).unwrap();
        let d = prior.get("is it").unwrap();
        let third = 1.0 / 3.0;
        assert!((d.get(vocab.id("yes").unwrap()) - 2.0 / (2.0 + third)).abs() < 1e-12);
        assert!((d.get(vocab.id("no").unwrap()) - third / (2.0 + third)).abs() < 1e-12);
    }

    #[test]
    fn out_of_vocab_answers_are_dropped_from_prior() {
        let c = prior_corpus(&[&["yes"; 10], &["maybe"]]);
        let vocab = c.build_answer_vocab(2);
        assert_eq!(vocab.entries(), &["yes".to_string()]);
        let (prior, report) = BiasPrior::build(&c, &vocab).unwrap();
        assert_eq!(report.dropped_answers, 1);
        assert_eq!(prior.get("is it").unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn kind_classification() {
        use AnswerCategory::*;
        assert_eq!(QuestionKind::classify("what color is the", Other), QuestionKind::Color);
        assert_eq!(QuestionKind::classify("what", Other), QuestionKind::What);
        assert_eq!(QuestionKind::classify("how many", Number), QuestionKind::Number);
        assert_eq!(QuestionKind::classify("are", Other), QuestionKind::Other);
        assert_eq!(QuestionKind::classify("is the", YesNo), QuestionKind::YesNo);
        assert_eq!(QuestionKind::classify("whatever", Other), QuestionKind::Other);
    }
}
