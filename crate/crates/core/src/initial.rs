//! Rule-based initial answers for Color, Number and What questions that
//! mention a single noun.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::compose::{CandidatePair, Origin};
use crate::corpus::{Corpus, ImageRecord, QuestionKind, QuestionRecord};
use crate::dist::{AnswerDistribution, AnswerVocab};
use crate::nouns::normalize_phrase;
use crate::AnswerId;

/// Attribute names treated as colors.
pub const DEFAULT_COLORS: [&str; 18] = [
    "white", "black", "blue", "red", "green", "brown", "yellow", "gray", "grey", "orange", "pink", "purple", "silver",
    "tan", "gold", "beige", "maroon", "navy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InitialRule {
    ColorRule,
    NumberRule,
    WhatRule,
    None,
}

impl InitialRule {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ColorRule => "color",
            Self::NumberRule => "number",
            Self::WhatRule => "what",
            Self::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialAnswer {
    pub rule: InitialRule,
    /// Present exactly when `rule` is not [`InitialRule::None`].
    pub distribution: Option<AnswerDistribution>,
}

impl InitialAnswer {
    pub const NONE: InitialAnswer = InitialAnswer { rule: InitialRule::None, distribution: None };

    fn some(rule: InitialRule, distribution: AnswerDistribution) -> Self {
        Self { rule, distribution: Some(distribution) }
    }

    pub fn is_covered(&self) -> bool {
        self.rule != InitialRule::None
    }
}

/// Rule context shared by every pair of a run.
pub struct InitialRules<'a> {
    corpus: &'a Corpus,
    vocab: &'a AnswerVocab,
    colors: BTreeSet<String>,
}

impl<'a> InitialRules<'a> {
    pub fn new(corpus: &'a Corpus, vocab: &'a AnswerVocab) -> Self {
        Self::with_colors(corpus, vocab, DEFAULT_COLORS.iter().copied())
    }

    pub fn with_colors<'c>(
        corpus: &'a Corpus,
        vocab: &'a AnswerVocab,
        colors: impl IntoIterator<Item = &'c str>,
    ) -> Self {
        Self { corpus, vocab, colors: colors.into_iter().map(normalize_phrase).collect() }
    }

    fn context(&self, pair: &CandidatePair) -> Option<(&'a QuestionRecord, &'a ImageRecord, &'a str)> {
        let q = self.corpus.question(pair.question_id)?;
        let img = self.corpus.image(pair.image_id)?;
        match q.nouns.as_slice() {
            [noun] => Some((q, img, noun.as_str())),
            _ => None,
        }
    }

    /// Dispatches on the question kind. Yes/No, Other and paraphrase pairs
    /// get no initial answer, as do rule questions with zero or several
    /// nouns.
    pub fn assign(&self, pair: &CandidatePair) -> InitialAnswer {
        if pair.origin == Origin::Paraphrase {
            return InitialAnswer::NONE;
        }
        let Some(q) = self.corpus.question(pair.question_id) else {
            return InitialAnswer::NONE;
        };
        match q.kind {
            QuestionKind::Color => self.assign_color(pair),
            QuestionKind::Number => self.assign_number(pair),
            QuestionKind::What => self.assign_what(pair),
            QuestionKind::YesNo | QuestionKind::Other => InitialAnswer::NONE,
        }
    }

    /// Color attributes of the detected objects matching the noun,
    /// weighted by frequency.
    pub fn assign_color(&self, pair: &CandidatePair) -> InitialAnswer {
        let Some((_, img, noun)) = self.context(pair) else {
            return InitialAnswer::NONE;
        };
        let mut freq: BTreeMap<AnswerId, f64> = BTreeMap::new();
        for o in img.objects.iter().filter(|o| o.category == noun) {
            for a in &o.attributes {
                if !self.colors.contains(&a.name) {
                    continue;
                }
                if let Some(id) = self.vocab.id(&a.name) {
                    *freq.entry(id).or_insert(0.0) += 1.0;
                }
            }
        }
        if freq.is_empty() {
            return InitialAnswer::NONE;
        }
        let entries: Vec<(AnswerId, f64)> = freq.into_iter().collect();
        match AnswerDistribution::from_sparse(self.vocab.len(), &entries) {
            Ok(d) => InitialAnswer::some(InitialRule::ColorRule, d),
            Err(_) => InitialAnswer::NONE,
        }
    }

    /// Count of detections of the noun, as a decimal answer string.
    pub fn assign_number(&self, pair: &CandidatePair) -> InitialAnswer {
        let Some((_, img, noun)) = self.context(pair) else {
            return InitialAnswer::NONE;
        };
        let count = img.count(noun);
        if count == 0 {
            return InitialAnswer::NONE;
        }
        match self.vocab.id(&count.to_string()) {
            Some(id) => InitialAnswer::some(InitialRule::NumberRule, AnswerDistribution::one_hot(self.vocab.len(), id)),
            None => InitialAnswer::NONE,
        }
    }

    /// The question's original majority answer, when it names a category
    /// detected in the paired image.
    pub fn assign_what(&self, pair: &CandidatePair) -> InitialAnswer {
        let Some((q, img, _)) = self.context(pair) else {
            return InitialAnswer::NONE;
        };
        let Some(truth) = self.corpus.truth(q.question_id) else {
            return InitialAnswer::NONE;
        };
        let answer = &truth.multiple_choice_answer;
        if !img.has_category(&normalize_phrase(answer)) {
            return InitialAnswer::NONE;
        }
        match self.vocab.id(answer) {
            Some(id) => InitialAnswer::some(InitialRule::WhatRule, AnswerDistribution::one_hot(self.vocab.len(), id)),
            None => InitialAnswer::NONE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Attribute, DetectedObject, DetectionThresholds, RawAnnotation, RawDetection, RawQuestion};
    use crate::nouns::{extract_all, NounLexicon};
    use alloc::vec;

    fn object(cat: &str, colors: &[&str]) -> DetectedObject {
        DetectedObject {
            category: cat.into(),
            score: 0.9,
            attributes: colors.iter().map(|c| Attribute { name: (*c).into(), score: 0.9 }).collect(),
        }
    }

    struct Fx {
        corpus: Corpus,
        vocab: AnswerVocab,
    }

    fn fixture(text: &str, ty: &str, at: &str, answer: &str, paired: Vec<DetectedObject>) -> Fx {
        let questions = vec![RawQuestion { question_id: 1, image_id: 1, text: text.into() }];
        let annotations = vec![RawAnnotation {
            question_id: 1,
            image_id: 1,
            question_type: ty.into(),
            answer_type: at.into(),
            answers: vec![answer.into(); 10],
            multiple_choice_answer: answer.into(),
        }];
        let extra = ["red", "blue", "1", "2", "3", "knife"];
        let detections = vec![
            RawDetection {
                image_id: 1,
                objects: vec![
                    object("fork", &[]),
                    object("knife", &[]),
                    object("sock", &[]),
                    object("giraffe", &[]),
                    object("sign", &[]),
                ],
            },
            RawDetection { image_id: 2, objects: paired },
        ];
        let mut corpus = Corpus::build(questions, annotations, detections, &DetectionThresholds::default()).unwrap();
        let lex = NounLexicon::from_corpus(&corpus, [], []);
        extract_all(&mut corpus, &lex);
        let mut counts = corpus.answer_counts();
        for e in extra {
            counts.entry(e.into()).or_insert(1);
        }
        let vocab = AnswerVocab::from_counts(&counts, 1);
        Fx { corpus, vocab }
    }

    fn pair() -> CandidatePair {
        CandidatePair::new(2, 1, Origin::Composed)
    }

    #[test]
    fn single_color() {
        let fx = fixture(
            "What color is the sock?",
            "what color is the",
            "other",
            "blue",
            vec![object("sock", &["red", "wooden"])],
        );
        let a = InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair());
        assert_eq!(a.rule, InitialRule::ColorRule);
        let d = a.distribution.unwrap();
        assert_eq!(d.get(fx.vocab.id("red").unwrap()), 1.0);
    }

    #[test]
    fn two_socks_two_colors() {
        let fx = fixture(
            "What color is the sock?",
            "what color is the",
            "other",
            "blue",
            vec![object("sock", &["red"]), object("sock", &["blue"])],
        );
        let d = InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair()).distribution.unwrap();
        assert_eq!(d.get(fx.vocab.id("red").unwrap()), 0.5);
        assert_eq!(d.get(fx.vocab.id("blue").unwrap()), 0.5);
    }

    #[test]
    fn colorless_noun_falls_back() {
        let fx = fixture("What color is the sock?", "what color is the", "other", "blue", vec![object("sock", &[])]);
        assert_eq!(InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair()), InitialAnswer::NONE);
    }

    #[test]
    fn count_of_detections() {
        let fx = fixture(
            "How many giraffes are eating?",
            "how many",
            "number",
            "3",
            vec![object("giraffe", &[]), object("giraffe", &[])],
        );
        let a = InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair());
        assert_eq!(a.rule, InitialRule::NumberRule);
        assert_eq!(a.distribution.unwrap().get(fx.vocab.id("2").unwrap()), 1.0);
    }

    #[test]
    fn count_ignores_attribute_in_question() {
        let fx = fixture("How many signs are yellow?", "how many", "number", "0", vec![object("sign", &[])]);
        let a = InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair());
        assert_eq!(a.distribution.unwrap().get(fx.vocab.id("1").unwrap()), 1.0);
    }

    #[test]
    fn count_outside_vocab_falls_back() {
        let objs = (0..7).map(|_| object("giraffe", &[])).collect();
        let fx = fixture("How many giraffes?", "how many", "number", "3", objs);
        assert_eq!(InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair()).rule, InitialRule::None);
    }

    #[test]
    fn what_answer_detected_in_paired_image() {
        let fx = fixture(
            "What is near the fork?",
            "what is",
            "other",
            "knife",
            vec![object("fork", &[]), object("knife", &[])],
        );
        let a = InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair());
        assert_eq!(a.rule, InitialRule::WhatRule);
        assert_eq!(a.distribution.unwrap().get(fx.vocab.id("knife").unwrap()), 1.0);
        let fx = fixture("What is near the fork?", "what is", "other", "knife", vec![object("fork", &[])]);
        assert_eq!(InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair()).rule, InitialRule::None);
    }

    #[test]
    fn multi_noun_and_yesno_have_no_rule() {
        let fx = fixture(
            "What color is the sock near the fork?",
            "what color is the",
            "other",
            "red",
            vec![object("sock", &["red"]), object("fork", &[])],
        );
        assert_eq!(InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair()).rule, InitialRule::None);
        let fx = fixture("Is the sock red?", "is the", "yes/no", "yes", vec![object("sock", &["red"])]);
        assert_eq!(InitialRules::new(&fx.corpus, &fx.vocab).assign(&pair()).rule, InitialRule::None);
    }
}
