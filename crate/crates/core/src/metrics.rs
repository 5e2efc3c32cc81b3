//! VQA accuracy, per-category breakdown and the ID/OOD harmonic mean.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{AnswerCategory, Corpus};
use crate::{Error, QuestionId, Result};

const PUNCTUATION: [char; 21] =
    [';', '/', '[', ']', '"', '{', '}', '(', ')', '=', '+', '\\', '_', '-', '>', '<', '@', '`', ',', '?', '!'];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

const NUMBER_WORDS: [(&str, &str); 11] = [
    ("none", "0"),
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
];

// apostrophe-less spellings restored to the contracted form
const CONTRACTIONS: &[(&str, &str)] = &[
    ("aint", "ain't"),
    ("arent", "aren't"),
    ("cant", "can't"),
    ("couldve", "could've"),
    ("couldnt", "couldn't"),
    ("couldn'tve", "couldn't've"),
    ("couldnt've", "couldn't've"),
    ("didnt", "didn't"),
    ("doesnt", "doesn't"),
    ("dont", "don't"),
    ("hadnt", "hadn't"),
    ("hadnt've", "hadn't've"),
    ("hadn'tve", "hadn't've"),
    ("hasnt", "hasn't"),
    ("havent", "haven't"),
    ("hed", "he'd"),
    ("hed've", "he'd've"),
    ("he'dve", "he'd've"),
    ("hes", "he's"),
    ("howd", "how'd"),
    ("howll", "how'll"),
    ("hows", "how's"),
    ("Id've", "I'd've"),
    ("I'dve", "I'd've"),
    ("Im", "I'm"),
    ("Ive", "I've"),
    ("isnt", "isn't"),
    ("itd", "it'd"),
    ("itd've", "it'd've"),
    ("it'dve", "it'd've"),
    ("itll", "it'll"),
    ("let's", "let's"),
    ("maam", "ma'am"),
    ("mightnt", "mightn't"),
    ("mightnt've", "mightn't've"),
    ("mightn'tve", "mightn't've"),
    ("mightve", "might've"),
    ("mustnt", "mustn't"),
    ("mustve", "must've"),
    ("neednt", "needn't"),
    ("notve", "not've"),
    ("oclock", "o'clock"),
    ("oughtnt", "oughtn't"),
    ("ow's'at", "'ow's'at"),
    ("'ows'at", "'ow's'at"),
    ("'ow'sat", "'ow's'at"),
    ("shant", "shan't"),
    ("shed've", "she'd've"),
    ("she'dve", "she'd've"),
    ("she's", "she's"),
    ("shouldve", "should've"),
    ("shouldnt", "shouldn't"),
    ("shouldnt've", "shouldn't've"),
    ("shouldn'tve", "shouldn't've"),
    ("somebody'd", "somebodyd"),
    ("somebodyd've", "somebody'd've"),
    ("somebody'dve", "somebody'd've"),
    ("somebodyll", "somebody'll"),
    ("somebodys", "somebody's"),
    ("someoned", "someone'd"),
    ("someoned've", "someone'd've"),
    ("someone'dve", "someone'd've"),
    ("someonell", "someone'll"),
    ("someones", "someone's"),
    ("somethingd", "something'd"),
    ("somethingd've", "something'd've"),
    ("something'dve", "something'd've"),
    ("somethingll", "something'll"),
    ("thats", "that's"),
    ("thered", "there'd"),
    ("thered've", "there'd've"),
    ("there'dve", "there'd've"),
    ("therere", "there're"),
    ("theres", "there's"),
    ("theyd", "they'd"),
    ("theyd've", "they'd've"),
    ("they'dve", "they'd've"),
    ("theyll", "they'll"),
    ("theyre", "they're"),
    ("theyve", "they've"),
    ("twas", "'twas"),
    ("wasnt", "wasn't"),
    ("wed've", "we'd've"),
    ("we'dve", "we'd've"),
    ("weve", "we've"),
    ("werent", "weren't"),
    ("whatll", "what'll"),
    ("whatre", "what're"),
    ("whats", "what's"),
    ("whatve", "what've"),
    ("whens", "when's"),
    ("whered", "where'd"),
    ("wheres", "where's"),
    ("whereve", "where've"),
    ("whod", "who'd"),
    ("whod've", "who'd've"),
    ("who'dve", "who'd've"),
    ("wholl", "who'll"),
    ("whos", "who's"),
    ("whove", "who've"),
    ("whyll", "why'll"),
    ("whyre", "why're"),
    ("whys", "why's"),
    ("wont", "won't"),
    ("wouldve", "would've"),
    ("wouldnt", "wouldn't"),
    ("wouldnt've", "wouldn't've"),
    ("wouldn'tve", "wouldn't've"),
];

fn has_digit_comma_digit(s: &[char]) -> bool {
    s.windows(3).any(|w| w[0].is_ascii_digit() && w[1] == ',' && w[2].is_ascii_digit())
}

fn strip_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let comma_number = has_digit_comma_digit(&chars);
    let mut out: Vec<char> = chars.clone();
    for p in PUNCTUATION {
        let spaced = chars.windows(2).any(|w| (w[0] == p && w[1] == ' ') || (w[0] == ' ' && w[1] == p));
        if spaced || comma_number {
            out.retain(|&c| c != p);
        } else {
            for c in out.iter_mut().filter(|c| **c == p) {
                *c = ' ';
            }
        }
    }
    // periods survive only before a digit
    let mut kept = String::with_capacity(out.len());
    for (i, &c) in out.iter().enumerate() {
        if c == '.' && !out.get(i + 1).is_some_and(|n| n.is_ascii_digit()) {
            continue;
        }
        kept.push(c);
    }
    kept
}

fn map_words(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut words: Vec<&str> = Vec::new();
    for w in lower.split_whitespace() {
        let w = NUMBER_WORDS.iter().find(|(k, _)| *k == w).map_or(w, |(_, v)| *v);
        if !ARTICLES.contains(&w) {
            words.push(w);
        }
    }
    let mut out = String::with_capacity(lower.len());
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(CONTRACTIONS.iter().find(|(k, _)| k == w).map_or(w, |(_, v)| *v));
    }
    out
}

/// Answer normalization of the standard VQA evaluation: whitespace and
/// punctuation cleanup, number words to digits, articles dropped and
/// contractions restored.
pub fn normalize_answer(answer: &str) -> String {
    let flat: String = answer.chars().map(|c| if c == '\n' || c == '\t' { ' ' } else { c }).collect();
    map_words(&strip_punctuation(flat.trim()))
}

/// `min(matches / 3, 1)` over normalized answers.
pub fn vqa_accuracy(predicted: &str, raw_answers: &[String]) -> f64 {
    let p = normalize_answer(predicted);
    accuracy_normalized(&p, raw_answers.iter().map(|a| normalize_answer(a)))
}

fn accuracy_normalized(p: &str, answers: impl Iterator<Item = String>) -> f64 {
    let n = answers.filter(|a| a == p).count();
    (n as f64 / 3.0).min(1.0)
}

/// `2 a b / (a + b)` on percentages in `(0, 100]`.
pub fn harmonic_mean(id_acc: f64, ood_acc: f64) -> Result<f64> {
    for x in [id_acc, ood_acc] {
        if !(x > 0.0 && x <= 100.0) {
            return Err(Error::NonPositiveInput(x));
        }
    }
    Ok(2.0 * id_acc * ood_acc / (id_acc + ood_acc))
}

/// Source of reference answers for evaluation.
pub trait TruthLookup {
    fn lookup(&self, question_id: QuestionId) -> Option<(AnswerCategory, &[String])>;
}

impl TruthLookup for Corpus {
    fn lookup(&self, question_id: QuestionId) -> Option<(AnswerCategory, &[String])> {
        let q = self.question(question_id)?;
        let t = self.truth(question_id)?;
        Some((q.answer_category, t.raw_answers.as_slice()))
    }
}

impl TruthLookup for BTreeMap<QuestionId, (AnswerCategory, Vec<String>)> {
    fn lookup(&self, question_id: QuestionId) -> Option<(AnswerCategory, &[String])> {
        self.get(&question_id).map(|(c, a)| (*c, a.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryAccuracy {
    pub n: usize,
    /// Percentage in `[0, 100]`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub n: usize,
    /// Sample-weighted mean over categories, as a percentage.
    pub overall: f64,
    /// Categories without predictions are absent.
    pub per_category: BTreeMap<AnswerCategory, CategoryAccuracy>,
}

pub fn evaluate<T: TruthLookup + ?Sized>(predictions: &[(QuestionId, String)], truth: &T) -> Result<EvalResult> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut seen = BTreeSet::new();
    let mut sums: BTreeMap<AnswerCategory, (usize, f64)> = BTreeMap::new();
    for (qid, answer) in predictions {
        if !seen.insert(*qid) {
            return Err(Error::DuplicateId { kind: "prediction", id: *qid });
        }
        let (category, raw) = truth.lookup(*qid).ok_or(Error::UnknownQuestion(*qid))?;
        let acc = vqa_accuracy(answer, raw);
        let e = sums.entry(category).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += acc;
    }
    let total: f64 = sums.values().map(|(_, s)| s).sum();
    let per_category =
        sums.into_iter().map(|(c, (n, s))| (c, CategoryAccuracy { n, accuracy: 100.0 * s / n as f64 })).collect();
    Ok(EvalResult { n: predictions.len(), overall: 100.0 * total / predictions.len() as f64, per_category })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn answers(matching: usize, word: &str) -> Vec<String> {
        (0..10).map(|i| if i < matching { word.to_string() } else { "other".to_string() }).collect()
    }

    #[test]
    fn accuracy_formula() {
        assert_eq!(vqa_accuracy("yes", &answers(3, "yes")), 1.0);
        assert_eq!(vqa_accuracy("yes", &answers(1, "yes")), 1.0 / 3.0);
        assert_eq!(vqa_accuracy("yes", &answers(0, "yes")), 0.0);
        assert_eq!(vqa_accuracy("yes", &answers(10, "yes")), 1.0);
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_answer("Two"), "2");
        assert_eq!(normalize_answer("a dog"), "dog");
        assert_eq!(normalize_answer("The Dog."), "dog");
        assert_eq!(normalize_answer("dont"), "don't");
        assert_eq!(normalize_answer("yes!"), "yes");
        assert_eq!(normalize_answer("1,000"), "1000");
        assert_eq!(normalize_answer("3.5"), "3.5");
        assert_eq!(normalize_answer("  red\tand  blue "), "red and blue");
        assert_eq!(normalize_answer("t-shirt"), "t shirt");
        assert_eq!(normalize_answer("left - right"), "left right");
    }

    #[test]
    fn normalized_predictions_match() {
        assert_eq!(vqa_accuracy("Two", &answers(3, "2")), 1.0);
        assert_eq!(vqa_accuracy("the dog", &answers(2, "dog")), 2.0 / 3.0);
    }

    #[test]
    fn harmonic_mean_values() {
        assert!((harmonic_mean(39.74, 63.48).unwrap() - 48.88).abs() < 0.01);
        assert!((harmonic_mean(60.24, 62.86).unwrap() - 61.52).abs() < 0.01);
        assert_eq!(harmonic_mean(42.0, 42.0).unwrap(), 42.0);
        assert_eq!(harmonic_mean(0.0, 50.0), Err(Error::NonPositiveInput(0.0)));
        assert_eq!(harmonic_mean(50.0, 100.5), Err(Error::NonPositiveInput(100.5)));
    }

    fn table() -> BTreeMap<QuestionId, (AnswerCategory, Vec<String>)> {
        let mut t = BTreeMap::new();
        t.insert(1, (AnswerCategory::YesNo, answers(10, "yes")));
        t.insert(2, (AnswerCategory::Number, answers(1, "2")));
        t.insert(3, (AnswerCategory::Other, answers(2, "cat")));
        t.insert(4, (AnswerCategory::Other, answers(0, "cat")));
        t
    }

    #[test]
    fn evaluate_breakdown() {
        let preds = vec![(1, "yes".into()), (2, "two".into()), (3, "cat".into()), (4, "cat".into())];
        let r = evaluate(&preds, &table()).unwrap();
        assert_eq!(r.n, 4);
        let expect = 100.0 * (1.0 + 1.0 / 3.0 + 2.0 / 3.0 + 0.0) / 4.0;
        assert!((r.overall - expect).abs() < 1e-12);
        assert_eq!(r.per_category[&AnswerCategory::YesNo], CategoryAccuracy { n: 1, accuracy: 100.0 });
        assert!((r.per_category[&AnswerCategory::Other].accuracy - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_errors() {
        assert_eq!(evaluate(&[], &table()), Err(Error::EmptyInput));
        assert_eq!(evaluate(&[(9, "x".into())], &table()), Err(Error::UnknownQuestion(9)));
        assert!(matches!(evaluate(&[(1, "x".into()), (1, "y".into())], &table()), Err(Error::DuplicateId { .. })));
    }
}
