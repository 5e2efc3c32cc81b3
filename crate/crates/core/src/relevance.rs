//! Image-text relevance: noun-prompt scoring, top-alpha filtering and
//! answer-quality ranking of question-answer prompts.

use alloc::string::String;
use alloc::vec::Vec;

use crate::compose::CandidatePair;
use crate::corpus::{Corpus, QuestionKind, QuestionRecord};
use crate::embedding::EmbeddingMatrix;
use crate::nouns::NounLexicon;
use crate::{Error, ImageId, QuestionId, Result};

pub const NOUN_PROMPT_PREFIX: &str = "a photo of ";

pub fn noun_prompt(noun: &str) -> String {
    let mut s = String::with_capacity(NOUN_PROMPT_PREFIX.len() + noun.len());
    s.push_str(NOUN_PROMPT_PREFIX);
    s.push_str(noun);
    s
}

/// `ceil(percent * n / 100)`, exact when `percent * n` is a multiple of
/// 100. `percent = 0` gives 0; results are clamped to `n`.
pub fn percent_count(n: usize, percent: f64) -> usize {
    if percent <= 0.0 || n == 0 {
        return 0;
    }
    let x = percent * n as f64 / 100.0;
    let r = libm::round(x);
    let k = if (x - r).abs() < 1e-9 { r } else { libm::ceil(x) };
    (k as usize).min(n)
}

fn check_alpha(alpha_percent: f64) -> Result<()> {
    if alpha_percent > 0.0 && alpha_percent <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidPercent(alpha_percent))
    }
}

/// Mean image-to-noun-prompt cosine for each pair.
///
/// Every paired image needs a row in `image_emb` (keyed by image id) and
/// every noun a row in `prompt_emb` keyed by its prompt text.
pub fn score_pairs(
    pairs: &[CandidatePair],
    image_emb: &EmbeddingMatrix,
    prompt_emb: &EmbeddingMatrix,
    corpus: &Corpus,
) -> Result<Vec<f64>> {
    if image_emb.dim() != prompt_emb.dim() {
        return Err(Error::DimensionMismatch { expected: image_emb.dim(), found: prompt_emb.dim() });
    }
    let mut out = Vec::with_capacity(pairs.len());
    let mut cached: Option<(QuestionId, Vec<usize>)> = None;
    for pair in pairs {
        let rows = match &cached {
            Some((qid, rows)) if *qid == pair.question_id => rows,
            _ => {
                let q = corpus
                    .question(pair.question_id)
                    .ok_or(Error::DanglingReference { kind: "question", id: pair.question_id })?;
                if q.nouns.is_empty() {
                    return Err(Error::Inconsistent(alloc::format!(
                        "question {} has no nouns to score",
                        q.question_id
                    )));
                }
                let rows =
                    q.nouns.iter().map(|n| prompt_emb.require_text(&noun_prompt(n))).collect::<Result<Vec<_>>>()?;
                &cached.insert((pair.question_id, rows)).1
            }
        };
        let img = image_emb.require_int(pair.image_id)?;
        let mut total = 0.0;
        for &r in rows {
            total += image_emb.cosine_with(img, prompt_emb, r)?;
        }
        out.push(total / rows.len() as f64);
    }
    Ok(out)
}

/// Keeps the `ceil(alpha * N / 100)` most relevant pairs, ordered by
/// descending relevance with ties on ascending `(question_id, image_id)`,
/// and stamps each kept pair's rank.
///
/// Pairs without a relevance score sort last.
pub fn filter_top(mut pairs: Vec<CandidatePair>, alpha_percent: f64) -> Result<Vec<CandidatePair>> {
    check_alpha(alpha_percent)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    sort_by_relevance(&mut pairs);
    let keep = percent_count(pairs.len(), alpha_percent);
    pairs.truncate(keep);
    for (i, p) in pairs.iter_mut().enumerate() {
        p.rank = Some(i as u32);
    }
    Ok(pairs)
}

pub fn sort_by_relevance(pairs: &mut [CandidatePair]) {
    let score = |p: &CandidatePair| p.relevance.unwrap_or(f64::NEG_INFINITY);
    pairs.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.key().cmp(&b.key())));
}

/// Text prompt describing a question-answer pair for ranking.
///
/// Number and Color questions drop the question-type prefix and place the
/// answer right before the single noun; other questions replace the prefix
/// with the answer. A trailing question mark is removed.
pub fn clip_rank_prompt(question: &QuestionRecord, answer: &str, lexicon: &NounLexicon) -> Result<String> {
    let lowered = question.text.trim().to_lowercase();
    let text = lowered.trim_end_matches(|c: char| c == '?' || c.is_whitespace());
    let prefix = question.question_type.as_str();
    let boundary =
        text.get(prefix.len()..).map(|rest| rest.chars().next().is_none_or(|c| !c.is_alphanumeric())).unwrap_or(false);
    if prefix.is_empty() || !text.starts_with(prefix) || !boundary {
        return Err(Error::PrefixMismatch { question_id: question.question_id, prefix: prefix.into() });
    }
    let rest = text[prefix.len()..].trim_start();
    let mut out = String::with_capacity(rest.len() + answer.len() + 1);
    match question.kind {
        QuestionKind::Number | QuestionKind::Color => {
            let [noun] = question.nouns.as_slice() else {
                return Err(Error::NoNoun(question.question_id));
            };
            let at = lexicon
                .scan(rest)
                .into_iter()
                .find(|m| !m.stop && &m.canonical == noun)
                .ok_or(Error::NoNoun(question.question_id))?;
            out.push_str(&rest[..at.start]);
            out.push_str(answer);
            out.push(' ');
            out.push_str(&rest[at.start..]);
        }
        _ => {
            out.push_str(answer);
            if !rest.is_empty() {
                out.push(' ');
                out.push_str(rest);
            }
        }
    }
    Ok(out)
}

/// A sample to rank: its pair key, image and generated QA prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct QaSample {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    /// Position in the input slice.
    pub index: usize,
    pub score: f64,
}

/// Samples by descending image-to-prompt cosine; equal scores keep
/// ascending `(question_id, image_id)`.
pub fn rank_by_answer_quality(
    samples: &[QaSample],
    image_emb: &EmbeddingMatrix,
    prompt_emb: &EmbeddingMatrix,
) -> Result<Vec<Ranked>> {
    let mut ranked = samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let img = image_emb.require_int(s.image_id)?;
            let p = prompt_emb.require_text(&s.prompt)?;
            Ok(Ranked { index, score: image_emb.cosine_with(img, prompt_emb, p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        let (sa, sb) = (&samples[a.index], &samples[b.index]);
        b.score.total_cmp(&a.score).then_with(|| (sa.question_id, sa.image_id).cmp(&(sb.question_id, sb.image_id)))
    });
    Ok(ranked)
}

/// Splits a ranking into its top `percent`% (rounded up) and the rest.
pub fn split_top(ranked: &[Ranked], percent: f64) -> (&[Ranked], &[Ranked]) {
    ranked.split_at(percent_count(ranked.len(), percent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::Origin;
    use crate::corpus::AnswerCategory;
    use crate::embedding::EmbeddingKey;
    use alloc::vec;

    fn question(text: &str, ty: &str, kind: QuestionKind, nouns: &[&str]) -> QuestionRecord {
        QuestionRecord {
            question_id: 1,
            source_image_id: 1,
            text: text.into(),
            question_type: ty.into(),
            answer_category: AnswerCategory::Other,
            kind,
            nouns: nouns.iter().map(|s| String::from(*s)).collect(),
            composable: true,
        }
    }

    #[test]
    fn noun_prompt_template() {
        assert_eq!(noun_prompt("giraffe"), "a photo of giraffe");
        assert_eq!(noun_prompt("traffic light"), "a photo of traffic light");
    }

    #[test]
    fn percent_counts() {
        assert_eq!(percent_count(10, 10.0), 1);
        assert_eq!(percent_count(7, 10.0), 1);
        assert_eq!(percent_count(7, 30.0), 3);
        assert_eq!(percent_count(1000, 10.0), 100);
        assert_eq!(percent_count(1, 10.0), 1);
        assert_eq!(percent_count(20, 0.0), 0);
        assert_eq!(percent_count(20, 100.0), 20);
    }

    #[test]
    fn filter_rejects_bad_alpha_and_empty_input() {
        assert_eq!(filter_top(vec![], 10.0), Err(Error::EmptyInput));
        assert_eq!(filter_top(vec![CandidatePair::new(1, 1, Origin::Composed)], 0.0), Err(Error::InvalidPercent(0.0)));
        assert!(filter_top(vec![CandidatePair::new(1, 1, Origin::Composed)], 100.5).is_err());
    }

    #[test]
    fn filter_orders_by_score_then_key() {
        let mut pairs = vec![];
        for (i, s) in [0.5, 0.9, 0.5, 0.1].iter().enumerate() {
            let mut p = CandidatePair::new(i as u64, 10 - i as u64, Origin::Composed);
            p.relevance = Some(*s);
            pairs.push(p);
        }
        let kept = filter_top(pairs, 100.0).unwrap();
        let keys: Vec<_> = kept.iter().map(|p| p.key()).collect();
        assert_eq!(keys, vec![(9, 1), (8, 2), (10, 0), (7, 3)]);
        assert_eq!(kept[3].rank, Some(3));
    }

    #[test]
    fn appendix_prompt_examples() {
        let lex = NounLexicon::new(["umbrella", "food", "sock"], [], []);
        let q = question("how many umbrellas are there", "how many", QuestionKind::Number, &["umbrella"]);
        assert_eq!(clip_rank_prompt(&q, "2", &lex).unwrap(), "2 umbrellas are there");
        let q = question("what food is that", "what food", QuestionKind::What, &["food"]);
        assert_eq!(clip_rank_prompt(&q, "donut", &lex).unwrap(), "donut is that");
    }

    #[test]
    fn color_prompt_inserts_before_noun() {
        let lex = NounLexicon::new(["sock"], [], []);
        let q = question("What color is the sock?", "what color", QuestionKind::Color, &["sock"]);
        assert_eq!(clip_rank_prompt(&q, "red", &lex).unwrap(), "is the red sock");
    }

    #[test]
    fn prompt_errors() {
        let lex = NounLexicon::new(["sock"], [], []);
        let q = question("How many shoes?", "how many", QuestionKind::Number, &["sock"]);
        assert_eq!(clip_rank_prompt(&q, "2", &lex), Err(Error::NoNoun(1)));
        let q = question("Is it red?", "what color", QuestionKind::Color, &["sock"]);
        assert!(matches!(clip_rank_prompt(&q, "red", &lex), Err(Error::PrefixMismatch { .. })));
        let q = question("whatever is that", "what", QuestionKind::What, &[]);
        assert!(matches!(clip_rank_prompt(&q, "x", &lex), Err(Error::PrefixMismatch { .. })));
    }

    #[test]
    fn ranking_and_split() {
        let img = EmbeddingMatrix::new(2, vec![EmbeddingKey::Int(1), EmbeddingKey::Int(2)], vec![1.0, 0.0, 1.0, 0.0])
            .unwrap();
        let qa = EmbeddingMatrix::new(
            2,
            vec![EmbeddingKey::Text("a".into()), EmbeddingKey::Text("b".into())],
            vec![0.1, 0.994_987_4, 0.9, 0.435_889_9],
        )
        .unwrap();
        let samples = vec![
            QaSample { question_id: 5, image_id: 1, prompt: "b".into() },
            QaSample { question_id: 6, image_id: 2, prompt: "a".into() },
        ];
        let ranked = rank_by_answer_quality(&samples, &img, &qa).unwrap();
        assert_eq!(ranked.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1]);
        let (top, bottom) = split_top(&ranked, 50.0);
        assert_eq!((top.len(), bottom.len()), (1, 1));
        assert_eq!(top[0].index, 0);
        assert_eq!(split_top(&ranked, 0.0).0.len(), 0);
        assert_eq!(split_top(&ranked, 100.0).0.len(), 2);
    }
}
