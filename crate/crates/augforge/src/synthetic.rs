//! Seeded synthetic fixtures: a small VQA-shaped corpus with detections,
//! hash-derived embeddings and a ready-to-run config.
//!
//! Embeddings are built so that relevance behaves sensibly: an image row is
//! the normalized sum of its categories' base vectors plus noise, and a
//! text row sums per-token vectors, where a token naming a category (or its
//! plural) uses that category's base vector.

use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use augforge_core::relevance::noun_prompt;

use crate::config::RunConfig;
use crate::error::Result;
use crate::formats::{read_jsonl, write_json, write_matrix, IdKind, JsonlWriter, MatrixSidecar};
use crate::records::{QaPromptRequest, TeacherRequest};

pub const CATEGORIES: [&str; 40] = [
    "dog",
    "cat",
    "car",
    "umbrella",
    "bird",
    "horse",
    "train",
    "bus",
    "bench",
    "kite",
    "table",
    "chair",
    "clock",
    "plate",
    "cup",
    "bottle",
    "laptop",
    "phone",
    "book",
    "vase",
    "boat",
    "truck",
    "sign",
    "banana",
    "apple",
    "donut",
    "pizza",
    "cake",
    "bear",
    "zebra",
    "giraffe",
    "elephant",
    "sheep",
    "cow",
    "bike",
    "skateboard",
    "surfboard",
    "racket",
    "frisbee",
    "tie",
];

const COLORS: [&str; 6] = ["red", "blue", "green", "white", "black", "yellow"];
const WHATS: [&str; 5] = ["food", "toy", "animal", "tool", "pet"];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub questions: usize,
    pub images: usize,
    /// At most [`CATEGORIES`]`.len()`.
    pub categories: usize,
    pub objects_per_image: (usize, usize),
    pub dim: usize,
    pub seed: u64,
    pub question_embeddings: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            questions: 200,
            images: 60,
            categories: 12,
            objects_per_image: (2, 4),
            dim: 32,
            seed: 7,
            question_embeddings: true,
        }
    }
}

fn hash_seed(s: &str) -> u64 {
    let d = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
    }
    v
}

fn hashed_vector(key: &str, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(key));
    unit((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
}

/// Regular English plural of a category name.
pub fn plural(noun: &str) -> String {
    if ["s", "x", "ch", "sh"].iter().any(|e| noun.ends_with(e)) {
        format!("{noun}es")
    } else {
        format!("{noun}s")
    }
}

fn category_of<'a>(token: &str, categories: &[&'a str]) -> Option<&'a str> {
    categories.iter().copied().find(|c| token == *c || token == plural(c))
}

/// Deterministic text embedding; category tokens share the image basis.
pub fn embed_text(text: &str, dim: usize) -> Vec<f32> {
    let mut acc = vec![0.0f32; dim];
    for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let tok = tok.to_lowercase();
        let key = match category_of(&tok, &CATEGORIES) {
            Some(c) => format!("category:{c}"),
            None => format!("token:{tok}"),
        };
        let (v, w) = (hashed_vector(&key, dim), if key.starts_with("category:") { 3.0 } else { 1.0 });
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += w * x);
    }
    unit(acc)
}

fn image_vector(categories: &[&str], dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut acc: Vec<f32> = (0..dim).map(|_| rng.random_range(-0.3f32..0.3)).collect();
    for c in categories {
        acc.iter_mut().zip(hashed_vector(&format!("category:{c}"), dim)).for_each(|(a, x)| *a += x);
    }
    unit(acc)
}

/// Category, instance count and color of one detected object kind.
type SynthObject = (&'static str, u32, &'static str);

struct Question {
    id: u64,
    image: u64,
    text: String,
    qtype: &'static str,
    answer_type: &'static str,
    answers: Vec<String>,
}

/// Paths written by [`write_fixture`].
#[derive(Debug, Clone)]
pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub questions: usize,
    pub images: usize,
}

fn answers(rng: &mut ChaCha8Rng, majority: &str, pool: &[&str]) -> Vec<String> {
    (0..10)
        .map(|_| if rng.random_bool(0.8) { majority.to_string() } else { pool.choose(rng).unwrap().to_string() })
        .collect()
}

/// Writes corpus files, embeddings and `config.json` into `dir`. The config
/// uses the bias prior as ID teacher and the uniform teacher as OOD teacher.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cats: Vec<&str> = CATEGORIES[..spec.categories.clamp(1, CATEGORIES.len())].to_vec();

    let mut images: Vec<(u64, Vec<SynthObject>)> = Vec::with_capacity(spec.images);
    for i in 0..spec.images {
        let (lo, hi) = spec.objects_per_image;
        let k = rng.random_range(lo.max(1)..=hi.max(lo.max(1))).min(cats.len());
        let chosen: Vec<&str> = cats.choose_multiple(&mut rng, k).copied().collect();
        let objs =
            chosen.into_iter().map(|c| (c, rng.random_range(1..=4u32), *COLORS.choose(&mut rng).unwrap())).collect();
        images.push((1000 + i as u64, objs));
    }

    let mut questions = Vec::with_capacity(spec.questions);
    for q in 0..spec.questions {
        let (image, objs) = images.choose(&mut rng).unwrap();
        let &(noun, count, color) = objs.choose(&mut rng).unwrap();
        let id = 10_000 + q as u64;
        let (text, qtype, answer_type, ans) = match rng.random_range(0..5) {
            0 | 1 => {
                let yes = rng.random_bool(0.5);
                let asked = if yes { noun } else { *cats.choose(&mut rng).unwrap() };
                let truth = if objs.iter().any(|o| o.0 == asked) { "yes" } else { "no" };
                (
                    format!("Is there a {asked} in the picture?"),
                    "is there a",
                    "yes/no",
                    answers(&mut rng, truth, &["yes", "no"]),
                )
            }
            2 => (
                format!("How many {} are there?", plural(noun)),
                "how many",
                "number",
                answers(&mut rng, &count.to_string(), &["1", "2", "3", "4"]),
            ),
            3 => {
                (format!("What color is the {noun}?"), "what color is the", "other", answers(&mut rng, color, &COLORS))
            }
            _ => {
                if rng.random_bool(0.5) {
                    let w = *WHATS.choose(&mut rng).unwrap();
                    (format!("What {w} is that {noun}?"), "what", "other", answers(&mut rng, noun, &cats))
                } else {
                    let side = if rng.random_bool(0.5) { "up" } else { "down" };
                    (
                        format!("Are the {}' tails up or down?", plural(noun)),
                        "are the",
                        "other",
                        answers(&mut rng, side, &["up", "down"]),
                    )
                }
            }
        };
        questions.push(Question { id, image: *image, text, qtype, answer_type, answers: ans });
    }

    std::fs::create_dir_all(dir).map_err(|e| crate::error::AppError::io(dir, e))?;
    let qjson: Vec<Value> =
        questions.iter().map(|q| json!({"image_id": q.image, "question": q.text, "question_id": q.id})).collect();
    write_json(&dir.join("questions.json"), &json!({ "questions": qjson }))?;
    let ajson: Vec<Value> = questions
        .iter()
        .map(|q| {
            let majority = most_common(&q.answers);
            json!({
                "question_id": q.id,
                "image_id": q.image,
                "question_type": q.qtype,
                "answer_type": q.answer_type,
                "answers": q.answers.iter().map(|a| json!({"answer": a})).collect::<Vec<_>>(),
                "multiple_choice_answer": majority,
            })
        })
        .collect();
    write_json(&dir.join("annotations.json"), &json!({ "annotations": ajson }))?;

    let mut w = JsonlWriter::create(&dir.join("detections.jsonl"))?;
    for (id, objs) in &images {
        let mut objects = Vec::new();
        for &(c, n, color) in objs {
            for _ in 0..n {
                objects.push(json!({
                    "category": c,
                    "score": 0.9,
                    "attributes": [{"name": color, "score": 0.7}],
                }));
            }
        }
        w.write(&json!({"image_id": id, "objects": objects}))?;
    }
    w.finish()?;

    let dim = spec.dim;
    let mut rows = Vec::with_capacity(images.len() * dim);
    for (_, objs) in &images {
        let cs: Vec<&str> = objs.iter().map(|o| o.0).collect();
        rows.extend(image_vector(&cs, dim, &mut rng));
    }
    let ids = images.iter().map(|(id, _)| json!(id)).collect();
    write_matrix(&dir.join("emb/images"), &sidecar(dim, ids, IdKind::Image), &rows)?;

    let prompts: Vec<String> = cats.iter().map(|c| noun_prompt(c)).collect();
    write_text_matrix(&dir.join("emb/noun_prompts"), &prompts, dim, IdKind::NounPrompt)?;

    let mut cfg = json!({
        "questions": "questions.json",
        "annotations": "annotations.json",
        "detections": "detections.jsonl",
        "embeddings": {"images": "emb/images", "noun_prompts": "emb/noun_prompts"},
        "teachers": {"id": {"name": "bias", "kind": "bias"}, "ood": {"name": "uniform", "kind": "uniform"}},
        "output_dir": "out",
        "alpha_percent": 100.0,
        "delta_percent": 100.0,
    });
    if spec.question_embeddings {
        let mut rows = Vec::with_capacity(questions.len() * dim);
        for q in &questions {
            rows.extend(embed_text(&q.text, dim));
        }
        let ids = questions.iter().map(|q| json!(q.id)).collect();
        write_matrix(&dir.join("emb/questions"), &sidecar(dim, ids, IdKind::Question), &rows)?;
        cfg["embeddings"]["questions"] = json!("emb/questions");
    }
    let config = dir.join("config.json");
    write_json(&config, &cfg)?;
    Ok(Fixture { dir: dir.to_path_buf(), config, questions: questions.len(), images: images.len() })
}

fn most_common(answers: &[String]) -> String {
    let mut counts = std::collections::BTreeMap::new();
    for a in answers {
        *counts.entry(a.as_str()).or_insert(0usize) += 1;
    }
    let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap();
    best.0.to_string()
}

fn sidecar(dim: usize, ids: Vec<Value>, id_kind: IdKind) -> MatrixSidecar {
    MatrixSidecar { dim, count: ids.len(), ids, id_kind, teacher_name: None }
}

/// Embeds `texts` with [`embed_text`]; duplicate texts are written once.
pub fn write_text_matrix(base: &Path, texts: &[String], dim: usize, kind: IdKind) -> Result<()> {
    let unique: std::collections::BTreeSet<&str> = texts.iter().map(String::as_str).collect();
    let mut rows = Vec::with_capacity(unique.len() * dim);
    for t in &unique {
        rows.extend(embed_text(t, dim));
    }
    let ids = unique.iter().map(|t| json!(t)).collect();
    write_matrix(base, &sidecar(dim, ids, kind), &rows)
}

/// Stands in for the external text encoder: embeds the QA prompts of a
/// finished `score` stage at the configured location.
pub fn write_qa_prompt_embeddings(cfg: &RunConfig, dim: usize) -> Result<usize> {
    let prompts: Vec<QaPromptRequest> = read_jsonl(&cfg.layout().qa_prompts())?;
    let texts: Vec<String> = prompts.into_iter().map(|p| p.prompt).collect();
    write_text_matrix(&cfg.qa_prompt_embeddings(), &texts, dim, IdKind::QaPrompt)?;
    Ok(texts.len())
}

/// Stands in for an external teacher: one row per requested pair, given by
/// `row(request)` over a vocabulary of `vocab_len`.
pub fn write_teacher_predictions(
    base: &Path,
    teacher_name: &str,
    requests: &[TeacherRequest],
    vocab_len: usize,
    mut row: impl FnMut(&TeacherRequest) -> Vec<f32>,
) -> Result<()> {
    let mut rows = Vec::with_capacity(requests.len() * vocab_len);
    for r in requests {
        let v = row(r);
        assert_eq!(v.len(), vocab_len, "teacher row length");
        rows.extend(v);
    }
    let ids = requests.iter().map(|r| json!(r.pair_id)).collect();
    let mut sc = sidecar(vocab_len, ids, IdKind::PairPrediction);
    sc.teacher_name = Some(teacher_name.to_string());
    write_matrix(base, &sc, &rows)
}
