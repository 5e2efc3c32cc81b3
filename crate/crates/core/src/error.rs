use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{kind} {id} referenced but not found")]
    DanglingReference { kind: &'static str, id: u64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("question {0} has no annotation")]
    MissingAnnotation(u64),
    #[error("annotation for question {question_id} names image {annotation_image} but the question names image {question_image}")]
    InconsistentReference { question_id: u64, question_image: u64, annotation_image: u64 },
    #[error("score {value} for {what} is outside [0, 1]")]
    ScoreOutOfRange { what: String, value: f64 },
    #[error("question type {0:?} has no questions")]
    EmptyType(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no embedding row for {0}")]
    MissingEmbedding(String),
    #[error("embedding row for {0} has zero norm")]
    ZeroVector(String),
    #[error("embedding row for {0} contains a non-finite value")]
    NonFinite(String),
    #[error("duplicate embedding id {0}")]
    DuplicateEmbeddingId(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("percentage {0} is outside the permitted range")]
    InvalidPercent(f64),
    #[error("question {0} has no locatable single noun")]
    NoNoun(u64),
    #[error("question {question_id} does not start with its type prefix {prefix:?}")]
    PrefixMismatch { question_id: u64, prefix: String },
    #[error("no table row for pair {0}")]
    MissingTableRow(u64),
    #[error("shape mismatch: expected {expected_rows}x{expected_dim}, found {rows}x{dim}")]
    ShapeMismatch { expected_rows: usize, expected_dim: usize, rows: usize, dim: usize },
    #[error("prediction row {0} has no positive mass")]
    DegenerateRow(usize),
    #[error("distributions over different vocabularies ({left} vs {right} entries)")]
    VocabMismatch { left: usize, right: usize },
    #[error("harmonic mean requires inputs in (0, 100], got {0}")]
    NonPositiveInput(f64),
    #[error("prediction for unknown question {0}")]
    UnknownQuestion(u64),
    #[error("teacher kind {0} cannot predict in-process")]
    ExternalTeacher(String),
    #[error("invalid teacher parameter: {0}")]
    InvalidTeacherParam(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}
