//! Error types, one enum per subsystem.

use std::path::PathBuf;

/// Errors raised by the textual memory: append contract violations,
/// footprint preconditions, and persistence failures.
#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    /// Appended entry's clip index is not the next consecutive index.
    #[error("clip index gap: expected {expected}, got {got}")]
    Gap { expected: u64, got: u64 },

    /// Appended entry's span does not start where the previous entry ended.
    #[error("span overlap or hole: entry starts at {got_start_ms} ms, expected {expected_start_ms} ms")]
    Overlap {
        expected_start_ms: u64,
        got_start_ms: u64,
    },

    /// Description text is empty after trimming whitespace.
    #[error("empty description text for clip {clip_index}")]
    EmptyText { clip_index: u64 },

    /// Entry span is degenerate (start >= end).
    #[error("invalid span [{start_ms}, {end_ms}) for clip {clip_index}")]
    InvalidSpan {
        clip_index: u64,
        start_ms: u64,
        end_ms: u64,
    },

    /// Footprint requested over a non-positive video duration.
    #[error("video duration must be positive")]
    ZeroDuration,

    /// Entry or task belongs to a different video than the memory.
    #[error("source mismatch: memory is for '{memory}', got '{other}'")]
    SourceMismatch { memory: String, other: String },

    /// Memory file line failed to parse (line numbers are 1-based).
    #[error("{path}:{line}: malformed memory record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Another writer holds the advisory lock on the memory file.
    #[error("memory file '{path}' is locked by another writer")]
    Locked { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised by the segmenter and the media adapter.
#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    /// The source reported a duration smaller than what was already emitted.
    #[error("non-monotonic stream: {reported_ms} ms reported, {emitted_ms} ms already emitted")]
    NonMonotonicStream { emitted_ms: u64, reported_ms: u64 },

    /// The stream was already finalized; no further clips may be emitted.
    #[error("stream already finalized at {total_ms} ms")]
    AlreadyFinalized { total_ms: u64 },

    #[error("clip length must be positive")]
    ZeroClipLength,

    /// External media-decoder command failed.
    #[error("media tool failed (status {status}): {stderr}")]
    MediaTool { status: i32, stderr: String },

    /// Media-decoder command template is malformed or empty.
    #[error("bad media command template: {0}")]
    BadCommandTemplate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised by prompt fixture loading.
#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{path}: missing required section '{section}'")]
    MissingSection { path: PathBuf, section: String },

    #[error("{path}: no question templates found")]
    NoTemplates { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised by model backends.
#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("authentication failed for backend '{backend}': {message}")]
    Auth { backend: String, message: String },

    #[error("request to backend '{backend}' timed out after {timeout_s} s")]
    Timeout { backend: String, timeout_s: f64 },

    /// Endpoint rejected the request because the prompt exceeds its context.
    #[error("backend '{backend}' reported context overflow ({detail})")]
    ContextOverflow { backend: String, detail: String },

    /// Transient failures (429/5xx/connect) persisted beyond max_retries.
    #[error("backend '{backend}' still failing after {attempts} attempts: {last_error}")]
    TransientExhausted {
        backend: String,
        attempts: u32,
        last_error: String,
    },

    /// Scripted backend has no fixture entry for this request fingerprint.
    #[error("no fixture response for fingerprint {fingerprint} (backend '{backend}')")]
    MissingFixture {
        backend: String,
        fingerprint: String,
    },

    /// Fixture file is malformed (duplicate keys, bad JSON).
    #[error("{path}:{line}: bad fixture: {message}")]
    FixtureParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Endpoint returned something the chat-completion adapter cannot read.
    #[error("backend '{backend}' protocol error: {message}")]
    Protocol { backend: String, message: String },

    #[error("unknown backend '{0}'")]
    Unknown(String),

    /// A text-only backend was handed media, or a multimodal call lacks it.
    #[error("backend '{backend}' is {kind}; {message}")]
    KindMismatch {
        backend: String,
        kind: &'static str,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised while answering a query over a memory.
#[derive(Debug, thiserror::Error)]
pub enum AnswerError {
    /// Even the maximally thinned view does not fit the reasoner context.
    #[error("prompt does not fit reasoner context even at maximal stride ({prompt_chars} chars > {max_context_chars})")]
    ContextOverflow {
        prompt_chars: usize,
        max_context_chars: usize,
    },

    #[error("task targets '{task}' but memory is for '{memory}'")]
    SourceMismatch { memory: String, task: String },

    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Errors raised by the ingestion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("memory file covers {persisted_ms} ms of '{persisted}', cursor is for '{cursor}'")]
    SourceMismatch {
        persisted: String,
        cursor: String,
        persisted_ms: u64,
    },

    #[error(transparent)]
    Memory(#[from] MemoryError),

    #[error(transparent)]
    Segment(#[from] SegmentError),

    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Errors raised by the evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    /// Dataset record failed validation; index is 0-based into the file.
    #[error("dataset record {index} ({field}): {message}")]
    Schema {
        index: usize,
        field: &'static str,
        message: String,
    },

    #[error("no memory available for source(s): {}", missing.join(", "))]
    MissingMemory { missing: Vec<String> },

    #[error("refusing to render a report over zero results")]
    EmptyResults,

    #[error(transparent)]
    Memory(#[from] MemoryError),

    #[error(transparent)]
    Answer(#[from] AnswerError),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised while loading or validating run configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error(transparent)]
    Prompt(#[from] PromptError),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
