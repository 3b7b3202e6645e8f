//! Domain types shared across the pipeline.
//!
//! Time spans are stored as integer milliseconds so that the contiguity
//! invariant of the memory (`entry[k].end == entry[k+1].start`) is exact,
//! never subject to float drift. Seconds appear only at the edges: in
//! config files, CLI flags, and the persisted JSONL records.

use serde::{Deserialize, Serialize};

use crate::error::MemoryError;

/// Converts whole-ish seconds (config/CLI input) to milliseconds.
pub fn ms_from_secs(seconds: f64) -> u64 {
    (seconds * 1000.0).round() as u64
}

/// Converts milliseconds to seconds for display and persistence.
pub fn secs_from_ms(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

/// Renders a millisecond offset as `mm:ss` (minutes may exceed two digits).
pub fn format_mmss(ms: u64) -> String {
    let total_s = ms / 1000;
    format!("{:02}:{:02}", total_s / 60, total_s % 60)
}

/// Renders milliseconds as decimal seconds with no trailing zeros ("30", "12.5").
pub fn format_secs_compact(ms: u64) -> String {
    if ms % 1000 == 0 {
        format!("{}", ms / 1000)
    } else {
        let mut s = format!("{:.3}", ms as f64 / 1000.0);
        while s.ends_with('0') {
            s.pop();
        }
        s
    }
}

/// An opaque media reference plus a half-open time span; the unit the
/// descriptor consumes. The engine never decodes pixels from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRef {
    /// Opaque video identifier.
    pub source_id: String,
    /// 0-based ordinal of this clip within the stream.
    pub index: u64,
    /// Span start in milliseconds (inclusive).
    pub start_ms: u64,
    /// Span end in milliseconds (exclusive).
    pub end_ms: u64,
    /// Opaque string resolvable by the media adapter (file path or pre-cut clip).
    pub media_locator: String,
}

impl ClipRef {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

/// One clip's textual description with its span and provenance metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionEntry {
    /// 0-based clip ordinal this entry describes.
    pub clip_index: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    /// UTF-8 description text; non-empty after whitespace trimming.
    pub text: String,
    /// Identity of the backend that produced the text.
    pub descriptor_id: String,
    /// Stable hash of the exact prompt used to produce the text.
    pub prompt_fingerprint: String,
}

impl DescriptionEntry {
    /// Validates the per-entry invariants (span sanity, non-empty text).
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.start_ms >= self.end_ms {
            return Err(MemoryError::InvalidSpan {
                clip_index: self.clip_index,
                start_ms: self.start_ms,
                end_ms: self.end_ms,
            });
        }
        if self.text.trim().is_empty() {
            return Err(MemoryError::EmptyText {
                clip_index: self.clip_index,
            });
        }
        Ok(())
    }

    /// Bytes this entry contributes to the footprint metric: UTF-8 text
    /// bytes plus the one separator byte charged per entry.
    pub fn footprint_bytes(&self) -> u64 {
        self.text.len() as u64 + 1
    }
}

/// A multiple-choice answer label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    C,
    D,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::A, Label::B, Label::C, Label::D];

    pub fn as_char(self) -> char {
        match self {
            Label::A => 'A',
            Label::B => 'B',
            Label::C => 'C',
            Label::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Label> {
        match c.to_ascii_uppercase() {
            'A' => Some(Label::A),
            'B' => Some(Label::B),
            'C' => Some(Label::C),
            'D' => Some(Label::D),
            _ => None,
        }
    }

    /// 0-based position of this label in the option list.
    pub fn option_index(self) -> usize {
        match self {
            Label::A => 0,
            Label::B => 1,
            Label::C => 2,
            Label::D => 3,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Label::from_char(c).ok_or_else(|| format!("not a label: {s:?}")),
            _ => Err(format!("not a label: {s:?}")),
        }
    }
}

/// A question, exactly four lettered options in display order A-D, and an
/// optional ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTask {
    pub question: String,
    /// Option texts in display order A, B, C, D. Never shuffled by the engine.
    pub options: [String; 4],
    pub gold_label: Option<Label>,
    /// Video identifier the question targets.
    pub source_id: String,
}

impl QueryTask {
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("question is empty".into());
        }
        for (i, opt) in self.options.iter().enumerate() {
            if opt.trim().is_empty() {
                return Err(format!("option {} is empty", Label::ALL[i]));
            }
        }
        Ok(())
    }
}

/// The full ablation point: clip length, the two prompt toggles, backend
/// identities, and the query-time stride.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Fixed clip duration in milliseconds.
    pub clip_length_ms: u64,
    /// Feed the previous clip's description into the next descriptor prompt.
    pub include_context: bool,
    /// Include the question-template block in the descriptor prompt.
    pub include_templates: bool,
    /// Name of the multimodal descriptor backend.
    pub descriptor_backend: String,
    /// Name of the text-only reasoner backend.
    pub reasoner_backend: String,
    /// Query-time thinning stride in milliseconds. Must be a multiple of
    /// `clip_length_ms` and at least as large.
    pub query_stride_ms: u64,
    /// Prefix each memory entry with its `[mm:ss-mm:ss]` span in the
    /// reasoner prompt.
    pub timestamps_in_prompt: bool,
}

/// Default thinning window: keep one caption every 30 s when clips are
/// shorter than that.
pub const DEFAULT_STRIDE_MS: u64 = 30_000;

/// The default stride for a clip length: the smallest multiple of
/// `clip_length_ms` that is >= 30 s. Equals 30 s for the usual 5/15/30 s
/// clips and keeps the stride aligned to clip boundaries for odd lengths.
pub fn default_stride_ms(clip_length_ms: u64) -> u64 {
    if clip_length_ms >= DEFAULT_STRIDE_MS {
        clip_length_ms
    } else {
        clip_length_ms * DEFAULT_STRIDE_MS.div_ceil(clip_length_ms)
    }
}

impl RunConfig {
    /// A config with the given backends and clip length, stride defaulted.
    pub fn new(
        clip_length_ms: u64,
        descriptor_backend: impl Into<String>,
        reasoner_backend: impl Into<String>,
    ) -> Self {
        RunConfig {
            clip_length_ms,
            include_context: false,
            include_templates: true,
            descriptor_backend: descriptor_backend.into(),
            reasoner_backend: reasoner_backend.into(),
            query_stride_ms: default_stride_ms(clip_length_ms),
            timestamps_in_prompt: true,
        }
    }

    /// Checks the stride/clip-length invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.clip_length_ms == 0 {
            return Err("clip_length must be positive".into());
        }
        if self.query_stride_ms < self.clip_length_ms {
            return Err(format!(
                "query_stride ({} ms) must be >= clip_length ({} ms)",
                self.query_stride_ms, self.clip_length_ms
            ));
        }
        if self.query_stride_ms % self.clip_length_ms != 0 {
            return Err(format!(
                "query_stride ({} ms) must be an integer multiple of clip_length ({} ms)",
                self.query_stride_ms, self.clip_length_ms
            ));
        }
        if self.descriptor_backend.trim().is_empty() || self.reasoner_backend.trim().is_empty() {
            return Err("backend names must be non-empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_defaults_follow_thinning_rule() {
        assert_eq!(default_stride_ms(5_000), 30_000);
        assert_eq!(default_stride_ms(15_000), 30_000);
        assert_eq!(default_stride_ms(30_000), 30_000);
        assert_eq!(default_stride_ms(45_000), 45_000);
        // Odd lengths still land on a clip boundary.
        assert_eq!(default_stride_ms(7_000), 35_000);
    }

    #[test]
    fn run_config_invariants() {
        let mut cfg = RunConfig::new(15_000, "desc", "reason");
        assert!(cfg.validate().is_ok());
        cfg.query_stride_ms = 10_000; // smaller than clip length
        assert!(cfg.validate().is_err());
        cfg.query_stride_ms = 40_000; // not a multiple
        assert!(cfg.validate().is_err());
        cfg.query_stride_ms = 45_000;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn mmss_formatting() {
        assert_eq!(format_mmss(0), "00:00");
        assert_eq!(format_mmss(30_000), "00:30");
        assert_eq!(format_mmss(492_000), "08:12");
        assert_eq!(format_mmss(7_200_000), "120:00");
    }

    #[test]
    fn compact_seconds_formatting() {
        assert_eq!(format_secs_compact(30_000), "30");
        assert_eq!(format_secs_compact(12_500), "12.5");
        assert_eq!(format_secs_compact(492_000), "492");
        assert_eq!(format_secs_compact(1), "0.001");
    }

    #[test]
    fn label_round_trip() {
        for l in Label::ALL {
            assert_eq!(Label::from_char(l.as_char()), Some(l));
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert!(Label::from_char('E').is_none());
    }
}
