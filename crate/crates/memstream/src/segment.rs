//! Online partitioning of a (possibly still-growing) video timeline into
//! non-overlapping fixed-duration clips, and the media adapter that turns a
//! clip span into something a descriptor backend can consume.
//!
//! The segmenter never touches pixels. Cutting is delegated to an external
//! command (ffmpeg or similar) through a locator-in, locator-out boundary;
//! deployments with pre-cut clips use the pass-through adapter.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::SegmentError;
use crate::types::{format_secs_compact, ClipRef};

/// Remainders shorter than this are merged into the previous clip instead
/// of becoming an undescribable sub-second final clip.
pub const MIN_PARTIAL_MS: u64 = 1_000;

/// Tracks how much of one stream has been segmented. Full clips are emitted
/// as soon as their end time is available; the final (possibly partial) clip
/// is emitted when the total duration is declared via [`StreamCursor::finish`].
#[derive(Debug, Clone)]
pub struct StreamCursor {
    source_id: String,
    media_locator: String,
    clip_length_ms: u64,
    emitted_until_ms: u64,
    next_index: u64,
    duration_known_ms: Option<u64>,
}

impl StreamCursor {
    pub fn new(
        source_id: impl Into<String>,
        media_locator: impl Into<String>,
        clip_length_ms: u64,
    ) -> Result<Self, SegmentError> {
        if clip_length_ms == 0 {
            return Err(SegmentError::ZeroClipLength);
        }
        Ok(StreamCursor {
            source_id: source_id.into(),
            media_locator: media_locator.into(),
            clip_length_ms,
            emitted_until_ms: 0,
            next_index: 0,
            duration_known_ms: None,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn media_locator(&self) -> &str {
        &self.media_locator
    }

    pub fn clip_length_ms(&self) -> u64 {
        self.clip_length_ms
    }

    /// Seconds of timeline already covered by emitted clips.
    pub fn emitted_until_ms(&self) -> u64 {
        self.emitted_until_ms
    }

    /// Total duration, once declared via [`StreamCursor::finish`].
    pub fn duration_known_ms(&self) -> Option<u64> {
        self.duration_known_ms
    }

    pub fn is_finished(&self) -> bool {
        self.duration_known_ms.is_some()
    }

    fn emit(&mut self, end_ms: u64) -> ClipRef {
        let clip = ClipRef {
            source_id: self.source_id.clone(),
            index: self.next_index,
            start_ms: self.emitted_until_ms,
            end_ms,
            media_locator: self.media_locator.clone(),
        };
        self.next_index += 1;
        self.emitted_until_ms = end_ms;
        clip
    }

    /// Reports that media up to `available_ms` exists; returns every clip
    /// whose end time is now covered. Already-emitted clips never change.
    pub fn observe(&mut self, available_ms: u64) -> Result<Vec<ClipRef>, SegmentError> {
        if let Some(total) = self.duration_known_ms {
            return Err(SegmentError::AlreadyFinalized { total_ms: total });
        }
        if available_ms < self.emitted_until_ms {
            return Err(SegmentError::NonMonotonicStream {
                emitted_ms: self.emitted_until_ms,
                reported_ms: available_ms,
            });
        }
        let mut clips = Vec::new();
        while self.emitted_until_ms + self.clip_length_ms <= available_ms {
            let end = self.emitted_until_ms + self.clip_length_ms;
            clips.push(self.emit(end));
        }
        Ok(clips)
    }

    /// Declares the stream's total duration and returns all remaining clips,
    /// including the final partial one. A remainder shorter than
    /// [`MIN_PARTIAL_MS`] is merged into the preceding clip when that clip
    /// has not been emitted yet; if it is already out, the remainder becomes
    /// a short final clip rather than mutating history.
    pub fn finish(&mut self, total_ms: u64) -> Result<Vec<ClipRef>, SegmentError> {
        if let Some(total) = self.duration_known_ms {
            return Err(SegmentError::AlreadyFinalized { total_ms: total });
        }
        if total_ms < self.emitted_until_ms {
            return Err(SegmentError::NonMonotonicStream {
                emitted_ms: self.emitted_until_ms,
                reported_ms: total_ms,
            });
        }
        let mut clips = Vec::new();
        let remainder = total_ms % self.clip_length_ms;
        let merge = remainder > 0 && remainder < MIN_PARTIAL_MS && total_ms > self.clip_length_ms;
        while self.emitted_until_ms + self.clip_length_ms <= total_ms {
            let mut end = self.emitted_until_ms + self.clip_length_ms;
            if merge && total_ms - end < self.clip_length_ms {
                end = total_ms; // absorb the sub-second remainder
            }
            clips.push(self.emit(end));
        }
        if self.emitted_until_ms < total_ms {
            clips.push(self.emit(total_ms));
        }
        self.duration_known_ms = Some(total_ms);
        Ok(clips)
    }
}

/// One-shot partition of a fully known duration: `observe` + `finish`.
pub fn segment_full(
    source_id: &str,
    media_locator: &str,
    total_ms: u64,
    clip_length_ms: u64,
) -> Result<Vec<ClipRef>, SegmentError> {
    let mut cursor = StreamCursor::new(source_id, media_locator, clip_length_ms)?;
    cursor.finish(total_ms)
}

/// Turns a clip span into a locator the descriptor backend can consume:
/// either a pass-through span reference (pre-cut deployments) or the output
/// of a configurable external cutting command.
#[derive(Debug, Clone)]
pub struct MediaAdapter {
    command_tokens: Option<Vec<String>>,
    output_dir: PathBuf,
}

impl MediaAdapter {
    /// No external tool: the locator is the source locator plus the span,
    /// e.g. `video.mp4#t=30-60`.
    pub fn passthrough() -> Self {
        MediaAdapter {
            command_tokens: None,
            output_dir: PathBuf::new(),
        }
    }

    /// Command template with `{input}` `{start}` `{end}` `{output}`
    /// placeholders, split on whitespace. `{start}`/`{end}` substitute as
    /// decimal seconds; `{output}` is a file under `output_dir`.
    pub fn with_command(template: &str, output_dir: impl Into<PathBuf>) -> Result<Self, SegmentError> {
        let tokens: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(SegmentError::BadCommandTemplate("empty template".into()));
        }
        if !template.contains("{input}") || !template.contains("{output}") {
            return Err(SegmentError::BadCommandTemplate(
                "template must mention {input} and {output}".into(),
            ));
        }
        Ok(MediaAdapter {
            command_tokens: Some(tokens),
            output_dir: output_dir.into(),
        })
    }

    /// Resolves a clip to a locator for exactly its `[start, end)` span.
    pub fn materialize(&self, clip: &ClipRef) -> Result<String, SegmentError> {
        let start = format_secs_compact(clip.start_ms);
        let end = format_secs_compact(clip.end_ms);
        let Some(tokens) = &self.command_tokens else {
            return Ok(format!("{}#t={}-{}", clip.media_locator, start, end));
        };

        std::fs::create_dir_all(&self.output_dir)?;
        let ext = Path::new(&clip.media_locator)
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("mp4");
        let safe_source: String = clip
            .source_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let output = self
            .output_dir
            .join(format!("{}-{:05}.{}", safe_source, clip.index, ext));
        let output_str = output.to_string_lossy().into_owned();

        let expanded: Vec<String> = tokens
            .iter()
            .map(|t| {
                t.replace("{input}", &clip.media_locator)
                    .replace("{start}", &start)
                    .replace("{end}", &end)
                    .replace("{output}", &output_str)
            })
            .collect();
        let result = Command::new(&expanded[0]).args(&expanded[1..]).output()?;
        if !result.status.success() {
            return Err(SegmentError::MediaTool {
                status: result.status.code().unwrap_or(-1),
                stderr: String::from_utf8_lossy(&result.stderr).trim().to_string(),
            });
        }
        Ok(output_str)
    }
}
