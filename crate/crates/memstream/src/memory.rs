//! The append-only textual memory and its persistence.
//!
//! The memory is the system's only persistent state: an ordered, contiguous
//! sequence of clip descriptions. On disk it is a JSON-Lines file, one
//! object per entry, flushed after every append so a crash always leaves a
//! valid prefix. A single writer holds an advisory `flock` on the file;
//! any number of readers may load consistent prefixes concurrently.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::MemoryError;
use crate::types::{secs_from_ms, DescriptionEntry};

/// SI kilobyte: the footprint metric divides bytes by 1000, not 1024.
pub const KILOBYTE: f64 = 1000.0;

/// Ordered, contiguous, append-only sequence of clip descriptions for one
/// video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextualMemory {
    source_id: String,
    entries: Vec<DescriptionEntry>,
}

impl TextualMemory {
    pub fn new(source_id: impl Into<String>) -> Self {
        TextualMemory {
            source_id: source_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn entries(&self) -> &[DescriptionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// End of the covered timeline in milliseconds (0 when empty).
    pub fn duration_ms(&self) -> u64 {
        self.entries.last().map(|e| e.end_ms).unwrap_or(0)
    }

    /// Text of the last entry, used as descriptor context for the next clip.
    pub fn last_text(&self) -> Option<&str> {
        self.entries.last().map(|e| e.text.as_str())
    }

    /// Appends the next entry, enforcing the no-gap / contiguity / non-empty
    /// invariants. Entries already written are never touched.
    pub fn append(&mut self, entry: DescriptionEntry) -> Result<(), MemoryError> {
        entry.validate()?;
        let expected_index = self.entries.len() as u64;
        if entry.clip_index != expected_index {
            return Err(MemoryError::Gap {
                expected: expected_index,
                got: entry.clip_index,
            });
        }
        let expected_start = self.duration_ms();
        if entry.start_ms != expected_start {
            return Err(MemoryError::Overlap {
                expected_start_ms: expected_start,
                got_start_ms: entry.start_ms,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Footprint bytes: UTF-8 description text plus one separator byte per
    /// entry. Timestamps and metadata are deliberately excluded; the stored
    /// memory is plain text.
    pub fn footprint_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.footprint_bytes()).sum()
    }

    /// Memory footprint in SI kilobytes per minute of video.
    pub fn footprint_kb_per_min(&self, video_duration_ms: u64) -> Result<f64, MemoryError> {
        if video_duration_ms == 0 {
            return Err(MemoryError::ZeroDuration);
        }
        if self.entries.is_empty() {
            return Ok(0.0);
        }
        let kb = self.footprint_bytes() as f64 / KILOBYTE;
        let minutes = video_duration_ms as f64 / 60_000.0;
        Ok(kb / minutes)
    }

    /// Query-time thinning: keeps the first caption of each stride bucket,
    /// i.e. exactly the entries whose start is an integer multiple of
    /// `stride_ms`, in order. A stride equal to the clip length keeps all
    /// entries.
    pub fn select_for_query(&self, stride_ms: u64) -> Vec<&DescriptionEntry> {
        if stride_ms == 0 {
            return self.entries.iter().collect();
        }
        self.entries
            .iter()
            .filter(|e| e.start_ms % stride_ms == 0)
            .collect()
    }

    /// Stable content hash over all entries, for cache identity checks.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.source_id.as_bytes());
        for e in &self.entries {
            hasher.update(e.clip_index.to_le_bytes());
            hasher.update(e.start_ms.to_le_bytes());
            hasher.update(e.end_ms.to_le_bytes());
            hasher.update((e.text.len() as u64).to_le_bytes());
            hasher.update(e.text.as_bytes());
            hasher.update(e.descriptor_id.as_bytes());
            hasher.update(e.prompt_fingerprint.as_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Strict load: every line must parse and the chain invariants must hold.
    pub fn load(path: &Path, source_id: impl Into<String>) -> Result<Self, MemoryError> {
        let (records, _) = read_records(path, ReadMode::Strict)?;
        Self::from_records(path, source_id.into(), records)
    }

    /// Prefix load for concurrent readers: a torn trailing line (writer
    /// mid-append or crash) is ignored; corruption anywhere else errors.
    pub fn load_prefix(path: &Path, source_id: impl Into<String>) -> Result<Self, MemoryError> {
        let (records, _) = read_records(path, ReadMode::TolerateTornTail)?;
        Self::from_records(path, source_id.into(), records)
    }

    fn from_records(
        path: &Path,
        source_id: String,
        records: Vec<EntryRecord>,
    ) -> Result<Self, MemoryError> {
        let mut memory = TextualMemory::new(source_id);
        for (i, rec) in records.into_iter().enumerate() {
            memory.append(rec.into_entry()).map_err(|e| MemoryError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(memory)
    }

    /// Serializes all entries as JSONL into a writer (same format as the
    /// on-disk file).
    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<(), MemoryError> {
        for entry in &self.entries {
            let record = EntryRecord::from_entry(entry);
            serde_json::to_writer(&mut *out, &record)
                .map_err(|e| MemoryError::Io(std::io::Error::other(e)))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Persisted shape of one entry. Field names and order are the wire format.
#[derive(Debug, Serialize, Deserialize)]
struct EntryRecord {
    k: u64,
    start_s: f64,
    end_s: f64,
    text: String,
    descriptor: String,
    prompt_fp: String,
}

impl EntryRecord {
    fn from_entry(e: &DescriptionEntry) -> Self {
        EntryRecord {
            k: e.clip_index,
            start_s: secs_from_ms(e.start_ms),
            end_s: secs_from_ms(e.end_ms),
            text: e.text.clone(),
            descriptor: e.descriptor_id.clone(),
            prompt_fp: e.prompt_fingerprint.clone(),
        }
    }

    fn into_entry(self) -> DescriptionEntry {
        DescriptionEntry {
            clip_index: self.k,
            start_ms: (self.start_s * 1000.0).round() as u64,
            end_ms: (self.end_s * 1000.0).round() as u64,
            text: self.text,
            descriptor_id: self.descriptor,
            prompt_fingerprint: self.prompt_fp,
        }
    }
}

enum ReadMode {
    Strict,
    TolerateTornTail,
}

/// Reads records plus the byte length of the valid prefix (used by the
/// writer to truncate a torn tail on resume).
fn read_records(path: &Path, mode: ReadMode) -> Result<(Vec<EntryRecord>, u64), MemoryError> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut valid_len: u64 = 0;
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = line.ends_with('\n');
        match serde_json::from_str::<EntryRecord>(line.trim_end_matches('\n')) {
            Ok(rec) if complete => {
                records.push(rec);
                valid_len += n as u64;
            }
            // A final line without newline, or one that fails to parse, is a
            // torn tail: tolerated in prefix mode, an error in strict mode.
            Ok(_) | Err(_) => {
                let mut rest = String::new();
                reader.read_to_string(&mut rest)?;
                let is_tail = rest.is_empty();
                match mode {
                    ReadMode::TolerateTornTail if is_tail => break,
                    _ => {
                        return Err(MemoryError::Parse {
                            path: path.to_path_buf(),
                            line: line_no,
                            message: if complete && is_tail {
                                "malformed record".into()
                            } else if is_tail {
                                "torn trailing record".into()
                            } else {
                                "malformed record before end of file".into()
                            },
                        });
                    }
                }
            }
        }
    }
    Ok((records, valid_len))
}

#[cfg(unix)]
fn try_lock_exclusive(file: &File) -> std::io::Result<bool> {
    use std::os::unix::io::AsRawFd;
    let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
    if rc == 0 {
        Ok(true)
    } else {
        let err = std::io::Error::last_os_error();
        if err.raw_os_error() == Some(libc::EWOULDBLOCK) {
            Ok(false)
        } else {
            Err(err)
        }
    }
}

#[cfg(not(unix))]
fn try_lock_exclusive(_file: &File) -> std::io::Result<bool> {
    Ok(true)
}

/// The single writer for a memory file. Holds an advisory exclusive lock
/// for its lifetime (released automatically on drop or crash), appends one
/// JSONL record per entry, and flushes after every append.
#[derive(Debug)]
pub struct MemoryWriter {
    memory: TextualMemory,
    file: File,
    path: PathBuf,
}

impl MemoryWriter {
    /// Opens (or creates) the memory file for appending. An existing file is
    /// resumed: its valid prefix is loaded and a torn trailing record, if
    /// any, is truncated away.
    pub fn open(path: &Path, source_id: impl Into<String>) -> Result<Self, MemoryError> {
        let source_id = source_id.into();
        let existed = path.exists();
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)?;
        if !try_lock_exclusive(&file)? {
            return Err(MemoryError::Locked {
                path: path.to_path_buf(),
            });
        }
        let mut memory = TextualMemory::new(source_id.clone());
        if existed {
            let (records, valid_len) = read_records(path, ReadMode::TolerateTornTail)?;
            memory = TextualMemory::from_records(path, source_id, records)?;
            if file.metadata()?.len() > valid_len {
                file.set_len(valid_len)?;
                file.seek(SeekFrom::End(0))?;
            }
        }
        Ok(MemoryWriter {
            memory,
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn memory(&self) -> &TextualMemory {
        &self.memory
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates, persists, and commits one entry. The line is flushed to
    /// the OS before the in-memory state is updated, so readers never see
    /// an entry the file does not have.
    pub fn append(&mut self, entry: DescriptionEntry) -> Result<(), MemoryError> {
        // Run the full invariant check against the in-memory tail first.
        let mut probe = self.memory.clone();
        probe.append(entry.clone())?;
        let record = EntryRecord::from_entry(&entry);
        let mut line =
            serde_json::to_string(&record).map_err(|e| MemoryError::Io(std::io::Error::other(e)))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        self.memory = probe;
        Ok(())
    }

    pub fn into_memory(self) -> TextualMemory {
        self.memory
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn entry(k: u64, start_ms: u64, end_ms: u64, text: &str) -> DescriptionEntry {
        DescriptionEntry {
            clip_index: k,
            start_ms,
            end_ms,
            text: text.to_string(),
            descriptor_id: "test-desc".into(),
            prompt_fingerprint: "fp0".into(),
        }
    }

    #[test]
    fn append_base_case_and_chain() {
        let mut m = TextualMemory::new("v1");
        m.append(entry(0, 0, 30_000, "first")).unwrap();
        assert_eq!(m.len(), 1);
        m.append(entry(1, 30_000, 60_000, "second")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.duration_ms(), 60_000);
    }

    #[test]
    fn append_rejects_gap() {
        let mut m = TextualMemory::new("v1");
        m.append(entry(0, 0, 30_000, "first")).unwrap();
        let err = m.append(entry(2, 60_000, 90_000, "third")).unwrap_err();
        assert!(matches!(err, MemoryError::Gap { expected: 1, got: 2 }));
    }

    #[test]
    fn append_rejects_overlap_and_hole() {
        let mut m = TextualMemory::new("v1");
        m.append(entry(0, 0, 30_000, "first")).unwrap();
        let overlap = m.append(entry(1, 20_000, 50_000, "x")).unwrap_err();
        assert!(matches!(overlap, MemoryError::Overlap { .. }));
        let hole = m.append(entry(1, 40_000, 70_000, "x")).unwrap_err();
        assert!(matches!(hole, MemoryError::Overlap { .. }));
    }

    #[test]
    fn append_rejects_empty_text() {
        let mut m = TextualMemory::new("v1");
        let err = m.append(entry(0, 0, 30_000, "  \n\t ")).unwrap_err();
        assert!(matches!(err, MemoryError::EmptyText { clip_index: 0 }));
    }

    #[test]
    fn footprint_matches_reported_figures() {
        // 3,569 text bytes in one entry over 60 s -> 3.57 KB/min.
        let mut m = TextualMemory::new("v1");
        m.append(entry(0, 0, 60_000, &"a".repeat(3_569))).unwrap();
        assert_eq!(m.footprint_bytes(), 3_570);
        assert_eq!(m.footprint_kb_per_min(60_000).unwrap(), 3.57);

        // 5,048 text bytes across two entries over 60 s -> 5.05 KB/min.
        let mut m = TextualMemory::new("v2");
        m.append(entry(0, 0, 30_000, &"b".repeat(2_524))).unwrap();
        m.append(entry(1, 30_000, 60_000, &"c".repeat(2_524))).unwrap();
        assert_eq!(m.footprint_bytes(), 5_050);
        assert_eq!(m.footprint_kb_per_min(60_000).unwrap(), 5.05);
    }

    #[test]
    fn footprint_zero_cases() {
        let m = TextualMemory::new("v1");
        assert_eq!(m.footprint_kb_per_min(123_456).unwrap(), 0.0);
        assert!(matches!(
            m.footprint_kb_per_min(0),
            Err(MemoryError::ZeroDuration)
        ));
    }

    #[test]
    fn footprint_counts_utf8_bytes_not_chars() {
        let mut m = TextualMemory::new("v1");
        m.append(entry(0, 0, 60_000, "héllo")).unwrap(); // 6 bytes + 1 sep
        assert_eq!(m.footprint_bytes(), 7);
    }

    #[test]
    fn select_keeps_first_caption_of_each_bucket() {
        let mut m = TextualMemory::new("v1");
        for (k, start) in [0u64, 15_000, 30_000, 45_000, 60_000].iter().enumerate() {
            m.append(entry(k as u64, *start, start + 15_000, "t")).unwrap();
        }
        let view = m.select_for_query(30_000);
        let starts: Vec<u64> = view.iter().map(|e| e.start_ms).collect();
        assert_eq!(starts, vec![0, 30_000, 60_000]);
    }

    #[test]
    fn select_identity_when_stride_equals_clip_length() {
        let mut m = TextualMemory::new("v1");
        for k in 0..3u64 {
            m.append(entry(k, k * 30_000, (k + 1) * 30_000, "t")).unwrap();
        }
        assert_eq!(m.select_for_query(30_000).len(), 3);
    }

    #[test]
    fn select_five_second_clips_at_thirty_stride() {
        let mut m = TextualMemory::new("v1");
        for k in 0..12u64 {
            m.append(entry(k, k * 5_000, (k + 1) * 5_000, "t")).unwrap();
        }
        let starts: Vec<u64> = m.select_for_query(30_000).iter().map(|e| e.start_ms).collect();
        assert_eq!(starts, vec![0, 30_000]);
    }

    #[test]
    fn writer_persists_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        {
            let mut w = MemoryWriter::open(&path, "v1").unwrap();
            w.append(entry(0, 0, 30_000, "first")).unwrap();
            w.append(entry(1, 30_000, 60_000, "second")).unwrap();
        }
        let loaded = TextualMemory::load(&path, "v1").unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.entries()[1].text, "second");

        // Resume keeps existing entries and appends after them.
        let mut w = MemoryWriter::open(&path, "v1").unwrap();
        assert_eq!(w.memory().len(), 2);
        w.append(entry(2, 60_000, 90_000, "third")).unwrap();
        drop(w);
        assert_eq!(TextualMemory::load(&path, "v1").unwrap().len(), 3);
    }

    #[test]
    fn writer_truncates_torn_tail_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        {
            let mut w = MemoryWriter::open(&path, "v1").unwrap();
            w.append(entry(0, 0, 30_000, "first")).unwrap();
        }
        // Simulate a crash mid-append: garbage without a trailing newline.
        {
            let mut f = OpenOptions::new().append(true).open(&path).unwrap();
            f.write_all(b"{\"k\":1,\"start_s\":30").unwrap();
        }
        assert!(TextualMemory::load(&path, "v1").is_err());
        let prefix = TextualMemory::load_prefix(&path, "v1").unwrap();
        assert_eq!(prefix.len(), 1);

        let mut w = MemoryWriter::open(&path, "v1").unwrap();
        assert_eq!(w.memory().len(), 1);
        w.append(entry(1, 30_000, 60_000, "second")).unwrap();
        drop(w);
        let loaded = TextualMemory::load(&path, "v1").unwrap();
        assert_eq!(loaded.len(), 2);
    }

    #[test]
    fn strict_load_rejects_mid_file_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        std::fs::write(&path, "garbage\n{\"k\":0,\"start_s\":0.0,\"end_s\":30.0,\"text\":\"t\",\"descriptor\":\"d\",\"prompt_fp\":\"f\"}\n").unwrap();
        assert!(TextualMemory::load(&path, "v1").is_err());
        // Corruption before the end is never a tolerable torn tail.
        assert!(TextualMemory::load_prefix(&path, "v1").is_err());
    }

    #[test]
    fn writer_lock_excludes_second_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let _w = MemoryWriter::open(&path, "v1").unwrap();
        let second = MemoryWriter::open(&path, "v1");
        assert!(matches!(second, Err(MemoryError::Locked { .. })));
    }

    #[test]
    fn fractional_spans_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let mut w = MemoryWriter::open(&path, "v1").unwrap();
        w.append(entry(0, 0, 12_100, "partial second")).unwrap();
        w.append(entry(1, 12_100, 24_200, "another")).unwrap();
        let original = w.into_memory();
        let loaded = TextualMemory::load(&path, "v1").unwrap();
        assert_eq!(original, loaded);
    }
}
