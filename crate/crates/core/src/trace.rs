//! Basic-block-labeled memory traces: in-memory model, text format, parsing.
//!
//! The on-disk format is UTF-8 text, optionally gzip-compressed when the
//! path ends in `.gz`:
//!
//! ```text
//! ; comment
//! #bb <label> <serial|parallel> [shared]
//! @<label>
//! <hex-address>[ r|w]
//! ```
//!
//! Every basic block is declared by a `#bb` header before the body. Each
//! `@<label>` marker opens one dynamic instance (window) of that block; the
//! address lines that follow belong to it until the next marker or end of
//! file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a core in a mimicked multicore execution.
pub type CoreId = u32;

/// Basic blocks of a trace, keyed by label.
pub type BbMap = std::collections::BTreeMap<String, BasicBlockInfo>;

/// Whether a memory reference reads or writes, when the trace records it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
    Unspecified,
}

/// Interned handle for a basic-block label within one trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelId(u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One memory reference attributed to a basic block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub bb: LabelId,
    pub address: u64,
    pub kind: AccessKind,
}

/// A byte address divided by the cache line size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineAddress(pub u64);

/// Whether a basic block executes in a serial or parallel program region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Serial,
    Parallel,
}

/// Static description of one basic block plus its dynamic windows.
///
/// Windows index into the owning trace's record array; they are disjoint and
/// sorted by start position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlockInfo {
    pub label: String,
    pub region: Region,
    pub shared_section: bool,
    pub windows: Vec<Range<usize>>,
}

impl BasicBlockInfo {
    pub fn new(label: impl Into<String>, region: Region, shared_section: bool) -> Self {
        Self {
            label: label.into(),
            region,
            shared_section,
            windows: Vec::new(),
        }
    }

    /// Number of dynamic instances of this block.
    pub fn count(&self) -> usize {
        self.windows.len()
    }

    /// Total memory references across all instances.
    pub fn reference_count(&self) -> usize {
        self.windows.iter().map(|w| w.len()).sum()
    }
}

/// How a trace came to exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceOrigin {
    /// Parsed or generated as a single sequential stream.
    Sequential,
    /// Mimicked private stream for one core.
    PrivateMimic(CoreId),
    /// Interleaved shared stream over all cores.
    SharedMimic,
}

/// An ordered stream of labeled memory references.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryTrace {
    labels: Vec<String>,
    records: Vec<TraceRecord>,
    origin: TraceOrigin,
}

impl MemoryTrace {
    pub fn new(origin: TraceOrigin) -> Self {
        Self {
            labels: Vec::new(),
            records: Vec::new(),
            origin,
        }
    }

    /// Starts an empty trace that shares another trace's label table, so
    /// `LabelId`s remain valid across derived traces.
    pub fn with_labels(origin: TraceOrigin, labels: Vec<String>) -> Self {
        Self {
            labels,
            records: Vec::new(),
            origin,
        }
    }

    /// Returns the id for `label`, interning it on first use.
    pub fn intern(&mut self, label: &str) -> LabelId {
        if let Some(id) = self.lookup(label) {
            return id;
        }
        let id = LabelId(self.labels.len() as u32);
        self.labels.push(label.to_string());
        id
    }

    pub fn lookup(&self, label: &str) -> Option<LabelId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| LabelId(i as u32))
    }

    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(record.bb.index() < self.labels.len());
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn label(&self, id: LabelId) -> &str {
        &self.labels[id.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn origin(&self) -> TraceOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_address(&self) -> Option<u64> {
        self.records.iter().map(|r| r.address).max()
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error reading trace: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: basic block `{label}` not declared by a #bb header")]
    Undeclared { line: usize, label: String },
    #[error("line {line}: duplicate basic block declaration `{label}`")]
    Duplicate { line: usize, label: String },
    #[error("line {line}: shared section `{label}` must be in a parallel region")]
    SharedSerial { line: usize, label: String },
    #[error("trace contains no memory references")]
    Empty,
    #[error("line size must be a power of two, got {0}")]
    InvalidLineSize(u64),
}

fn malformed(line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        msg: msg.into(),
    }
}

/// Parses the text trace format from any buffered reader.
///
/// Returns the record stream plus the basic-block map whose windows tile the
/// stream exactly.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<(MemoryTrace, BbMap), TraceError> {
    let mut trace = MemoryTrace::new(TraceOrigin::Sequential);
    let mut bbs = BbMap::new();
    let mut ids: HashMap<String, LabelId> = HashMap::new();
    let mut open: Option<(String, LabelId, usize)> = None;
    let mut in_body = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with(';') {
            continue;
        }
        if let Some(rest) = text.strip_prefix("#bb") {
            if !rest.starts_with(char::is_whitespace) {
                return Err(malformed(line_no, format!("unknown directive `{text}`")));
            }
            if in_body {
                return Err(malformed(
                    line_no,
                    "#bb header must appear before any body line",
                ));
            }
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            if tokens.len() < 2 || tokens.len() > 3 {
                return Err(malformed(
                    line_no,
                    "expected `#bb <label> <serial|parallel> [shared]`",
                ));
            }
            let label = tokens[0];
            let region = match tokens[1] {
                "serial" => Region::Serial,
                "parallel" => Region::Parallel,
                other => {
                    return Err(malformed(
                        line_no,
                        format!("expected `serial` or `parallel`, got `{other}`"),
                    ))
                }
            };
            let shared = match tokens.get(2) {
                None => false,
                Some(&"shared") => true,
                Some(other) => {
                    return Err(malformed(
                        line_no,
                        format!("expected `shared`, got `{other}`"),
                    ))
                }
            };
            if shared && region == Region::Serial {
                return Err(TraceError::SharedSerial {
                    line: line_no,
                    label: label.to_string(),
                });
            }
            if bbs.contains_key(label) {
                return Err(TraceError::Duplicate {
                    line: line_no,
                    label: label.to_string(),
                });
            }
            let id = trace.intern(label);
            ids.insert(label.to_string(), id);
            bbs.insert(
                label.to_string(),
                BasicBlockInfo::new(label, region, shared),
            );
        } else if let Some(label) = text.strip_prefix('@') {
            in_body = true;
            let label = label.trim();
            if label.is_empty() {
                return Err(malformed(line_no, "window marker is missing a label"));
            }
            let Some(&id) = ids.get(label) else {
                return Err(TraceError::Undeclared {
                    line: line_no,
                    label: label.to_string(),
                });
            };
            close_window(&mut bbs, &trace, &mut open);
            open = Some((label.to_string(), id, trace.len()));
        } else if text.starts_with('#') {
            return Err(malformed(line_no, format!("unknown directive `{text}`")));
        } else {
            in_body = true;
            let Some(&(_, id, _)) = open.as_ref() else {
                return Err(malformed(
                    line_no,
                    "memory reference before any @ window marker",
                ));
            };
            let tokens: Vec<&str> = text.split_whitespace().collect();
            if tokens.is_empty() || tokens.len() > 2 {
                return Err(malformed(line_no, "expected `<hex-address> [r|w]`"));
            }
            let hex = tokens[0]
                .strip_prefix("0x")
                .or_else(|| tokens[0].strip_prefix("0X"))
                .unwrap_or(tokens[0]);
            let address = u64::from_str_radix(hex, 16).map_err(|e| {
                malformed(line_no, format!("bad address `{}`: {e}", tokens[0]))
            })?;
            let kind = match tokens.get(1) {
                None => AccessKind::Unspecified,
                Some(&"r") => AccessKind::Read,
                Some(&"w") => AccessKind::Write,
                Some(other) => {
                    return Err(malformed(
                        line_no,
                        format!("expected access kind `r` or `w`, got `{other}`"),
                    ))
                }
            };
            trace.push(TraceRecord { bb: id, address, kind });
        }
    }
    close_window(&mut bbs, &trace, &mut open);
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok((trace, bbs))
}

fn close_window(bbs: &mut BbMap, trace: &MemoryTrace, open: &mut Option<(String, LabelId, usize)>) {
    if let Some((label, _, start)) = open.take() {
        bbs.get_mut(&label)
            .expect("open window belongs to a declared block")
            .windows
            .push(start..trace.len());
    }
}

/// Parses a trace held in a string.
pub fn parse_trace_str(text: &str) -> Result<(MemoryTrace, BbMap), TraceError> {
    parse_trace(text.as_bytes())
}

fn read_counters() -> &'static Mutex<HashMap<PathBuf, u64>> {
    static COUNTERS: OnceLock<Mutex<HashMap<PathBuf, u64>>> = OnceLock::new();
    COUNTERS.get_or_init(|| Mutex::new(HashMap::new()))
}

/// How many times `read_trace_file` has ingested `path` in this process.
pub fn file_read_count(path: &Path) -> u64 {
    read_counters()
        .lock()
        .unwrap()
        .get(path)
        .copied()
        .unwrap_or(0)
}

/// Reads and parses a trace file, transparently gunzipping `.gz` paths.
pub fn read_trace_file(path: &Path) -> Result<(MemoryTrace, BbMap), TraceError> {
    let file = File::open(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "gz") {
        parse_trace(BufReader::new(GzDecoder::new(file)))
    } else {
        parse_trace(BufReader::new(file))
    }?;
    *read_counters()
        .lock()
        .unwrap()
        .entry(path.to_path_buf())
        .or_insert(0) += 1;
    Ok(parsed)
}

/// Writes a trace in the text format: headers in declaration order, then
/// windows in stream order. Output bytes are deterministic.
pub fn write_trace<W: Write>(
    out: &mut W,
    trace: &MemoryTrace,
    bbs: &BbMap,
) -> io::Result<()> {
    for label in trace.labels() {
        let Some(bb) = bbs.get(label) else { continue };
        let region = match bb.region {
            Region::Serial => "serial",
            Region::Parallel => "parallel",
        };
        let shared = if bb.shared_section { " shared" } else { "" };
        writeln!(out, "#bb {label} {region}{shared}")?;
    }
    let mut windows: Vec<(usize, usize, &str)> = bbs
        .values()
        .flat_map(|bb| {
            bb.windows
                .iter()
                .map(move |w| (w.start, w.end, bb.label.as_str()))
        })
        .collect();
    windows.sort_unstable();
    for (start, end, label) in windows {
        writeln!(out, "@{label}")?;
        for record in &trace.records()[start..end] {
            match record.kind {
                AccessKind::Read => writeln!(out, "0x{:x} r", record.address)?,
                AccessKind::Write => writeln!(out, "0x{:x} w", record.address)?,
                AccessKind::Unspecified => writeln!(out, "0x{:x}", record.address)?,
            }
        }
    }
    Ok(())
}

/// Writes a trace file, gzip-compressing when the path ends in `.gz`.
pub fn write_trace_file(path: &Path, trace: &MemoryTrace, bbs: &BbMap) -> io::Result<()> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        write_trace(&mut enc, trace, bbs)?;
        enc.finish()?.flush()
    } else {
        let mut out = BufWriter::new(file);
        write_trace(&mut out, trace, bbs)?;
        out.flush()
    }
}

/// Renders a trace to a string in the text format.
pub fn trace_to_string(trace: &MemoryTrace, bbs: &BbMap) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace, bbs).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace text is ASCII")
}

/// Maps byte addresses to cache-line addresses.
pub fn to_line_addresses(
    trace: &MemoryTrace,
    line_size: u64,
) -> Result<Vec<LineAddress>, TraceError> {
    let shift = line_shift(line_size)?;
    Ok(trace
        .records()
        .iter()
        .map(|r| LineAddress(r.address >> shift))
        .collect())
}

/// Validates a line size and returns the shift that divides by it.
pub fn line_shift(line_size: u64) -> Result<u32, TraceError> {
    if line_size == 0 || !line_size.is_power_of_two() {
        return Err(TraceError::InvalidLineSize(line_size));
    }
    Ok(line_size.trailing_zeros())
}
