//! Multicore trace mimicry.
//!
//! Splits one sequential basic-block trace into per-core private traces and
//! merges those back into a single interleaved shared trace:
//!
//! * serial blocks run on core 0 only;
//! * a parallel block with one window is duplicated to every core, with each
//!   core's copy shifted by `core * offset_stride` bytes so cores touch
//!   disjoint data (shared sections keep their original addresses);
//! * a parallel block with several windows is distributed across cores in
//!   contiguous chunks assigned cyclically, mimicking a static schedule.
//!
//! Interleaving walks the core-0 trace in order, copies serial windows
//! through, and merges the per-core copies of each parallel instance
//! reference-by-reference, either round-robin or by uniform random draw
//! among the cores that still have references left.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::trace::{BbMap, CoreId, MemoryTrace, Region, TraceOrigin, TraceRecord};

/// How per-core references merge into the shared trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterleaveStrategy {
    RoundRobin,
    Uniform,
}

impl fmt::Display for InterleaveStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterleaveStrategy::RoundRobin => f.write_str("round-robin"),
            InterleaveStrategy::Uniform => f.write_str("uniform"),
        }
    }
}

impl FromStr for InterleaveStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round-robin" => Ok(InterleaveStrategy::RoundRobin),
            "uniform" => Ok(InterleaveStrategy::Uniform),
            other => Err(format!(
                "unknown strategy `{other}` (expected `round-robin` or `uniform`)"
            )),
        }
    }
}

/// Windows per scheduling chunk for multi-window parallel blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum ChunkSize {
    /// `ceil(windows / cores)`: one contiguous block per core.
    Auto,
    Fixed(usize),
}

impl ChunkSize {
    /// Concrete chunk size for a block with `windows` instances on `cores` cores.
    pub fn resolve(self, windows: usize, cores: usize) -> usize {
        match self {
            ChunkSize::Auto => windows.div_ceil(cores).max(1),
            ChunkSize::Fixed(n) => n,
        }
    }
}

impl Serialize for ChunkSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ChunkSize::Auto => serializer.serialize_str("auto"),
            ChunkSize::Fixed(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl fmt::Display for ChunkSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkSize::Auto => f.write_str("auto"),
            ChunkSize::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for ChunkSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(ChunkSize::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("chunk size must be at least 1".to_string()),
            Ok(n) => Ok(ChunkSize::Fixed(n)),
            Err(_) => Err(format!("bad chunk size `{s}` (expected `auto` or a count)")),
        }
    }
}

/// Parameters of a mimicked multicore execution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MimicConfig {
    pub num_cores: CoreId,
    pub chunk_size: ChunkSize,
    /// Per-core address shift for duplicated parallel blocks, in bytes.
    pub offset_stride: u64,
    pub strategy: InterleaveStrategy,
    pub rng_seed: u64,
}

impl Default for MimicConfig {
    fn default() -> Self {
        Self {
            num_cores: 1,
            chunk_size: ChunkSize::Auto,
            offset_stride: 1 << 40,
            strategy: InterleaveStrategy::RoundRobin,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum MimicError {
    #[error("number of cores must be at least 1")]
    ZeroCores,
    #[error("chunk size must be at least 1")]
    ZeroChunk,
    #[error(
        "offset stride {stride:#x} times {cores} cores overflows the 64-bit \
         address space above address {max_address:#x}"
    )]
    OffsetOverflow {
        stride: u64,
        cores: CoreId,
        max_address: u64,
    },
    #[error("basic-block windows cover {covered} of {total} trace records")]
    WindowCoverage { covered: usize, total: usize },
}

/// Per-core private traces produced by mimicry, with per-core window maps.
#[derive(Clone, Debug)]
pub struct PrivateTraceSet {
    traces: Vec<MemoryTrace>,
    bbs: Vec<BbMap>,
}

impl PrivateTraceSet {
    pub fn num_cores(&self) -> usize {
        self.traces.len()
    }

    pub fn trace(&self, core: usize) -> &MemoryTrace {
        &self.traces[core]
    }

    pub fn bbs(&self, core: usize) -> &BbMap {
        &self.bbs[core]
    }

    pub fn traces(&self) -> &[MemoryTrace] {
        &self.traces
    }
}

/// The interleaved shared trace, with the issuing core of every record.
#[derive(Clone, Debug)]
pub struct SharedTrace {
    trace: MemoryTrace,
    bbs: BbMap,
    core_of: Vec<CoreId>,
}

impl SharedTrace {
    pub fn trace(&self) -> &MemoryTrace {
        &self.trace
    }

    pub fn bbs(&self) -> &BbMap {
        &self.bbs
    }

    /// Issuing core of each record, parallel to `trace().records()`.
    pub fn core_of(&self) -> &[CoreId] {
        &self.core_of
    }
}

/// All windows of a map in stream order, as `(range, label, instance index)`.
fn windows_in_order(bbs: &BbMap) -> Vec<(std::ops::Range<usize>, &str, usize)> {
    let mut windows: Vec<(std::ops::Range<usize>, &str, usize)> = bbs
        .values()
        .flat_map(|bb| {
            bb.windows
                .iter()
                .enumerate()
                .map(move |(j, w)| (w.clone(), bb.label.as_str(), j))
        })
        .collect();
    windows.sort_unstable_by_key(|(w, _, _)| w.start);
    windows
}

/// Splits a sequential trace into `num_cores` private traces.
pub fn generate_private_traces(
    trace: &MemoryTrace,
    bbs: &BbMap,
    cfg: &MimicConfig,
) -> Result<PrivateTraceSet, MimicError> {
    if cfg.num_cores == 0 {
        return Err(MimicError::ZeroCores);
    }
    if cfg.chunk_size == ChunkSize::Fixed(0) {
        return Err(MimicError::ZeroChunk);
    }
    let m = cfg.num_cores as usize;
    if let Some(max_address) = trace.max_address() {
        let top = cfg
            .offset_stride
            .checked_mul(cfg.num_cores as u64 - 1)
            .and_then(|shift| shift.checked_add(max_address));
        if top.is_none() {
            return Err(MimicError::OffsetOverflow {
                stride: cfg.offset_stride,
                cores: cfg.num_cores,
                max_address,
            });
        }
    }

    let windows = windows_in_order(bbs);
    let covered: usize = windows.iter().map(|(w, _, _)| w.len()).sum();
    if covered != trace.len() {
        return Err(MimicError::WindowCoverage {
            covered,
            total: trace.len(),
        });
    }

    let mut traces: Vec<MemoryTrace> = (0..m)
        .map(|c| {
            MemoryTrace::with_labels(
                TraceOrigin::PrivateMimic(c as CoreId),
                trace.labels().to_vec(),
            )
        })
        .collect();
    let mut core_bbs: Vec<BbMap> = (0..m)
        .map(|_| {
            bbs.iter()
                .map(|(label, bb)| (label.clone(), windowless_copy(bb)))
                .collect()
        })
        .collect();

    let copy_to = |traces: &mut Vec<MemoryTrace>,
                       core_bbs: &mut Vec<BbMap>,
                       core: usize,
                       label: &str,
                       range: &std::ops::Range<usize>,
                       offset: u64| {
        let dst = &mut traces[core];
        let start = dst.len();
        for record in &trace.records()[range.clone()] {
            dst.push(TraceRecord {
                address: record.address + offset,
                ..*record
            });
        }
        core_bbs[core]
            .get_mut(label)
            .expect("per-core maps mirror the input map")
            .windows
            .push(start..start + range.len());
    };

    for (range, label, j) in &windows {
        let bb = &bbs[*label];
        match bb.region {
            Region::Serial => copy_to(&mut traces, &mut core_bbs, 0, label, range, 0),
            Region::Parallel if bb.count() == 1 => {
                for core in 0..m {
                    let offset = if core > 0 && !bb.shared_section {
                        cfg.offset_stride * core as u64
                    } else {
                        0
                    };
                    copy_to(&mut traces, &mut core_bbs, core, label, range, offset);
                }
            }
            Region::Parallel => {
                // Distributed windows keep their recorded addresses: each
                // window is work one core really performed, and lines that
                // recur across windows are genuinely shared between cores.
                let chunk = cfg.chunk_size.resolve(bb.count(), m);
                let core = (j / chunk) % m;
                copy_to(&mut traces, &mut core_bbs, core, label, range, 0);
            }
        }
    }

    Ok(PrivateTraceSet {
        traces,
        bbs: core_bbs,
    })
}

/// Same block metadata with an empty window list.
fn windowless_copy(bb: &crate::trace::BasicBlockInfo) -> crate::trace::BasicBlockInfo {
    crate::trace::BasicBlockInfo::new(&bb.label, bb.region, bb.shared_section)
}

/// Merges a private trace set back into one interleaved shared trace.
///
/// Parallel instances are paired across cores by per-core instance index; a
/// core whose count exceeds core 0's has the extras dropped with a warning.
/// The random stream is consumed in shared-trace emission order, so a given
/// `(set, config)` pair always produces the same interleaving.
pub fn interleave_traces(pset: &PrivateTraceSet, cfg: &MimicConfig) -> SharedTrace {
    let m = pset.num_cores();
    let core0 = pset.trace(0);
    let mut out = MemoryTrace::with_labels(TraceOrigin::SharedMimic, core0.labels().to_vec());
    let mut out_bbs: BbMap = pset
        .bbs(0)
        .iter()
        .map(|(label, bb)| (label.clone(), windowless_copy(bb)))
        .collect();
    let mut core_of: Vec<CoreId> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    for (label, bb0) in pset.bbs(0) {
        for core in 1..m {
            let extra = pset.bbs(core)[label].count().saturating_sub(bb0.count());
            if extra > 0 {
                log::warn!(
                    "dropping {extra} extra instance(s) of `{label}` on core {core} \
                     not present on core 0"
                );
            }
        }
    }

    for (range, label, j) in windows_in_order(pset.bbs(0)) {
        let start = out.len();
        match pset.bbs(0)[label].region {
            Region::Serial => {
                for record in &core0.records()[range] {
                    out.push(*record);
                    core_of.push(0);
                }
            }
            Region::Parallel => {
                let seqs: Vec<(CoreId, &[TraceRecord])> = (0..m)
                    .filter_map(|core| {
                        pset.bbs(core)[label]
                            .windows
                            .get(j)
                            .map(|w| (core as CoreId, &pset.trace(core).records()[w.clone()]))
                    })
                    .collect();
                match cfg.strategy {
                    InterleaveStrategy::RoundRobin => {
                        merge_round_robin(&seqs, &mut out, &mut core_of)
                    }
                    InterleaveStrategy::Uniform => {
                        merge_uniform(&seqs, &mut rng, &mut out, &mut core_of)
                    }
                }
            }
        }
        out_bbs
            .get_mut(label)
            .expect("shared map mirrors core 0's map")
            .windows
            .push(start..out.len());
    }

    SharedTrace {
        trace: out,
        bbs: out_bbs,
        core_of,
    }
}

fn merge_round_robin(
    seqs: &[(CoreId, &[TraceRecord])],
    out: &mut MemoryTrace,
    core_of: &mut Vec<CoreId>,
) {
    let total: usize = seqs.iter().map(|(_, records)| records.len()).sum();
    let mut cursors = vec![0usize; seqs.len()];
    let mut taken = 0;
    let mut turn = 0;
    while taken < total {
        let (core, records) = seqs[turn];
        if cursors[turn] < records.len() {
            out.push(records[cursors[turn]]);
            core_of.push(core);
            cursors[turn] += 1;
            taken += 1;
        }
        turn = (turn + 1) % seqs.len();
    }
}

fn merge_uniform(
    seqs: &[(CoreId, &[TraceRecord])],
    rng: &mut ChaCha8Rng,
    out: &mut MemoryTrace,
    core_of: &mut Vec<CoreId>,
) {
    let mut cursors = vec![0usize; seqs.len()];
    let mut alive: Vec<usize> = (0..seqs.len())
        .filter(|&i| !seqs[i].1.is_empty())
        .collect();
    while !alive.is_empty() {
        let pick = rng.random_range(0..alive.len());
        let i = alive[pick];
        let (core, records) = seqs[i];
        out.push(records[cursors[i]]);
        core_of.push(core);
        cursors[i] += 1;
        if cursors[i] == records.len() {
            alive.swap_remove(pick);
        }
    }
}
