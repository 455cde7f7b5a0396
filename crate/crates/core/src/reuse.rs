//! Reuse-distance analysis.
//!
//! The reuse distance of a reference is the number of distinct cache lines
//! touched since the previous reference to the same line, infinite on first
//! touch. [`exact_reuse_distances`] computes it for a whole stream in
//! O(n log n) with a Fenwick tree over last-access positions. Profiles over
//! those distances can be built per basic block (optionally from a sampled
//! subset of its windows) and mixed into a program-level profile weighted by
//! block execution probabilities.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Real;
use crate::trace::{BasicBlockInfo, BbMap, LineAddress, Region};

/// Distance to the previous access of the same line, or infinite on first touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReuseDistance {
    Finite(u64),
    Infinite,
}

impl ReuseDistance {
    pub fn is_infinite(self) -> bool {
        matches!(self, ReuseDistance::Infinite)
    }

    pub fn as_finite(self) -> Option<u64> {
        match self {
            ReuseDistance::Finite(d) => Some(d),
            ReuseDistance::Infinite => None,
        }
    }
}

impl fmt::Display for ReuseDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReuseDistance::Finite(d) => write!(f, "{d}"),
            ReuseDistance::Infinite => f.write_str("inf"),
        }
    }
}

/// Fenwick tree over 0/1 marks with prefix-sum queries.
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, index: usize, delta: i32) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i].wrapping_add(delta as u32);
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of marks at positions `0..=index`.
    fn prefix(&self, index: usize) -> u32 {
        let mut i = index + 1;
        let mut sum = 0u32;
        while i > 0 {
            sum = sum.wrapping_add(self.tree[i]);
            i -= i & i.wrapping_neg();
        }
        sum
    }
}

/// Exact reuse distance of every reference in the stream.
///
/// Marks each line's most recent position in a Fenwick tree; the number of
/// marks strictly between two accesses to a line is exactly the number of
/// distinct lines touched in between.
pub fn exact_reuse_distances(lines: &[LineAddress]) -> Vec<ReuseDistance> {
    let mut marks = Fenwick::new(lines.len());
    let mut last: HashMap<LineAddress, usize> = HashMap::new();
    let mut out = Vec::with_capacity(lines.len());
    for (t, &line) in lines.iter().enumerate() {
        match last.insert(line, t) {
            Some(prev) => {
                let between = marks.prefix(t - 1).wrapping_sub(marks.prefix(prev));
                marks.add(prev, -1);
                out.push(ReuseDistance::Finite(between as u64));
            }
            None => out.push(ReuseDistance::Infinite),
        }
        marks.add(t, 1);
    }
    out
}

/// A normalized distribution over reuse distances, with a separate bucket for
/// first touches.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReuseProfile<F> {
    buckets: BTreeMap<u64, F>,
    p_infinite: F,
}

impl<F: Real> Default for ReuseProfile<F> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<F: Real> ReuseProfile<F> {
    /// The distribution with no mass at all, used for blocks that never run.
    pub fn empty() -> Self {
        Self {
            buckets: BTreeMap::new(),
            p_infinite: F::zero(),
        }
    }

    /// Normalized histogram of a distance slice; empty input gives [`Self::empty`].
    pub fn from_distances(distances: &[ReuseDistance]) -> Self {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        let mut infinite = 0u64;
        for d in distances {
            match d {
                ReuseDistance::Finite(d) => *counts.entry(*d).or_insert(0) += 1,
                ReuseDistance::Infinite => infinite += 1,
            }
        }
        Self::from_counts(&counts, infinite)
    }

    /// Normalizes raw bucket counts.
    pub fn from_counts(counts: &BTreeMap<u64, u64>, infinite: u64) -> Self {
        let total: u64 = counts.values().sum::<u64>() + infinite;
        if total == 0 {
            return Self::empty();
        }
        let total = F::from_count(total);
        Self {
            buckets: counts
                .iter()
                .map(|(&d, &n)| (d, F::from_count(n) / total))
                .collect(),
            p_infinite: F::from_count(infinite) / total,
        }
    }

    /// True when the profile carries no probability mass.
    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty() && self.p_infinite.is_zero()
    }

    /// Finite buckets in increasing distance order.
    pub fn buckets(&self) -> impl Iterator<Item = (u64, F)> + '_ {
        self.buckets.iter().map(|(&d, &p)| (d, p))
    }

    pub fn p_infinite(&self) -> F {
        self.p_infinite
    }

    pub fn probability(&self, distance: u64) -> F {
        self.buckets.get(&distance).copied().unwrap_or_else(F::zero)
    }

    /// Total mass, which is 1 for any non-empty profile up to rounding.
    pub fn total(&self) -> F {
        self.buckets.values().fold(self.p_infinite, |a, &b| a + b)
    }

    /// Largest absolute difference in mass over all buckets of two profiles.
    pub fn max_bucket_gap(&self, other: &Self) -> F {
        let mut gap = (self.p_infinite - other.p_infinite).abs();
        for (&d, &p) in &self.buckets {
            let q = other.probability(d);
            gap = gap.max((p - q).abs());
        }
        for (&d, &q) in &other.buckets {
            if !self.buckets.contains_key(&d) {
                gap = gap.max(q.abs());
            }
        }
        gap
    }

    /// Total-variation distance: half the summed absolute bucket differences.
    pub fn total_variation(&self, other: &Self) -> F {
        let mut sum = (self.p_infinite - other.p_infinite).abs();
        for (&d, &p) in &self.buckets {
            sum += (p - other.probability(d)).abs();
        }
        for (&d, &q) in &other.buckets {
            if !self.buckets.contains_key(&d) {
                sum += q.abs();
            }
        }
        sum / F::from_count(2)
    }

    /// Writes `distance,probability` rows, finite buckets ascending, then the
    /// `inf` row. Output bytes are deterministic.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "distance,probability")?;
        for (&d, &p) in &self.buckets {
            writeln!(out, "{d},{p}")?;
        }
        writeln!(out, "inf,{}", self.p_infinite)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("profile text is ASCII")
    }

    /// Parses the CSV format written by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, ReuseError> {
        let mut buckets = BTreeMap::new();
        let mut p_infinite = F::zero();
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| ReuseError::Csv {
                line: line_no,
                msg: e.to_string(),
            })?;
            let text = line.trim();
            if text.is_empty() || (line_no == 1 && text == "distance,probability") {
                continue;
            }
            let (d, p) = text.split_once(',').ok_or_else(|| ReuseError::Csv {
                line: line_no,
                msg: "expected `distance,probability`".to_string(),
            })?;
            let p: f64 = p.trim().parse().map_err(|e| ReuseError::Csv {
                line: line_no,
                msg: format!("bad probability: {e}"),
            })?;
            let p = F::from_f64_lossy(p);
            if d.trim() == "inf" {
                p_infinite = p;
            } else {
                let d: u64 = d.trim().parse().map_err(|e| ReuseError::Csv {
                    line: line_no,
                    msg: format!("bad distance: {e}"),
                })?;
                buckets.insert(d, p);
            }
        }
        Ok(Self { buckets, p_infinite })
    }

    pub fn from_csv_str(text: &str) -> Result<Self, ReuseError> {
        Self::read_csv(text.as_bytes())
    }
}

#[derive(Debug, Error)]
pub enum ReuseError {
    #[error("no basic block has a nonzero instance count")]
    AllZeroCounts,
    #[error("number of cores must be at least 1")]
    ZeroCores,
    #[error("label `{0}` has a weight but no basic-block entry")]
    UnknownLabel(String),
    #[error("every weighted basic block has an empty reuse profile")]
    EmptyMixture,
    #[error("sampling fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("profile csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// Execution probability of each block: its window count over the total.
pub fn bb_apriori_probabilities<F: Real>(bbs: &BbMap) -> Result<BTreeMap<String, F>, ReuseError> {
    let total: u64 = bbs.values().map(|bb| bb.count() as u64).sum();
    if total == 0 {
        return Err(ReuseError::AllZeroCounts);
    }
    let total = F::from_count(total);
    Ok(bbs
        .iter()
        .map(|(label, bb)| (label.clone(), F::from_count(bb.count() as u64) / total))
        .collect())
}

/// Per-core block execution probabilities derived from the sequential ones.
#[derive(Clone, Debug)]
pub struct BbProbabilities<F> {
    /// Sequential-trace probabilities, used for the shared (interleaved) trace.
    pub apriori: BTreeMap<String, F>,
    /// One map per core. Core 0 sees serial blocks plus a `1/m` share of each
    /// parallel block; other cores see only parallel blocks, renormalized.
    pub per_core: Vec<BTreeMap<String, F>>,
}

/// Splits sequential block probabilities across `num_cores` mimicked cores.
pub fn bb_core_probabilities<F: Real>(
    apriori: &BTreeMap<String, F>,
    bbs: &BbMap,
    num_cores: u32,
) -> Result<BbProbabilities<F>, ReuseError> {
    if num_cores == 0 {
        return Err(ReuseError::ZeroCores);
    }
    let m = F::from_count(num_cores as u64);
    let mut serial_sum = F::zero();
    let mut parallel_sum = F::zero();
    for (label, &p) in apriori {
        let bb = bbs
            .get(label)
            .ok_or_else(|| ReuseError::UnknownLabel(label.clone()))?;
        match bb.region {
            Region::Serial => serial_sum += p,
            Region::Parallel => parallel_sum += p,
        }
    }
    let denom = serial_sum + parallel_sum / m;

    let core0 = apriori
        .iter()
        .map(|(label, &p)| {
            let q = match bbs[label].region {
                Region::Serial => p / denom,
                Region::Parallel => (p / m) / denom,
            };
            (label.clone(), q)
        })
        .collect();

    // Cores 1..m never run serial blocks; parallel mass renormalizes. A trace
    // with no parallel blocks leaves those cores with no distribution at all.
    let worker: BTreeMap<String, F> = if parallel_sum.is_zero() {
        BTreeMap::new()
    } else {
        apriori
            .iter()
            .map(|(label, &p)| {
                let q = match bbs[label].region {
                    Region::Serial => F::zero(),
                    Region::Parallel => p / parallel_sum,
                };
                (label.clone(), q)
            })
            .collect()
    };

    let mut per_core = vec![core0];
    per_core.resize(num_cores as usize, worker);
    Ok(BbProbabilities {
        apriori: apriori.clone(),
        per_core,
    })
}

/// Controls window sampling for per-block conditional profiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplingConfig {
    /// Fraction of each block's windows to sample, in (0, 1].
    pub fraction: f64,
    /// Sample at least this many windows (capped at the window count).
    pub min_windows: usize,
    pub rng_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            fraction: 0.01,
            min_windows: 10,
            rng_seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ReuseError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(ReuseError::InvalidFraction(self.fraction));
        }
        Ok(())
    }

    /// Windows to sample out of `available`.
    fn sample_count(&self, available: usize) -> usize {
        let want = (self.fraction * available as f64).ceil() as usize;
        want.max(self.min_windows).min(available)
    }
}

/// FNV-1a over the label, mixed with the base seed, so each block draws from
/// its own stream regardless of the order blocks are processed in.
fn block_seed(base: u64, label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in label.bytes() {
        hash = (hash ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    base ^ hash
}

/// Distance profile of one block, estimated from a sample of its windows.
///
/// `distances` must hold the distance of every record of the owning trace
/// (computed against the full stream, so sampled windows still see the whole
/// history before them). At fraction 1.0 every window is used and the result
/// is the exact histogram over the block's positions.
pub fn conditional_reuse_profile<F: Real>(
    bb: &BasicBlockInfo,
    distances: &[ReuseDistance],
    cfg: &SamplingConfig,
) -> Result<ReuseProfile<F>, ReuseError> {
    cfg.validate()?;
    let n = bb.count();
    if n == 0 {
        return Ok(ReuseProfile::empty());
    }
    let take = cfg.sample_count(n);
    let mut picked: Vec<usize> = if take == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(block_seed(cfg.rng_seed, &bb.label));
        rand::seq::index::sample(&mut rng, n, take).into_vec()
    };
    picked.sort_unstable();

    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut infinite = 0u64;
    for w in picked {
        for d in &distances[bb.windows[w].clone()] {
            match d {
                ReuseDistance::Finite(d) => *counts.entry(*d).or_insert(0) += 1,
                ReuseDistance::Infinite => infinite += 1,
            }
        }
    }
    Ok(ReuseProfile::from_counts(&counts, infinite))
}

/// Mixes per-block profiles into a program profile using block weights.
///
/// Blocks whose profile is empty contribute nothing; their weight is
/// redistributed over the remaining blocks by renormalizing.
pub fn program_reuse_profile<F: Real>(
    weights: &BTreeMap<String, F>,
    conditionals: &BTreeMap<String, ReuseProfile<F>>,
) -> Result<ReuseProfile<F>, ReuseError> {
    let mut active: Vec<(&str, F, &ReuseProfile<F>)> = Vec::new();
    let mut weight_sum = F::zero();
    for (label, &w) in weights {
        let profile = conditionals
            .get(label)
            .ok_or_else(|| ReuseError::UnknownLabel(label.clone()))?;
        if profile.is_empty() || w.is_zero() {
            continue;
        }
        active.push((label, w, profile));
        weight_sum += w;
    }
    if active.is_empty() || weight_sum <= F::zero() {
        return Err(ReuseError::EmptyMixture);
    }

    let mut buckets: BTreeMap<u64, F> = BTreeMap::new();
    let mut p_infinite = F::zero();
    for (_, w, profile) in active {
        let share = w / weight_sum;
        for (d, p) in profile.buckets() {
            *buckets.entry(d).or_insert_with(F::zero) += share * p;
        }
        p_infinite += share * profile.p_infinite();
    }
    Ok(ReuseProfile { buckets, p_infinite })
}
