//! Reference LRU cache simulator.
//!
//! Drives set-associative LRU caches access-by-access, both standalone and
//! as a two-level private/shared hierarchy over mimicked traces. Hierarchy
//! runs keep the shared level inclusive: evicting a line there invalidates
//! every private copy. A second mode drives the shared level with the full
//! interleaved stream instead of the private miss stream, matching what the
//! analytical model predicts.

use serde::Serialize;
use thiserror::Error;

use crate::mimic::{PrivateTraceSet, SharedTrace};
use crate::sdcm::CacheConfig;
use crate::trace::{line_shift, LineAddress, TraceError};

/// Access counters for one simulated cache.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }

    /// `None` when the cache was never accessed.
    pub fn hit_rate(&self) -> Option<f64> {
        let total = self.accesses();
        (total > 0).then(|| self.hits as f64 / total as f64)
    }
}

/// One LRU cache. Lines map to set `line % num_sets`; each set keeps its
/// lines in recency order, most recent last.
pub struct SimCache {
    config: CacheConfig,
    num_sets: u64,
    associativity: usize,
    sets: Vec<Vec<LineAddress>>,
    stats: CacheStats,
}

impl SimCache {
    pub fn new(config: CacheConfig) -> Self {
        let num_sets = config.num_sets();
        Self {
            config,
            num_sets,
            associativity: config.associativity() as usize,
            sets: vec![Vec::new(); num_sets as usize],
            stats: CacheStats::default(),
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    fn set_of(&self, line: LineAddress) -> usize {
        (line.0 % self.num_sets) as usize
    }

    /// Touches a line; returns whether it hit, plus any line evicted to make
    /// room.
    pub fn access(&mut self, line: LineAddress) -> (bool, Option<LineAddress>) {
        let set = &mut self.sets[(line.0 % self.num_sets) as usize];
        if let Some(pos) = set.iter().position(|&l| l == line) {
            set.remove(pos);
            set.push(line);
            self.stats.hits += 1;
            return (true, None);
        }
        self.stats.misses += 1;
        let victim = if set.len() == self.associativity {
            self.stats.evictions += 1;
            Some(set.remove(0))
        } else {
            None
        };
        set.push(line);
        (false, victim)
    }

    pub fn contains(&self, line: LineAddress) -> bool {
        self.sets[self.set_of(line)].contains(&line)
    }

    /// Drops a line without touching the counters; returns whether it was
    /// present.
    pub fn invalidate(&mut self, line: LineAddress) -> bool {
        let set_index = self.set_of(line);
        let set = &mut self.sets[set_index];
        match set.iter().position(|&l| l == line) {
            Some(pos) => {
                set.remove(pos);
                true
            }
            None => false,
        }
    }
}

/// Counters plus the configuration that produced them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub config: CacheConfig,
    pub stats: CacheStats,
}

/// Runs one cache over a line stream.
pub fn simulate_single(lines: &[LineAddress], config: CacheConfig) -> SimResult {
    let mut cache = SimCache::new(config);
    for &line in lines {
        cache.access(line);
    }
    SimResult {
        config,
        stats: cache.stats(),
    }
}

/// What drives the shared level in a hierarchy simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum L2Mode {
    /// Private-level misses, with inclusive back-invalidation.
    Filtered,
    /// Every reference of the interleaved trace, bypassing the filter.
    DirectDrive,
}

impl std::fmt::Display for L2Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            L2Mode::Filtered => f.write_str("filtered"),
            L2Mode::DirectDrive => f.write_str("direct"),
        }
    }
}

impl std::str::FromStr for L2Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "filtered" => Ok(L2Mode::Filtered),
            "direct" | "direct-drive" => Ok(L2Mode::DirectDrive),
            other => Err(format!(
                "unknown L2 mode `{other}` (expected `filtered` or `direct`)"
            )),
        }
    }
}

/// Simulated hit rates for the private/shared hierarchy.
#[derive(Clone, Debug, Serialize)]
pub struct HierarchySimResult {
    pub per_core_private: Vec<SimResult>,
    pub shared: SimResult,
    pub mode: L2Mode,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("private level line size {0} differs from shared level line size {1}")]
    LineSizeMismatch(u64, u64),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Replays the interleaved trace through per-core private caches and one
/// shared cache.
///
/// Every record goes through its issuing core's private cache. In
/// [`L2Mode::Filtered`] only private misses reach the shared cache and shared
/// evictions invalidate private copies; in [`L2Mode::DirectDrive`] the shared
/// cache sees every record.
pub fn simulate_hierarchy(
    pset: &PrivateTraceSet,
    shared: &SharedTrace,
    private: CacheConfig,
    shared_config: CacheConfig,
    mode: L2Mode,
) -> Result<HierarchySimResult, SimError> {
    if private.line_size() != shared_config.line_size() {
        return Err(SimError::LineSizeMismatch(
            private.line_size(),
            shared_config.line_size(),
        ));
    }
    let shift = line_shift(private.line_size())?;
    let mut privates: Vec<SimCache> = (0..pset.num_cores())
        .map(|_| SimCache::new(private))
        .collect();
    let mut shared_cache = SimCache::new(shared_config);

    let records = shared.trace().records();
    debug_assert_eq!(records.len(), shared.core_of().len());
    for (record, &core) in records.iter().zip(shared.core_of()) {
        let line = LineAddress(record.address >> shift);
        let (hit, _) = privates[core as usize].access(line);
        match mode {
            L2Mode::Filtered => {
                if !hit {
                    let (_, victim) = shared_cache.access(line);
                    if let Some(victim) = victim {
                        for cache in &mut privates {
                            cache.invalidate(victim);
                        }
                    }
                }
            }
            L2Mode::DirectDrive => {
                shared_cache.access(line);
            }
        }
    }

    Ok(HierarchySimResult {
        per_core_private: privates
            .iter()
            .map(|c| SimResult {
                config: *c.config(),
                stats: c.stats(),
            })
            .collect(),
        shared: SimResult {
            config: shared_config,
            stats: shared_cache.stats(),
        },
        mode,
    })
}
