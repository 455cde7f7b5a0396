//! Analytical cache model: hit probability as a function of reuse distance.
//!
//! For a cache of `B` blocks and associativity `A`, a reference with reuse
//! distance `D` hits when fewer than `A` of the `D` intervening lines landed
//! in its set. With uniform set mapping that count is binomial, giving
//!
//! ```text
//! P(hit | D) = sum over a < A of C(D, a) * (A/B)^a * ((B-A)/B)^(D-a)
//! ```
//!
//! Direct-mapped caches reduce to `((B-1)/B)^D` and fully-associative caches
//! to an exact LRU step function (hit iff `D < B`). A whole profile's hit
//! rate is the profile-weighted sum; first touches never hit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mimic::InterleaveStrategy;
use crate::reuse::{ReuseDistance, ReuseProfile};
use crate::scalar::{geometric_mean, ln_choose, Real};
use crate::trace::CoreId;

/// Placement policy, derived from capacity and associativity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMapping {
    SetAssociative,
    DirectMapped,
    FullyAssociative,
}

/// Geometry of one cache: validated at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CacheConfig {
    capacity_bytes: u64,
    associativity: u64,
    line_size: u64,
    mapping: CacheMapping,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line size must be a power of two, got {0}")]
    LineSize(u64),
    #[error("capacity {capacity} is not a multiple of line size {line_size}")]
    CapacityGranularity { capacity: u64, line_size: u64 },
    #[error("cache must hold at least one line")]
    ZeroBlocks,
    #[error("associativity must be between 1 and the block count {blocks}, got {assoc}")]
    Associativity { assoc: u64, blocks: u64 },
    #[error("block count {blocks} is not a multiple of associativity {assoc}")]
    SetGranularity { blocks: u64, assoc: u64 },
    #[error("bad capacity `{0}`: expected bytes or a K/M/G suffix like `8KB`")]
    Capacity(String),
    #[error("hierarchy must have exactly one private and one shared level, got {private} private and {shared} shared")]
    LevelScopes { private: usize, shared: usize },
    #[error("hierarchy levels must share one line size, got {0} and {1}")]
    LineSizeMismatch(u64, u64),
    #[error("bad hierarchy config: {0}")]
    Toml(String),
}

impl CacheConfig {
    pub fn new(capacity_bytes: u64, associativity: u64, line_size: u64) -> Result<Self, ConfigError> {
        if line_size == 0 || !line_size.is_power_of_two() {
            return Err(ConfigError::LineSize(line_size));
        }
        if !capacity_bytes.is_multiple_of(line_size) {
            return Err(ConfigError::CapacityGranularity {
                capacity: capacity_bytes,
                line_size,
            });
        }
        let blocks = capacity_bytes / line_size;
        if blocks == 0 {
            return Err(ConfigError::ZeroBlocks);
        }
        if associativity == 0 || associativity > blocks {
            return Err(ConfigError::Associativity {
                assoc: associativity,
                blocks,
            });
        }
        if !blocks.is_multiple_of(associativity) {
            return Err(ConfigError::SetGranularity {
                blocks,
                assoc: associativity,
            });
        }
        let mapping = if associativity == blocks {
            CacheMapping::FullyAssociative
        } else if associativity == 1 {
            CacheMapping::DirectMapped
        } else {
            CacheMapping::SetAssociative
        };
        Ok(Self {
            capacity_bytes,
            associativity,
            line_size,
            mapping,
        })
    }

    pub fn fully_associative(capacity_bytes: u64, line_size: u64) -> Result<Self, ConfigError> {
        let blocks = capacity_bytes.checked_div(line_size).unwrap_or(0);
        Self::new(capacity_bytes, blocks.max(1), line_size)
    }

    pub fn direct_mapped(capacity_bytes: u64, line_size: u64) -> Result<Self, ConfigError> {
        Self::new(capacity_bytes, 1, line_size)
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn associativity(&self) -> u64 {
        self.associativity
    }

    pub fn line_size(&self) -> u64 {
        self.line_size
    }

    pub fn mapping(&self) -> CacheMapping {
        self.mapping
    }

    /// Total lines the cache holds.
    pub fn num_blocks(&self) -> u64 {
        self.capacity_bytes / self.line_size
    }

    pub fn num_sets(&self) -> u64 {
        self.num_blocks() / self.associativity
    }
}

/// Distances beyond `num_blocks * LONG_DISTANCE_FACTOR` round to zero without
/// evaluating the binomial sum.
const LONG_DISTANCE_FACTOR: u64 = 64;

/// Hit probability of one reference given its reuse distance.
pub fn hit_probability_given_distance<F: Real>(
    distance: ReuseDistance,
    cache: &CacheConfig,
) -> F {
    let ReuseDistance::Finite(d) = distance else {
        return F::zero();
    };
    let blocks = cache.num_blocks();
    match cache.mapping() {
        CacheMapping::FullyAssociative => {
            if d < blocks {
                F::one()
            } else {
                F::zero()
            }
        }
        _ if d < cache.associativity() => F::one(),
        _ if d > blocks.saturating_mul(LONG_DISTANCE_FACTOR) => F::zero(),
        CacheMapping::DirectMapped => {
            // (1 - 1/B)^D in log space; B > 1 since A == B == 1 is
            // classified fully-associative
            let b = F::from_count(blocks);
            let ratio = (b - F::one()) / b;
            (F::from_count(d) * ratio.ln()).exp()
        }
        _ => {
            let a = cache.associativity();
            let b = F::from_count(blocks);
            let ln_in = (F::from_count(a) / b).ln();
            let ln_out = ((b - F::from_count(a)) / b).ln();
            let mean = F::from_count(d) * F::from_count(a) / b;
            let mut sum = F::zero();
            for k in 0..a {
                let term = (ln_choose::<F>(d, k)
                    + F::from_count(k) * ln_in
                    + F::from_count(d - k) * ln_out)
                    .exp();
                sum += term;
                // terms fall off fast past the binomial mean; stop once they
                // no longer move the sum
                if F::from_count(k) > mean && term < sum * F::from_f64_lossy(1e-18) {
                    break;
                }
            }
            sum.min(F::one()).max(F::zero())
        }
    }
}

/// Maximum drift of a profile's total mass from 1 before prediction refuses.
pub const PROFILE_MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("reuse profile mass is {sum}, expected 1 within {PROFILE_MASS_TOLERANCE}")]
    Unnormalized { sum: f64 },
    #[error("expected {expected} per-core profiles, got {got}")]
    CoreCount { expected: usize, got: usize },
    #[error("core {0} has an empty reuse profile (it issues no references)")]
    EmptyCoreProfile(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Profile-weighted hit rate for one cache.
pub fn predict_hit_rate<F: Real>(
    profile: &ReuseProfile<F>,
    cache: &CacheConfig,
) -> Result<F, ModelError> {
    let total = profile.total();
    let drift = (total - F::one()).abs();
    if drift > F::from_f64_lossy(PROFILE_MASS_TOLERANCE) {
        return Err(ModelError::Unnormalized {
            sum: total.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut rate = F::zero();
    for (d, p) in profile.buckets() {
        rate += p * hit_probability_given_distance(ReuseDistance::Finite(d), cache);
    }
    Ok(rate.min(F::one()))
}

/// Whether a level is replicated per core or shared by all of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheScope {
    Private,
    Shared,
}

/// One level of the modeled hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyLevel {
    pub name: String,
    pub cache: CacheConfig,
    pub scope: CacheScope,
}

/// A two-level hierarchy: one private level and one shared level with a
/// common line size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyConfig {
    levels: Vec<HierarchyLevel>,
}

impl HierarchyConfig {
    pub fn new(levels: Vec<HierarchyLevel>) -> Result<Self, ConfigError> {
        let private = levels.iter().filter(|l| l.scope == CacheScope::Private).count();
        let shared = levels.iter().filter(|l| l.scope == CacheScope::Shared).count();
        if private != 1 || shared != 1 {
            return Err(ConfigError::LevelScopes { private, shared });
        }
        let sizes: Vec<u64> = levels.iter().map(|l| l.cache.line_size()).collect();
        if sizes[0] != sizes[1] {
            return Err(ConfigError::LineSizeMismatch(sizes[0], sizes[1]));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[HierarchyLevel] {
        &self.levels
    }

    pub fn private_level(&self) -> &HierarchyLevel {
        self.levels
            .iter()
            .find(|l| l.scope == CacheScope::Private)
            .expect("validated at construction")
    }

    pub fn shared_level(&self) -> &HierarchyLevel {
        self.levels
            .iter()
            .find(|l| l.scope == CacheScope::Shared)
            .expect("validated at construction")
    }

    pub fn line_size(&self) -> u64 {
        self.levels[0].cache.line_size()
    }

    /// Returns a copy with the private level's capacity replaced.
    pub fn with_private_capacity(&self, capacity_bytes: u64) -> Result<Self, ConfigError> {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                if l.scope == CacheScope::Private {
                    Ok(HierarchyLevel {
                        name: l.name.clone(),
                        cache: CacheConfig::new(
                            capacity_bytes,
                            l.cache.associativity(),
                            l.cache.line_size(),
                        )?,
                        scope: l.scope,
                    })
                } else {
                    Ok(l.clone())
                }
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Self::new(levels)
    }

    /// Parses the TOML format:
    ///
    /// ```toml
    /// [[level]]
    /// name = "L1"
    /// capacity = "8KB"
    /// associativity = 8
    /// line_size = 64
    /// scope = "private"
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawHierarchy =
            toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
        let levels = raw
            .level
            .into_iter()
            .map(|l| {
                Ok(HierarchyLevel {
                    cache: CacheConfig::new(l.capacity.bytes()?, l.associativity, l.line_size)?,
                    name: l.name,
                    scope: l.scope,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Self::new(levels)
    }
}

#[derive(Deserialize)]
struct RawHierarchy {
    level: Vec<RawLevel>,
}

#[derive(Deserialize)]
struct RawLevel {
    name: String,
    capacity: Capacity,
    associativity: u64,
    line_size: u64,
    scope: CacheScope,
}

/// Capacity in bytes, given either as an integer or a suffixed string.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Capacity {
    Bytes(u64),
    Human(String),
}

impl Capacity {
    pub fn bytes(&self) -> Result<u64, ConfigError> {
        match self {
            Capacity::Bytes(n) => Ok(*n),
            Capacity::Human(s) => parse_capacity(s),
        }
    }
}

/// Parses `4096`, `8KB`, `8KiB`, `128K`, `2MB`, `1GiB`... using 1024-based
/// units throughout.
pub fn parse_capacity(text: &str) -> Result<u64, ConfigError> {
    let s = text.trim();
    let err = || ConfigError::Capacity(text.to_string());
    let lower = s.to_ascii_lowercase();
    let (digits, factor) = if let Some(p) = lower.strip_suffix("kib").or(lower.strip_suffix("kb")) {
        (p, 1u64 << 10)
    } else if let Some(p) = lower.strip_suffix("mib").or(lower.strip_suffix("mb")) {
        (p, 1 << 20)
    } else if let Some(p) = lower.strip_suffix("gib").or(lower.strip_suffix("gb")) {
        (p, 1 << 30)
    } else if let Some(p) = lower.strip_suffix('k') {
        (p, 1 << 10)
    } else if let Some(p) = lower.strip_suffix('m') {
        (p, 1 << 20)
    } else if let Some(p) = lower.strip_suffix('g') {
        (p, 1 << 30)
    } else if let Some(p) = lower.strip_suffix('b') {
        (p, 1)
    } else {
        (lower.as_str(), 1)
    };
    let value: u64 = digits.trim().parse().map_err(|_| err())?;
    value.checked_mul(factor).ok_or_else(err)
}

impl FromStr for Capacity {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_capacity(s)?;
        Ok(Capacity::Human(s.to_string()))
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Bytes(n) => write!(f, "{n}"),
            Capacity::Human(s) => f.write_str(s),
        }
    }
}

/// Run description echoed into reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelMeta {
    pub num_cores: CoreId,
    pub strategy: InterleaveStrategy,
    pub rng_seed: u64,
}

/// Predicted hit rates for a private/shared hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HitRateReport<F> {
    pub per_core_private: Vec<F>,
    /// Geometric mean over cores.
    pub private_aggregate: F,
    pub shared: F,
    pub meta: ModelMeta,
}

/// Predicts the private level from each core's profile and the shared level
/// from the interleaved trace's profile.
///
/// The shared level sees the full interleaved stream here, not the private
/// level's miss stream; pair it with a simulator run in the matching mode.
pub fn predict_hierarchy<F: Real>(
    per_core: &[ReuseProfile<F>],
    shared: &ReuseProfile<F>,
    hierarchy: &HierarchyConfig,
    meta: ModelMeta,
) -> Result<HitRateReport<F>, ModelError> {
    if per_core.len() != meta.num_cores as usize {
        return Err(ModelError::CoreCount {
            expected: meta.num_cores as usize,
            got: per_core.len(),
        });
    }
    if let Some(core) = per_core.iter().position(|p| p.is_empty()) {
        return Err(ModelError::EmptyCoreProfile(core));
    }
    let private = &hierarchy.private_level().cache;
    let per_core_private = per_core
        .iter()
        .map(|p| predict_hit_rate(p, private))
        .collect::<Result<Vec<F>, _>>()?;
    let shared_rate = predict_hit_rate(shared, &hierarchy.shared_level().cache)?;
    Ok(HitRateReport {
        private_aggregate: geometric_mean(&per_core_private),
        per_core_private,
        shared: shared_rate,
        meta,
    })
}
