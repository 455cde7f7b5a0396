//! Trace-driven prediction of multicore cache hit rates.
//!
//! Starting from a single sequential memory trace whose references are
//! labeled with basic blocks, the crate
//!
//! 1. mimics a multicore execution by scheduling the trace's basic-block
//!    windows onto cores ([`mimic`]),
//! 2. measures reuse-distance profiles of the private and interleaved
//!    streams ([`reuse`]),
//! 3. converts those profiles to hit rates analytically ([`sdcm`]), and
//! 4. cross-checks against a reference LRU simulator ([`sim`]).
//!
//! Probability math is generic over the [`Real`] scalar; the `f64` aliases
//! below are what the pipeline uses.

pub mod mimic;
pub mod reuse;
pub mod scalar;
pub mod sdcm;
pub mod sim;
pub mod synth;
pub mod trace;

pub use scalar::Real;

/// Default probability scalar.
pub type Probability = f64;

/// Reuse-distance profile over the default scalar.
pub type Profile = reuse::ReuseProfile<Probability>;

/// Hit-rate report over the default scalar.
pub type Report = sdcm::HitRateReport<Probability>;

/// Single-precision variants, for callers trading accuracy for memory.
pub type ProfileF32 = reuse::ReuseProfile<f32>;
pub type ReportF32 = sdcm::HitRateReport<f32>;
