//! Report documents written by the commands. All serialization is
//! deterministic: struct field order, index-ordered vectors, and sorted maps
//! only.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use mimicache::sdcm::{HierarchyConfig, HierarchyLevel};
use mimicache::sim::{CacheStats, HierarchySimResult, L2Mode};
use mimicache::Report;

use crate::manifest::RunManifest;
use crate::pipeline::PredictOutcome;

pub const SCHEMA_VERSION: u32 = 1;

/// What the shared level's profile is measured over. The model always rates
/// the shared level against the full interleaved stream, not the private
/// miss stream; simulator comparisons should use the matching L2 mode.
pub const SHARED_LEVEL_INPUT: &str = "full-interleaved-stream";

#[derive(Serialize)]
pub struct PredictReport<'a> {
    pub schema_version: u32,
    pub source: &'static str,
    pub inputs: &'a RunManifest,
    pub hierarchy: &'a [HierarchyLevel],
    pub shared_level_input: &'static str,
    pub hit_rates: HitRatesDoc,
}

#[derive(Serialize)]
pub struct HitRatesDoc {
    pub per_core_private: Vec<f64>,
    pub private_aggregate: f64,
    pub shared: f64,
}

impl HitRatesDoc {
    pub fn from_report(report: &Report) -> Self {
        Self {
            per_core_private: report.per_core_private.clone(),
            private_aggregate: report.private_aggregate,
            shared: report.shared,
        }
    }
}

#[derive(Serialize)]
pub struct SimulateReport<'a> {
    pub schema_version: u32,
    pub source: &'static str,
    pub inputs: &'a RunManifest,
    pub hierarchy: &'a [HierarchyLevel],
    pub l2_mode: L2Mode,
    pub per_core_private: Vec<LevelCounters>,
    pub shared: LevelCounters,
}

#[derive(Serialize)]
pub struct LevelCounters {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub hit_rate: Option<f64>,
}

impl From<CacheStats> for LevelCounters {
    fn from(stats: CacheStats) -> Self {
        Self {
            hits: stats.hits,
            misses: stats.misses,
            evictions: stats.evictions,
            hit_rate: stats.hit_rate(),
        }
    }
}

#[derive(Serialize)]
pub struct CompareReport<'a> {
    pub schema_version: u32,
    pub threshold_pp: f64,
    pub l2_mode: L2Mode,
    pub inputs: &'a RunManifest,
    pub traces: Vec<PathBuf>,
    pub rows: Vec<CompareRow>,
    pub aggregates: Vec<CompareAggregate>,
    pub passed: bool,
}

#[derive(Clone, Serialize)]
pub struct CompareRow {
    pub application: String,
    pub level: String,
    pub predicted: f64,
    pub simulated: f64,
    /// `|predicted - simulated|` in percentage points.
    pub abs_error_pp: f64,
}

#[derive(Serialize)]
pub struct CompareAggregate {
    pub level: String,
    pub geomean_predicted: f64,
    pub geomean_simulated: f64,
    /// Arithmetic and geometric means of the per-application errors; which
    /// aggregation a consumer wants varies, so both are published.
    pub mean_abs_error_pp: f64,
    pub geomean_abs_error_pp: f64,
    pub max_abs_error_pp: f64,
}

#[derive(Serialize)]
pub struct SweepReport<'a> {
    pub schema_version: u32,
    pub inputs: &'a RunManifest,
    pub cores_axis: &'a [u32],
    pub strategy_axis: Vec<String>,
    pub l1_capacity_axis: Option<Vec<u64>>,
    pub rows: Vec<SweepRow>,
}

#[derive(Serialize)]
pub struct SweepRow {
    pub cores: u32,
    pub strategy: String,
    pub l1_capacity_bytes: u64,
    pub per_core_private: Vec<f64>,
    pub private_aggregate: f64,
    pub shared: f64,
}

/// Pretty JSON plus a trailing newline, so files end cleanly.
pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(doc).context("serializing report")?;
    text.push('\n');
    Ok(text)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes report.json, one PRD profile per core, and the CRD profile.
pub fn write_predict_outputs(
    dir: &Path,
    manifest: &RunManifest,
    hierarchy: &HierarchyConfig,
    outcome: &PredictOutcome,
) -> Result<Vec<PathBuf>> {
    let doc = PredictReport {
        schema_version: SCHEMA_VERSION,
        source: "predicted",
        inputs: manifest,
        hierarchy: hierarchy.levels(),
        shared_level_input: SHARED_LEVEL_INPUT,
        hit_rates: HitRatesDoc::from_report(&outcome.report),
    };
    let mut written = vec![write_file(dir, "report.json", &to_json(&doc)?)?];
    for (core, profile) in outcome.per_core_profiles.iter().enumerate() {
        written.push(write_file(
            dir,
            &format!("prd_core_{core}.csv"),
            &profile.to_csv_string(),
        )?);
    }
    written.push(write_file(dir, "crd.csv", &outcome.shared_profile.to_csv_string())?);
    Ok(written)
}

pub fn write_simulate_outputs(
    dir: &Path,
    manifest: &RunManifest,
    hierarchy: &HierarchyConfig,
    result: &HierarchySimResult,
) -> Result<Vec<PathBuf>> {
    let doc = SimulateReport {
        schema_version: SCHEMA_VERSION,
        source: "simulated",
        inputs: manifest,
        hierarchy: hierarchy.levels(),
        l2_mode: result.mode,
        per_core_private: result
            .per_core_private
            .iter()
            .map(|r| LevelCounters::from(r.stats))
            .collect(),
        shared: LevelCounters::from(result.shared.stats),
    };
    Ok(vec![write_file(dir, "simulation.json", &to_json(&doc)?)?])
}
