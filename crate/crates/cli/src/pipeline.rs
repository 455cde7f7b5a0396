//! The prediction pipeline: parse once, mimic, profile, model, and
//! optionally cross-check with the simulator.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use mimicache::mimic::{
    generate_private_traces, interleave_traces, PrivateTraceSet, SharedTrace,
};
use mimicache::reuse::{
    bb_apriori_probabilities, bb_core_probabilities, conditional_reuse_profile,
    exact_reuse_distances, program_reuse_profile, SamplingConfig,
};
use mimicache::sdcm::{predict_hierarchy, HierarchyConfig, ModelMeta};
use mimicache::sim::{simulate_hierarchy, HierarchySimResult, L2Mode};
use mimicache::trace::{read_trace_file, to_line_addresses, BbMap, MemoryTrace};
use mimicache::{Profile, Report};

use crate::manifest::RunManifest;

/// A parsed trace plus its block map.
pub struct TraceInput {
    pub trace: MemoryTrace,
    pub bbs: BbMap,
}

pub fn load_trace(path: &Path) -> Result<TraceInput> {
    let (trace, bbs) = read_trace_file(path)
        .with_context(|| format!("parse stage: reading trace {}", path.display()))?;
    Ok(TraceInput { trace, bbs })
}

pub fn load_hierarchy(path: &Path) -> Result<HierarchyConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("config stage: reading hierarchy {}", path.display()))?;
    HierarchyConfig::from_toml_str(&text)
        .with_context(|| format!("config stage: parsing hierarchy {}", path.display()))
}

/// Everything the predict path produces, kept around so callers can feed the
/// same mimicked traces to the simulator.
pub struct PredictOutcome {
    pub pset: PrivateTraceSet,
    pub shared: SharedTrace,
    pub per_core_profiles: Vec<Profile>,
    pub shared_profile: Profile,
    pub report: Report,
}

/// Mixture profile of one trace: per-block conditionals weighted by `weights`.
fn profile_of_trace(
    trace: &MemoryTrace,
    bbs: &BbMap,
    weights: &BTreeMap<String, f64>,
    sampling: &SamplingConfig,
    line_size: u64,
) -> Result<Profile> {
    if weights.is_empty() || trace.is_empty() {
        return Ok(Profile::empty());
    }
    let lines = to_line_addresses(trace, line_size)
        .context("profile stage: mapping addresses to lines")?;
    let distances = exact_reuse_distances(&lines);
    let conditionals: BTreeMap<String, Profile> = weights
        .keys()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|label| {
            let profile = match bbs.get(*label) {
                Some(bb) => conditional_reuse_profile(bb, &distances, sampling)?,
                None => Profile::empty(),
            };
            Ok(((*label).clone(), profile))
        })
        .collect::<Result<Vec<_>, mimicache::reuse::ReuseError>>()
        .context("profile stage: per-block conditional profiles")?
        .into_iter()
        .collect();
    program_reuse_profile(weights, &conditionals).context("profile stage: block mixture")
}

/// Runs mimicry on an already-parsed trace.
pub fn mimic_parsed(
    input: &TraceInput,
    manifest: &RunManifest,
) -> Result<(PrivateTraceSet, SharedTrace)> {
    let cfg = manifest.mimic_config();
    let pset = generate_private_traces(&input.trace, &input.bbs, &cfg)
        .context("mimic stage: private trace generation")?;
    let shared = interleave_traces(&pset, &cfg);
    Ok((pset, shared))
}

/// Full analytical prediction on an already-parsed trace.
pub fn predict_parsed(
    input: &TraceInput,
    hierarchy: &HierarchyConfig,
    manifest: &RunManifest,
) -> Result<PredictOutcome> {
    manifest
        .sampling_config()
        .validate()
        .context("profile stage: sampling configuration")?;
    let (pset, shared) = mimic_parsed(input, manifest)?;

    let apriori = bb_apriori_probabilities(&input.bbs)
        .context("profile stage: block probabilities")?;
    let probs = bb_core_probabilities(&apriori, &input.bbs, manifest.cores)
        .context("profile stage: per-core block probabilities")?;

    let sampling = manifest.sampling_config();
    let line_size = hierarchy.line_size();

    let per_core_profiles: Vec<Profile> = (0..pset.num_cores())
        .into_par_iter()
        .map(|core| {
            profile_of_trace(
                pset.trace(core),
                pset.bbs(core),
                &probs.per_core[core],
                &sampling,
                line_size,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let shared_profile = profile_of_trace(
        shared.trace(),
        shared.bbs(),
        &probs.apriori,
        &sampling,
        line_size,
    )?;

    let meta = ModelMeta {
        num_cores: manifest.cores,
        strategy: manifest.strategy,
        rng_seed: manifest.seed,
    };
    let report = predict_hierarchy(&per_core_profiles, &shared_profile, hierarchy, meta)
        .context("model stage: hierarchy prediction")?;
    Ok(PredictOutcome {
        pset,
        shared,
        per_core_profiles,
        shared_profile,
        report,
    })
}

/// Replays mimicked traces through the reference simulator.
pub fn simulate_parts(
    pset: &PrivateTraceSet,
    shared: &SharedTrace,
    hierarchy: &HierarchyConfig,
    mode: L2Mode,
) -> Result<HierarchySimResult> {
    simulate_hierarchy(
        pset,
        shared,
        hierarchy.private_level().cache,
        hierarchy.shared_level().cache,
        mode,
    )
    .context("simulate stage: hierarchy replay")
}
