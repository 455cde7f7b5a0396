//! Resolved run parameters, echoed into every report.

use std::path::PathBuf;

use serde::Serialize;

use mimicache::mimic::{ChunkSize, InterleaveStrategy, MimicConfig};
use mimicache::reuse::SamplingConfig;

/// Everything a run depends on. The serialized form covers only the fields
/// that affect results, so reports stay byte-identical across output
/// locations and worker counts.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub trace: PathBuf,
    pub hierarchy: PathBuf,
    pub cores: u32,
    pub chunk: ChunkSize,
    pub strategy: InterleaveStrategy,
    pub seed: u64,
    pub offset_stride: u64,
    pub sample_fraction: f64,
    pub min_windows: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub workers: usize,
}

impl RunManifest {
    pub fn mimic_config(&self) -> MimicConfig {
        MimicConfig {
            num_cores: self.cores,
            chunk_size: self.chunk,
            offset_stride: self.offset_stride,
            strategy: self.strategy,
            rng_seed: self.seed,
        }
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            fraction: self.sample_fraction,
            min_windows: self.min_windows,
            rng_seed: self.seed,
        }
    }
}
