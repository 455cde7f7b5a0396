//! Deterministic synthetic trace generation.
//!
//! A [`SyntheticSpec`] describes basic blocks with instance counts and access
//! patterns; [`generate_synthetic_trace`] expands it into a sequential trace
//! whose windows follow phase order. The bundled benchmark suite provides
//! ready-made specs with serial and parallel phases and a mix of strided,
//! tiled, and random access.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{
    AccessKind, BasicBlockInfo, BbMap, MemoryTrace, Region, TraceOrigin, TraceRecord,
};

/// Address pattern a block's references follow. Address arithmetic wraps
/// modulo 2^64.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessPattern {
    /// A single stream advancing by `stride` bytes per reference, across all
    /// instances of the block.
    Strided { base: u64, stride: u64 },
    /// Row `(instance / repeat) % rows` walked from its start by `stride`
    /// bytes per reference; rows are `row_stride` bytes apart.
    Tiled {
        base: u64,
        rows: u64,
        #[serde(default = "one")]
        repeat: u64,
        row_stride: u64,
        stride: u64,
    },
    /// Uniform-random aligned addresses within `span` bytes of `base`.
    Random {
        base: u64,
        span: u64,
        #[serde(default = "eight")]
        align: u64,
    },
}

fn one() -> u64 {
    1
}

fn eight() -> u64 {
    8
}

/// One basic block of a synthetic program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub label: String,
    pub region: Region,
    #[serde(default)]
    pub shared_section: bool,
    /// Dynamic instances (windows) to emit.
    pub instances: usize,
    /// References per instance.
    pub refs_per_instance: usize,
    pub pattern: AccessPattern,
    /// Blocks with equal phase interleave round-robin; phases run in order.
    #[serde(default)]
    pub phase: u32,
}

/// A synthetic program: an ordered list of blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub blocks: Vec<BlockSpec>,
}

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthetic spec has no blocks")]
    EmptySpec,
    #[error("synthetic spec produces no memory references")]
    NoReferences,
    #[error("duplicate block label `{0}`")]
    DuplicateLabel(String),
    #[error("shared section `{0}` must be in a parallel region")]
    SharedSerial(String),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

/// Expands a spec into a sequential trace. Identical `(spec, seed)` pairs
/// produce identical traces.
pub fn generate_synthetic_trace(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(MemoryTrace, BbMap), SynthError> {
    if spec.blocks.is_empty() {
        return Err(SynthError::EmptySpec);
    }
    let mut trace = MemoryTrace::new(TraceOrigin::Sequential);
    let mut bbs = BbMap::new();
    let mut ids = Vec::with_capacity(spec.blocks.len());
    for block in &spec.blocks {
        if bbs.contains_key(&block.label) {
            return Err(SynthError::DuplicateLabel(block.label.clone()));
        }
        if block.shared_section && block.region == Region::Serial {
            return Err(SynthError::SharedSerial(block.label.clone()));
        }
        ids.push(trace.intern(&block.label));
        bbs.insert(
            block.label.clone(),
            BasicBlockInfo::new(&block.label, block.region, block.shared_section),
        );
    }

    let mut phases: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, block) in spec.blocks.iter().enumerate() {
        phases.entry(block.phase).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emitted = vec![0u64; spec.blocks.len()];
    for members in phases.values() {
        let rounds = members
            .iter()
            .map(|&i| spec.blocks[i].instances)
            .max()
            .unwrap_or(0);
        for round in 0..rounds {
            for &i in members {
                let block = &spec.blocks[i];
                if round >= block.instances {
                    continue;
                }
                let start = trace.len();
                for j in 0..block.refs_per_instance {
                    let address =
                        next_address(block, emitted[i], round as u64, j as u64, &mut rng);
                    emitted[i] += 1;
                    trace.push(TraceRecord {
                        bb: ids[i],
                        address,
                        kind: AccessKind::Unspecified,
                    });
                }
                bbs.get_mut(&block.label)
                    .expect("block inserted above")
                    .windows
                    .push(start..trace.len());
            }
        }
    }
    if trace.is_empty() {
        return Err(SynthError::NoReferences);
    }
    Ok((trace, bbs))
}

fn next_address(
    block: &BlockSpec,
    emitted: u64,
    instance: u64,
    j: u64,
    rng: &mut ChaCha8Rng,
) -> u64 {
    match block.pattern {
        AccessPattern::Strided { base, stride } => {
            base.wrapping_add(emitted.wrapping_mul(stride))
        }
        AccessPattern::Tiled {
            base,
            rows,
            repeat,
            row_stride,
            stride,
        } => {
            let row = (instance / repeat.max(1)) % rows.max(1);
            base.wrapping_add(row.wrapping_mul(row_stride))
                .wrapping_add(j.wrapping_mul(stride))
        }
        AccessPattern::Random { base, span, align } => {
            let align = align.max(1);
            let slots = (span / align).max(1);
            base.wrapping_add(rng.random_range(0..slots).wrapping_mul(align))
        }
    }
}

/// Names of the bundled benchmarks, in canonical order.
pub fn benchmark_names() -> &'static [&'static str] {
    &["stencil", "graph", "gemm"]
}

/// Returns the spec for a bundled benchmark, `None` for unknown names.
///
/// `scale` multiplies the iteration counts (and so the working set); it is
/// clamped to at least 1. Every block issues the same number of references
/// per instance so instance counts track reference counts.
pub fn benchmark_spec(name: &str, scale: u64) -> Option<SyntheticSpec> {
    let s = scale.max(1) as usize;
    let su = scale.max(1);
    let spec = match name {
        // Two-array sweep: serial init, then four parallel passes over each
        // array with a small shared reduction at the end.
        "stencil" => SyntheticSpec {
            blocks: vec![
                BlockSpec {
                    label: "init_a".into(),
                    region: Region::Serial,
                    shared_section: false,
                    instances: 24 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Strided { base: 0x10_0000, stride: 8 },
                    phase: 0,
                },
                BlockSpec {
                    label: "init_b".into(),
                    region: Region::Serial,
                    shared_section: false,
                    instances: 24 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Strided { base: 0x20_0000, stride: 8 },
                    phase: 1,
                },
                BlockSpec {
                    label: "sweep_a".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 96 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Tiled {
                        base: 0x10_0000,
                        rows: 24 * su,
                        repeat: 1,
                        row_stride: 512,
                        stride: 8,
                    },
                    phase: 2,
                },
                BlockSpec {
                    label: "sweep_b".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 96 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Tiled {
                        base: 0x20_0000,
                        rows: 24 * su,
                        repeat: 1,
                        row_stride: 512,
                        stride: 8,
                    },
                    phase: 2,
                },
                BlockSpec {
                    label: "reduce".into(),
                    region: Region::Parallel,
                    shared_section: true,
                    instances: 1,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Strided { base: 0x30_0000, stride: 8 },
                    phase: 3,
                },
            ],
        },
        // Pointer-chasing flavor: serial edge load, then random node visits
        // interleaved with a streaming frontier scan.
        "graph" => SyntheticSpec {
            blocks: vec![
                BlockSpec {
                    label: "load_edges".into(),
                    region: Region::Serial,
                    shared_section: false,
                    instances: 32 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Strided { base: 0x40_0000, stride: 8 },
                    phase: 0,
                },
                BlockSpec {
                    label: "visit".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 128 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Random {
                        base: 0x40_0000,
                        span: 16_384 * su,
                        align: 8,
                    },
                    phase: 1,
                },
                BlockSpec {
                    label: "frontier".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 128 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Strided { base: 0x80_0000, stride: 8 },
                    phase: 1,
                },
            ],
        },
        // Inner-product walks: serial output init, then row, column, and
        // output streams per (i, j) iteration.
        "gemm" => SyntheticSpec {
            blocks: vec![
                BlockSpec {
                    label: "init_c".into(),
                    region: Region::Serial,
                    shared_section: false,
                    instances: 16 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Strided { base: 0xc0_0000, stride: 8 },
                    phase: 0,
                },
                BlockSpec {
                    label: "lhs_row".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 288 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Tiled {
                        base: 0xa0_0000,
                        rows: 16 * su,
                        repeat: 18,
                        row_stride: 512,
                        stride: 8,
                    },
                    phase: 1,
                },
                BlockSpec {
                    label: "rhs_col".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 288 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Tiled {
                        base: 0xb0_0000,
                        rows: 18,
                        repeat: 1,
                        row_stride: 8,
                        stride: 144,
                    },
                    phase: 1,
                },
                BlockSpec {
                    label: "out_row".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 288 * s,
                    refs_per_instance: 64,
                    pattern: AccessPattern::Tiled {
                        base: 0xc0_0000,
                        rows: 16 * su,
                        repeat: 18,
                        row_stride: 512,
                        stride: 8,
                    },
                    phase: 1,
                },
            ],
        },
        _ => return None,
    };
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{parse_trace_str, trace_to_string};

    fn tiny_spec() -> SyntheticSpec {
        SyntheticSpec {
            blocks: vec![
                BlockSpec {
                    label: "s".into(),
                    region: Region::Serial,
                    shared_section: false,
                    instances: 2,
                    refs_per_instance: 3,
                    pattern: AccessPattern::Strided { base: 0x1000, stride: 64 },
                    phase: 0,
                },
                BlockSpec {
                    label: "p".into(),
                    region: Region::Parallel,
                    shared_section: false,
                    instances: 3,
                    refs_per_instance: 2,
                    pattern: AccessPattern::Random { base: 0, span: 4096, align: 64 },
                    phase: 1,
                },
            ],
        }
    }

    #[test]
    fn same_seed_same_trace_different_seed_differs() {
        let spec = tiny_spec();
        let (a, _) = generate_synthetic_trace(&spec, 7).unwrap();
        let (b, _) = generate_synthetic_trace(&spec, 7).unwrap();
        let (c, _) = generate_synthetic_trace(&spec, 8).unwrap();
        assert_eq!(a.records(), b.records());
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn strided_block_advances_across_instances() {
        let spec = tiny_spec();
        let (trace, bbs) = generate_synthetic_trace(&spec, 0).unwrap();
        let s = &bbs["s"];
        assert_eq!(s.windows.len(), 2);
        let addrs: Vec<u64> = trace.records()[..6].iter().map(|r| r.address).collect();
        let want: Vec<u64> = (0..6).map(|k| 0x1000 + k * 64).collect();
        assert_eq!(addrs, want);
        assert_eq!(bbs["p"].count(), 3);
        assert_eq!(trace.len(), 12);
    }

    #[test]
    fn random_pattern_stays_in_span_and_aligned() {
        let spec = SyntheticSpec {
            blocks: vec![BlockSpec {
                label: "r".into(),
                region: Region::Parallel,
                shared_section: false,
                instances: 64,
                refs_per_instance: 16,
                pattern: AccessPattern::Random { base: 0x800, span: 1024, align: 32 },
                phase: 0,
            }],
        };
        let (trace, _) = generate_synthetic_trace(&spec, 3).unwrap();
        for r in trace.records() {
            assert!(r.address >= 0x800 && r.address < 0x800 + 1024);
            assert_eq!(r.address % 32, 0);
        }
    }

    #[test]
    fn tiled_pattern_wraps_rows_and_repeats() {
        let spec = SyntheticSpec {
            blocks: vec![BlockSpec {
                label: "t".into(),
                region: Region::Parallel,
                shared_section: false,
                instances: 6,
                refs_per_instance: 1,
                pattern: AccessPattern::Tiled {
                    base: 0,
                    rows: 2,
                    repeat: 2,
                    row_stride: 100,
                    stride: 1,
                },
                phase: 0,
            }],
        };
        let (trace, _) = generate_synthetic_trace(&spec, 0).unwrap();
        let addrs: Vec<u64> = trace.records().iter().map(|r| r.address).collect();
        assert_eq!(addrs, vec![0, 0, 100, 100, 0, 0]);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let empty = SyntheticSpec { blocks: vec![] };
        assert!(matches!(
            generate_synthetic_trace(&empty, 0),
            Err(SynthError::EmptySpec)
        ));

        let mut dup = tiny_spec();
        dup.blocks[1].label = "s".into();
        assert!(matches!(
            generate_synthetic_trace(&dup, 0),
            Err(SynthError::DuplicateLabel(_))
        ));

        let mut shared = tiny_spec();
        shared.blocks[0].shared_section = true;
        assert!(matches!(
            generate_synthetic_trace(&shared, 0),
            Err(SynthError::SharedSerial(_))
        ));

        let mut zero = tiny_spec();
        zero.blocks[0].instances = 0;
        zero.blocks[1].instances = 0;
        assert!(matches!(
            generate_synthetic_trace(&zero, 0),
            Err(SynthError::NoReferences)
        ));
    }

    #[test]
    fn generated_traces_round_trip_through_the_text_format() {
        for name in benchmark_names() {
            let spec = benchmark_spec(name, 1).unwrap();
            let (trace, bbs) = generate_synthetic_trace(&spec, 11).unwrap();
            let text = trace_to_string(&trace, &bbs);
            let (trace2, bbs2) = parse_trace_str(&text).unwrap();
            assert_eq!(trace.records(), trace2.records(), "{name}");
            assert_eq!(bbs, bbs2, "{name}");
        }
    }

    #[test]
    fn benchmarks_have_uniform_window_sizes_and_both_regions() {
        for name in benchmark_names() {
            let spec = benchmark_spec(name, 2).unwrap();
            let sizes: Vec<usize> = spec.blocks.iter().map(|b| b.refs_per_instance).collect();
            assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{name}");
            assert!(spec.blocks.iter().any(|b| b.region == Region::Serial));
            assert!(spec.blocks.iter().any(|b| b.region == Region::Parallel));
        }
        assert!(benchmark_spec("nope", 1).is_none());
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            [[blocks]]
            label = "walk"
            region = "parallel"
            instances = 4
            refs_per_instance = 2
            phase = 1
            pattern = { kind = "strided", base = 4096, stride = 64 }
        "#;
        let spec = SyntheticSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.blocks.len(), 1);
        assert_eq!(spec.blocks[0].region, Region::Parallel);
        assert_eq!(
            spec.blocks[0].pattern,
            AccessPattern::Strided { base: 4096, stride: 64 }
        );
        assert!(SyntheticSpec::from_toml_str("blocks = 3").is_err());
    }
}
