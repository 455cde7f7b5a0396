//! Command-line interface: argument definitions and command dispatch.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};

use mimicache::mimic::{ChunkSize, InterleaveStrategy};
use mimicache::scalar::geometric_mean;
use mimicache::sdcm::{parse_capacity, HierarchyConfig};
use mimicache::sim::L2Mode;
use mimicache::synth::{benchmark_names, benchmark_spec, generate_synthetic_trace, SyntheticSpec};
use mimicache::trace::write_trace_file;

use crate::manifest::RunManifest;
use crate::pipeline::{self, load_hierarchy, load_trace, PredictOutcome};
use crate::report::{
    self, CompareAggregate, CompareReport, CompareRow, SweepReport, SweepRow, SCHEMA_VERSION,
};
use crate::table::{fmt_pp, fmt_rate, render};

#[derive(Parser)]
#[command(
    name = "mimicache",
    version,
    about = "Predicts multicore cache hit rates from one sequential, \
             basic-block-labeled memory trace"
)]
pub struct Cli {
    /// Worker threads for parallel stages (0 = one per CPU).
    #[arg(long, global = true, default_value_t = 0, env = "MIMICACHE_WORKERS")]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Predict private and shared hit rates for one trace.
    Predict(PredictArgs),
    /// Predict and simulate, reporting per-level errors against a threshold.
    Compare(CompareArgs),
    /// Predict across a grid of core counts, strategies, and capacities.
    Sweep(SweepArgs),
    /// Replay the mimicked execution through the reference LRU simulator.
    Simulate(SimulateArgs),
    /// Generate a synthetic trace from a bundled benchmark or a TOML spec.
    GenTrace(GenTraceArgs),
}

/// Knobs shared by every modeling command.
#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Number of cores the execution is mimicked onto.
    #[arg(long, default_value_t = 2, env = "MIMICACHE_CORES")]
    pub cores: u32,

    /// Windows per scheduling chunk, or `auto` for windows/cores.
    #[arg(long, default_value_t = ChunkSize::Auto, env = "MIMICACHE_CHUNK")]
    pub chunk: ChunkSize,

    /// Interleaving strategy: `round-robin` or `uniform`.
    #[arg(long, default_value_t = InterleaveStrategy::RoundRobin, env = "MIMICACHE_STRATEGY")]
    pub strategy: InterleaveStrategy,

    /// Seed for window sampling and uniform interleaving.
    #[arg(long, default_value_t = 0, env = "MIMICACHE_SEED")]
    pub seed: u64,

    /// Address offset between cores' copies of unshared parallel blocks.
    #[arg(long, default_value_t = 1 << 40, env = "MIMICACHE_OFFSET_STRIDE")]
    pub offset_stride: u64,

    /// Fraction of each block's windows profiled (0 < f <= 1).
    #[arg(long, default_value_t = 0.01, env = "MIMICACHE_SAMPLE_FRACTION")]
    pub sample_fraction: f64,

    /// Minimum windows profiled per block, when available.
    #[arg(long, default_value_t = 10, env = "MIMICACHE_MIN_WINDOWS")]
    pub min_windows: usize,
}

impl ModelArgs {
    fn manifest(&self, trace: &Path, hierarchy: &Path, out: Option<&Path>, workers: usize) -> RunManifest {
        RunManifest {
            trace: trace.to_path_buf(),
            hierarchy: hierarchy.to_path_buf(),
            cores: self.cores,
            chunk: self.chunk,
            strategy: self.strategy,
            seed: self.seed,
            offset_stride: self.offset_stride,
            sample_fraction: self.sample_fraction,
            min_windows: self.min_windows,
            out: out.map(Path::to_path_buf),
            workers,
        }
    }
}

#[derive(Args)]
pub struct PredictArgs {
    /// Input trace (`.trace`, or `.trace.gz` for gzip).
    #[arg(long, env = "MIMICACHE_TRACE")]
    pub trace: PathBuf,

    /// Cache hierarchy TOML file.
    #[arg(long, env = "MIMICACHE_HIERARCHY")]
    pub hierarchy: PathBuf,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Directory for report.json and the profile CSVs.
    #[arg(long, env = "MIMICACHE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Input trace; repeat the flag (or comma-separate) for several
    /// applications.
    #[arg(long = "trace", required = true, value_delimiter = ',', env = "MIMICACHE_TRACE")]
    pub traces: Vec<PathBuf>,

    /// Cache hierarchy TOML file.
    #[arg(long, env = "MIMICACHE_HIERARCHY")]
    pub hierarchy: PathBuf,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Largest tolerated |predicted - simulated|, in percentage points.
    #[arg(long, default_value_t = 5.0, env = "MIMICACHE_THRESHOLD")]
    pub threshold: f64,

    /// What the simulated shared cache sees: `direct` (every reference,
    /// matching the model) or `filtered` (private misses only).
    #[arg(long, default_value_t = L2Mode::DirectDrive, env = "MIMICACHE_L2_MODE")]
    pub l2_mode: L2Mode,

    /// Directory for comparison.json.
    #[arg(long, env = "MIMICACHE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Input trace, parsed once for the whole sweep.
    #[arg(long, env = "MIMICACHE_TRACE")]
    pub trace: PathBuf,

    /// Cache hierarchy TOML file.
    #[arg(long, env = "MIMICACHE_HIERARCHY")]
    pub hierarchy: PathBuf,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Core counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16", env = "MIMICACHE_CORES_LIST")]
    pub cores_list: Vec<u32>,

    /// Interleaving strategies to sweep.
    #[arg(long, value_delimiter = ',', default_value = "round-robin", env = "MIMICACHE_STRATEGY_LIST")]
    pub strategy_list: Vec<InterleaveStrategy>,

    /// Private-level capacities to sweep (e.g. `8KB,16KB`); defaults to the
    /// hierarchy file's capacity.
    #[arg(long, value_delimiter = ',', value_parser = parse_capacity_arg, env = "MIMICACHE_L1_CAPACITY_LIST")]
    pub l1_capacity_list: Option<Vec<u64>>,

    /// Directory for sweep.json.
    #[arg(long, env = "MIMICACHE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Input trace (`.trace`, or `.trace.gz` for gzip).
    #[arg(long, env = "MIMICACHE_TRACE")]
    pub trace: PathBuf,

    /// Cache hierarchy TOML file.
    #[arg(long, env = "MIMICACHE_HIERARCHY")]
    pub hierarchy: PathBuf,

    #[command(flatten)]
    pub model: ModelArgs,

    /// What the shared cache sees: `filtered` (private misses, inclusive
    /// back-invalidation) or `direct` (every reference).
    #[arg(long, default_value_t = L2Mode::Filtered, env = "MIMICACHE_L2_MODE")]
    pub l2_mode: L2Mode,

    /// Directory for simulation.json.
    #[arg(long, env = "MIMICACHE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = ArgGroup::new("source").required(true))]
pub struct GenTraceArgs {
    /// Bundled benchmark: `stencil`, `graph`, `gemm`, or `all`.
    #[arg(long, group = "source", env = "MIMICACHE_BENCHMARK")]
    pub benchmark: Option<String>,

    /// TOML block-spec file to generate from instead.
    #[arg(long, group = "source", env = "MIMICACHE_SPEC")]
    pub spec: Option<PathBuf>,

    /// Working-set scale for bundled benchmarks.
    #[arg(long, default_value_t = 1, env = "MIMICACHE_SCALE")]
    pub scale: u64,

    /// Seed for random-pattern blocks.
    #[arg(long, default_value_t = 0, env = "MIMICACHE_SEED")]
    pub seed: u64,

    /// Directory the `<name>.trace.gz` files are written into.
    #[arg(long, env = "MIMICACHE_OUT")]
    pub out: PathBuf,
}

fn parse_capacity_arg(text: &str) -> Result<u64, String> {
    parse_capacity(text).map_err(|e| e.to_string())
}

/// Runs a parsed command line inside a worker pool; returns the exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if cli.workers > 0 {
        builder = builder.num_threads(cli.workers);
    }
    let pool = builder.build().context("building worker pool")?;
    let workers = cli.workers;
    pool.install(|| match cli.command {
        Command::Predict(args) => cmd_predict(&args, workers),
        Command::Compare(args) => cmd_compare(&args, workers),
        Command::Sweep(args) => cmd_sweep(&args, workers),
        Command::Simulate(args) => cmd_simulate(&args, workers),
        Command::GenTrace(args) => cmd_gen_trace(&args),
    })
}

pub fn cmd_predict(args: &PredictArgs, workers: usize) -> Result<i32> {
    let manifest = args
        .model
        .manifest(&args.trace, &args.hierarchy, args.out.as_deref(), workers);
    let input = load_trace(&args.trace)?;
    let hierarchy = load_hierarchy(&args.hierarchy)?;
    let outcome = pipeline::predict_parsed(&input, &hierarchy, &manifest)?;

    println!(
        "predicted hit rates for {} (cores={}, strategy={}, chunk={}, seed={})",
        args.trace.display(),
        manifest.cores,
        manifest.strategy,
        manifest.chunk,
        manifest.seed,
    );
    print!("{}", predict_table(&hierarchy, &outcome));

    if let Some(dir) = &args.out {
        for path in report::write_predict_outputs(dir, &manifest, &hierarchy, &outcome)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(0)
}

fn predict_table(hierarchy: &HierarchyConfig, outcome: &PredictOutcome) -> String {
    let private = &hierarchy.private_level().name;
    let shared = &hierarchy.shared_level().name;
    let mut rows = Vec::new();
    for (core, rate) in outcome.report.per_core_private.iter().enumerate() {
        rows.push(vec![format!("{private} core {core}"), fmt_rate(*rate)]);
    }
    rows.push(vec![
        format!("{private} geomean"),
        fmt_rate(outcome.report.private_aggregate),
    ]);
    rows.push(vec![shared.clone(), fmt_rate(outcome.report.shared)]);
    render(&["level", "predicted hit rate"], &rows)
}

pub fn cmd_simulate(args: &SimulateArgs, workers: usize) -> Result<i32> {
    let manifest = args
        .model
        .manifest(&args.trace, &args.hierarchy, args.out.as_deref(), workers);
    let input = load_trace(&args.trace)?;
    let hierarchy = load_hierarchy(&args.hierarchy)?;
    let (pset, shared) = pipeline::mimic_parsed(&input, &manifest)?;
    let result = pipeline::simulate_parts(&pset, &shared, &hierarchy, args.l2_mode)?;

    println!(
        "simulated {} on {} cores ({} shared level)",
        args.trace.display(),
        manifest.cores,
        args.l2_mode,
    );
    let private = &hierarchy.private_level().name;
    let mut rows: Vec<Vec<String>> = result
        .per_core_private
        .iter()
        .enumerate()
        .map(|(core, r)| counter_row(format!("{private} core {core}"), r.stats))
        .collect();
    rows.push(counter_row(
        hierarchy.shared_level().name.clone(),
        result.shared.stats,
    ));
    print!(
        "{}",
        render(&["level", "hits", "misses", "evictions", "hit rate"], &rows)
    );

    if let Some(dir) = &args.out {
        for path in report::write_simulate_outputs(dir, &manifest, &hierarchy, &result)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(0)
}

fn counter_row(level: String, stats: mimicache::sim::CacheStats) -> Vec<String> {
    vec![
        level,
        stats.hits.to_string(),
        stats.misses.to_string(),
        stats.evictions.to_string(),
        stats
            .hit_rate()
            .map_or_else(|| "n/a".into(), fmt_rate),
    ]
}

/// Strips `.trace` / `.trace.gz` to name the application in reports.
fn app_name(path: &Path) -> String {
    let base = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    base.trim_end_matches(".gz")
        .trim_end_matches(".trace")
        .to_string()
}

pub fn cmd_compare(args: &CompareArgs, workers: usize) -> Result<i32> {
    let hierarchy = load_hierarchy(&args.hierarchy)?;
    let manifest = args.model.manifest(
        &args.traces[0],
        &args.hierarchy,
        args.out.as_deref(),
        workers,
    );

    let private_name = hierarchy.private_level().name.clone();
    let shared_name = hierarchy.shared_level().name.clone();
    let mut rows: Vec<CompareRow> = Vec::new();
    for trace_path in &args.traces {
        let application = app_name(trace_path);
        let input = load_trace(trace_path)?;
        let run_manifest = args
            .model
            .manifest(trace_path, &args.hierarchy, args.out.as_deref(), workers);
        let outcome = pipeline::predict_parsed(&input, &hierarchy, &run_manifest)?;
        let sim = pipeline::simulate_parts(&outcome.pset, &outcome.shared, &hierarchy, args.l2_mode)?;

        let sim_private: Vec<f64> = sim
            .per_core_private
            .iter()
            .map(|r| {
                r.stats.hit_rate().with_context(|| {
                    format!("compare stage: {application}: a private cache saw no accesses")
                })
            })
            .collect::<Result<_>>()?;
        let sim_shared = sim.shared.stats.hit_rate().with_context(|| {
            format!("compare stage: {application}: the shared cache saw no accesses")
        })?;

        let predicted_private = outcome.report.private_aggregate;
        let simulated_private = geometric_mean(&sim_private);
        rows.push(CompareRow {
            application: application.clone(),
            level: private_name.clone(),
            predicted: predicted_private,
            simulated: simulated_private,
            abs_error_pp: (predicted_private - simulated_private).abs() * 100.0,
        });
        rows.push(CompareRow {
            application,
            level: shared_name.clone(),
            predicted: outcome.report.shared,
            simulated: sim_shared,
            abs_error_pp: (outcome.report.shared - sim_shared).abs() * 100.0,
        });
    }

    let aggregates: Vec<CompareAggregate> = [&private_name, &shared_name]
        .into_iter()
        .map(|level| {
            let level_rows: Vec<&CompareRow> =
                rows.iter().filter(|r| &r.level == level).collect();
            let predicted: Vec<f64> = level_rows.iter().map(|r| r.predicted).collect();
            let simulated: Vec<f64> = level_rows.iter().map(|r| r.simulated).collect();
            let abs_errors: Vec<f64> = level_rows.iter().map(|r| r.abs_error_pp).collect();
            CompareAggregate {
                level: level.clone(),
                geomean_predicted: geometric_mean(&predicted),
                geomean_simulated: geometric_mean(&simulated),
                mean_abs_error_pp: abs_errors.iter().sum::<f64>() / abs_errors.len() as f64,
                geomean_abs_error_pp: geometric_mean(&abs_errors),
                max_abs_error_pp: abs_errors.iter().fold(0.0, |a, &b| a.max(b)),
            }
        })
        .collect();

    let worst = rows.iter().map(|r| r.abs_error_pp).fold(0.0, f64::max);
    let passed = worst <= args.threshold;

    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.application.clone(),
                r.level.clone(),
                fmt_rate(r.predicted),
                fmt_rate(r.simulated),
                fmt_pp((r.predicted - r.simulated) * 100.0),
            ]
        })
        .collect();
    print!(
        "{}",
        render(
            &["application", "level", "predicted", "simulated", "error"],
            &table_rows,
        )
    );
    for agg in &aggregates {
        println!(
            "{}: geomean predicted {} vs simulated {}, mean |error| {:.2}pp, max {:.2}pp",
            agg.level,
            fmt_rate(agg.geomean_predicted),
            fmt_rate(agg.geomean_simulated),
            agg.mean_abs_error_pp,
            agg.max_abs_error_pp,
        );
    }
    println!(
        "{}: max |error| {:.2}pp vs threshold {:.2}pp",
        if passed { "PASS" } else { "FAIL" },
        worst,
        args.threshold,
    );

    let doc = CompareReport {
        schema_version: SCHEMA_VERSION,
        threshold_pp: args.threshold,
        l2_mode: args.l2_mode,
        inputs: &manifest,
        traces: args.traces.clone(),
        rows,
        aggregates,
        passed,
    };
    if let Some(dir) = &args.out {
        let path = report::write_file(dir, "comparison.json", &report::to_json(&doc)?)?;
        println!("wrote {}", path.display());
    }
    Ok(if passed { 0 } else { 2 })
}

pub fn cmd_sweep(args: &SweepArgs, workers: usize) -> Result<i32> {
    if args.cores_list.is_empty() {
        bail!("sweep stage: --cores-list is empty");
    }
    if args.strategy_list.is_empty() {
        bail!("sweep stage: --strategy-list is empty");
    }
    let input = load_trace(&args.trace)?;
    let base_hierarchy = load_hierarchy(&args.hierarchy)?;
    let manifest = args
        .model
        .manifest(&args.trace, &args.hierarchy, args.out.as_deref(), workers);

    let capacities: Vec<u64> = args
        .l1_capacity_list
        .clone()
        .unwrap_or_else(|| vec![base_hierarchy.private_level().cache.capacity_bytes()]);

    let mut rows = Vec::new();
    for &cores in &args.cores_list {
        for &strategy in &args.strategy_list {
            for &capacity in &capacities {
                let hierarchy = base_hierarchy
                    .with_private_capacity(capacity)
                    .context("sweep stage: resizing the private level")?;
                let mut point = manifest.clone();
                point.cores = cores;
                point.strategy = strategy;
                let outcome = pipeline::predict_parsed(&input, &hierarchy, &point)
                    .with_context(|| {
                        format!("sweep stage: cores={cores} strategy={strategy} l1={capacity}")
                    })?;
                rows.push(SweepRow {
                    cores,
                    strategy: strategy.to_string(),
                    l1_capacity_bytes: capacity,
                    per_core_private: outcome.report.per_core_private.clone(),
                    private_aggregate: outcome.report.private_aggregate,
                    shared: outcome.report.shared,
                });
            }
        }
    }

    let private_name = &base_hierarchy.private_level().name;
    let shared_name = &base_hierarchy.shared_level().name;
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.cores.to_string(),
                r.strategy.clone(),
                r.l1_capacity_bytes.to_string(),
                fmt_rate(r.private_aggregate),
                fmt_rate(r.shared),
            ]
        })
        .collect();
    print!(
        "{}",
        render(
            &[
                "cores",
                "strategy",
                "l1 bytes",
                &format!("{private_name} geomean"),
                shared_name,
            ],
            &table_rows,
        )
    );

    let doc = SweepReport {
        schema_version: SCHEMA_VERSION,
        inputs: &manifest,
        cores_axis: &args.cores_list,
        strategy_axis: args.strategy_list.iter().map(|s| s.to_string()).collect(),
        l1_capacity_axis: args.l1_capacity_list.clone(),
        rows,
    };
    if let Some(dir) = &args.out {
        let path = report::write_file(dir, "sweep.json", &report::to_json(&doc)?)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

pub fn cmd_gen_trace(args: &GenTraceArgs) -> Result<i32> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    let specs: Vec<(String, SyntheticSpec)> = if let Some(name) = &args.benchmark {
        let names: Vec<&str> = if name == "all" {
            benchmark_names().to_vec()
        } else if benchmark_names().contains(&name.as_str()) {
            vec![name.as_str()]
        } else {
            bail!(
                "unknown benchmark `{name}` (expected one of {}, or `all`)",
                benchmark_names().join(", "),
            );
        };
        names
            .into_iter()
            .map(|n| {
                let spec = benchmark_spec(n, args.scale).expect("bundled name");
                (n.to_string(), spec)
            })
            .collect()
    } else {
        let path = args.spec.as_ref().expect("clap requires one source");
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading spec {}", path.display()))?;
        let spec = SyntheticSpec::from_toml_str(&text)
            .with_context(|| format!("parsing spec {}", path.display()))?;
        let stem = path
            .file_stem()
            .map_or_else(|| "trace".to_string(), |s| s.to_string_lossy().into_owned());
        vec![(stem, spec)]
    };

    for (name, spec) in &specs {
        let (trace, bbs) = generate_synthetic_trace(spec, args.seed)
            .with_context(|| format!("generating `{name}`"))?;
        let path = args.out.join(format!("{name}.trace.gz"));
        write_trace_file(&path, &trace, &bbs)
            .with_context(|| format!("writing {}", path.display()))?;
        println!(
            "wrote {} ({} references, {} blocks)",
            path.display(),
            trace.len(),
            bbs.len(),
        );
    }
    Ok(0)
}
