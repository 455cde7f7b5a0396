//! End-to-end tests of the command-line surface: argument parsing, env
//! overrides, report files, and exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use tempfile::tempdir;

use mimicache::mimic::{ChunkSize, InterleaveStrategy};
use mimicache::sim::L2Mode;
use mimicache::trace::read_trace_file;
use mimicache_cli::cli::{self, Cli, Command as Cmd};

const HIERARCHY_TOML: &str = "\
[[level]]
name = \"L1\"
capacity = \"8KB\"
associativity = 8
line_size = 64
scope = \"private\"

[[level]]
name = \"L2\"
capacity = \"128KB\"
associativity = 16
line_size = 64
scope = \"shared\"
";

fn write_hierarchy(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("hier.toml");
    fs::write(&path, HIERARCHY_TOML).unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimicache"))
}

#[test]
fn parsing_fills_defaults_and_rejects_bad_values() {
    let cli = Cli::try_parse_from(["mimicache", "predict", "--trace", "t", "--hierarchy", "h"])
        .unwrap();
    let Cmd::Predict(args) = cli.command else {
        panic!("expected predict");
    };
    assert_eq!(args.model.cores, 2);
    assert_eq!(args.model.chunk, ChunkSize::Auto);
    assert_eq!(args.model.strategy, InterleaveStrategy::RoundRobin);
    assert_eq!(args.model.sample_fraction, 0.01);
    assert_eq!(args.model.min_windows, 10);
    assert!(args.out.is_none());

    let cli = Cli::try_parse_from([
        "mimicache", "compare", "--trace", "a", "--trace", "b", "--hierarchy", "h",
        "--chunk", "3", "--strategy", "uniform", "--l2-mode", "filtered",
    ])
    .unwrap();
    let Cmd::Compare(args) = cli.command else {
        panic!("expected compare");
    };
    assert_eq!(args.traces.len(), 2);
    assert_eq!(args.model.chunk, ChunkSize::Fixed(3));
    assert_eq!(args.model.strategy, InterleaveStrategy::Uniform);
    assert_eq!(args.threshold, 5.0);
    assert_eq!(args.l2_mode, L2Mode::Filtered);

    let cli = Cli::try_parse_from([
        "mimicache", "sweep", "--trace", "t", "--hierarchy", "h",
        "--l1-capacity-list", "4KB,8KB",
    ])
    .unwrap();
    let Cmd::Sweep(args) = cli.command else {
        panic!("expected sweep");
    };
    assert_eq!(args.cores_list, [1, 2, 4, 8, 16]);
    assert_eq!(args.strategy_list, [InterleaveStrategy::RoundRobin]);
    assert_eq!(args.l1_capacity_list, Some(vec![4096, 8192]));

    for bad in [
        vec!["mimicache", "predict", "--trace", "t", "--hierarchy", "h", "--chunk", "0"],
        vec!["mimicache", "predict", "--trace", "t", "--hierarchy", "h", "--strategy", "zigzag"],
        vec!["mimicache", "sweep", "--trace", "t", "--hierarchy", "h", "--l1-capacity-list", "8XB"],
        vec!["mimicache", "gen-trace", "--out", "o"], // neither --benchmark nor --spec
    ] {
        assert!(Cli::try_parse_from(bad).is_err());
    }
}

#[test]
fn environment_variables_override_defaults() {
    let dir = tempdir().unwrap();
    let hier = write_hierarchy(dir.path());
    let status = bin()
        .args(["gen-trace", "--benchmark", "stencil", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());

    let out = bin()
        .args(["predict", "--hierarchy"])
        .arg(&hier)
        .env("MIMICACHE_TRACE", dir.path().join("stencil.trace.gz"))
        .env("MIMICACHE_CORES", "4")
        .env("MIMICACHE_STRATEGY", "uniform")
        .env("MIMICACHE_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cores=4"), "stdout: {stdout}");
    assert!(stdout.contains("strategy=uniform"), "stdout: {stdout}");
    assert!(stdout.contains("seed=9"), "stdout: {stdout}");
    assert!(stdout.contains("L1 core 3"), "stdout: {stdout}");
}

#[test]
fn generate_predict_compare_round_trip() {
    let dir = tempdir().unwrap();
    let hier = write_hierarchy(dir.path());
    let traces = dir.path().join("traces");
    let out = dir.path().join("out");

    let status = bin()
        .args(["gen-trace", "--benchmark", "all", "--scale", "1", "--out"])
        .arg(&traces)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["stencil", "graph", "gemm"] {
        assert!(traces.join(format!("{name}.trace.gz")).is_file());
    }

    let status = bin()
        .args(["predict", "--cores", "2", "--sample-fraction", "1.0", "--hierarchy"])
        .arg(&hier)
        .arg("--trace")
        .arg(traces.join("gemm.trace.gz"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["source"], "predicted");
    assert_eq!(report["inputs"]["seed"], 0);
    assert_eq!(report["hit_rates"]["per_core_private"].as_array().unwrap().len(), 2);
    for core in 0..2 {
        let csv = fs::read_to_string(out.join(format!("prd_core_{core}.csv"))).unwrap();
        assert!(csv.starts_with("distance,probability\n"));
    }
    assert!(out.join("crd.csv").is_file());

    let output = bin()
        .args(["compare", "--cores", "2", "--sample-fraction", "1.0", "--hierarchy"])
        .arg(&hier)
        .arg("--trace")
        .arg(traces.join("stencil.trace.gz"))
        .arg("--trace")
        .arg(traces.join("gemm.trace.gz"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("PASS"), "stdout: {stdout}");

    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["passed"], true);
    assert_eq!(cmp["rows"].as_array().unwrap().len(), 4); // 2 apps x 2 levels
    assert_eq!(cmp["rows"][0]["application"], "stencil");
    assert_eq!(cmp["aggregates"].as_array().unwrap().len(), 2);
}

#[test]
fn compare_exit_code_flags_threshold_breaches() {
    let dir = tempdir().unwrap();
    let hier = write_hierarchy(dir.path());
    let status = bin()
        .args(["gen-trace", "--benchmark", "stencil", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());

    // The model rates the shared level against the full interleaved stream,
    // so comparing against a filtered simulation misses by far more than any
    // sane threshold; the breach must surface as exit code 2.
    let output = bin()
        .args(["compare", "--cores", "2", "--sample-fraction", "1.0", "--l2-mode", "filtered"])
        .arg("--hierarchy")
        .arg(&hier)
        .arg("--trace")
        .arg(dir.path().join("stencil.trace.gz"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("FAIL"), "stdout: {stdout}");

    // The printed per-row error is in percentage points: the L2 gap here is
    // tens of points, not a sub-1.0 fraction difference.
    let l2_row = stdout
        .lines()
        .find(|l| l.trim_start().starts_with("stencil") && l.contains("L2"))
        .expect("L2 row in the table");
    let printed_pp: f64 = l2_row
        .split_whitespace()
        .last()
        .unwrap()
        .trim_end_matches("pp")
        .parse()
        .unwrap();
    assert!(printed_pp.abs() > 10.0, "row: {l2_row}");
}

#[test]
fn unknown_benchmark_is_a_plain_error() {
    let dir = tempdir().unwrap();
    let output = bin()
        .args(["gen-trace", "--benchmark", "sorting", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("unknown benchmark"), "stderr: {stderr}");
}

#[test]
fn gen_trace_accepts_a_toml_spec() {
    let dir = tempdir().unwrap();
    let spec_path = dir.path().join("two_phase.toml");
    fs::write(
        &spec_path,
        "\
[[blocks]]
label = \"setup\"
region = \"serial\"
instances = 4
refs_per_instance = 16
pattern = { kind = \"strided\", base = 0, stride = 64 }

[[blocks]]
label = \"work\"
region = \"parallel\"
instances = 8
refs_per_instance = 16
phase = 1
pattern = { kind = \"strided\", base = 65536, stride = 64 }
",
    )
    .unwrap();

    let args = cli::GenTraceArgs {
        benchmark: None,
        spec: Some(spec_path),
        scale: 1,
        seed: 3,
        out: dir.path().to_path_buf(),
    };
    assert_eq!(cli::cmd_gen_trace(&args).unwrap(), 0);

    let written = dir.path().join("two_phase.trace.gz");
    let (trace, bbs) = read_trace_file(&written).unwrap();
    assert_eq!(trace.len(), 4 * 16 + 8 * 16);
    assert_eq!(bbs.len(), 2);
}

#[test]
fn sweep_covers_the_grid_and_capacity_is_monotone() {
    let dir = tempdir().unwrap();
    let hier = write_hierarchy(dir.path());
    let gen = cli::GenTraceArgs {
        benchmark: Some("gemm".into()),
        spec: None,
        scale: 1,
        seed: 0,
        out: dir.path().to_path_buf(),
    };
    cli::cmd_gen_trace(&gen).unwrap();

    let cli = Cli::try_parse_from([
        "mimicache",
        "sweep",
        "--trace",
        dir.path().join("gemm.trace.gz").to_str().unwrap(),
        "--hierarchy",
        hier.to_str().unwrap(),
        "--cores-list",
        "1,2",
        "--strategy-list",
        "round-robin,uniform",
        "--l1-capacity-list",
        "2KB,8KB,32KB",
        "--sample-fraction",
        "1.0",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(cli::run(cli).unwrap(), 0);

    let doc: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/sweep.json")).unwrap(),
    )
    .unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);

    // Rows are ordered by (cores, strategy, capacity); within each pair the
    // private rate must not decrease as its capacity grows.
    for chunk in rows.chunks(3) {
        let rates: Vec<f64> = chunk
            .iter()
            .map(|r| r["private_aggregate"].as_f64().unwrap())
            .collect();
        assert!(rates[0] <= rates[1] + 1e-12 && rates[1] <= rates[2] + 1e-12, "{rates:?}");
        let caps: Vec<u64> = chunk
            .iter()
            .map(|r| r["l1_capacity_bytes"].as_u64().unwrap())
            .collect();
        assert_eq!(caps, [2048, 8192, 32768]);
    }
}

#[test]
fn single_core_prediction_in_an_oversized_cache_leaves_only_cold_misses() {
    let dir = tempdir().unwrap();
    // 4 lines walked 256 times over: every reuse distance is 3, below the
    // 8-way associativity, so only the 4 first touches can miss.
    let spec = "\
[[blocks]]
label = \"walk\"
region = \"serial\"
instances = 256
refs_per_instance = 4
pattern = { kind = \"tiled\", base = 0, rows = 1, row_stride = 0, stride = 64 }
";
    let spec_path = dir.path().join("walk.toml");
    fs::write(&spec_path, spec).unwrap();
    let gen = cli::GenTraceArgs {
        benchmark: None,
        spec: Some(spec_path),
        scale: 1,
        seed: 0,
        out: dir.path().to_path_buf(),
    };
    cli::cmd_gen_trace(&gen).unwrap();
    let hier = write_hierarchy(dir.path());

    let cli = Cli::try_parse_from([
        "mimicache",
        "predict",
        "--trace",
        dir.path().join("walk.trace.gz").to_str().unwrap(),
        "--hierarchy",
        hier.to_str().unwrap(),
        "--cores",
        "1",
        "--sample-fraction",
        "1.0",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(cli::run(cli).unwrap(), 0);

    let doc: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/report.json")).unwrap(),
    )
    .unwrap();
    let predicted = doc["hit_rates"]["private_aggregate"].as_f64().unwrap();
    let expected = 1.0 - 4.0 / (256.0 * 4.0);
    assert!((predicted - expected).abs() < 1e-9, "{predicted} vs {expected}");
}

#[test]
fn fully_associative_hierarchy_at_full_sampling_is_exact() {
    let dir = tempdir().unwrap();
    let hier_path = dir.path().join("fa.toml");
    fs::write(
        &hier_path,
        "\
[[level]]
name = \"L1\"
capacity = \"4KB\"
associativity = 64
line_size = 64
scope = \"private\"

[[level]]
name = \"L2\"
capacity = \"32KB\"
associativity = 512
line_size = 64
scope = \"shared\"
",
    )
    .unwrap();
    // gemm's parallel blocks are all multi-window, so each window lands on
    // exactly one core and the block weights track reference counts; with
    // exhaustive sampling and fully-associative levels the prediction is the
    // simulated rate up to rounding.
    let gen = cli::GenTraceArgs {
        benchmark: Some("gemm".into()),
        spec: None,
        scale: 1,
        seed: 0,
        out: dir.path().to_path_buf(),
    };
    cli::cmd_gen_trace(&gen).unwrap();

    let cli = Cli::try_parse_from([
        "mimicache",
        "compare",
        "--trace",
        dir.path().join("gemm.trace.gz").to_str().unwrap(),
        "--hierarchy",
        hier_path.to_str().unwrap(),
        "--cores",
        "2",
        "--sample-fraction",
        "1.0",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(cli::run(cli).unwrap(), 0);

    let doc: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/comparison.json")).unwrap(),
    )
    .unwrap();
    for row in doc["rows"].as_array().unwrap() {
        let err = row["abs_error_pp"].as_f64().unwrap();
        assert!(err < 1e-7, "row {row} error {err}");
    }
}
