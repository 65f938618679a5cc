//! `gossipwatch` command line: crawl a (simulated) network, analyze exported
//! snapshots, and run/verify deterministic simulation scenarios.
//!
//! Exit codes: 0 success, 1 verification mismatches, 2 bad config or
//! unparseable input, 3 bind failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use gossipwatch_core::analyzer::{aggregate_with, render_report, DedupPolicy, OutlierRules};
use gossipwatch_core::crawler::{HostConfig, StaticGeoTable};
use gossipwatch_core::metrics::{decode_snapshot, encode_snapshot};
use gossipwatch_core::simnet::{
    encode_ground_truth, export_file_name, parse_ground_truth, parse_scenario, run_scenario,
    run_scenario_custom, verify_counters, verify_durations, LogLevel, SimError, SimOutput,
};

mod config;

const EXIT_VERIFY_MISMATCH: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_BIND_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gossipwatch",
    version,
    about = "Monitoring crawler and analyzer for GossipSub-style p2p networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the monitoring crawler and export periodic snapshots
    Crawl {
        /// Host config file (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output directory for snapshots and peerstore dumps
        #[arg(long)]
        out: PathBuf,
        /// Run duration in seconds (overrides the scenario duration)
        #[arg(long)]
        duration: Option<u64>,
        /// Transport to crawl over: `sim` or `live`
        #[arg(long, default_value = "sim")]
        transport: String,
        /// Simulated network to crawl (required with `--transport sim`)
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Seed override for the simulated network
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyze an exported snapshot into CSV tables and SVG charts
    Analyze {
        /// Snapshot JSON file
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the report
        #[arg(long)]
        out: PathBuf,
        /// Same-kind events within this window count once
        #[arg(long, default_value_t = 500)]
        window_ms: u64,
        /// Number of peers in the top-k share statistic
        #[arg(long, default_value_t = 10)]
        top_k: u64,
    },
    /// Run a simulation scenario, writing the snapshot and ground truth
    Simulate {
        /// Scenario file (JSON)
        #[arg(long)]
        scenario: PathBuf,
        /// Seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a snapshot against its ground-truth oracles
    Verify {
        /// Snapshot JSON file
        #[arg(long)]
        snapshot: PathBuf,
        /// Ground-truth JSON file
        #[arg(long)]
        truth: PathBuf,
        /// Allowed per-session deviation in milliseconds
        #[arg(long, default_value_t = 500)]
        tolerance_ms: u64,
    },
}

fn log_level() -> LogLevel {
    match std::env::var("GOSSIPWATCH_LOG").as_deref() {
        Ok("error") => LogLevel::Error,
        Ok("debug") => LogLevel::Debug,
        _ => LogLevel::Info,
    }
}

fn emit_logs(output: &SimOutput) {
    let max = log_level();
    let rank = |l: LogLevel| match l {
        LogLevel::Error => 0,
        LogLevel::Info => 1,
        LogLevel::Debug => 2,
    };
    for line in &output.logs {
        if rank(line.level) <= rank(max) {
            eprintln!("[{:>10}ms] {}", line.t_ms, line.msg);
        }
    }
}

fn read_file(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} `{}`", path.display()))
}

/// Writes atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f =
            fs::File::create(&tmp).with_context(|| format!("cannot create `{}`", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
        .with_context(|| format!("cannot move into place `{}`", path.display()))?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn load_geo_override(config: &HostConfig) -> Result<Option<StaticGeoTable>> {
    if config.geo_provider.provider == "static" && !config.geo_provider.path.is_empty() {
        let text = read_file(Path::new(&config.geo_provider.path), "geo data file")?;
        let table = StaticGeoTable::from_json(&text).map_err(|e| anyhow!("{e}"))?;
        return Ok(Some(table));
    }
    Ok(None)
}

fn cmd_crawl(
    config_path: &Path,
    out: &Path,
    duration_s: Option<u64>,
    transport: &str,
    scenario_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<u8> {
    if transport == "live" {
        eprintln!("error: the live transport is not supported in this build; use --transport sim");
        return Ok(EXIT_BAD_INPUT);
    }
    if transport != "sim" {
        eprintln!("error: unknown transport `{transport}` (expected sim or live)");
        return Ok(EXIT_BAD_INPUT);
    }
    let config_text = match read_file(config_path, "config file") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let config = match config::parse_host_config(&config_text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: bad config `{}`: {e:#}", config_path.display());
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let Some(scenario_path) = scenario_path else {
        eprintln!("error: --transport sim requires --scenario <file>");
        return Ok(EXIT_BAD_INPUT);
    };
    let scenario_text = match read_file(scenario_path, "scenario file") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let mut scenario = match parse_scenario(&scenario_text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(s) = duration_s {
        scenario.duration_ms = s.saturating_mul(1000).max(1);
    }
    let geo = match load_geo_override(&config) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: geo provider unavailable: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };

    let output = match run_scenario_custom(&scenario, config, geo) {
        Ok(o) => o,
        Err(SimError::BindFailure(m)) => {
            eprintln!("error: bind failure: {m}");
            return Ok(EXIT_BIND_FAILURE);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    emit_logs(&output);

    fs::create_dir_all(out)?;
    for export in &output.exports {
        write_atomic(
            &out.join(export_file_name(export.t_ms)),
            encode_snapshot(&export.snapshot).as_bytes(),
        )?;
        write_atomic(
            &out.join(format!("peerstore-{}.jsonl", export.t_ms)),
            export.peerstore.as_bytes(),
        )?;
    }
    println!("snapshots={} dir={}", output.exports.len(), out.display());
    println!(
        "peers_discovered={} peers_connected={}",
        output.snapshot.peers.len(),
        output.truth.sessions.len()
    );
    Ok(0)
}

fn cmd_analyze(input: &Path, out: &Path, window_ms: u64, top_k: u64) -> Result<u8> {
    let text = match read_file(input, "snapshot file") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let snapshot = match decode_snapshot(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    if window_ms == 0 {
        eprintln!("error: --window-ms must be positive");
        return Ok(EXIT_BAD_INPUT);
    }
    let policy = DedupPolicy { window_ms };
    let report = aggregate_with(&snapshot, &policy, top_k, &OutlierRules::default());
    let files = render_report(&report);
    fs::create_dir_all(out)?;
    for (name, bytes) in &files {
        write_atomic(&out.join(name), bytes)?;
    }

    println!("peerstore_size={}", report.summary.peerstore_size);
    println!("connected_count={}", report.summary.connected_count);
    for (topic, share) in &report.summary.top_shares {
        println!(
            "top_share topic={topic} k={} share={}",
            share.k,
            share.share_display()
        );
    }
    for (peer, flag) in &report.summary.outliers {
        println!("outlier peer={peer} flag={}", flag.as_str());
    }
    println!("report files={} dir={}", files.len(), out.display());
    Ok(0)
}

fn cmd_simulate(scenario_path: &Path, seed: Option<u64>, out: &Path) -> Result<u8> {
    let text = match read_file(scenario_path, "scenario file") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let mut scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let output = match run_scenario(&scenario) {
        Ok(o) => o,
        Err(SimError::BindFailure(m)) => {
            eprintln!("error: bind failure: {m}");
            return Ok(EXIT_BIND_FAILURE);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    emit_logs(&output);

    fs::create_dir_all(out)?;
    let snapshot_bytes = encode_snapshot(&output.snapshot);
    let truth_bytes = encode_ground_truth(&output.truth);
    write_atomic(&out.join("snapshot.json"), snapshot_bytes.as_bytes())?;
    write_atomic(&out.join("ground_truth.json"), truth_bytes.as_bytes())?;
    write_atomic(
        &out.join("peerstore.jsonl"),
        output.peerstore_dump.as_bytes(),
    )?;

    println!("snapshot sha256={}", sha256_hex(snapshot_bytes.as_bytes()));
    println!("ground_truth sha256={}", sha256_hex(truth_bytes.as_bytes()));
    println!(
        "peers={} publishes={} duration_ms={}",
        output.snapshot.peers.len(),
        output.truth.publishes.len(),
        scenario.duration_ms
    );
    Ok(0)
}

fn cmd_verify(snapshot_path: &Path, truth_path: &Path, tolerance_ms: u64) -> Result<u8> {
    let snapshot_text = match read_file(snapshot_path, "snapshot file") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let snapshot = match decode_snapshot(&snapshot_text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let truth_text = match read_file(truth_path, "ground-truth file") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(EXIT_BAD_INPUT);
        }
    };
    let truth = match parse_ground_truth(&truth_text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_BAD_INPUT);
        }
    };

    let counter_mismatches = verify_counters(&snapshot, &truth);
    let duration_mismatches = verify_durations(&snapshot, &truth, tolerance_ms);
    for m in &counter_mismatches {
        println!("{m}");
    }
    for m in &duration_mismatches {
        println!("{m}");
    }
    println!(
        "counters={} durations={}",
        if counter_mismatches.is_empty() {
            "OK"
        } else {
            "MISMATCH"
        },
        if duration_mismatches.is_empty() {
            "OK"
        } else {
            "MISMATCH"
        },
    );
    if counter_mismatches.is_empty() && duration_mismatches.is_empty() {
        Ok(0)
    } else {
        Ok(EXIT_VERIFY_MISMATCH)
    }
}

fn main() -> ExitCode {
    // behave like a normal unix tool when stdout is a closed pipe
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Crawl {
            config,
            out,
            duration,
            transport,
            scenario,
            seed,
        } => cmd_crawl(
            config,
            out,
            *duration,
            transport,
            scenario.as_deref(),
            *seed,
        ),
        Command::Analyze {
            input,
            out,
            window_ms,
            top_k,
        } => cmd_analyze(input, out, *window_ms, *top_k),
        Command::Simulate {
            scenario,
            seed,
            out,
        } => cmd_simulate(scenario, *seed, out),
        Command::Verify {
            snapshot,
            truth,
            tolerance_ms,
        } => cmd_verify(snapshot, truth, *tolerance_ms),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}
