//! Command-line behavior: exit codes, golden report output, the dedup
//! window flag, and fault injection through `verify`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gossipwatch"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn manifest_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn table3_fixture() -> PathBuf {
    manifest_path("../core/tests/fixtures/table3.json")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn analyze_matches_the_golden_report() {
    let out = tmp_dir("golden-check");
    let status = bin()
        .arg("analyze")
        .arg("--input")
        .arg(table3_fixture())
        .arg("--out")
        .arg(&out)
        .env("GOSSIPWATCH_LOG", "error")
        .status()
        .unwrap();
    assert!(status.success());

    let golden_dir = manifest_path("tests/golden/table3_report");
    let mut golden: Vec<String> = fs::read_dir(&golden_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    golden.sort();
    assert_eq!(golden.len(), 17);
    for name in golden {
        let expected = fs::read(golden_dir.join(&name)).unwrap();
        let actual = fs::read(out.join(&name)).unwrap();
        assert_eq!(actual, expected, "`{name}` deviates from the golden report");
    }
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let out = tmp_dir("missing-config");
    let output = bin()
        .arg("crawl")
        .args(["--config", "/nonexistent/config.json"])
        .arg("--out")
        .arg(&out)
        .arg("--scenario")
        .arg(manifest_path("scenarios/basic_50.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("/nonexistent/config.json"));
}

#[test]
fn corrupted_snapshot_exits_2() {
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("corrupt.json");
    fs::write(&path, "{ this is not json").unwrap();
    let out = tmp_dir("corrupt-report");
    let output = bin()
        .arg("analyze")
        .arg("--input")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn schema_violation_names_the_field() {
    let fixture = fs::read_to_string(table3_fixture()).unwrap();
    let broken = fixture.replace("\"captured_at_ms\":2000000,", "");
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("no-captured-at.json");
    fs::write(&path, broken).unwrap();
    let out = tmp_dir("schema-report");
    let output = bin()
        .arg("analyze")
        .arg("--input")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("captured_at_ms"));
}

#[test]
fn port_conflict_exits_3() {
    // simulated peer 0 occupies 198.51.100.1:9000
    let config = Path::new(env!("CARGO_TARGET_TMPDIR")).join("conflict-config.json");
    fs::write(
        &config,
        r#"{"ip": "198.51.100.1", "tcp_port": 9000, "udp_port": 9000}"#,
    )
    .unwrap();
    let out = tmp_dir("conflict-out");
    let output = bin()
        .arg("crawl")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--scenario")
        .arg(manifest_path("scenarios/basic_50.json"))
        .args(["--duration", "5"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3), "{}", stderr_of(&output));
}

#[test]
fn live_transport_is_a_stub() {
    let out = tmp_dir("live-out");
    let output = bin()
        .arg("crawl")
        .arg("--config")
        .arg(manifest_path("fixtures/config.sim.json"))
        .arg("--out")
        .arg(&out)
        .args(["--transport", "live"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("not supported"));
}

#[test]
fn short_crawl_writes_snapshots() {
    let out = tmp_dir("crawl-out");
    let output = bin()
        .arg("crawl")
        .arg("--config")
        .arg(manifest_path("fixtures/config.sim.json"))
        .arg("--out")
        .arg(&out)
        .arg("--scenario")
        .arg(manifest_path("scenarios/basic_50.json"))
        .args(["--duration", "5"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let snapshots: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("snapshot-") && n.ends_with(".json"))
        .collect();
    assert!(!snapshots.is_empty());
    // the companion peerstore dump is exported alongside each snapshot
    assert!(out.join("peerstore-5000.jsonl").exists());
}

#[test]
fn window_flag_disables_dedup() {
    // one peer with a five-event burst on connect and disconnect
    let events: Vec<String> = (0..5)
        .map(|i| format!("{{\"kind\":\"Connect\",\"t_ms\":{i}}}"))
        .chain((0..5).map(|i| format!("{{\"kind\":\"Disconnect\",\"t_ms\":{}}}", 60_000 + i)))
        .collect();
    let snapshot = format!(
        "{{\"captured_at_ms\":100000,\"host_node_id\":\"aa\",\"network_id\":\"mainnet\",\
         \"peers\":[{{\"city\":\"Unknown\",\"client_family\":\"Unknown\",\"client_version\":\"\",\
         \"counters\":{{\"BeaconBlock\":0}},\"country\":\"Unknown\",\"events\":[{}],\
         \"ip\":\"\",\"latency_s\":\"0.000000\",\"multiaddr\":\"\",\"node_id\":\"\",\
         \"peer_id\":\"burst-peer\",\"pubkey\":\"\"}}],\"schema\":1}}",
        events.join(",")
    );
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("burst.json");
    fs::write(&path, snapshot).unwrap();

    let connections_with_window = |window: &str, dir: &str| -> String {
        let out = tmp_dir(dir);
        let output = bin()
            .arg("analyze")
            .arg("--input")
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .args(["--window-ms", window])
            .output()
            .unwrap();
        assert!(output.status.success());
        let per_peer = fs::read_to_string(out.join("per_peer.csv")).unwrap();
        let row = per_peer.lines().nth(1).unwrap().to_string();
        row.split(',').nth(5).unwrap().to_string()
    };

    // default window collapses the burst; a 1 ms window keeps all five
    assert_eq!(connections_with_window("500", "burst-default"), "1");
    assert_eq!(connections_with_window("1", "burst-off"), "5");
}

#[test]
fn verify_flags_tampering() {
    let sim_dir = tmp_dir("verify-tamper");
    let status = bin()
        .arg("simulate")
        .arg("--scenario")
        .arg(manifest_path("scenarios/basic_50.json"))
        .args(["--seed", "3"])
        .arg("--out")
        .arg(&sim_dir)
        .env("GOSSIPWATCH_LOG", "error")
        .status()
        .unwrap();
    assert!(status.success());

    // bump one BeaconBlock counter in the snapshot
    let text = fs::read_to_string(sim_dir.join("snapshot.json")).unwrap();
    let mut snapshot = gossipwatch_core::metrics::decode_snapshot(&text).unwrap();
    let victim = snapshot
        .peers
        .iter_mut()
        .find(|p| p.counters.values().any(|&c| c > 0))
        .expect("a nonzero counter exists");
    let victim_id = victim.info.peer_id.clone();
    *victim.counters.get_mut("BeaconBlock").unwrap() += 1;
    let tampered = sim_dir.join("tampered.json");
    fs::write(
        &tampered,
        gossipwatch_core::metrics::encode_snapshot(&snapshot),
    )
    .unwrap();

    let output = bin()
        .arg("verify")
        .arg("--snapshot")
        .arg(&tampered)
        .arg("--truth")
        .arg(sim_dir.join("ground_truth.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("counter mismatch"), "{stdout}");
    assert!(stdout.contains(victim_id.as_str()), "{stdout}");
    assert!(stdout.contains("topic=BeaconBlock"), "{stdout}");
}
