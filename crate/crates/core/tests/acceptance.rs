//! Acceptance suite for the library-level criteria. Each test prints one
//! `ACCEPTANCE <n> PASS` line; the two criteria that exercise the command
//! line (oracle verification of the bundled scenario, and byte-identical
//! re-runs of `simulate`/`analyze`) live in the CLI crate's own acceptance
//! target.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use gossipwatch_core::analyzer::{aggregate, dedup_events, top_k_share, DedupPolicy, PeerDerived};
use gossipwatch_core::crawler::{classify_client, ClientFamily, PeerInfo};
use gossipwatch_core::discovery::{
    select_nodes_reply, DiscoveryCmd, DiscoveryMessage, DiscoveryService, Peerstore, DEFAULT_ALPHA,
    MAX_NODES_PER_REPLY,
};
use gossipwatch_core::gossip::{DeliveryOutcome, GossipConfig, GossipMessage, MsgId, Router};
use gossipwatch_core::identity::{generate_identity, NodeId, NodeRecord};
use gossipwatch_core::metrics::{
    decode_snapshot, default_topics, ConnectionEvent, EventKind, MetricsSnapshot, PeerId,
    PeerMetrics,
};
use gossipwatch_core::rng::DetRng;
use gossipwatch_core::simnet::{
    run_scenario, verify_counters, verify_durations, ChurnSpec, PeerProfile, Scenario, Strategy,
    DEFAULT_DURATION_TOLERANCE_MS,
};

fn pass(n: u32, what: &str) {
    println!("ACCEPTANCE {n} PASS - {what}");
}

/// Exhaustive dedup reference: an event survives iff no already-kept event
/// of the same kind lies within the trailing window (full scan of the kept
/// prefix, no running anchor).
fn dedup_reference(events: &[ConnectionEvent], window_ms: u64) -> Vec<ConnectionEvent> {
    let mut kept: Vec<ConnectionEvent> = Vec::new();
    for e in events {
        let masked = kept
            .iter()
            .any(|k| k.kind == e.kind && e.t_ms - k.t_ms < window_ms);
        if !masked {
            kept.push(*e);
        }
    }
    kept
}

#[test]
fn criterion_1_dedup_oracle_equivalence() {
    let started = Instant::now();
    let policy = DedupPolicy::default();
    let mut rng = DetRng::from_seed(0xDED0);

    for case in 0..10_000u32 {
        let n = rng.next_below(13) as usize;
        let mut events: Vec<ConnectionEvent> = (0..n)
            .map(|_| ConnectionEvent {
                kind: if rng.next_below(2) == 0 {
                    EventKind::Connect
                } else {
                    EventKind::Disconnect
                },
                t_ms: rng.next_below(5_000),
            })
            .collect();
        events.sort_by_key(|e| e.t_ms);
        let got = dedup_events(&events, &policy).unwrap();
        let expect = dedup_reference(&events, policy.window_ms);
        assert_eq!(got, expect, "case {case}: {events:?}");
    }

    // the five-per-topic burst collapses to a single event
    let burst: Vec<ConnectionEvent> = (0..5)
        .map(|t| ConnectionEvent {
            kind: EventKind::Connect,
            t_ms: t,
        })
        .collect();
    let collapsed = dedup_events(&burst, &policy).unwrap();
    assert_eq!(collapsed.len(), 1);
    assert_eq!(collapsed[0].t_ms, 0);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget is 10 s");
    pass(
        1,
        "dedup equals the exhaustive reference on 10000 random lists and collapses 5-bursts",
    );
}

#[test]
fn criterion_2_duration_correctness() {
    let started = Instant::now();
    // 15 min connected, 5 min offline: exactly three sessions in the hour
    let churny = PeerProfile {
        user_agent: "Nimbus/v1.0.2/linux-arm64".to_string(),
        churn: Some(ChurnSpec {
            disconnect_after_ms: 900_000,
            reconnect_after_ms: 300_000,
        }),
        ..PeerProfile::default()
    };
    let mut scenario = Scenario {
        seed: 11,
        duration_ms: 3_600_000,
        peers: vec![(20, churny)],
        bootnodes: vec![0],
        slot_interval_ms: 12_000,
    };

    let plain = run_scenario(&scenario).unwrap();
    assert_eq!(plain.truth.sessions.len(), 20);
    for sessions in plain.truth.sessions.values() {
        assert_eq!(sessions.len(), 3, "{sessions:?}");
    }
    let mismatches = verify_durations(&plain.snapshot, &plain.truth, DEFAULT_DURATION_TOLERANCE_MS);
    assert!(mismatches.is_empty(), "{mismatches:?}");

    scenario.peers[0].1.legacy_event_mode = true;
    let legacy = run_scenario(&scenario).unwrap();
    let mismatches = verify_durations(
        &legacy.snapshot,
        &legacy.truth,
        DEFAULT_DURATION_TOLERANCE_MS,
    );
    assert!(mismatches.is_empty(), "{mismatches:?}");

    // batched events must not change the derived durations at all
    let policy = DedupPolicy::default();
    let report_plain = aggregate(&plain.snapshot, &policy);
    let report_legacy = aggregate(&legacy.snapshot, &policy);
    assert_eq!(report_plain.per_peer.len(), report_legacy.per_peer.len());
    for (a, b) in report_plain.per_peer.iter().zip(&report_legacy.per_peer) {
        assert_eq!(a.peer_id, b.peer_id);
        assert_eq!(a.sessions, b.sessions, "peer {}", a.peer_id);
        assert_eq!(a.connected_ms, b.connected_ms);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget is 30 s");
    pass(
        2,
        "churn sessions match ground truth within 500 ms; legacy batching changes nothing",
    );
}

#[test]
fn criterion_4_exactly_once_gossip_delivery() {
    let started = Instant::now();
    let mut rng = DetRng::from_seed(0x405);
    let mut router = Router::new(GossipConfig::default(), 4);
    for t in default_topics() {
        router.subscribe(&t).unwrap();
    }
    let peers: Vec<PeerId> = (0..30).map(|i| PeerId(format!("peer-{i:02}"))).collect();

    // 200 messages, one in eight on a topic the router does not subscribe
    let topics = default_topics();
    let messages: Vec<GossipMessage> = (0..200)
        .map(|i| {
            let topic = if i % 8 == 7 {
                "UnsubscribedTopic".to_string()
            } else {
                topics[rng.next_below(topics.len() as u64) as usize].clone()
            };
            GossipMessage::new(&topic, format!("msg-{i}").into_bytes())
        })
        .collect();

    // random delivery schedule: each message arrives from 1..=6 peers in a
    // random order, interleaved with IHAVE announcements
    let mut credits: BTreeMap<MsgId, u64> = BTreeMap::new();
    let mut now = 0u64;
    for msg in &messages {
        let copies = 1 + rng.next_below(6) as usize;
        let senders = rng.sample_indices(peers.len(), copies);

        // an IHAVE for ids already seen must never be re-requested
        let announced: Vec<MsgId> = messages
            .iter()
            .take(30)
            .map(|m| m.msg_id)
            .chain([msg.msg_id])
            .collect();
        let want = router.handle_ihave(&peers[senders[0]], &msg.topic, &announced, now);
        for id in &want {
            assert!(
                !router.seen_contains(id),
                "IHAVE response intersects the seen cache"
            );
        }

        for sender in senders {
            now += 1 + rng.next_below(40);
            let outcome = router.handle_full_message(&peers[sender], msg, now);
            if outcome == DeliveryOutcome::DeliveredFirst {
                *credits.entry(msg.msg_id).or_insert(0) += 1;
            }
        }
    }

    for msg in &messages {
        let credited = credits.get(&msg.msg_id).copied().unwrap_or(0);
        assert!(credited <= 1, "message credited {credited} times");
        let subscribed = msg.topic != "UnsubscribedTopic";
        assert_eq!(credited == 1, subscribed, "topic {}", msg.topic);
    }
    // credit conservation: the delivery log holds exactly the credited ids
    let mut log_ids: Vec<MsgId> = router.delivery_log().iter().map(|e| e.msg_id).collect();
    log_ids.sort();
    log_ids.dedup();
    assert_eq!(log_ids.len(), router.delivery_log().len());
    assert_eq!(log_ids.len() as u64, credits.values().sum::<u64>());

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget is 10 s");
    pass(
        4,
        "per-message credit is at most one and IHAVE answers never intersect the seen cache",
    );
}

fn derived_with_block_counts(counts: &[u64]) -> Vec<PeerDerived> {
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| PeerDerived {
            peer_id: PeerId(format!("p{i:03}")),
            client_family: ClientFamily::Unknown,
            client_version: String::new(),
            country: "Unknown".to_string(),
            latency_us: 0,
            connections: 1,
            disconnections: 1,
            connected_ms: 60_000,
            sessions: vec![(0, 60_000)],
            counters: [("BeaconBlock".to_string(), c)].into_iter().collect(),
            total_messages: c,
            anomalies: Vec::new(),
        })
        .collect()
}

#[test]
fn criterion_5_top_k_share() {
    // 40 peers: the top ten hold exactly 7500 of 10000 BeaconBlock firsts
    let mut counts = vec![1200, 1100, 900, 800, 700, 700, 700, 500, 500, 400];
    assert_eq!(counts.iter().sum::<u64>(), 7_500);
    counts.extend(std::iter::repeat_n(2_500 / 25, 25));
    counts.extend(std::iter::repeat_n(0, 5));
    let per_peer = derived_with_block_counts(&counts);
    let share = top_k_share(&per_peer, "BeaconBlock", 10);
    assert!((share - 0.75).abs() <= 0.0001, "share = {share}");
    pass(
        5,
        "a constructed 75%-from-ten-peers dataset yields top_k_share 0.7500",
    );
}

#[test]
fn criterion_6_table3_fixture() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/table3.json");
    let text = std::fs::read_to_string(path).unwrap();
    let snapshot = decode_snapshot(&text).unwrap();

    // the fixture's client fields are what classification of the recorded
    // user agent produces
    assert_eq!(
        classify_client("Lighthouse/v1.0.1-5a3b94cb/x86_64-linux"),
        (ClientFamily::Lighthouse, "v1.0.1-5a3b94cb".to_string())
    );

    let report = aggregate(&snapshot, &DedupPolicy::default());
    let files = gossipwatch_core::analyzer::render_report(&report);
    let per_peer = files.iter().find(|(n, _)| n == "per_peer.csv").unwrap();
    let text = std::str::from_utf8(&per_peer.1).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "peer_id,client_family,client_version,country,latency_s,connections,disconnections,\
         connected_time_min,AttesterSlashing,BeaconAggregateAndProof,BeaconBlock,ProposerSlashing,\
         VoluntaryExit,total_messages"
    );
    let row = lines.next().unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[1], "Lighthouse");
    assert_eq!(fields[2], "v1.0.1-5a3b94cb");
    assert_eq!(fields[3], "United States");
    assert_eq!(fields[4], "31.509326");
    assert_eq!(fields[5], "10", "connections after dedup");
    assert_eq!(fields[6], "10", "disconnections after dedup");
    assert_eq!(fields[7], "24.600416", "connected minutes");
    assert_eq!(&fields[8..14], &["0", "0", "0", "0", "0", "0"]);
    assert!(lines.next().is_none());
    pass(6, "the example-peer fixture renders every value exactly");
}

#[test]
fn criterion_7_table2_fixture() {
    // version multiplicities per family: 5 / 5 / 2 / 5 / 0 / 1
    let mut peers = Vec::new();
    let mut add_peer = |id: String, family: ClientFamily, version: &str| {
        let mut p = PeerMetrics {
            info: PeerInfo::stub(PeerId(id)),
            events: vec![
                ConnectionEvent {
                    kind: EventKind::Connect,
                    t_ms: 1_000,
                },
                ConnectionEvent {
                    kind: EventKind::Disconnect,
                    t_ms: 61_000,
                },
            ],
            counters: default_topics().iter().map(|t| (t.clone(), 0)).collect(),
        };
        p.info.client_family = family;
        p.info.client_version = version.to_string();
        peers.push(p);
    };
    for (family, versions) in [
        (ClientFamily::Lighthouse, 5),
        (ClientFamily::Teku, 5),
        (ClientFamily::Nimbus, 2),
        (ClientFamily::Prysm, 5),
    ] {
        for v in 0..versions {
            // two peers per version: distinct versions, not distinct peers
            add_peer(
                format!("{}-{v}-a", family.as_str()),
                family,
                &format!("v{v}"),
            );
            add_peer(
                format!("{}-{v}-b", family.as_str()),
                family,
                &format!("v{v}"),
            );
        }
    }
    add_peer("unknown-a".to_string(), ClientFamily::Unknown, "");
    add_peer("unknown-b".to_string(), ClientFamily::Unknown, "");
    peers.sort_by(|a, b| a.info.peer_id.cmp(&b.info.peer_id));

    let snapshot = MetricsSnapshot {
        captured_at_ms: 100_000,
        host_node_id: "aa".repeat(32),
        network_id: "mainnet".to_string(),
        peers,
    };
    let report = aggregate(&snapshot, &DedupPolicy::default());
    let row: Vec<u64> = report.per_client.iter().map(|c| c.version_count).collect();
    assert_eq!(row, vec![5, 5, 2, 5, 0, 1]);
    pass(7, "version counts per family come out exactly 5/5/2/5/0/1");
}

fn member_record(i: u32) -> NodeRecord {
    let mut seed = [0u8; 32];
    seed[..4].copy_from_slice(&i.to_be_bytes());
    seed[31] = 0xC8;
    generate_identity(
        &seed,
        std::net::IpAddr::V4(std::net::Ipv4Addr::new(203, 0, 113, (i % 200 + 1) as u8)),
        9000 + i as u16,
        9000 + i as u16,
        "mainnet",
    )
    .1
}

#[test]
fn criterion_8_discovery_convergence() {
    let started = Instant::now();
    let members: Vec<NodeRecord> = (0..100).map(member_record).collect();
    let known: BTreeMap<NodeId, NodeRecord> =
        members.iter().map(|r| (r.node_id, r.clone())).collect();

    let local = generate_identity(
        &[0xAA; 32],
        std::net::IpAddr::V4(std::net::Ipv4Addr::LOCALHOST),
        1,
        1,
        "mainnet",
    )
    .0
    .node_id();
    let mut service =
        DiscoveryService::new(Peerstore::new(local), DEFAULT_ALPHA, DetRng::from_seed(8));
    let mut reply_rng = DetRng::from_seed(80);

    let mut emitted: Vec<NodeId> = Vec::new();
    let mut pending: Vec<(NodeId, u16)> = Vec::new();
    let absorb =
        |cmds: Vec<DiscoveryCmd>, emitted: &mut Vec<NodeId>, pending: &mut Vec<(NodeId, u16)>| {
            for cmd in cmds {
                match cmd {
                    DiscoveryCmd::Discovered { node_id } => emitted.push(node_id),
                    DiscoveryCmd::Send {
                        to,
                        msg: DiscoveryMessage::FindNode { distance },
                    } => pending.push((to, distance)),
                    DiscoveryCmd::Send { .. } => {}
                }
            }
        };

    // single bootnode
    let (admitted, cmds) = service.bootstrap_and_start(&members[..1], 0);
    assert_eq!(admitted, 1);
    absorb(cmds, &mut emitted, &mut pending);

    let mut rounds = 0;
    while service.store.len() < members.len() && rounds < 200 {
        rounds += 1;
        let now = rounds * 1_000;
        let cmds = service.on_tick(now);
        absorb(cmds, &mut emitted, &mut pending);
        for (to, distance) in std::mem::take(&mut pending) {
            let records =
                select_nodes_reply(&known, &to, distance, &mut reply_rng, MAX_NODES_PER_REPLY);
            let cmds = service.on_nodes_reply(to, records, now);
            absorb(cmds, &mut emitted, &mut pending);
        }
    }

    assert_eq!(
        service.store.len(),
        members.len(),
        "only {} of {} members after {rounds} rounds",
        service.store.len(),
        members.len()
    );
    assert!(rounds <= 200, "needed {rounds} rounds");
    let unique: BTreeSet<&NodeId> = emitted.iter().collect();
    assert_eq!(unique.len(), emitted.len(), "a node id was emitted twice");
    assert_eq!(emitted.len(), members.len());
    assert!(service.store.buckets_consistent());

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 20, "took {elapsed:?}, budget is 20 s");
    pass(
        8,
        &format!("full membership reached in {rounds} lookup rounds with unique emissions"),
    );
}

#[test]
fn criterion_10_strategy_contrast() {
    let strict = PeerProfile {
        user_agent: "Prysm/v1.0.0-beta.3/linux-amd64".to_string(),
        max_peers: 30,
        strategy: Strategy::Strict,
        ..PeerProfile::default()
    };
    let flexible = PeerProfile {
        user_agent: "Teku/v20.12.0/jdk11".to_string(),
        max_peers: 80,
        strategy: Strategy::Flexible,
        prune_period_ms: Some(300_000), // 5 min prune period
        ..PeerProfile::default()
    };
    let scenario = Scenario {
        seed: 10,
        duration_ms: 3_600_000,
        peers: vec![(8, strict), (8, flexible)],
        bootnodes: vec![0],
        slot_interval_ms: 12_000,
    };
    let out = run_scenario(&scenario).unwrap();
    assert!(verify_counters(&out.snapshot, &out.truth).is_empty());
    let report = aggregate(&out.snapshot, &DedupPolicy::default());
    let prysm = report
        .per_client
        .iter()
        .find(|c| c.family == ClientFamily::Prysm)
        .unwrap();
    let teku = report
        .per_client
        .iter()
        .find(|c| c.family == ClientFamily::Teku)
        .unwrap();
    assert_eq!(prysm.peer_count, 8);
    assert_eq!(teku.peer_count, 8);
    assert!(
        prysm.avg_connections_micro < teku.avg_connections_micro,
        "strict {} vs flexible {}",
        prysm.avg_connections_micro,
        teku.avg_connections_micro
    );
    assert!(
        prysm.avg_connected_min_micro > teku.avg_connected_min_micro,
        "strict {} vs flexible {}",
        prysm.avg_connected_min_micro,
        teku.avg_connected_min_micro
    );
    pass(
        10,
        "strict peers connect less often and stay connected longer than flexible peers",
    );
}
