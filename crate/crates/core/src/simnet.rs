//! Deterministic in-process simulated network with ground-truth oracles.
//!
//! A scenario expands into a population of simulated peers (client profile,
//! link delay, churn/prune behavior, publish rates) around one embedded
//! crawler host, all driven by a single discrete-event loop under a virtual
//! clock. Nothing reads wall time and every random draw comes from streams
//! forked off the scenario seed, so a `(scenario, seed)` pair determines
//! every byte of output.
//!
//! The wider gossip cloud is abstracted: when a peer publishes, every peer
//! holding an open session with the crawler forwards the full message, and
//! the first arrival wins the counter credit. That keeps the replay oracle
//! exact — expected counters are recomputed arithmetically from the publish
//! log, the realized session intervals, and the per-link delays, with no
//! reference to the event mechanics being checked.
//!
//! Session transitions are single-instant (both sides flip at the moment
//! the crawler processes the handshake or the close), and same-millisecond
//! races resolve by fixed event priority: closes before publishes before
//! message arrivals before timers. A peer is therefore a delivery candidate
//! for a publish at time `s` iff one of its sessions has
//! `open < s && s + delay < close` — exactly the rule `verify_counters`
//! replays.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;
use core::net::{IpAddr, Ipv4Addr};

use serde_json::{Map, Value};

use crate::analyzer::{connection_sessions, dedup_events, DedupPolicy};
use crate::crawler::{
    BadConfig, DialFailure, GeoProviderConfig, Host, HostCmd, HostConfig, StaticGeoTable,
    StatusMessage, DIAL_TIMEOUT_MS, LATENCY_PROBE_INTERVAL_MS,
};
use crate::discovery::{
    select_nodes_reply, DiscoveryMessage, DEFAULT_LOOKUP_INTERVAL_MS, DEFAULT_TRANSPORT_TIMEOUT_MS,
    MAX_NODES_PER_REPLY,
};
use crate::gossip::{GossipMessage, MsgId};
use crate::identity::{generate_identity, NodeId, NodeRecord};
use crate::json;
use crate::metrics::{encode_snapshot, EventKind, MetricsSnapshot, PeerId};
use crate::rng::DetRng;

pub const DEFAULT_SLOT_INTERVAL_MS: u64 = 12_000;
/// Documentation address blocks the simulator assigns peer endpoints from.
const IP_BLOCKS: [[u8; 3]; 3] = [[198, 51, 100], [203, 0, 113], [192, 0, 2]];
const MAX_PEERS_PER_SCENARIO: usize = 3 * 200;
const COUNTRIES: [(&str, &str); 10] = [
    ("United States", "North Bergen"),
    ("Germany", "Falkenstein"),
    ("Spain", "Barcelona"),
    ("France", "Gravelines"),
    ("Finland", "Helsinki"),
    ("Canada", "Beauharnois"),
    ("Australia", "Sydney"),
    ("Japan", "Tokyo"),
    ("Brazil", "Sao Paulo"),
    ("Netherlands", "Amsterdam"),
];

// ---------------------------------------------------------------------------
// scenario model
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Strategy {
    /// Refuses connections beyond `max_peers` and never prunes.
    Strict,
    /// Accepts liberally but prunes sessions every `prune_period_ms`.
    Flexible,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Strict => "Strict",
            Strategy::Flexible => "Flexible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Strict" => Some(Strategy::Strict),
            "Flexible" => Some(Strategy::Flexible),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ChurnSpec {
    /// Session length before the peer drops offline.
    pub disconnect_after_ms: u64,
    /// Offline gap before the peer comes back and redials the crawler.
    pub reconnect_after_ms: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeerProfile {
    pub user_agent: String,
    pub max_peers: u32,
    pub strategy: Strategy,
    /// Per-topic publish rates in micro-messages per minute
    /// (`250_000` = 0.25 messages/min).
    pub publish_rate_micro_per_min: BTreeMap<String, u64>,
    /// One-way link delay between this peer and the crawler.
    pub link_delay_ms: u64,
    pub accepts_inbound: bool,
    pub churn: Option<ChurnSpec>,
    /// Emit connect/disconnect events in batches of five (one per topic
    /// stream, 1 ms apart) the way multi-stream recorders do, to exercise
    /// the analyzer's dedup.
    pub legacy_event_mode: bool,
    /// Flexible strategy: drop the session this long after it opens.
    pub prune_period_ms: Option<u64>,
}

impl Default for PeerProfile {
    fn default() -> Self {
        PeerProfile {
            user_agent: String::new(),
            max_peers: 50,
            strategy: Strategy::Strict,
            publish_rate_micro_per_min: BTreeMap::new(),
            link_delay_ms: 50,
            accepts_inbound: true,
            churn: None,
            legacy_event_mode: false,
            prune_period_ms: None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub duration_ms: u64,
    /// Peer groups: `count` peers sharing a profile.
    pub peers: Vec<(u32, PeerProfile)>,
    /// Indices into the expanded peer list acting as bootnodes.
    pub bootnodes: Vec<u32>,
    /// Every slot, one random online peer publishes a BeaconBlock.
    /// Zero disables slot-driven publishing.
    pub slot_interval_ms: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ScenarioInvalid(pub String);

impl fmt::Display for ScenarioInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario: {}", self.0)
    }
}

impl core::error::Error for ScenarioInvalid {}

impl Scenario {
    pub fn total_peers(&self) -> usize {
        self.peers.iter().map(|(n, _)| *n as usize).sum()
    }

    pub fn validate(&self) -> Result<(), ScenarioInvalid> {
        let err = |m: String| Err(ScenarioInvalid(m));
        if self.duration_ms == 0 {
            return err("duration_ms must be positive".to_string());
        }
        let total = self.total_peers();
        if total == 0 {
            return err("at least one peer is required".to_string());
        }
        if total > MAX_PEERS_PER_SCENARIO {
            return err(alloc::format!(
                "at most {MAX_PEERS_PER_SCENARIO} peers supported"
            ));
        }
        if self.bootnodes.is_empty() {
            return err("at least one bootnode is required".to_string());
        }
        for b in &self.bootnodes {
            if *b as usize >= total {
                return err(alloc::format!(
                    "bootnode index {b} out of range (peers: {total})"
                ));
            }
        }
        for (i, (count, profile)) in self.peers.iter().enumerate() {
            if *count == 0 {
                return err(alloc::format!("peer group {i} has count 0"));
            }
            if profile.max_peers == 0 {
                return err(alloc::format!("peer group {i}: max_peers must be >= 1"));
            }
            if profile.link_delay_ms == 0 || profile.link_delay_ms > 10_000 {
                return err(alloc::format!(
                    "peer group {i}: link_delay_ms must be in 1..=10000"
                ));
            }
            if let Some(churn) = &profile.churn {
                if churn.disconnect_after_ms == 0 || churn.reconnect_after_ms == 0 {
                    return err(alloc::format!(
                        "peer group {i}: churn intervals must be positive"
                    ));
                }
            }
            if let Some(p) = profile.prune_period_ms {
                if p == 0 {
                    return err(alloc::format!(
                        "peer group {i}: prune_period_ms must be positive"
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// ground truth
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PublishRecord {
    pub msg_id: MsgId,
    pub origin: PeerId,
    pub topic: String,
    pub t_ms: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SessionInterval {
    pub open_ms: u64,
    pub close_ms: u64,
}

/// Everything the oracles need, recorded as inputs and realized schedule
/// rather than as outcomes of the mechanics under test.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GroundTruth {
    /// Node ids (hex) of every simulated peer.
    pub membership: Vec<String>,
    /// Last transport-level decision each peer made for a crawler dial.
    pub dial_decisions: BTreeMap<String, bool>,
    /// Every publish that happened, in time order.
    pub publishes: Vec<PublishRecord>,
    /// One-way delay of each peer's link to the crawler.
    pub link_delays_ms: BTreeMap<PeerId, u64>,
    /// Realized session intervals with the crawler, per peer.
    pub sessions: BTreeMap<PeerId, Vec<SessionInterval>>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LogLevel {
    Error,
    Info,
    Debug,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LogLine {
    pub level: LogLevel,
    pub t_ms: u64,
    pub msg: String,
}

/// One periodic export: the crawler writes the metrics snapshot and the
/// peerstore dump side by side every interval.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Export {
    pub t_ms: u64,
    pub snapshot: MetricsSnapshot,
    pub peerstore: String,
}

/// Result of a scenario run.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SimOutput {
    /// Final snapshot, captured at `duration_ms`.
    pub snapshot: MetricsSnapshot,
    pub truth: GroundTruth,
    /// Periodic exports, final snapshot included.
    pub exports: Vec<Export>,
    /// Peerstore dump (JSONL) at the end of the run.
    pub peerstore_dump: String,
    pub logs: Vec<LogLine>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SimError {
    Invalid(ScenarioInvalid),
    Config(BadConfig),
    /// The host endpoint collides with an endpoint a simulated peer occupies.
    BindFailure(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Invalid(e) => write!(f, "{e}"),
            SimError::Config(e) => write!(f, "{e}"),
            SimError::BindFailure(m) => write!(f, "bind failure: {m}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ScenarioInvalid> for SimError {
    fn from(e: ScenarioInvalid) -> Self {
        SimError::Invalid(e)
    }
}

impl From<BadConfig> for SimError {
    fn from(e: BadConfig) -> Self {
        SimError::Config(e)
    }
}

// ---------------------------------------------------------------------------
// event loop
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Ev {
    // recurring host timers
    DiscoveryTick,
    Heartbeat,
    ExportTick,
    LatencyTick,
    RetryDue {
        node: NodeId,
    },
    // discovery transport
    FindNodeArrives {
        peer: usize,
        distance: u16,
    },
    NodesReplyArrives {
        from: NodeId,
        records: Vec<NodeRecord>,
    },
    DiscoveryDeadline {
        node: NodeId,
    },
    // dial + handshake (two legs: dial out, accept/status back)
    DialArrives {
        peer: usize,
        attempt: u64,
    },
    DialRefused {
        node: NodeId,
        attempt: u64,
    },
    DialDeadline {
        node: NodeId,
        attempt: u64,
    },
    HandshakeReply {
        peer: usize,
        attempt: u64,
    },
    InboundDialArrives {
        peer: usize,
    },
    // sessions
    PeerSleep {
        peer: usize,
        session: u64,
    },
    PeerWake {
        peer: usize,
    },
    PruneCheck {
        peer: usize,
        session: u64,
    },
    // gossip traffic
    SlotPublish {
        slot: u64,
    },
    RatePublish {
        peer: usize,
        topic: String,
        n: u64,
    },
    GossipArrives {
        peer: usize,
        session: u64,
        msg: GossipMessage,
    },
    PingArrives {
        peer: usize,
        msg: DiscoveryMessage,
    },
    PongArrives {
        peer: usize,
        msg: DiscoveryMessage,
    },
}

/// Same-timestamp ordering: session closes run before publishes, publishes
/// before message arrivals, timers last. FIFO within a class.
fn priority(ev: &Ev) -> u8 {
    match ev {
        Ev::PeerSleep { .. } | Ev::PruneCheck { .. } => 1,
        Ev::SlotPublish { .. } | Ev::RatePublish { .. } => 2,
        Ev::FindNodeArrives { .. }
        | Ev::NodesReplyArrives { .. }
        | Ev::DiscoveryDeadline { .. }
        | Ev::DialArrives { .. }
        | Ev::DialRefused { .. }
        | Ev::DialDeadline { .. }
        | Ev::HandshakeReply { .. }
        | Ev::InboundDialArrives { .. }
        | Ev::GossipArrives { .. }
        | Ev::PingArrives { .. }
        | Ev::PongArrives { .. } => 3,
        Ev::DiscoveryTick
        | Ev::Heartbeat
        | Ev::ExportTick
        | Ev::LatencyTick
        | Ev::RetryDue { .. }
        | Ev::PeerWake { .. } => 4,
    }
}

struct PeerSession {
    id: u64,
}

struct SimPeer {
    profile: PeerProfile,
    record: NodeRecord,
    node_id: NodeId,
    peer_id: PeerId,
    delay_ms: u64,
    online: bool,
    pending_attempt: Option<u64>,
    session: Option<PeerSession>,
    rng: DetRng,
}

impl SimPeer {
    /// Transport-level decision for an incoming crawler dial.
    fn accepts_dial(&self) -> bool {
        if !self.profile.accepts_inbound {
            return false;
        }
        let session_count = self.session.is_some() as u32;
        match self.profile.strategy {
            Strategy::Strict => session_count < self.profile.max_peers,
            Strategy::Flexible => true,
        }
    }
}

struct Sim {
    now: u64,
    duration_ms: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u8, u64)>>,
    events: BTreeMap<u64, Ev>,
    peers: Vec<SimPeer>,
    peer_by_node: BTreeMap<NodeId, usize>,
    peer_by_id: BTreeMap<PeerId, usize>,
    /// Peer indices in ascending peer-id order (forwarding order).
    forward_order: Vec<usize>,
    membership: BTreeMap<NodeId, NodeRecord>,
    host: Host,
    session_seq: u64,
    attempt_seq: u64,
    resolved_attempts: BTreeSet<u64>,
    truth: GroundTruth,
    open_sessions: BTreeMap<PeerId, u64>, // peer -> open_ms, for truth finalization
    exports: Vec<Export>,
    logs: Vec<LogLine>,
    slot_rng: DetRng,
    export_interval_ms: u64,
}

impl Sim {
    fn schedule(&mut self, t_ms: u64, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse((t_ms, priority(&ev), seq)));
        self.events.insert(seq, ev);
    }

    fn log(&mut self, level: LogLevel, msg: String) {
        self.logs.push(LogLine {
            level,
            t_ms: self.now,
            msg,
        });
    }

    fn status_of(&self, peer: usize) -> StatusMessage {
        StatusMessage::genesis(&self.peers[peer].record.network_id)
    }

    fn apply_cmds(&mut self, cmds: Vec<HostCmd>) {
        for cmd in cmds {
            match cmd {
                HostCmd::SendDiscovery { to, msg } => {
                    if let DiscoveryMessage::FindNode { distance } = msg {
                        if let Some(&peer) = self.peer_by_node.get(&to) {
                            let d = self.peers[peer].delay_ms;
                            self.schedule(self.now + d, Ev::FindNodeArrives { peer, distance });
                        }
                        self.schedule(
                            self.now + DEFAULT_TRANSPORT_TIMEOUT_MS,
                            Ev::DiscoveryDeadline { node: to },
                        );
                    }
                }
                HostCmd::Dial { record } => {
                    let Some(&peer) = self.peer_by_node.get(&record.node_id) else {
                        continue;
                    };
                    self.attempt_seq += 1;
                    let attempt = self.attempt_seq;
                    let d = self.peers[peer].delay_ms;
                    self.schedule(self.now + d, Ev::DialArrives { peer, attempt });
                    self.schedule(
                        self.now + DIAL_TIMEOUT_MS,
                        Ev::DialDeadline {
                            node: record.node_id,
                            attempt,
                        },
                    );
                }
                HostCmd::Ping { peer } => {
                    if let Some(&idx) = self.peer_by_id.get(&peer) {
                        let d = self.peers[idx].delay_ms;
                        let msg = DiscoveryMessage::Ping {
                            seq: self.host.record.seq,
                        };
                        self.schedule(self.now + d, Ev::PingArrives { peer: idx, msg });
                    }
                }
                HostCmd::ScheduleRetry { node_id, at_ms } => {
                    self.schedule(at_ms.max(self.now + 1), Ev::RetryDue { node: node_id });
                }
                HostCmd::Export => {
                    let snapshot = self.host.snapshot(self.now);
                    self.log(
                        LogLevel::Info,
                        alloc::format!("export: {} peers", snapshot.peers.len()),
                    );
                    self.exports.push(Export {
                        t_ms: self.now,
                        snapshot,
                        peerstore: self.host.discovery.store.dump_jsonl(),
                    });
                }
                HostCmd::CloseConnection { node_id } => {
                    if let Some(&peer) = self.peer_by_node.get(&node_id) {
                        self.peers[peer].pending_attempt = None;
                        if self.peers[peer].session.is_some() {
                            self.close_session(peer);
                        }
                    }
                }
            }
        }
    }

    /// Opens a session on both sides at the current instant (the moment the
    /// crawler processed the handshake).
    fn open_peer_session(&mut self, peer: usize) {
        self.session_seq += 1;
        let id = self.session_seq;
        self.peers[peer].pending_attempt = None;
        self.peers[peer].session = Some(PeerSession { id });
        let peer_id = self.peers[peer].peer_id.clone();
        self.open_sessions.insert(peer_id.clone(), self.now);

        if self.peers[peer].profile.legacy_event_mode {
            for offset in 1..5 {
                let _ =
                    self.host
                        .metrics
                        .record_event(&peer_id, EventKind::Connect, self.now + offset);
            }
        }
        if let Some(churn) = self.peers[peer].profile.churn {
            self.schedule(
                self.now + churn.disconnect_after_ms,
                Ev::PeerSleep { peer, session: id },
            );
        }
        if self.peers[peer].profile.strategy == Strategy::Flexible {
            if let Some(period) = self.peers[peer].profile.prune_period_ms {
                self.schedule(self.now + period, Ev::PruneCheck { peer, session: id });
            }
        }
        self.log(
            LogLevel::Debug,
            alloc::format!("session open peer={}", &peer_id.0[..8.min(peer_id.0.len())]),
        );
    }

    /// Closes the session on both sides at the current instant.
    fn close_session(&mut self, peer: usize) {
        if self.peers[peer].session.take().is_none() {
            return;
        }
        let node_id = self.peers[peer].node_id;
        let peer_id = self.peers[peer].peer_id.clone();
        if let Some(open_ms) = self.open_sessions.remove(&peer_id) {
            self.truth
                .sessions
                .entry(peer_id.clone())
                .or_default()
                .push(SessionInterval {
                    open_ms,
                    close_ms: self.now,
                });
        }
        let cmds = self.host.on_session_closed(node_id, self.now);
        if self.peers[peer].profile.legacy_event_mode {
            for offset in 1..5 {
                let _ = self.host.metrics.record_event(
                    &peer_id,
                    EventKind::Disconnect,
                    self.now + offset,
                );
            }
        }
        self.log(
            LogLevel::Debug,
            alloc::format!(
                "session close peer={}",
                &peer_id.0[..8.min(peer_id.0.len())]
            ),
        );
        self.apply_cmds(cmds);
    }

    /// Cloud-model broadcast: every peer with an open session forwards the
    /// full message to the crawler. Forwards are scheduled in ascending
    /// peer-id order, so equal-time arrivals resolve ties by peer id.
    fn broadcast(&mut self, origin: usize, topic: &str, payload: Vec<u8>) {
        let msg = GossipMessage::new(topic, payload);
        self.truth.publishes.push(PublishRecord {
            msg_id: msg.msg_id,
            origin: self.peers[origin].peer_id.clone(),
            topic: topic.to_string(),
            t_ms: self.now,
        });
        for i in 0..self.forward_order.len() {
            let idx = self.forward_order[i];
            let Some(session) = &self.peers[idx].session else {
                continue;
            };
            let session_id = session.id;
            let d = self.peers[idx].delay_ms;
            self.schedule(
                self.now + d,
                Ev::GossipArrives {
                    peer: idx,
                    session: session_id,
                    msg: msg.clone(),
                },
            );
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::DiscoveryTick => {
                let cmds = self.host.on_discovery_tick(self.now);
                self.apply_cmds(cmds);
                self.schedule(self.now + DEFAULT_LOOKUP_INTERVAL_MS, Ev::DiscoveryTick);
            }
            Ev::Heartbeat => {
                let _ = self.host.on_heartbeat(self.now);
                let hb = self.host.router.config().heartbeat_ms;
                self.schedule(self.now + hb, Ev::Heartbeat);
            }
            Ev::ExportTick => {
                let cmds = self.host.on_export_tick();
                self.apply_cmds(cmds);
                self.schedule(self.now + self.export_interval_ms, Ev::ExportTick);
            }
            Ev::LatencyTick => {
                let cmds = self.host.on_latency_tick(self.now);
                self.apply_cmds(cmds);
                self.schedule(self.now + LATENCY_PROBE_INTERVAL_MS, Ev::LatencyTick);
            }
            Ev::RetryDue { node } => {
                let cmds = self.host.on_retry_due(node, self.now);
                self.apply_cmds(cmds);
            }
            Ev::FindNodeArrives { peer, distance } => {
                if !self.peers[peer].online {
                    return;
                }
                let self_id = self.peers[peer].node_id;
                let records = select_nodes_reply(
                    &self.membership,
                    &self_id,
                    distance,
                    &mut self.peers[peer].rng,
                    MAX_NODES_PER_REPLY,
                );
                let d = self.peers[peer].delay_ms;
                self.schedule(
                    self.now + d,
                    Ev::NodesReplyArrives {
                        from: self_id,
                        records,
                    },
                );
            }
            Ev::NodesReplyArrives { from, records } => {
                let cmds = self.host.on_discovery_nodes(from, records, self.now);
                self.apply_cmds(cmds);
            }
            Ev::DiscoveryDeadline { node } => {
                self.host.on_discovery_timeout(node, self.now);
            }
            Ev::DialArrives { peer, attempt } => {
                if !self.peers[peer].online {
                    return; // no listener: the dial deadline will fire
                }
                // a crawler dial racing an inbound session from the same
                // peer is refused: one session per counterpart
                let accept = self.peers[peer].session.is_none() && self.peers[peer].accepts_dial();
                let node = self.peers[peer].node_id;
                let d = self.peers[peer].delay_ms;
                self.truth.dial_decisions.insert(node.to_hex(), accept);
                if accept {
                    self.peers[peer].pending_attempt = Some(attempt);
                    self.schedule(self.now + d, Ev::HandshakeReply { peer, attempt });
                } else {
                    self.schedule(self.now + d, Ev::DialRefused { node, attempt });
                }
            }
            Ev::DialRefused { node, attempt } => {
                if !self.resolved_attempts.insert(attempt) {
                    return;
                }
                let cmds = self
                    .host
                    .on_dial_failure(node, DialFailure::Refused, self.now);
                self.apply_cmds(cmds);
            }
            Ev::DialDeadline { node, attempt } => {
                if !self.resolved_attempts.insert(attempt) {
                    return;
                }
                if let Some(&peer) = self.peer_by_node.get(&node) {
                    if self.peers[peer].pending_attempt == Some(attempt) {
                        self.peers[peer].pending_attempt = None;
                    }
                }
                let cmds = self
                    .host
                    .on_dial_failure(node, DialFailure::Timeout, self.now);
                self.apply_cmds(cmds);
            }
            Ev::HandshakeReply { peer, attempt } => {
                if self.resolved_attempts.contains(&attempt) {
                    return;
                }
                if !self.peers[peer].online || self.peers[peer].pending_attempt != Some(attempt) {
                    return; // peer churned out mid-handshake; the deadline resolves it
                }
                self.resolved_attempts.insert(attempt);
                let record = self.peers[peer].record.clone();
                let status = self.status_of(peer);
                let ua = self.peers[peer].profile.user_agent.clone();
                let cmds = self
                    .host
                    .on_handshake_reply(&record, &status, &ua, self.now);
                if self.host.session_peer(&record.node_id).is_some() {
                    self.open_peer_session(peer);
                } else {
                    self.peers[peer].pending_attempt = None;
                }
                self.apply_cmds(cmds);
            }
            Ev::InboundDialArrives { peer } => {
                if !self.peers[peer].online || self.peers[peer].session.is_some() {
                    return;
                }
                let record = self.peers[peer].record.clone();
                let status = self.status_of(peer);
                let ua = self.peers[peer].profile.user_agent.clone();
                let cmds = self
                    .host
                    .on_inbound_session(&record, &status, &ua, self.now);
                if self.host.session_peer(&record.node_id).is_some()
                    && self.peers[peer].session.is_none()
                {
                    self.open_peer_session(peer);
                }
                self.apply_cmds(cmds);
            }
            Ev::PeerSleep { peer, session } => {
                let current = self.peers[peer].session.as_ref().map(|s| s.id);
                if current != Some(session) {
                    return; // session already gone; churn re-anchors at the next open
                }
                self.close_session(peer);
                self.peers[peer].online = false;
                self.peers[peer].pending_attempt = None;
                let gap = self.peers[peer]
                    .profile
                    .churn
                    .expect("sleep only scheduled for churny peers")
                    .reconnect_after_ms;
                self.schedule(self.now + gap, Ev::PeerWake { peer });
            }
            Ev::PeerWake { peer } => {
                self.peers[peer].online = true;
                // the returning peer dials the crawler itself
                let d = self.peers[peer].delay_ms;
                self.schedule(self.now + d, Ev::InboundDialArrives { peer });
            }
            Ev::PruneCheck { peer, session } => {
                let current = self.peers[peer].session.as_ref().map(|s| s.id);
                if current != Some(session) {
                    return;
                }
                self.close_session(peer);
            }
            Ev::SlotPublish { slot } => {
                let online: Vec<usize> = (0..self.peers.len())
                    .filter(|&i| self.peers[i].online)
                    .collect();
                if !online.is_empty() {
                    let origin = online[self.slot_rng.next_below(online.len() as u64) as usize];
                    let payload = alloc::format!("slot:{slot}").into_bytes();
                    self.broadcast(origin, "BeaconBlock", payload);
                }
            }
            Ev::RatePublish { peer, topic, n } => {
                if self.peers[peer].online {
                    let payload = alloc::format!("rate:{peer}:{topic}:{n}").into_bytes();
                    self.broadcast(peer, &topic, payload);
                }
            }
            Ev::GossipArrives { peer, session, msg } => {
                let current = self.peers[peer].session.as_ref().map(|s| s.id);
                if current != Some(session) {
                    return; // session closed while the message was in flight
                }
                let from = self.peers[peer].peer_id.clone();
                let _ = self.host.on_gossip_message(&from, &msg, self.now);
            }
            Ev::PingArrives { peer, msg } => {
                if !self.peers[peer].online || self.peers[peer].session.is_none() {
                    return;
                }
                debug_assert!(matches!(msg, DiscoveryMessage::Ping { .. }));
                let d = self.peers[peer].delay_ms;
                let reply = DiscoveryMessage::Pong {
                    seq: self.peers[peer].record.seq,
                };
                self.schedule(self.now + d, Ev::PongArrives { peer, msg: reply });
            }
            Ev::PongArrives { peer, msg } => {
                if self.peers[peer].session.is_none() {
                    return;
                }
                if let DiscoveryMessage::Pong { .. } = msg {
                    let peer_id = self.peers[peer].peer_id.clone();
                    self.host.on_pong(&peer_id, self.now);
                }
            }
        }
    }
}

/// Deterministic endpoint of simulated peer `i`.
pub fn peer_endpoint(i: usize) -> (IpAddr, u16) {
    let block = IP_BLOCKS[i / 200];
    let ip = IpAddr::V4(Ipv4Addr::new(
        block[0],
        block[1],
        block[2],
        (i % 200 + 1) as u8,
    ));
    (ip, 9000 + i as u16)
}

fn peer_seed(scenario_seed: u64, i: usize) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(b"sim-peer");
    hasher.update(scenario_seed.to_be_bytes());
    hasher.update((i as u64).to_be_bytes());
    hasher.finalize().into()
}

pub fn default_host_config() -> HostConfig {
    HostConfig {
        geo_provider: GeoProviderConfig {
            provider: "simnet".to_string(),
            path: String::new(),
        },
        ..HostConfig::default()
    }
}

/// Runs a scenario with the default host configuration.
pub fn run_scenario(scenario: &Scenario) -> Result<SimOutput, SimError> {
    run_scenario_with(scenario, default_host_config())
}

/// Runs a scenario around an embedded crawler host built from `config`.
pub fn run_scenario_with(scenario: &Scenario, config: HostConfig) -> Result<SimOutput, SimError> {
    run_scenario_custom(scenario, config, None)
}

/// Like [`run_scenario_with`], with an optional geo table overriding the
/// simulator-generated one (used when a config names a geo data file).
pub fn run_scenario_custom(
    scenario: &Scenario,
    config: HostConfig,
    geo_override: Option<StaticGeoTable>,
) -> Result<SimOutput, SimError> {
    scenario.validate()?;
    config.validate()?;

    let total = scenario.total_peers();
    let mut profiles = Vec::with_capacity(total);
    for (count, profile) in &scenario.peers {
        for _ in 0..*count {
            profiles.push(profile.clone());
        }
    }

    // endpoint registry: peers occupy their endpoints before the host binds
    for i in 0..total {
        let (ip, port) = peer_endpoint(i);
        if ip == config.ip && port == config.tcp_port {
            return Err(SimError::BindFailure(alloc::format!(
                "endpoint {ip}:{port} is already in use by a simulated peer"
            )));
        }
    }

    let mut geo_entries = BTreeMap::new();
    let mut peers = Vec::with_capacity(total);
    let mut membership = BTreeMap::new();
    let mut peer_by_node = BTreeMap::new();
    let mut peer_by_id = BTreeMap::new();
    let root_rng = DetRng::from_seed(scenario.seed);
    for (i, profile) in profiles.into_iter().enumerate() {
        let (ip, port) = peer_endpoint(i);
        let (_, record) = generate_identity(
            &peer_seed(scenario.seed, i),
            ip,
            port,
            port,
            &config.network_id,
        );
        let (country, city) = COUNTRIES[i % COUNTRIES.len()];
        geo_entries.insert(ip, (country.to_string(), city.to_string()));
        let peer_id = crate::crawler::peer_id_for_pubkey(&record.pubkey);
        membership.insert(record.node_id, record.clone());
        peer_by_node.insert(record.node_id, i);
        peer_by_id.insert(peer_id.clone(), i);
        peers.push(SimPeer {
            delay_ms: profile.link_delay_ms,
            online: true,
            pending_attempt: None,
            session: None,
            rng: root_rng.fork(1000 + i as u64),
            node_id: record.node_id,
            peer_id,
            record,
            profile,
        });
    }

    let mut host_seed = [0u8; 32];
    host_seed[..8].copy_from_slice(&scenario.seed.to_be_bytes());
    host_seed[8] = 0x68; // distinct from any peer seed
    let geo = geo_override.unwrap_or_else(|| StaticGeoTable::new(geo_entries));
    let host = Host::new(config, &host_seed, alloc::boxed::Box::new(geo))?;

    let mut forward_order: Vec<usize> = (0..peers.len()).collect();
    forward_order.sort_by(|&a, &b| peers[a].peer_id.cmp(&peers[b].peer_id));

    let mut truth = GroundTruth {
        membership: membership.keys().map(|id| id.to_hex()).collect(),
        ..GroundTruth::default()
    };
    for peer in &peers {
        truth
            .link_delays_ms
            .insert(peer.peer_id.clone(), peer.delay_ms);
    }

    let export_interval_ms = host.config.export_interval_s as u64 * 1000;
    let mut sim = Sim {
        now: 0,
        duration_ms: scenario.duration_ms,
        seq: 0,
        heap: BinaryHeap::new(),
        events: BTreeMap::new(),
        peers,
        peer_by_node,
        peer_by_id,
        forward_order,
        membership,
        host,
        session_seq: 0,
        attempt_seq: 0,
        resolved_attempts: BTreeSet::new(),
        truth,
        open_sessions: BTreeMap::new(),
        exports: Vec::new(),
        logs: Vec::new(),
        slot_rng: root_rng.fork(7),
        export_interval_ms,
    };

    // initial timers
    let hb = sim.host.router.config().heartbeat_ms;
    sim.schedule(hb, Ev::Heartbeat);
    sim.schedule(DEFAULT_LOOKUP_INTERVAL_MS, Ev::DiscoveryTick);
    sim.schedule(export_interval_ms, Ev::ExportTick);
    sim.schedule(LATENCY_PROBE_INTERVAL_MS, Ev::LatencyTick);
    if scenario.slot_interval_ms > 0 {
        let mut slot = 1u64;
        let mut t = scenario.slot_interval_ms;
        while t <= scenario.duration_ms {
            sim.schedule(t, Ev::SlotPublish { slot });
            slot += 1;
            t += scenario.slot_interval_ms;
        }
    }
    for i in 0..sim.peers.len() {
        let rates = sim.peers[i].profile.publish_rate_micro_per_min.clone();
        for (topic, rate_micro) in rates {
            if rate_micro == 0 {
                continue;
            }
            // period in ms, exact integer arithmetic on micro-rates
            let period = ((60_000u128 * 1_000_000) / rate_micro as u128) as u64;
            if period == 0 || period > scenario.duration_ms {
                continue;
            }
            let jitter = sim.peers[i].rng.next_below(period);
            let mut t = jitter.max(1);
            let mut n = 0u64;
            while t <= scenario.duration_ms {
                sim.schedule(
                    t,
                    Ev::RatePublish {
                        peer: i,
                        topic: topic.clone(),
                        n,
                    },
                );
                n += 1;
                t += period;
            }
        }
    }

    // bootstrap with the scenario's bootnode records
    let bootnodes: Vec<NodeRecord> = scenario
        .bootnodes
        .iter()
        .map(|&i| sim.peers[i as usize].record.clone())
        .collect();
    let cmds = sim.host.start(&bootnodes, 0);
    sim.apply_cmds(cmds);

    // main loop
    while let Some(Reverse((t, _pri, key))) = sim.heap.pop() {
        if t > sim.duration_ms {
            break;
        }
        sim.now = t;
        let ev = sim.events.remove(&key).expect("event for heap entry");
        sim.handle(ev);
    }
    sim.now = sim.duration_ms;

    // close the books: clamp open sessions to the end of the run
    let open: Vec<(PeerId, u64)> = sim
        .open_sessions
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    for (peer_id, open_ms) in open {
        sim.truth
            .sessions
            .entry(peer_id)
            .or_default()
            .push(SessionInterval {
                open_ms,
                close_ms: sim.duration_ms,
            });
    }

    let snapshot = sim.host.snapshot(sim.duration_ms);
    let peerstore_dump = sim.host.discovery.store.dump_jsonl();
    if sim.exports.last().map(|e| e.t_ms) != Some(sim.duration_ms) {
        sim.exports.push(Export {
            t_ms: sim.duration_ms,
            snapshot: snapshot.clone(),
            peerstore: peerstore_dump.clone(),
        });
    }
    Ok(SimOutput {
        snapshot,
        truth: sim.truth,
        exports: sim.exports,
        peerstore_dump,
        logs: sim.logs,
    })
}

// ---------------------------------------------------------------------------
// oracles
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CounterMismatch {
    pub peer_id: PeerId,
    pub topic: String,
    pub expected: u64,
    pub actual: u64,
}

impl fmt::Display for CounterMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "counter mismatch peer={} topic={} expected={} actual={}",
            self.peer_id, self.topic, self.expected, self.actual
        )
    }
}

/// Recomputes expected first-relayer counts by replaying the publish log
/// through the delay graph: for each publish at `s`, the candidates are the
/// peers with a session satisfying `open < s && s + delay < close`; the
/// earliest arrival wins, ties broken by ascending peer id. The result is
/// diffed component-wise against the snapshot counters.
pub fn verify_counters(snapshot: &MetricsSnapshot, truth: &GroundTruth) -> Vec<CounterMismatch> {
    let topics = snapshot.topics();
    let mut expected: BTreeMap<(PeerId, String), u64> = BTreeMap::new();
    for publish in &truth.publishes {
        if !topics.contains(&publish.topic) {
            continue;
        }
        let mut best: Option<(u64, &PeerId)> = None;
        for (peer_id, sessions) in &truth.sessions {
            let Some(delay) = truth.link_delays_ms.get(peer_id) else {
                continue;
            };
            let arrival = publish.t_ms + delay;
            let candidate = sessions
                .iter()
                .any(|s| s.open_ms < publish.t_ms && arrival < s.close_ms);
            if candidate && best.is_none_or(|(ba, bp)| (arrival, peer_id) < (ba, bp)) {
                best = Some((arrival, peer_id));
            }
        }
        if let Some((_, winner)) = best {
            *expected
                .entry((winner.clone(), publish.topic.clone()))
                .or_insert(0) += 1;
        }
    }

    let mut mismatches = Vec::new();
    for peer in &snapshot.peers {
        for (topic, actual) in &peer.counters {
            let want = expected
                .get(&(peer.info.peer_id.clone(), topic.clone()))
                .copied()
                .unwrap_or(0);
            if want != *actual {
                mismatches.push(CounterMismatch {
                    peer_id: peer.info.peer_id.clone(),
                    topic: topic.clone(),
                    expected: want,
                    actual: *actual,
                });
            }
        }
    }
    // credit expected for peers missing from the snapshot is a mismatch too
    for ((peer_id, topic), want) in &expected {
        if snapshot.peer(peer_id).is_none() {
            mismatches.push(CounterMismatch {
                peer_id: peer_id.clone(),
                topic: topic.clone(),
                expected: *want,
                actual: 0,
            });
        }
    }
    mismatches
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DurationMismatch {
    pub peer_id: PeerId,
    pub detail: String,
}

impl fmt::Display for DurationMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "duration mismatch peer={}: {}",
            self.peer_id, self.detail
        )
    }
}

pub const DEFAULT_DURATION_TOLERANCE_MS: u64 = 500;

/// Compares analyzer-derived session intervals against the oracle's
/// realized connect/disconnect schedule, peer by peer and session by
/// session, within `tolerance_ms`.
pub fn verify_durations(
    snapshot: &MetricsSnapshot,
    truth: &GroundTruth,
    tolerance_ms: u64,
) -> Vec<DurationMismatch> {
    let policy = DedupPolicy::default();
    let mut mismatches = Vec::new();

    for peer in &snapshot.peers {
        let peer_id = &peer.info.peer_id;
        let mut flag = |detail: String| {
            mismatches.push(DurationMismatch {
                peer_id: peer_id.clone(),
                detail,
            });
        };
        let deduped = match dedup_events(&peer.events, &policy) {
            Ok(d) => d,
            Err(e) => {
                flag(alloc::format!("{e}"));
                continue;
            }
        };
        let derived = connection_sessions(&deduped, snapshot.captured_at_ms);
        let expected = truth.sessions.get(peer_id).cloned().unwrap_or_default();
        if derived.sessions.len() != expected.len() {
            flag(alloc::format!(
                "session count: derived {} vs oracle {}",
                derived.sessions.len(),
                expected.len()
            ));
            continue;
        }
        for (i, ((start, end), oracle)) in derived.sessions.iter().zip(&expected).enumerate() {
            if start.abs_diff(oracle.open_ms) > tolerance_ms
                || end.abs_diff(oracle.close_ms) > tolerance_ms
            {
                flag(alloc::format!(
                    "session {i}: derived ({start}, {end}) vs oracle ({}, {})",
                    oracle.open_ms,
                    oracle.close_ms
                ));
            }
        }
    }

    // oracle sessions for peers absent from the snapshot cannot be right
    for (peer_id, sessions) in &truth.sessions {
        if !sessions.is_empty() && snapshot.peer(peer_id).is_none() {
            mismatches.push(DurationMismatch {
                peer_id: peer_id.clone(),
                detail: "oracle has sessions but the snapshot has no such peer".to_string(),
            });
        }
    }
    mismatches
}

// ---------------------------------------------------------------------------
// scenario and ground-truth files
// ---------------------------------------------------------------------------

/// Parses the scenario JSON format:
///
/// ```json
/// {
///   "seed": 7,
///   "duration_ms": 3600000,
///   "slot_interval_ms": 12000,
///   "bootnodes": [0],
///   "peers": [
///     {"count": 10, "profile": {
///       "user_agent": "Prysm/v1.0.0/linux-amd64",
///       "max_peers": 30,
///       "strategy": "Strict",
///       "publish_rate_per_min": {"VoluntaryExit": "0.05"},
///       "link_delay_ms": 40,
///       "accepts_inbound": true,
///       "churn": {"disconnect_after_ms": 900000, "reconnect_after_ms": 240000},
///       "legacy_event_mode": false,
///       "prune_period_ms": 300000
///     }}
///   ]
/// }
/// ```
///
/// `churn`, `prune_period_ms`, `legacy_event_mode`, and `slot_interval_ms`
/// may be omitted (or `null` for the first two); rates accept decimal
/// strings or whole-number messages per minute.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioInvalid> {
    parse_scenario_inner(text).map_err(|e| ScenarioInvalid(alloc::format!("{e}")))
}

fn parse_scenario_inner(text: &str) -> Result<Scenario, json::FieldError> {
    let doc = json::parse_document(text)?;
    let obj = json::as_object(&doc, "<root>")?;
    let seed = json::get_u64(obj, "", "seed")?;
    let duration_ms = json::get_u64(obj, "", "duration_ms")?;
    let slot_interval_ms = match obj.get("slot_interval_ms") {
        None => DEFAULT_SLOT_INTERVAL_MS,
        Some(v) => v.as_u64().ok_or_else(|| {
            json::FieldError::new("slot_interval_ms", "expected an unsigned integer")
        })?,
    };
    let bootnodes = json::get_array(obj, "", "bootnodes")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_u64().map(|n| n as u32).ok_or_else(|| {
                json::FieldError::new(&alloc::format!("bootnodes[{i}]"), "expected an index")
            })
        })
        .collect::<Result<Vec<u32>, _>>()?;

    let mut peers = Vec::new();
    for (i, group) in json::get_array(obj, "", "peers")?.iter().enumerate() {
        let field = alloc::format!("peers[{i}]");
        let group = json::as_object(group, &field)?;
        let count = json::get_u64(group, &field, "count")? as u32;
        let pfield = json::join(&field, "profile");
        let profile = json::get_object(group, &field, "profile")?;

        let mut rates = BTreeMap::new();
        if let Some(v) = profile.get("publish_rate_per_min") {
            let rates_obj = v.as_object().ok_or_else(|| {
                json::FieldError::new(
                    &json::join(&pfield, "publish_rate_per_min"),
                    "expected an object",
                )
            })?;
            for (topic, rate) in rates_obj {
                let rf = alloc::format!("{pfield}.publish_rate_per_min.{topic}");
                rates.insert(topic.clone(), json::value_to_micros(rate, &rf)?);
            }
        }
        let churn = match profile.get("churn") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let cfield = json::join(&pfield, "churn");
                let c = json::as_object(v, &cfield)?;
                Some(ChurnSpec {
                    disconnect_after_ms: json::get_u64(c, &cfield, "disconnect_after_ms")?,
                    reconnect_after_ms: json::get_u64(c, &cfield, "reconnect_after_ms")?,
                })
            }
        };
        let prune_period_ms = match profile.get("prune_period_ms") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| {
                json::FieldError::new(
                    &json::join(&pfield, "prune_period_ms"),
                    "expected an unsigned integer",
                )
            })?),
        };
        let strategy_str = json::get_str(profile, &pfield, "strategy")?;
        let strategy = Strategy::parse(strategy_str).ok_or_else(|| {
            json::FieldError::new(
                &json::join(&pfield, "strategy"),
                alloc::format!("unknown strategy `{strategy_str}` (expected Strict or Flexible)"),
            )
        })?;
        peers.push((
            count,
            PeerProfile {
                user_agent: json::get_str(profile, &pfield, "user_agent")?.to_string(),
                max_peers: json::get_u64(profile, &pfield, "max_peers")? as u32,
                strategy,
                publish_rate_micro_per_min: rates,
                link_delay_ms: json::get_u64(profile, &pfield, "link_delay_ms")?,
                accepts_inbound: json::get_bool(profile, &pfield, "accepts_inbound")?,
                churn,
                legacy_event_mode: match profile.get("legacy_event_mode") {
                    None => false,
                    Some(v) => v.as_bool().ok_or_else(|| {
                        json::FieldError::new(
                            &json::join(&pfield, "legacy_event_mode"),
                            "expected a boolean",
                        )
                    })?,
                },
                prune_period_ms,
            },
        ));
    }

    Ok(Scenario {
        seed,
        duration_ms,
        peers,
        bootnodes,
        slot_interval_ms,
    })
}

/// Canonical ground-truth encoding (sorted keys, deterministic bytes).
pub fn encode_ground_truth(truth: &GroundTruth) -> String {
    let mut m = Map::new();
    m.insert(
        "dial_decisions".to_string(),
        Value::Object(
            truth
                .dial_decisions
                .iter()
                .map(|(k, v)| (k.clone(), Value::from(*v)))
                .collect(),
        ),
    );
    m.insert(
        "link_delays_ms".to_string(),
        Value::Object(
            truth
                .link_delays_ms
                .iter()
                .map(|(k, v)| (k.0.clone(), Value::from(*v)))
                .collect(),
        ),
    );
    m.insert(
        "membership".to_string(),
        Value::Array(
            truth
                .membership
                .iter()
                .map(|id| Value::from(id.as_str()))
                .collect(),
        ),
    );
    m.insert(
        "publishes".to_string(),
        Value::Array(
            truth
                .publishes
                .iter()
                .map(|p| {
                    let mut pm = Map::new();
                    pm.insert("msg_id".to_string(), Value::from(p.msg_id.to_hex()));
                    pm.insert("origin".to_string(), Value::from(p.origin.0.as_str()));
                    pm.insert("t_ms".to_string(), Value::from(p.t_ms));
                    pm.insert("topic".to_string(), Value::from(p.topic.as_str()));
                    Value::Object(pm)
                })
                .collect(),
        ),
    );
    m.insert(
        "sessions".to_string(),
        Value::Object(
            truth
                .sessions
                .iter()
                .map(|(peer, intervals)| {
                    (
                        peer.0.clone(),
                        Value::Array(
                            intervals
                                .iter()
                                .map(|s| {
                                    let mut sm = Map::new();
                                    sm.insert("close_ms".to_string(), Value::from(s.close_ms));
                                    sm.insert("open_ms".to_string(), Value::from(s.open_ms));
                                    Value::Object(sm)
                                })
                                .collect(),
                        ),
                    )
                })
                .collect(),
        ),
    );
    json::to_canonical_string(&Value::Object(m))
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, ScenarioInvalid> {
    parse_ground_truth_inner(text).map_err(|e| ScenarioInvalid(alloc::format!("{e}")))
}

fn parse_ground_truth_inner(text: &str) -> Result<GroundTruth, json::FieldError> {
    let doc = json::parse_document(text)?;
    let obj = json::as_object(&doc, "<root>")?;
    let mut truth = GroundTruth::default();
    for (i, v) in json::get_array(obj, "", "membership")?.iter().enumerate() {
        truth.membership.push(
            v.as_str()
                .ok_or_else(|| {
                    json::FieldError::new(&alloc::format!("membership[{i}]"), "expected a string")
                })?
                .to_string(),
        );
    }
    for (k, v) in json::get_object(obj, "", "dial_decisions")? {
        truth.dial_decisions.insert(
            k.clone(),
            v.as_bool().ok_or_else(|| {
                json::FieldError::new(&alloc::format!("dial_decisions.{k}"), "expected a boolean")
            })?,
        );
    }
    for (k, v) in json::get_object(obj, "", "link_delays_ms")? {
        truth.link_delays_ms.insert(
            PeerId(k.clone()),
            v.as_u64().ok_or_else(|| {
                json::FieldError::new(&alloc::format!("link_delays_ms.{k}"), "expected an integer")
            })?,
        );
    }
    for (i, v) in json::get_array(obj, "", "publishes")?.iter().enumerate() {
        let field = alloc::format!("publishes[{i}]");
        let p = json::as_object(v, &field)?;
        let id_hex = json::get_str(p, &field, "msg_id")?;
        let id_bytes = hex::decode(id_hex)
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .ok_or_else(|| {
                json::FieldError::new(&json::join(&field, "msg_id"), "expected 64 hex chars")
            })?;
        truth.publishes.push(PublishRecord {
            msg_id: MsgId(id_bytes),
            origin: PeerId(json::get_str(p, &field, "origin")?.to_string()),
            topic: json::get_str(p, &field, "topic")?.to_string(),
            t_ms: json::get_u64(p, &field, "t_ms")?,
        });
    }
    for (peer, v) in json::get_object(obj, "", "sessions")? {
        let field = alloc::format!("sessions.{peer}");
        let mut intervals = Vec::new();
        for (i, s) in v
            .as_array()
            .ok_or_else(|| json::FieldError::new(&field, "expected an array"))?
            .iter()
            .enumerate()
        {
            let sfield = alloc::format!("{field}[{i}]");
            let s = json::as_object(s, &sfield)?;
            intervals.push(SessionInterval {
                open_ms: json::get_u64(s, &sfield, "open_ms")?,
                close_ms: json::get_u64(s, &sfield, "close_ms")?,
            });
        }
        truth.sessions.insert(PeerId(peer.clone()), intervals);
    }
    Ok(truth)
}

/// File name the crawler uses for a periodic export.
pub fn export_file_name(t_ms: u64) -> String {
    alloc::format!("snapshot-{t_ms}.json")
}

pub fn export_file(snapshot: &MetricsSnapshot) -> String {
    encode_snapshot(snapshot)
}
