//! DHT-backed peerstore and the discovery loop that fills it.
//!
//! The peerstore keeps every verifying record it has ever been offered
//! (the crawler wants breadth), with at most one record per node id — the
//! one with the highest sequence number observed. Alongside the flat store
//! there is a Kademlia-style routing view: 256 XOR-distance buckets of at
//! most `k = 16` ids relative to the local node id. A full bucket simply
//! stops tracking additional ids (no liveness ping-replace); the flat store
//! is unaffected.
//!
//! Lookup rounds follow the usual iterative pattern: pick a random target,
//! query the `alpha` stored peers closest to it with `FindNode`, admit
//! whatever comes back.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Value};

use crate::identity::{verify_record, NodeId, NodeRecord};
use crate::json;
use crate::rng::DetRng;

pub const BUCKET_COUNT: usize = 256;
/// Kademlia bucket size (k).
pub const BUCKET_SIZE: usize = 16;
/// Upper bound on records per `Nodes` reply.
pub const MAX_NODES_PER_REPLY: usize = 16;
pub const DEFAULT_ALPHA: usize = 3;
pub const DEFAULT_LOOKUP_INTERVAL_MS: u64 = 1_000;
/// Per-peer timeout for discovery transport calls.
pub const DEFAULT_TRANSPORT_TIMEOUT_MS: u64 = 2_000;

/// discv5-style log distance: 0 for identical ids, otherwise the index of
/// the highest differing bit plus one (`1..=256`).
pub fn log_distance(a: &NodeId, b: &NodeId) -> u16 {
    match a.log2_distance(b) {
        None => 0,
        Some(bit) => bit + 1,
    }
}

#[derive(Clone, Debug)]
pub struct PeerstoreEntry {
    pub record: NodeRecord,
    pub first_seen_ms: u64,
    pub last_seen_ms: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AdmitOutcome {
    /// Node id not seen before; record stored and bucketed (space permitting).
    Inserted,
    /// Higher sequence number than the stored record; replaced.
    Updated,
    /// Sequence number not newer (or the local node's own record).
    IgnoredStale,
    /// Record failed verification.
    RejectedInvalid,
}

/// Message set spoken between discovery participants.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DiscoveryMessage {
    FindNode { distance: u16 },
    Nodes { records: Vec<NodeRecord> },
    Ping { seq: u64 },
    Pong { seq: u64 },
}

#[derive(Clone, Debug)]
pub struct Peerstore {
    local_id: NodeId,
    entries: BTreeMap<NodeId, PeerstoreEntry>,
    buckets: Vec<Vec<NodeId>>,
}

impl Peerstore {
    pub fn new(local_id: NodeId) -> Self {
        Peerstore {
            local_id,
            entries: BTreeMap::new(),
            buckets: alloc::vec![Vec::new(); BUCKET_COUNT],
        }
    }

    pub fn local_id(&self) -> &NodeId {
        &self.local_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<&PeerstoreEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&NodeId, &PeerstoreEntry)> {
        self.entries.iter()
    }

    /// Admits a record, keeping the highest sequence number per node id.
    /// The local node's own record is never stored.
    ///
    /// Signature verification runs only when the record could change store
    /// state; a re-offered record that is byte-identical to the stored one
    /// just refreshes `last_seen` (the stored copy already verified).
    pub fn admit_record(&mut self, record: NodeRecord, now_ms: u64) -> AdmitOutcome {
        if record.node_id == self.local_id {
            return if verify_record(&record) {
                AdmitOutcome::IgnoredStale
            } else {
                AdmitOutcome::RejectedInvalid
            };
        }
        match self.entries.get_mut(&record.node_id) {
            None => {
                if !verify_record(&record) {
                    return AdmitOutcome::RejectedInvalid;
                }
                let id = record.node_id;
                self.entries.insert(
                    id,
                    PeerstoreEntry {
                        record,
                        first_seen_ms: now_ms,
                        last_seen_ms: now_ms,
                    },
                );
                let bucket = &mut self.buckets[(log_distance(&self.local_id, &id) - 1) as usize];
                if bucket.len() < BUCKET_SIZE {
                    bucket.push(id);
                }
                AdmitOutcome::Inserted
            }
            Some(entry) => {
                if record.seq > entry.record.seq {
                    if !verify_record(&record) {
                        return AdmitOutcome::RejectedInvalid;
                    }
                    entry.record = record;
                    entry.last_seen_ms = now_ms;
                    AdmitOutcome::Updated
                } else if record.seq == entry.record.seq {
                    if record == entry.record {
                        entry.last_seen_ms = now_ms;
                        return AdmitOutcome::IgnoredStale;
                    }
                    if !verify_record(&record) {
                        return AdmitOutcome::RejectedInvalid;
                    }
                    entry.last_seen_ms = now_ms;
                    AdmitOutcome::IgnoredStale
                } else {
                    // strictly older seq: stale regardless of validity
                    AdmitOutcome::IgnoredStale
                }
            }
        }
    }

    /// Seeds the store from bootnode records, skipping any that do not
    /// verify. Returns the number admitted.
    pub fn bootstrap(&mut self, bootnodes: &[NodeRecord], now_ms: u64) -> usize {
        bootnodes
            .iter()
            .filter(|r| {
                !matches!(
                    self.admit_record((*r).clone(), now_ms),
                    AdmitOutcome::RejectedInvalid
                )
            })
            .count()
    }

    /// The `n` stored ids closest to `target` by XOR distance.
    pub fn closest(&self, target: &NodeId, n: usize) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.entries.keys().copied().collect();
        ids.sort_by_key(|a| a.xor_distance(target));
        ids.truncate(n);
        ids
    }

    /// Checks that every bucketed id sits in the bucket matching its XOR
    /// distance prefix and is actually stored.
    pub fn buckets_consistent(&self) -> bool {
        for (i, bucket) in self.buckets.iter().enumerate() {
            if bucket.len() > BUCKET_SIZE {
                return false;
            }
            for id in bucket {
                if !self.entries.contains_key(id) {
                    return false;
                }
                if (log_distance(&self.local_id, id) - 1) as usize != i {
                    return false;
                }
            }
        }
        true
    }

    /// Dump format: one canonical JSON object per line, ordered by node id.
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, entry) in &self.entries {
            let mut m = Map::new();
            m.insert(
                "first_seen_ms".to_string(),
                Value::from(entry.first_seen_ms),
            );
            m.insert("ip".to_string(), Value::from(ip_string(&entry.record)));
            m.insert("last_seen_ms".to_string(), Value::from(entry.last_seen_ms));
            m.insert(
                "network_id".to_string(),
                Value::from(entry.record.network_id.as_str()),
            );
            m.insert("node_id".to_string(), Value::from(id.to_hex()));
            m.insert("seq".to_string(), Value::from(entry.record.seq));
            m.insert("tcp".to_string(), Value::from(entry.record.tcp_port));
            m.insert("udp".to_string(), Value::from(entry.record.udp_port));
            out.push_str(&json::to_canonical_string(&Value::Object(m)));
            out.push('\n');
        }
        out
    }
}

fn ip_string(record: &NodeRecord) -> String {
    use core::net::IpAddr;
    match record.ip {
        IpAddr::V4(v4) => alloc::format!("{v4}"),
        IpAddr::V6(v6) => alloc::format!("{v6}"),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TransportTimeout;

impl fmt::Display for TransportTimeout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "discovery transport call timed out")
    }
}

impl core::error::Error for TransportTimeout {}

/// Blocking request/response view of the discovery transport, used by
/// [`lookup_round`]. The event-driven [`DiscoveryService`] speaks the same
/// protocol through commands instead.
pub trait LookupTransport {
    fn find_node(
        &mut self,
        to: &NodeRecord,
        distance: u16,
    ) -> Result<Vec<NodeRecord>, TransportTimeout>;
}

/// One iterative lookup: query the `alpha` stored peers closest to `target`
/// and admit every record from their replies. Per-peer timeouts are
/// tolerated. Returns the node ids that were newly inserted.
pub fn lookup_round(
    store: &mut Peerstore,
    transport: &mut dyn LookupTransport,
    target: &NodeId,
    alpha: usize,
    now_ms: u64,
) -> Vec<NodeId> {
    let mut inserted = Vec::new();
    for peer_id in store.closest(target, alpha) {
        let record = store
            .get(&peer_id)
            .expect("closest returns stored ids")
            .record
            .clone();
        let distance = log_distance(&record.node_id, target);
        match transport.find_node(&record, distance) {
            Err(TransportTimeout) => continue,
            Ok(records) => {
                for record in records.into_iter().take(MAX_NODES_PER_REPLY) {
                    let id = record.node_id;
                    if store.admit_record(record, now_ms) == AdmitOutcome::Inserted {
                        inserted.push(id);
                    }
                }
            }
        }
    }
    inserted
}

/// Responder-side record selection for a `FindNode { distance }` query:
/// prefer candidates whose log distance from `self_id` matches the request,
/// widening ring by ring, sampling randomly within each ring, up to `max`.
pub fn select_nodes_reply(
    known: &BTreeMap<NodeId, NodeRecord>,
    self_id: &NodeId,
    distance: u16,
    rng: &mut DetRng,
    max: usize,
) -> Vec<NodeRecord> {
    let mut rings: BTreeMap<u16, Vec<&NodeRecord>> = BTreeMap::new();
    for (id, record) in known {
        let ring = log_distance(self_id, id).abs_diff(distance);
        rings.entry(ring).or_default().push(record);
    }
    let mut out = Vec::new();
    for (_, ring) in rings {
        if out.len() >= max {
            break;
        }
        for idx in rng.sample_indices(ring.len(), max - out.len()) {
            out.push(ring[idx].clone());
        }
    }
    out
}

/// Command emitted by the discovery service for its driver to execute.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DiscoveryCmd {
    Send {
        to: NodeId,
        msg: DiscoveryMessage,
    },
    /// A node id newly inserted into the peerstore; each id is emitted at
    /// most once over the service's lifetime.
    Discovered {
        node_id: NodeId,
    },
}

/// Event-driven discovery loop: every tick starts a lookup round toward a
/// fresh random target and emits newly inserted ids to the subscriber.
#[derive(Clone, Debug)]
pub struct DiscoveryService {
    pub store: Peerstore,
    alpha: usize,
    rng: DetRng,
    inflight: BTreeMap<NodeId, u64>,
    rounds: u64,
    timeouts: u64,
}

impl DiscoveryService {
    pub fn new(store: Peerstore, alpha: usize, rng: DetRng) -> Self {
        DiscoveryService {
            store,
            alpha,
            rng,
            inflight: BTreeMap::new(),
            rounds: 0,
            timeouts: 0,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }

    /// Admits bootnodes and emits every stored id once, so the crawler dials
    /// bootstrap peers as well as looked-up ones.
    pub fn bootstrap_and_start(
        &mut self,
        bootnodes: &[NodeRecord],
        now_ms: u64,
    ) -> (usize, Vec<DiscoveryCmd>) {
        let admitted = self.store.bootstrap(bootnodes, now_ms);
        let cmds = self
            .store
            .entries()
            .map(|(id, _)| DiscoveryCmd::Discovered { node_id: *id })
            .collect();
        (admitted, cmds)
    }

    /// Starts one lookup round toward a random target.
    pub fn on_tick(&mut self, now_ms: u64) -> Vec<DiscoveryCmd> {
        if self.store.is_empty() {
            return Vec::new();
        }
        self.rounds += 1;
        let mut target_bytes = [0u8; 32];
        self.rng.fill_bytes(&mut target_bytes);
        let target = NodeId(target_bytes);
        let mut cmds = Vec::new();
        for peer in self.store.closest(&target, self.alpha) {
            if self.inflight.contains_key(&peer) {
                continue;
            }
            self.inflight.insert(peer, now_ms);
            let distance = log_distance(&peer, &target);
            cmds.push(DiscoveryCmd::Send {
                to: peer,
                msg: DiscoveryMessage::FindNode { distance },
            });
        }
        cmds
    }

    pub fn on_nodes_reply(
        &mut self,
        from: NodeId,
        records: Vec<NodeRecord>,
        now_ms: u64,
    ) -> Vec<DiscoveryCmd> {
        self.inflight.remove(&from);
        let mut cmds = Vec::new();
        for record in records.into_iter().take(MAX_NODES_PER_REPLY) {
            let id = record.node_id;
            if self.store.admit_record(record, now_ms) == AdmitOutcome::Inserted {
                cmds.push(DiscoveryCmd::Discovered { node_id: id });
            }
        }
        cmds
    }

    /// A queried peer failed to answer within the transport timeout; that
    /// peer simply contributes nothing to the round.
    pub fn on_timeout(&mut self, peer: NodeId, _now_ms: u64) {
        if self.inflight.remove(&peer).is_some() {
            self.timeouts += 1;
        }
    }
}
