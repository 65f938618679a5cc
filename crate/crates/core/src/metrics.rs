//! Shared metrics data model: per-peer event logs and message counters, and
//! the snapshot format that is the contract between the crawler and the
//! analyzer.
//!
//! Snapshot encoding is canonical — sorted keys, integers for timestamps
//! and counters, latency as a fixed six-fractional-digit decimal string —
//! so `encode` is deterministic and `decode(encode(s)) == s` holds
//! field-for-field.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Value};

use crate::crawler::{ClientFamily, PeerInfo};
use crate::json;

/// Snapshot schema version.
pub const SCHEMA_VERSION: u64 = 1;

/// The five default GossipSub topics monitored by the crawler.
pub const DEFAULT_TOPICS: [&str; 5] = [
    "BeaconBlock",
    "BeaconAggregateAndProof",
    "VoluntaryExit",
    "ProposerSlashing",
    "AttesterSlashing",
];

pub fn default_topics() -> Vec<String> {
    DEFAULT_TOPICS.iter().map(|t| t.to_string()).collect()
}

/// Opaque peer identifier string (the transport-level identity, distinct
/// from the discovery-level node id).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub String);

impl PeerId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeerId({}..)", &self.0[..self.0.len().min(8)])
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, PartialOrd, Ord)]
pub enum EventKind {
    Connect,
    Disconnect,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Connect => "Connect",
            EventKind::Disconnect => "Disconnect",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Connect" => Some(EventKind::Connect),
            "Disconnect" => Some(EventKind::Disconnect),
            _ => None,
        }
    }
}

/// Timestamped connect/disconnect occurrence attributed to one peer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ConnectionEvent {
    pub kind: EventKind,
    pub t_ms: u64,
}

/// Outcome of [`MetricsStore::record_event`]. A clock regression is flagged
/// but the event is still recorded.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[must_use]
pub enum RecordAck {
    Recorded,
    ClockRegression,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UnknownTopic(pub String);

impl fmt::Display for UnknownTopic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "topic `{}` is not configured", self.0)
    }
}

impl core::error::Error for UnknownTopic {}

/// Schema problem found while decoding a snapshot, with the offending field.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SchemaViolation {
    pub field: String,
    pub detail: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema violation at `{}`: {}", self.field, self.detail)
    }
}

impl core::error::Error for SchemaViolation {}

impl From<json::FieldError> for SchemaViolation {
    fn from(e: json::FieldError) -> Self {
        SchemaViolation {
            field: e.field,
            detail: e.detail,
        }
    }
}

/// Per-peer accumulator: identity metadata, time-ordered event log, and
/// per-topic message counters (zero-filled for every configured topic).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeerMetrics {
    pub info: PeerInfo,
    pub events: Vec<ConnectionEvent>,
    pub counters: BTreeMap<String, u64>,
}

impl PeerMetrics {
    pub fn stub(peer_id: PeerId, topics: &[String]) -> Self {
        PeerMetrics {
            info: PeerInfo::stub(peer_id),
            events: Vec::new(),
            counters: topics.iter().map(|t| (t.clone(), 0)).collect(),
        }
    }

    pub fn total_messages(&self) -> u64 {
        self.counters.values().sum()
    }
}

/// Consistent point-in-time view of every tracked peer.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MetricsSnapshot {
    pub captured_at_ms: u64,
    pub host_node_id: String,
    pub network_id: String,
    /// Sorted by peer id; peer ids are unique.
    pub peers: Vec<PeerMetrics>,
}

impl MetricsSnapshot {
    pub fn peer(&self, id: &PeerId) -> Option<&PeerMetrics> {
        self.peers.iter().find(|p| &p.info.peer_id == id)
    }

    /// Topic set of the snapshot (counter keys are identical across peers).
    pub fn topics(&self) -> Vec<String> {
        match self.peers.first() {
            Some(p) => p.counters.keys().cloned().collect(),
            None => default_topics(),
        }
    }
}

/// Mutable store the crawler records into. All mutations go through one
/// writer; snapshots copy the current state.
#[derive(Clone, Debug)]
pub struct MetricsStore {
    topics: Vec<String>,
    peers: BTreeMap<PeerId, PeerMetrics>,
    clock_regressions: Vec<(PeerId, u64)>,
}

impl MetricsStore {
    pub fn new(topics: Vec<String>) -> Self {
        MetricsStore {
            topics,
            peers: BTreeMap::new(),
            clock_regressions: Vec::new(),
        }
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn peer_count(&self) -> usize {
        self.peers.len()
    }

    pub fn peer(&self, id: &PeerId) -> Option<&PeerMetrics> {
        self.peers.get(id)
    }

    pub fn clock_regressions(&self) -> &[(PeerId, u64)] {
        &self.clock_regressions
    }

    fn entry(&mut self, peer_id: &PeerId) -> &mut PeerMetrics {
        if !self.peers.contains_key(peer_id) {
            let stub = PeerMetrics::stub(peer_id.clone(), &self.topics);
            self.peers.insert(peer_id.clone(), stub);
        }
        self.peers.get_mut(peer_id).expect("just inserted")
    }

    /// Applies `f` to the peer's info, creating a stub entry if needed.
    pub fn update_info(&mut self, peer_id: &PeerId, f: impl FnOnce(&mut PeerInfo)) {
        f(&mut self.entry(peer_id).info);
    }

    /// Appends an event, preserving sort order by timestamp. Events that
    /// jump back by more than 1000 ms relative to the peer's latest event
    /// are recorded anyway and flagged.
    pub fn record_event(&mut self, peer_id: &PeerId, kind: EventKind, t_ms: u64) -> RecordAck {
        let peer = self.entry(peer_id);
        let regression = peer
            .events
            .last()
            .is_some_and(|last| t_ms + 1000 < last.t_ms);
        // insert after any events with the same timestamp
        let pos = peer.events.partition_point(|e| e.t_ms <= t_ms);
        peer.events.insert(pos, ConnectionEvent { kind, t_ms });
        if regression {
            self.clock_regressions.push((peer_id.clone(), t_ms));
            RecordAck::ClockRegression
        } else {
            RecordAck::Recorded
        }
    }

    /// Increments the peer's counter for `topic`, returning the new value.
    pub fn increment_counter(
        &mut self,
        peer_id: &PeerId,
        topic: &str,
    ) -> Result<u64, UnknownTopic> {
        if !self.topics.iter().any(|t| t == topic) {
            return Err(UnknownTopic(topic.to_string()));
        }
        let peer = self.entry(peer_id);
        let count = peer.counters.entry(topic.to_string()).or_insert(0);
        *count += 1;
        Ok(*count)
    }

    pub fn snapshot(
        &self,
        captured_at_ms: u64,
        host_node_id: &str,
        network_id: &str,
    ) -> MetricsSnapshot {
        MetricsSnapshot {
            captured_at_ms,
            host_node_id: host_node_id.to_string(),
            network_id: network_id.to_string(),
            peers: self.peers.values().cloned().collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// canonical snapshot encoding
// ---------------------------------------------------------------------------

fn event_to_value(e: &ConnectionEvent) -> Value {
    let mut m = Map::new();
    m.insert("kind".to_string(), Value::from(e.kind.as_str()));
    m.insert("t_ms".to_string(), Value::from(e.t_ms));
    Value::Object(m)
}

fn peer_to_value(p: &PeerMetrics) -> Value {
    let mut m = Map::new();
    m.insert("city".to_string(), Value::from(p.info.city.as_str()));
    m.insert(
        "client_family".to_string(),
        Value::from(p.info.client_family.as_str()),
    );
    m.insert(
        "client_version".to_string(),
        Value::from(p.info.client_version.as_str()),
    );
    m.insert(
        "counters".to_string(),
        Value::Object(
            p.counters
                .iter()
                .map(|(k, v)| (k.clone(), Value::from(*v)))
                .collect(),
        ),
    );
    m.insert("country".to_string(), Value::from(p.info.country.as_str()));
    m.insert(
        "events".to_string(),
        Value::Array(p.events.iter().map(event_to_value).collect()),
    );
    m.insert("ip".to_string(), Value::from(p.info.ip.as_str()));
    m.insert(
        "latency_s".to_string(),
        Value::from(json::format_micros(p.info.latency_us)),
    );
    m.insert(
        "multiaddr".to_string(),
        Value::from(p.info.multiaddr.as_str()),
    );
    m.insert("node_id".to_string(), Value::from(p.info.node_id.as_str()));
    m.insert("peer_id".to_string(), Value::from(p.info.peer_id.as_str()));
    m.insert("pubkey".to_string(), Value::from(p.info.pubkey.as_str()));
    Value::Object(m)
}

/// Canonical JSON encoding of a snapshot. Byte-identical for equal values.
pub fn encode_snapshot(s: &MetricsSnapshot) -> String {
    let mut m = Map::new();
    m.insert("captured_at_ms".to_string(), Value::from(s.captured_at_ms));
    m.insert(
        "host_node_id".to_string(),
        Value::from(s.host_node_id.as_str()),
    );
    m.insert("network_id".to_string(), Value::from(s.network_id.as_str()));
    m.insert(
        "peers".to_string(),
        Value::Array(s.peers.iter().map(peer_to_value).collect()),
    );
    m.insert("schema".to_string(), Value::from(SCHEMA_VERSION));
    json::to_canonical_string(&Value::Object(m))
}

fn event_from_value(v: &Value, field: &str) -> Result<ConnectionEvent, SchemaViolation> {
    let obj = json::as_object(v, field)?;
    let kind_str = json::get_str(obj, field, "kind")?;
    let kind = EventKind::parse(kind_str).ok_or_else(|| SchemaViolation {
        field: json::join(field, "kind"),
        detail: alloc::format!("unknown event kind `{kind_str}`"),
    })?;
    let t_ms = json::get_u64(obj, field, "t_ms")?;
    Ok(ConnectionEvent { kind, t_ms })
}

fn peer_from_value(v: &Value, field: &str) -> Result<PeerMetrics, SchemaViolation> {
    let obj = json::as_object(v, field)?;
    let family_str = json::get_str(obj, field, "client_family")?;
    let client_family = ClientFamily::parse_exact(family_str).ok_or_else(|| SchemaViolation {
        field: json::join(field, "client_family"),
        detail: alloc::format!("unknown client family `{family_str}`"),
    })?;
    let latency_field = json::join(field, "latency_s");
    let latency_us = json::parse_micros(json::get_str(obj, field, "latency_s")?, &latency_field)?;

    let mut counters = BTreeMap::new();
    for (topic, count) in json::get_object(obj, field, "counters")? {
        let count = count.as_u64().ok_or_else(|| SchemaViolation {
            field: json::join(&json::join(field, "counters"), topic),
            detail: "expected an unsigned integer".to_string(),
        })?;
        counters.insert(topic.clone(), count);
    }

    let mut events = Vec::new();
    for (i, ev) in json::get_array(obj, field, "events")?.iter().enumerate() {
        let ev_field = alloc::format!("{field}.events[{i}]");
        let ev = event_from_value(ev, &ev_field)?;
        if let Some(prev) = events.last() {
            let prev: &ConnectionEvent = prev;
            if ev.t_ms < prev.t_ms {
                return Err(SchemaViolation {
                    field: ev_field,
                    detail: "events are not sorted by t_ms".to_string(),
                });
            }
        }
        events.push(ev);
    }

    Ok(PeerMetrics {
        info: PeerInfo {
            peer_id: PeerId(json::get_str(obj, field, "peer_id")?.to_string()),
            node_id: json::get_str(obj, field, "node_id")?.to_string(),
            pubkey: json::get_str(obj, field, "pubkey")?.to_string(),
            multiaddr: json::get_str(obj, field, "multiaddr")?.to_string(),
            ip: json::get_str(obj, field, "ip")?.to_string(),
            country: json::get_str(obj, field, "country")?.to_string(),
            city: json::get_str(obj, field, "city")?.to_string(),
            client_family,
            client_version: json::get_str(obj, field, "client_version")?.to_string(),
            latency_us,
        },
        events,
        counters,
    })
}

/// Decodes and validates a snapshot document.
pub fn decode_snapshot(text: &str) -> Result<MetricsSnapshot, SchemaViolation> {
    let doc = json::parse_document(text)?;
    let obj = json::as_object(&doc, "<root>")?;
    let schema = json::get_u64(obj, "", "schema")?;
    if schema != SCHEMA_VERSION {
        return Err(SchemaViolation {
            field: "schema".to_string(),
            detail: alloc::format!("unsupported schema version {schema}"),
        });
    }
    let captured_at_ms = json::get_u64(obj, "", "captured_at_ms")?;
    let host_node_id = json::get_str(obj, "", "host_node_id")?.to_string();
    let network_id = json::get_str(obj, "", "network_id")?.to_string();

    let mut peers = Vec::new();
    let mut topic_keys: Option<Vec<String>> = None;
    for (i, pv) in json::get_array(obj, "", "peers")?.iter().enumerate() {
        let field = alloc::format!("peers[{i}]");
        let peer = peer_from_value(pv, &field)?;
        let keys: Vec<String> = peer.counters.keys().cloned().collect();
        match &topic_keys {
            None => topic_keys = Some(keys),
            Some(expected) if *expected != keys => {
                return Err(SchemaViolation {
                    field: json::join(&field, "counters"),
                    detail: "counter topics differ between peers".to_string(),
                });
            }
            _ => {}
        }
        if peers
            .iter()
            .any(|p: &PeerMetrics| p.info.peer_id == peer.info.peer_id)
        {
            return Err(SchemaViolation {
                field: json::join(&field, "peer_id"),
                detail: "duplicate peer id".to_string(),
            });
        }
        peers.push(peer);
    }

    Ok(MetricsSnapshot {
        captured_at_ms,
        host_node_id,
        network_id,
        peers,
    })
}
