//! The monitoring host: identity setup, genesis-claiming status handshake,
//! connect-all dialing over discovered peers, client classification, latency
//! and geolocation enrichment, and event recording.
//!
//! The host is a sans-IO state machine. Drivers (the simulator, or the CLI
//! running on top of it) deliver events — discovery replies, dial results,
//! gossip messages, timer ticks — and execute the returned [`HostCmd`]s.
//! Metrics recording happens synchronously inside the event handlers, so a
//! single driving loop gives the linearizable-writer behavior the metrics
//! store expects.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::net::IpAddr;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use sha2::{Digest, Sha256};

use crate::discovery::{
    DiscoveryCmd, DiscoveryMessage, DiscoveryService, Peerstore, DEFAULT_ALPHA,
};
use crate::gossip::{DeliveryOutcome, GossipAction, GossipConfig, GossipMessage, Router};
use crate::identity::{generate_identity, Keypair, NodeId, NodeRecord};
use crate::json;
use crate::metrics::{default_topics, EventKind, MetricsSnapshot, MetricsStore, PeerId};
use crate::rng::DetRng;

/// Transport-level dial timeout.
pub const DIAL_TIMEOUT_MS: u64 = 2_000;
/// Status handshake timeout.
pub const HANDSHAKE_TIMEOUT_MS: u64 = 10_000;
/// Period between latency probes of connected peers.
pub const LATENCY_PROBE_INTERVAL_MS: u64 = 60_000;
/// Redial backoff: base, factor, and cap.
pub const BACKOFF_BASE_MS: u64 = 30_000;
pub const BACKOFF_FACTOR: u64 = 2;
pub const BACKOFF_CAP_MS: u64 = 1_800_000;

// ---------------------------------------------------------------------------
// client classification
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum ClientFamily {
    Lighthouse,
    Teku,
    Nimbus,
    Prysm,
    Lodestar,
    Unknown,
}

impl ClientFamily {
    /// All families in the reporting order used by the analyzer.
    pub const ALL: [ClientFamily; 6] = [
        ClientFamily::Lighthouse,
        ClientFamily::Teku,
        ClientFamily::Nimbus,
        ClientFamily::Prysm,
        ClientFamily::Lodestar,
        ClientFamily::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClientFamily::Lighthouse => "Lighthouse",
            ClientFamily::Teku => "Teku",
            ClientFamily::Nimbus => "Nimbus",
            ClientFamily::Prysm => "Prysm",
            ClientFamily::Lodestar => "Lodestar",
            ClientFamily::Unknown => "Unknown",
        }
    }

    /// Exact (case-sensitive) name match, used when decoding snapshots.
    pub fn parse_exact(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.as_str() == s)
    }
}

impl fmt::Display for ClientFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Splits a user-agent string of the form `Family/version/...` into a known
/// client family and its version. The family is a case-insensitive match of
/// the first `/`-separated token; anything else (including the empty
/// string) is `Unknown` with an empty version.
pub fn classify_client(user_agent: &str) -> (ClientFamily, String) {
    let mut parts = user_agent.split('/');
    let first = parts.next().unwrap_or("");
    let family = ClientFamily::ALL
        .iter()
        .copied()
        .filter(|f| *f != ClientFamily::Unknown)
        .find(|f| f.as_str().eq_ignore_ascii_case(first))
        .unwrap_or(ClientFamily::Unknown);
    if family == ClientFamily::Unknown {
        return (ClientFamily::Unknown, String::new());
    }
    (family, parts.next().unwrap_or("").to_string())
}

// ---------------------------------------------------------------------------
// status handshake
// ---------------------------------------------------------------------------

/// Chain-view summary exchanged right after a transport connection.
///
/// The crawler always presents the genesis claim (`head_slot = 0`,
/// `finalized_epoch = 0`) so peers never ask it to serve sync data.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StatusMessage {
    pub network_id: String,
    pub head_slot: u64,
    pub head_root: [u8; 32],
    pub finalized_epoch: u64,
    pub finalized_root: [u8; 32],
}

impl StatusMessage {
    pub fn genesis(network_id: &str) -> Self {
        StatusMessage {
            network_id: network_id.to_string(),
            head_slot: 0,
            head_root: [0; 32],
            finalized_epoch: 0,
            finalized_root: [0; 32],
        }
    }

    pub fn is_genesis_claim(&self) -> bool {
        self.head_slot == 0 && self.finalized_epoch == 0
    }
}

// ---------------------------------------------------------------------------
// geolocation
// ---------------------------------------------------------------------------

pub trait GeoProvider {
    /// Resolves an address to `(country, city)`; unresolvable addresses are
    /// `("Unknown", "Unknown")`.
    fn locate(&self, ip: &IpAddr) -> (String, String);
}

pub fn locate_peer(provider: &dyn GeoProvider, ip: &IpAddr) -> (String, String) {
    provider.locate(ip)
}

pub fn is_private_ip(ip: &IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => {
            let o = v4.octets();
            o[0] == 10
                || o[0] == 127
                || o[0] == 0
                || (o[0] == 172 && (16..=31).contains(&o[1]))
                || (o[0] == 192 && o[1] == 168)
                || (o[0] == 169 && o[1] == 254)
        }
        IpAddr::V6(v6) => {
            v6.is_loopback()
                || (v6.segments()[0] & 0xfe00) == 0xfc00
                || (v6.segments()[0] & 0xffc0) == 0xfe80
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeoError(pub String);

impl fmt::Display for GeoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "geo provider unavailable: {}", self.0)
    }
}

impl core::error::Error for GeoError {}

/// Offline ip -> (country, city) table. This is the only provider the test
/// suite uses; nothing ever calls out to a network geo service.
#[derive(Clone, Debug, Default)]
pub struct StaticGeoTable {
    entries: BTreeMap<IpAddr, (String, String)>,
}

impl StaticGeoTable {
    pub fn new(entries: BTreeMap<IpAddr, (String, String)>) -> Self {
        StaticGeoTable { entries }
    }

    /// Parses a JSON object of `"ip": ["country", "city"]` pairs.
    pub fn from_json(text: &str) -> Result<Self, GeoError> {
        let doc = json::parse_document(text).map_err(|e| GeoError(e.detail))?;
        let obj = json::as_object(&doc, "<root>").map_err(|e| GeoError(e.detail))?;
        let mut entries = BTreeMap::new();
        for (ip_str, pair) in obj {
            let ip: IpAddr = ip_str
                .parse()
                .map_err(|_| GeoError(alloc::format!("bad ip `{ip_str}`")))?;
            let arr = pair.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                GeoError(alloc::format!(
                    "entry for `{ip_str}` is not a [country, city] pair"
                ))
            })?;
            let country = arr[0]
                .as_str()
                .ok_or_else(|| GeoError("country must be a string".to_string()))?;
            let city = arr[1]
                .as_str()
                .ok_or_else(|| GeoError("city must be a string".to_string()))?;
            entries.insert(ip, (country.to_string(), city.to_string()));
        }
        Ok(StaticGeoTable { entries })
    }
}

impl GeoProvider for StaticGeoTable {
    fn locate(&self, ip: &IpAddr) -> (String, String) {
        if is_private_ip(ip) {
            return ("Unknown".to_string(), "Unknown".to_string());
        }
        self.entries
            .get(ip)
            .cloned()
            .unwrap_or_else(|| ("Unknown".to_string(), "Unknown".to_string()))
    }
}

// ---------------------------------------------------------------------------
// peer info
// ---------------------------------------------------------------------------

/// Everything the crawler knows about one peer.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeerInfo {
    pub peer_id: PeerId,
    pub node_id: String,
    pub pubkey: String,
    pub multiaddr: String,
    pub ip: String,
    pub country: String,
    pub city: String,
    pub client_family: ClientFamily,
    pub client_version: String,
    /// Full round-trip time of the latest latency probe window, in
    /// microseconds (serialized as seconds with six fractional digits).
    pub latency_us: u64,
}

impl PeerInfo {
    pub fn stub(peer_id: PeerId) -> Self {
        PeerInfo {
            peer_id,
            node_id: String::new(),
            pubkey: String::new(),
            multiaddr: String::new(),
            ip: String::new(),
            country: "Unknown".to_string(),
            city: "Unknown".to_string(),
            client_family: ClientFamily::Unknown,
            client_version: String::new(),
            latency_us: 0,
        }
    }
}

/// Derives the transport-level peer id from a node's public key.
pub fn peer_id_for_pubkey(pubkey: &[u8; 32]) -> PeerId {
    let mut hasher = Sha256::new();
    hasher.update(b"peer:");
    hasher.update(pubkey);
    let digest: [u8; 32] = hasher.finalize().into();
    PeerId(hex::encode(digest))
}

pub fn multiaddr_for(ip: &IpAddr, tcp_port: u16) -> String {
    match ip {
        IpAddr::V4(v4) => alloc::format!("/ip4/{v4}/tcp/{tcp_port}"),
        IpAddr::V6(v6) => alloc::format!("/ip6/{v6}/tcp/{tcp_port}"),
    }
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GeoProviderConfig {
    pub provider: String,
    pub path: String,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HostConfig {
    pub ip: IpAddr,
    pub tcp_port: u16,
    pub udp_port: u16,
    pub network_id: String,
    pub topics: Vec<String>,
    pub export_interval_s: u32,
    pub max_outbound_dials_in_flight: u32,
    pub geo_provider: GeoProviderConfig,
    pub user_agent: String,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            ip: IpAddr::V4(core::net::Ipv4Addr::new(127, 0, 0, 1)),
            tcp_port: 9000,
            udp_port: 9000,
            network_id: "mainnet".to_string(),
            topics: default_topics(),
            export_interval_s: 300,
            max_outbound_dials_in_flight: 8,
            geo_provider: GeoProviderConfig {
                provider: "static".to_string(),
                path: String::new(),
            },
            user_agent: "gossipwatch/0.1.0".to_string(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BadConfig(pub String);

impl fmt::Display for BadConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bad config: {}", self.0)
    }
}

impl core::error::Error for BadConfig {}

impl HostConfig {
    pub fn validate(&self) -> Result<(), BadConfig> {
        if self.export_interval_s == 0 {
            return Err(BadConfig("export_interval_s must be >= 1".to_string()));
        }
        if self.topics.is_empty() {
            return Err(BadConfig("topics must be non-empty".to_string()));
        }
        if self.tcp_port == 0 || self.udp_port == 0 {
            return Err(BadConfig("ports must be nonzero".to_string()));
        }
        if self.max_outbound_dials_in_flight == 0 {
            return Err(BadConfig(
                "max_outbound_dials_in_flight must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// dialing
// ---------------------------------------------------------------------------

/// Terminal outcome of one dial attempt.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DialOutcome {
    Connected,
    Refused,
    Timeout,
    HandshakeFailed,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DialFailure {
    Refused,
    Timeout,
}

/// Exponential redial backoff: 30 s base, doubling, capped at 30 min.
#[derive(Clone, Copy, Debug, Default)]
pub struct Backoff {
    attempts: u32,
}

impl Backoff {
    /// Delay to wait before the next attempt, advancing the counter.
    pub fn next_delay_ms(&mut self) -> u64 {
        let shift = self.attempts.min(16);
        self.attempts += 1;
        (BACKOFF_BASE_MS.saturating_mul(BACKOFF_FACTOR.saturating_pow(shift))).min(BACKOFF_CAP_MS)
    }
}

/// Command for the driver to execute on behalf of the host.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum HostCmd {
    SendDiscovery {
        to: NodeId,
        msg: DiscoveryMessage,
    },
    Dial {
        record: NodeRecord,
    },
    Ping {
        peer: PeerId,
    },
    ScheduleRetry {
        node_id: NodeId,
        at_ms: u64,
    },
    /// Write the current snapshot (the driver captures it via [`Host::snapshot`]).
    Export,
    /// Abort a connection mid-handshake (network mismatch).
    CloseConnection {
        node_id: NodeId,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DialAttempt {
    pub node_id: NodeId,
    pub outcome: DialOutcome,
    pub t_ms: u64,
}

/// The running monitoring host.
pub struct Host {
    pub config: HostConfig,
    keypair: Keypair,
    pub record: NodeRecord,
    pub status: StatusMessage,
    pub router: Router,
    pub metrics: MetricsStore,
    pub discovery: DiscoveryService,
    geo: Box<dyn GeoProvider>,
    dial_queue: VecDeque<NodeId>,
    queued: BTreeSet<NodeId>,
    dials_inflight: BTreeSet<NodeId>,
    retry_pending: BTreeSet<NodeId>,
    backoffs: BTreeMap<NodeId, Backoff>,
    sessions: BTreeMap<PeerId, NodeId>,
    session_by_node: BTreeMap<NodeId, PeerId>,
    pending_pings: BTreeMap<PeerId, u64>,
    dial_attempts: Vec<DialAttempt>,
    stopped: bool,
}

impl Host {
    /// Builds the host: identity from the seed, router subscribed to the
    /// configured topics, empty peerstore keyed by the new node id.
    pub fn new(
        config: HostConfig,
        seed: &[u8; 32],
        geo: Box<dyn GeoProvider>,
    ) -> Result<Self, BadConfig> {
        config.validate()?;
        let (keypair, record) = generate_identity(
            seed,
            config.ip,
            config.tcp_port,
            config.udp_port,
            &config.network_id,
        );
        let mut rng_seed = [0u8; 8];
        rng_seed.copy_from_slice(&Sha256::digest(seed)[..8]);
        let rng = DetRng::from_seed(u64::from_be_bytes(rng_seed));

        let mut router = Router::new(GossipConfig::default(), rng.clone().next_u64());
        for topic in &config.topics {
            router
                .subscribe(topic)
                .map_err(|_| BadConfig(alloc::format!("duplicate topic `{topic}`")))?;
        }
        let metrics = MetricsStore::new(config.topics.clone());
        let discovery =
            DiscoveryService::new(Peerstore::new(record.node_id), DEFAULT_ALPHA, rng.fork(1));
        let status = StatusMessage::genesis(&config.network_id);
        Ok(Host {
            config,
            keypair,
            record,
            status,
            router,
            metrics,
            discovery,
            geo,
            dial_queue: VecDeque::new(),
            queued: BTreeSet::new(),
            dials_inflight: BTreeSet::new(),
            retry_pending: BTreeSet::new(),
            backoffs: BTreeMap::new(),
            sessions: BTreeMap::new(),
            session_by_node: BTreeMap::new(),
            pending_pings: BTreeMap::new(),
            dial_attempts: Vec::new(),
            stopped: false,
        })
    }

    pub fn keypair(&self) -> &Keypair {
        &self.keypair
    }

    pub fn node_id_hex(&self) -> String {
        self.record.node_id.to_hex()
    }

    pub fn dial_attempts(&self) -> &[DialAttempt] {
        &self.dial_attempts
    }

    pub fn open_session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn session_peer(&self, node_id: &NodeId) -> Option<&PeerId> {
        self.session_by_node.get(node_id)
    }

    pub fn session_node(&self, peer: &PeerId) -> Option<&NodeId> {
        self.sessions.get(peer)
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Stops issuing new dials and lookup rounds; in-flight dials are left
    /// to complete or time out.
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    /// Bootstraps discovery and begins dialing every stored peer.
    pub fn start(&mut self, bootnodes: &[NodeRecord], now_ms: u64) -> Vec<HostCmd> {
        // the crawler always presents the genesis claim
        debug_assert!(self.status.is_genesis_claim());
        let (_admitted, cmds) = self.discovery.bootstrap_and_start(bootnodes, now_ms);
        self.absorb_discovery(cmds)
    }

    fn absorb_discovery(&mut self, cmds: Vec<DiscoveryCmd>) -> Vec<HostCmd> {
        let mut out = Vec::new();
        for cmd in cmds {
            match cmd {
                DiscoveryCmd::Send { to, msg } => out.push(HostCmd::SendDiscovery { to, msg }),
                DiscoveryCmd::Discovered { node_id } => {
                    self.register_discovered(&node_id);
                    self.enqueue_dial(node_id);
                }
            }
        }
        out.extend(self.pump_dials());
        out
    }

    /// Every discovered peer gets a metrics row immediately, so exported
    /// snapshots show the whole peerstore, not just the peers we managed to
    /// connect to.
    fn register_discovered(&mut self, node_id: &NodeId) {
        let Some(entry) = self.discovery.store.get(node_id) else {
            return;
        };
        let record = entry.record.clone();
        let peer_id = peer_id_for_pubkey(&record.pubkey);
        let (country, city) = self.geo.locate(&record.ip);
        let node_id_hex = record.node_id.to_hex();
        let pubkey_b64 = URL_SAFE_NO_PAD.encode(record.pubkey);
        let multiaddr = multiaddr_for(&record.ip, record.tcp_port);
        let ip_str = match record.ip {
            IpAddr::V4(v4) => alloc::format!("{v4}"),
            IpAddr::V6(v6) => alloc::format!("{v6}"),
        };
        self.metrics.update_info(&peer_id, |info| {
            info.node_id = node_id_hex;
            info.pubkey = pubkey_b64;
            info.multiaddr = multiaddr;
            info.ip = ip_str;
            info.country = country;
            info.city = city;
        });
    }

    fn enqueue_dial(&mut self, node_id: NodeId) {
        if self.session_by_node.contains_key(&node_id)
            || self.dials_inflight.contains(&node_id)
            || self.queued.contains(&node_id)
            || self.retry_pending.contains(&node_id)
        {
            return;
        }
        self.queued.insert(node_id);
        self.dial_queue.push_back(node_id);
    }

    fn pump_dials(&mut self) -> Vec<HostCmd> {
        let mut out = Vec::new();
        if self.stopped {
            return out;
        }
        while self.dials_inflight.len() < self.config.max_outbound_dials_in_flight as usize {
            let Some(node_id) = self.dial_queue.pop_front() else {
                break;
            };
            self.queued.remove(&node_id);
            if self.session_by_node.contains_key(&node_id) {
                continue;
            }
            let Some(entry) = self.discovery.store.get(&node_id) else {
                continue;
            };
            self.dials_inflight.insert(node_id);
            out.push(HostCmd::Dial {
                record: entry.record.clone(),
            });
        }
        out
    }

    // -- discovery events ---------------------------------------------------

    pub fn on_discovery_tick(&mut self, now_ms: u64) -> Vec<HostCmd> {
        if self.stopped {
            return Vec::new();
        }
        let cmds = self.discovery.on_tick(now_ms);
        self.absorb_discovery(cmds)
    }

    pub fn on_discovery_nodes(
        &mut self,
        from: NodeId,
        records: Vec<NodeRecord>,
        now_ms: u64,
    ) -> Vec<HostCmd> {
        let cmds = self.discovery.on_nodes_reply(from, records, now_ms);
        self.absorb_discovery(cmds)
    }

    pub fn on_discovery_timeout(&mut self, peer: NodeId, now_ms: u64) {
        self.discovery.on_timeout(peer, now_ms);
    }

    // -- dialing and handshake ----------------------------------------------

    fn record_attempt(&mut self, node_id: NodeId, outcome: DialOutcome, now_ms: u64) {
        self.dial_attempts.push(DialAttempt {
            node_id,
            outcome,
            t_ms: now_ms,
        });
    }

    fn schedule_redial(&mut self, node_id: NodeId, now_ms: u64) -> Vec<HostCmd> {
        if self.stopped || self.retry_pending.contains(&node_id) {
            return Vec::new();
        }
        let delay = self.backoffs.entry(node_id).or_default().next_delay_ms();
        self.retry_pending.insert(node_id);
        alloc::vec![HostCmd::ScheduleRetry {
            node_id,
            at_ms: now_ms + delay,
        }]
    }

    /// Transport-level dial failure (refused or timed out).
    pub fn on_dial_failure(
        &mut self,
        node_id: NodeId,
        failure: DialFailure,
        now_ms: u64,
    ) -> Vec<HostCmd> {
        if !self.dials_inflight.remove(&node_id) {
            return self.pump_dials();
        }
        let outcome = match failure {
            DialFailure::Refused => DialOutcome::Refused,
            DialFailure::Timeout => DialOutcome::Timeout,
        };
        self.record_attempt(node_id, outcome, now_ms);
        let mut cmds = self.schedule_redial(node_id, now_ms);
        cmds.extend(self.pump_dials());
        cmds
    }

    /// Remote status and user agent arrived for an outbound dial. A
    /// mismatched network id aborts the connection and counts the attempt
    /// as `HandshakeFailed`.
    pub fn on_handshake_reply(
        &mut self,
        record: &NodeRecord,
        remote: &StatusMessage,
        user_agent: &str,
        now_ms: u64,
    ) -> Vec<HostCmd> {
        let node_id = record.node_id;
        if !self.dials_inflight.remove(&node_id) {
            return Vec::new();
        }
        if self.session_by_node.contains_key(&node_id) {
            // an inbound session from this peer won the race; drop the
            // duplicate connection without touching the event log
            return self.pump_dials();
        }
        if remote.network_id != self.config.network_id {
            self.record_attempt(node_id, DialOutcome::HandshakeFailed, now_ms);
            let mut cmds = alloc::vec![HostCmd::CloseConnection { node_id }];
            cmds.extend(self.schedule_redial(node_id, now_ms));
            cmds.extend(self.pump_dials());
            return cmds;
        }
        self.record_attempt(node_id, DialOutcome::Connected, now_ms);
        let mut cmds = self.open_session(record, user_agent, now_ms);
        cmds.extend(self.pump_dials());
        cmds
    }

    /// The handshake deadline passed with no reply from the remote.
    pub fn on_handshake_deadline(&mut self, node_id: NodeId, now_ms: u64) -> Vec<HostCmd> {
        if !self.dials_inflight.remove(&node_id) {
            return Vec::new(); // reply already processed
        }
        self.record_attempt(node_id, DialOutcome::HandshakeFailed, now_ms);
        let mut cmds = alloc::vec![HostCmd::CloseConnection { node_id }];
        cmds.extend(self.schedule_redial(node_id, now_ms));
        cmds.extend(self.pump_dials());
        cmds
    }

    /// A peer dialed us and completed its handshake. The monitor accepts
    /// every inbound connection on its own network.
    pub fn on_inbound_session(
        &mut self,
        record: &NodeRecord,
        remote: &StatusMessage,
        user_agent: &str,
        now_ms: u64,
    ) -> Vec<HostCmd> {
        if remote.network_id != self.config.network_id {
            return alloc::vec![HostCmd::CloseConnection {
                node_id: record.node_id
            }];
        }
        if self.session_by_node.contains_key(&record.node_id) {
            return Vec::new();
        }
        self.open_session(record, user_agent, now_ms)
    }

    fn open_session(&mut self, record: &NodeRecord, user_agent: &str, now_ms: u64) -> Vec<HostCmd> {
        debug_assert!(self.status.is_genesis_claim());
        let peer_id = peer_id_for_pubkey(&record.pubkey);
        self.sessions.insert(peer_id.clone(), record.node_id);
        self.session_by_node.insert(record.node_id, peer_id.clone());
        self.backoffs.remove(&record.node_id);

        let _ = self
            .metrics
            .record_event(&peer_id, EventKind::Connect, now_ms);
        let (family, version) = classify_client(user_agent);
        let (country, city) = self.geo.locate(&record.ip);
        let node_id_hex = record.node_id.to_hex();
        let pubkey_b64 = URL_SAFE_NO_PAD.encode(record.pubkey);
        let multiaddr = multiaddr_for(&record.ip, record.tcp_port);
        let ip_str = match record.ip {
            IpAddr::V4(v4) => alloc::format!("{v4}"),
            IpAddr::V6(v6) => alloc::format!("{v6}"),
        };
        self.metrics.update_info(&peer_id, |info| {
            info.node_id = node_id_hex;
            info.pubkey = pubkey_b64;
            info.multiaddr = multiaddr;
            info.ip = ip_str;
            info.country = country;
            info.city = city;
            info.client_family = family;
            info.client_version = version;
        });

        for topic in self.config.topics.clone() {
            self.router.add_topic_peer(&peer_id, &topic);
        }

        // initial latency probe
        self.pending_pings.insert(peer_id.clone(), now_ms);
        alloc::vec![HostCmd::Ping { peer: peer_id }]
    }

    /// An open session went away (remote closed, pruned, or churned out).
    pub fn on_session_closed(&mut self, node_id: NodeId, now_ms: u64) -> Vec<HostCmd> {
        let Some(peer_id) = self.session_by_node.remove(&node_id) else {
            return Vec::new();
        };
        self.sessions.remove(&peer_id);
        self.pending_pings.remove(&peer_id);
        self.router.remove_peer(&peer_id);
        let _ = self
            .metrics
            .record_event(&peer_id, EventKind::Disconnect, now_ms);
        let mut cmds = self.schedule_redial(node_id, now_ms);
        cmds.extend(self.pump_dials());
        cmds
    }

    pub fn on_retry_due(&mut self, node_id: NodeId, _now_ms: u64) -> Vec<HostCmd> {
        self.retry_pending.remove(&node_id);
        if self.stopped {
            return Vec::new();
        }
        self.enqueue_dial(node_id);
        self.pump_dials()
    }

    // -- gossip and latency ---------------------------------------------------

    /// Full message arrived on a gossip stream. A first delivery credits the
    /// sending peer's counter synchronously (the metrics hook).
    pub fn on_gossip_message(
        &mut self,
        from: &PeerId,
        msg: &GossipMessage,
        now_ms: u64,
    ) -> DeliveryOutcome {
        let outcome = self.router.handle_full_message(from, msg, now_ms);
        if outcome == DeliveryOutcome::DeliveredFirst {
            self.metrics
                .increment_counter(from, &msg.topic)
                .expect("router only subscribes configured topics");
        }
        outcome
    }

    pub fn on_heartbeat(&mut self, now_ms: u64) -> Vec<GossipAction> {
        self.router.heartbeat(now_ms)
    }

    /// Periodic latency probe of every open session. An unanswered probe is
    /// simply discarded when the next one is armed (previous value kept).
    pub fn on_latency_tick(&mut self, now_ms: u64) -> Vec<HostCmd> {
        let mut cmds = Vec::new();
        for peer_id in self.sessions.keys().cloned().collect::<Vec<_>>() {
            self.pending_pings.insert(peer_id.clone(), now_ms);
            cmds.push(HostCmd::Ping { peer: peer_id });
        }
        cmds
    }

    /// Pong received: fold the measured round trip into the peer's latency
    /// with an exponentially weighted average (alpha = 0.3).
    pub fn on_pong(&mut self, peer: &PeerId, now_ms: u64) {
        let Some(sent_at) = self.pending_pings.remove(peer) else {
            return;
        };
        let rtt_us = (now_ms - sent_at) * 1000;
        self.metrics.update_info(peer, |info| {
            info.latency_us = if info.latency_us == 0 {
                rtt_us
            } else {
                (3 * rtt_us + 7 * info.latency_us) / 10
            };
        });
    }

    pub fn on_export_tick(&mut self) -> Vec<HostCmd> {
        alloc::vec![HostCmd::Export]
    }

    /// Consistent point-in-time snapshot; counters are cumulative and never
    /// reset by export.
    pub fn snapshot(&self, now_ms: u64) -> MetricsSnapshot {
        self.metrics
            .snapshot(now_ms, &self.node_id_hex(), &self.config.network_id)
    }
}
