//! Simplified GossipSub router: topic subscriptions, bounded meshes,
//! seen-message cache, metadata gossip (IHAVE/IWANT), and the delivery log
//! that drives first-relayer attribution.
//!
//! The router is sans-IO: every operation takes the current time and returns
//! outcomes or actions; the host (or the simulator) performs the sends. All
//! mutations are serialized through the owner's single event loop.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::metrics::PeerId;
use crate::rng::DetRng;

/// 32-byte message identifier: SHA-256 of topic name concatenated with the
/// payload.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId(pub [u8; 32]);

impl MsgId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MsgId({}..)", &self.to_hex()[..8])
    }
}

/// Topic-addressed payload with its derived message id.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GossipMessage {
    pub topic: String,
    pub payload: Vec<u8>,
    pub msg_id: MsgId,
}

impl GossipMessage {
    pub fn new(topic: &str, payload: Vec<u8>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(topic.as_bytes());
        hasher.update(&payload);
        GossipMessage {
            topic: topic.to_string(),
            payload,
            msg_id: MsgId(hasher.finalize().into()),
        }
    }
}

/// Mesh and cache parameters. Defaults follow GossipSub v1.0.
#[derive(Clone, Debug)]
pub struct GossipConfig {
    pub d: usize,
    pub d_low: usize,
    pub d_high: usize,
    pub heartbeat_ms: u64,
    pub seen_ttl_ms: u64,
    /// IHAVE advertises delivery-log ids from this many trailing heartbeats.
    pub ihave_window_heartbeats: u64,
    /// Number of non-mesh peers each IHAVE round gossips to.
    pub gossip_sample: usize,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig {
            d: 6,
            d_low: 4,
            d_high: 12,
            heartbeat_ms: 700,
            seen_ttl_ms: 120_000,
            ihave_window_heartbeats: 3,
            gossip_sample: 6,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DeliveryOutcome {
    /// First full copy on a subscribed topic; the sender gets the counter
    /// credit.
    DeliveredFirst,
    /// Already seen (or already credited once); no log entry, no credit.
    Duplicate,
    /// Topic not subscribed.
    Ignored,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AlreadySubscribed;

impl fmt::Display for AlreadySubscribed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "topic already subscribed")
    }
}

impl core::error::Error for AlreadySubscribed {}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NotSubscribed;

impl fmt::Display for NotSubscribed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "topic not subscribed")
    }
}

impl core::error::Error for NotSubscribed {}

/// Maintenance action produced by [`Router::heartbeat`].
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum GossipAction {
    Graft {
        peer: PeerId,
        topic: String,
    },
    Prune {
        peer: PeerId,
        topic: String,
    },
    Ihave {
        peer: PeerId,
        topic: String,
        ids: Vec<MsgId>,
    },
}

/// One append-only entry per first-delivered message.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DeliveryEntry {
    pub msg_id: MsgId,
    pub topic: String,
    pub first_relayer: PeerId,
    pub t_ms: u64,
}

/// Result of a publish: the constructed message plus the mesh peers it is
/// forwarded to.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PublishOutcome {
    pub message: GossipMessage,
    pub forward_to: Vec<PeerId>,
}

#[derive(Clone, Debug)]
struct SeenEntry {
    /// `None` when we published the message ourselves.
    first_from: Option<PeerId>,
    at_ms: u64,
}

#[derive(Clone, Debug)]
struct CachedMessage {
    message: GossipMessage,
    at_ms: u64,
}

/// Router state for one host.
///
/// Ties between equal-time arrivals resolve to whichever full copy is
/// processed first; the simulator schedules equal-time deliveries in
/// ascending peer-id order, so ties resolve to the lowest peer id.
#[derive(Clone, Debug)]
pub struct Router {
    cfg: GossipConfig,
    rng: DetRng,
    subscriptions: BTreeSet<String>,
    /// Known peers per topic (graft candidates).
    topic_peers: BTreeMap<String, BTreeSet<PeerId>>,
    mesh: BTreeMap<String, BTreeSet<PeerId>>,
    /// Known peers currently outside the mesh, refreshed each heartbeat.
    fanout: BTreeMap<String, BTreeSet<PeerId>>,
    seen: BTreeMap<MsgId, SeenEntry>,
    /// Ids that ever entered the delivery log. The seen cache is TTL-bounded
    /// for gossip purposes, but crediting stays exactly-once for a whole run.
    logged: BTreeSet<MsgId>,
    mcache: BTreeMap<MsgId, CachedMessage>,
    delivery_log: Vec<DeliveryEntry>,
    pending_iwant: BTreeMap<MsgId, u64>,
}

impl Router {
    pub fn new(cfg: GossipConfig, seed: u64) -> Self {
        Router {
            cfg,
            rng: DetRng::from_seed(seed),
            subscriptions: BTreeSet::new(),
            topic_peers: BTreeMap::new(),
            mesh: BTreeMap::new(),
            fanout: BTreeMap::new(),
            seen: BTreeMap::new(),
            logged: BTreeSet::new(),
            mcache: BTreeMap::new(),
            delivery_log: Vec::new(),
            pending_iwant: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &GossipConfig {
        &self.cfg
    }

    pub fn subscriptions(&self) -> &BTreeSet<String> {
        &self.subscriptions
    }

    pub fn is_subscribed(&self, topic: &str) -> bool {
        self.subscriptions.contains(topic)
    }

    pub fn delivery_log(&self) -> &[DeliveryEntry] {
        &self.delivery_log
    }

    pub fn seen_contains(&self, id: &MsgId) -> bool {
        self.seen.contains_key(id)
    }

    /// Who the first copy of a seen message came from; `None` inside the
    /// `Some` means we published it ourselves. `None` when unseen/expired.
    pub fn seen_first_relayer(&self, id: &MsgId) -> Option<Option<&PeerId>> {
        self.seen.get(id).map(|e| e.first_from.as_ref())
    }

    pub fn mesh_peers(&self, topic: &str) -> Vec<PeerId> {
        self.mesh
            .get(topic)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn fanout_peers(&self, topic: &str) -> Vec<PeerId> {
        self.fanout
            .get(topic)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn subscribe(&mut self, topic: &str) -> Result<(), AlreadySubscribed> {
        if !self.subscriptions.insert(topic.to_string()) {
            return Err(AlreadySubscribed);
        }
        self.topic_peers.entry(topic.to_string()).or_default();
        self.mesh.entry(topic.to_string()).or_default();
        self.fanout.entry(topic.to_string()).or_default();
        Ok(())
    }

    /// Registers `peer` as present on `topic` (a graft candidate).
    pub fn add_topic_peer(&mut self, peer: &PeerId, topic: &str) {
        self.topic_peers
            .entry(topic.to_string())
            .or_default()
            .insert(peer.clone());
    }

    /// Drops `peer` from every topic, mesh, and fanout set.
    pub fn remove_peer(&mut self, peer: &PeerId) {
        for set in self.topic_peers.values_mut() {
            set.remove(peer);
        }
        for set in self.mesh.values_mut() {
            set.remove(peer);
        }
        for set in self.fanout.values_mut() {
            set.remove(peer);
        }
    }

    /// Handles a GRAFT offer from a peer. Accepted while the mesh is below
    /// `d_high`; rejecting callers should send PRUNE back.
    pub fn handle_graft(&mut self, from: &PeerId, topic: &str) -> bool {
        if !self.subscriptions.contains(topic) {
            return false;
        }
        let mesh = self.mesh.entry(topic.to_string()).or_default();
        if mesh.len() >= self.cfg.d_high {
            return false;
        }
        self.add_topic_peer(from, topic);
        self.mesh
            .entry(topic.to_string())
            .or_default()
            .insert(from.clone());
        true
    }

    /// Processes a full message. Exactly one `DeliveredFirst` can ever be
    /// returned per message id.
    pub fn handle_full_message(
        &mut self,
        from: &PeerId,
        msg: &GossipMessage,
        now_ms: u64,
    ) -> DeliveryOutcome {
        if !self.subscriptions.contains(&msg.topic) {
            return DeliveryOutcome::Ignored;
        }
        if self.seen.contains_key(&msg.msg_id) || self.logged.contains(&msg.msg_id) {
            return DeliveryOutcome::Duplicate;
        }
        self.seen.insert(
            msg.msg_id,
            SeenEntry {
                first_from: Some(from.clone()),
                at_ms: now_ms,
            },
        );
        self.logged.insert(msg.msg_id);
        self.mcache.insert(
            msg.msg_id,
            CachedMessage {
                message: msg.clone(),
                at_ms: now_ms,
            },
        );
        self.pending_iwant.remove(&msg.msg_id);
        self.delivery_log.push(DeliveryEntry {
            msg_id: msg.msg_id,
            topic: msg.topic.clone(),
            first_relayer: from.clone(),
            t_ms: now_ms,
        });
        DeliveryOutcome::DeliveredFirst
    }

    /// Returns the subset of announced ids worth requesting: on a subscribed
    /// topic, unseen, and not already pending from an earlier announcement.
    pub fn handle_ihave(
        &mut self,
        _from: &PeerId,
        topic: &str,
        ids: &[MsgId],
        now_ms: u64,
    ) -> Vec<MsgId> {
        if !self.subscriptions.contains(topic) {
            return Vec::new();
        }
        let mut want = Vec::new();
        for id in ids {
            if self.seen.contains_key(id) || self.pending_iwant.contains_key(id) {
                continue;
            }
            self.pending_iwant.insert(*id, now_ms);
            want.push(*id);
        }
        want
    }

    /// Serves full messages for the requested ids. Unknown or expired ids
    /// are omitted.
    pub fn handle_iwant(
        &mut self,
        _from: &PeerId,
        ids: &[MsgId],
        now_ms: u64,
    ) -> Vec<GossipMessage> {
        let mut out = Vec::new();
        for id in ids {
            if let Some(cached) = self.mcache.get(id) {
                if cached.at_ms + self.cfg.seen_ttl_ms > now_ms {
                    out.push(cached.message.clone());
                }
            }
        }
        out
    }

    /// Publishes on a subscribed topic: the message is marked seen with
    /// ourselves as origin (no counter credit, no delivery-log entry) and
    /// forwarded to the topic mesh.
    pub fn publish(
        &mut self,
        topic: &str,
        payload: Vec<u8>,
        now_ms: u64,
    ) -> Result<PublishOutcome, NotSubscribed> {
        if !self.subscriptions.contains(topic) {
            return Err(NotSubscribed);
        }
        let message = GossipMessage::new(topic, payload);
        self.seen.insert(
            message.msg_id,
            SeenEntry {
                first_from: None,
                at_ms: now_ms,
            },
        );
        self.mcache.insert(
            message.msg_id,
            CachedMessage {
                message: message.clone(),
                at_ms: now_ms,
            },
        );
        let forward_to = self.mesh_peers(topic);
        Ok(PublishOutcome {
            message,
            forward_to,
        })
    }

    /// Periodic maintenance: cache expiry, mesh repair toward `d` within
    /// `[d_low, d_high]`, and IHAVE gossip of recent deliveries to sampled
    /// non-mesh peers.
    pub fn heartbeat(&mut self, now_ms: u64) -> Vec<GossipAction> {
        let ttl = self.cfg.seen_ttl_ms;
        self.seen.retain(|_, e| e.at_ms + ttl > now_ms);
        self.mcache.retain(|_, e| e.at_ms + ttl > now_ms);
        let pending_ttl = self.cfg.heartbeat_ms * self.cfg.ihave_window_heartbeats;
        self.pending_iwant
            .retain(|_, at| *at + pending_ttl > now_ms);

        let mut actions = Vec::new();
        let window_ms = self.cfg.heartbeat_ms * self.cfg.ihave_window_heartbeats;
        for topic in self.subscriptions.clone() {
            let candidates = self.topic_peers.get(&topic).cloned().unwrap_or_default();
            let mesh = self.mesh.entry(topic.clone()).or_default();

            if mesh.len() < self.cfg.d_low {
                let pool: Vec<PeerId> = candidates
                    .iter()
                    .filter(|p| !mesh.contains(*p))
                    .cloned()
                    .collect();
                let need = self.cfg.d - mesh.len();
                for idx in self.rng.sample_indices(pool.len(), need) {
                    let peer = pool[idx].clone();
                    mesh.insert(peer.clone());
                    actions.push(GossipAction::Graft {
                        peer,
                        topic: topic.clone(),
                    });
                }
            } else if mesh.len() > self.cfg.d_high {
                let members: Vec<PeerId> = mesh.iter().cloned().collect();
                let excess = mesh.len() - self.cfg.d;
                for idx in self.rng.sample_indices(members.len(), excess) {
                    let peer = members[idx].clone();
                    mesh.remove(&peer);
                    actions.push(GossipAction::Prune {
                        peer,
                        topic: topic.clone(),
                    });
                }
            }

            let non_mesh: Vec<PeerId> = candidates
                .iter()
                .filter(|p| !mesh.contains(*p))
                .cloned()
                .collect();
            self.fanout
                .insert(topic.clone(), non_mesh.iter().cloned().collect());

            let recent: Vec<MsgId> = self
                .delivery_log
                .iter()
                .rev()
                .take_while(|e| e.t_ms + window_ms > now_ms)
                .filter(|e| e.topic == topic)
                .map(|e| e.msg_id)
                .collect();
            if !recent.is_empty() && !non_mesh.is_empty() {
                for idx in self
                    .rng
                    .sample_indices(non_mesh.len(), self.cfg.gossip_sample)
                {
                    actions.push(GossipAction::Ihave {
                        peer: non_mesh[idx].clone(),
                        topic: topic.clone(),
                        ids: recent.clone(),
                    });
                }
            }
        }
        actions
    }

    /// Delivery log rendered as CSV: `msg_id_hex,topic,first_relayer_peer_id,t_ms`.
    pub fn delivery_log_csv(&self) -> String {
        let mut out = String::from("msg_id_hex,topic,first_relayer_peer_id,t_ms\n");
        for e in &self.delivery_log {
            out.push_str(&alloc::format!(
                "{},{},{},{}\n",
                e.msg_id.to_hex(),
                e.topic,
                e.first_relayer,
                e.t_ms
            ));
        }
        out
    }
}
