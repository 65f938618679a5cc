//! Snapshot analysis: batched-event deduplication, connection-session
//! derivation, per-peer/per-client/per-country aggregation, top-k message
//! share, outlier flagging, and deterministic CSV/SVG report rendering.
//!
//! The crawler records one connect/disconnect pair per transport session,
//! but sources that attach one stream per subscribed topic report these
//! events in batches (five at nearly the same instant). Deduplication
//! collapses same-kind events inside a trailing time window so connection
//! counts and durations come out right either way.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::crawler::ClientFamily;
use crate::json;
use crate::metrics::{ConnectionEvent, EventKind, MetricsSnapshot, PeerId};
use crate::svg;

/// Same-type events inside this trailing window count once.
pub const DEFAULT_DEDUP_WINDOW_MS: u64 = 500;
pub const DEFAULT_TOP_K: u64 = 10;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DedupPolicy {
    pub window_ms: u64,
}

impl Default for DedupPolicy {
    fn default() -> Self {
        DedupPolicy {
            window_ms: DEFAULT_DEDUP_WINDOW_MS,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct UnsortedInput;

impl fmt::Display for UnsortedInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "events are not sorted by timestamp")
    }
}

impl core::error::Error for UnsortedInput {}

/// Collapses bursts: scanning in order, an event is kept iff it is at least
/// `window_ms` away from the last *kept* event of the same kind (the window
/// anchors at kept events, so a long burst still collapses to one).
/// Kinds are preserved and the output stays sorted.
pub fn dedup_events(
    events: &[ConnectionEvent],
    policy: &DedupPolicy,
) -> Result<Vec<ConnectionEvent>, UnsortedInput> {
    if events.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
        return Err(UnsortedInput);
    }
    let mut kept = Vec::new();
    let mut last_kept: BTreeMap<EventKind, u64> = BTreeMap::new();
    for event in events {
        let drop = last_kept
            .get(&event.kind)
            .is_some_and(|last| event.t_ms - last < policy.window_ms);
        if !drop {
            last_kept.insert(event.kind, event.t_ms);
            kept.push(*event);
        }
    }
    Ok(kept)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SessionAnomaly {
    /// Disconnect with no open session; the event is dropped.
    LeadingDisconnect { t_ms: u64 },
    /// Connect while a session is already open; the event is ignored.
    NestedConnect { t_ms: u64 },
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct SessionDerivation {
    /// `(start_ms, end_ms)` pairs in order.
    pub sessions: Vec<(u64, u64)>,
    pub total_connected_ms: u64,
    pub anomalies: Vec<SessionAnomaly>,
}

/// Pairs each Connect with the next Disconnect. A trailing unmatched
/// Connect closes at `snapshot_end_ms` (the crawler may still be connected
/// at export time); a leading Disconnect is dropped and flagged.
pub fn connection_sessions(deduped: &[ConnectionEvent], snapshot_end_ms: u64) -> SessionDerivation {
    let mut derivation = SessionDerivation::default();
    let mut open: Option<u64> = None;
    for event in deduped {
        match (event.kind, open) {
            (EventKind::Connect, None) => open = Some(event.t_ms),
            (EventKind::Connect, Some(_)) => {
                derivation
                    .anomalies
                    .push(SessionAnomaly::NestedConnect { t_ms: event.t_ms });
            }
            (EventKind::Disconnect, Some(start)) => {
                derivation.sessions.push((start, event.t_ms));
                open = None;
            }
            (EventKind::Disconnect, None) => {
                derivation
                    .anomalies
                    .push(SessionAnomaly::LeadingDisconnect { t_ms: event.t_ms });
            }
        }
    }
    if let Some(start) = open {
        derivation
            .sessions
            .push((start, snapshot_end_ms.max(start)));
    }
    derivation.total_connected_ms = derivation.sessions.iter().map(|(s, e)| e - s).sum();
    derivation
}

/// Per-peer derived row.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeerDerived {
    pub peer_id: PeerId,
    pub client_family: ClientFamily,
    pub client_version: String,
    pub country: String,
    pub latency_us: u64,
    pub connections: u64,
    pub disconnections: u64,
    pub connected_ms: u64,
    pub sessions: Vec<(u64, u64)>,
    pub counters: BTreeMap<String, u64>,
    pub total_messages: u64,
    pub anomalies: Vec<SessionAnomaly>,
}

impl PeerDerived {
    pub fn connected_time_min(&self) -> String {
        json::format_ms_as_minutes(self.connected_ms)
    }
}

/// Per-client-family aggregate row. Fractional averages are micro-unit
/// fixed point (arithmetic means over the family's peers).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClientRow {
    pub family: ClientFamily,
    pub peer_count: u64,
    /// Number of distinct client_version strings observed for the family.
    pub version_count: u64,
    pub avg_connections_micro: u64,
    pub avg_disconnections_micro: u64,
    pub avg_connected_min_micro: u64,
    pub avg_latency_us: u64,
    pub topic_totals: BTreeMap<String, u64>,
    pub topic_avgs_micro: BTreeMap<String, u64>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CountryRow {
    pub country: String,
    pub peer_count: u64,
}

/// Share of a topic's messages held by the top-k peers, kept as exact
/// counts so reports render without float round-off.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TopKShare {
    pub k: u64,
    pub numerator: u64,
    pub denominator: u64,
}

impl TopKShare {
    pub fn share(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }

    pub fn share_micro(&self) -> u64 {
        json::ratio_micros(self.numerator, self.denominator)
    }

    /// Fixed six-fractional-digit rendering, e.g. `0.750000`.
    pub fn share_display(&self) -> String {
        json::format_micros(self.share_micro())
    }
}

/// Sorts peers by the topic's count descending (ties by peer id ascending)
/// and returns the fraction held by the first `k`; `0/0` is defined as 0.
pub fn top_k_share(per_peer: &[PeerDerived], topic: &str, k: u64) -> f64 {
    top_k_counts(per_peer, topic, k).share()
}

pub fn top_k_counts(per_peer: &[PeerDerived], topic: &str, k: u64) -> TopKShare {
    let mut counts: Vec<(&PeerId, u64)> = per_peer
        .iter()
        .map(|p| (&p.peer_id, p.counters.get(topic).copied().unwrap_or(0)))
        .collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let numerator = counts.iter().take(k as usize).map(|(_, c)| *c).sum();
    let denominator = counts.iter().map(|(_, c)| *c).sum();
    TopKShare {
        k,
        numerator,
        denominator,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum OutlierFlag {
    /// Very high message rate over a short connection: possible DoS signal.
    HighRate,
    /// Long-lived connection with zero messages: possible eclipse signal.
    Silent,
    /// Exceptionally stable and high-volume first relayer.
    SuperPeer,
}

impl OutlierFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutlierFlag::HighRate => "HighRate",
            OutlierFlag::Silent => "Silent",
            OutlierFlag::SuperPeer => "SuperPeer",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OutlierRules {
    /// HighRate: messages per connected minute above this...
    pub rate_threshold_per_min: u64,
    /// ...with less than this many minutes connected.
    pub rate_window_min: u64,
    /// Silent: more than this many minutes connected with zero messages.
    pub silent_threshold_min: u64,
    /// SuperPeer: more messages than this...
    pub super_msg_threshold: u64,
    /// ...and more minutes connected than this.
    pub super_time_threshold_min: u64,
}

impl Default for OutlierRules {
    fn default() -> Self {
        OutlierRules {
            rate_threshold_per_min: 200,
            rate_window_min: 10,
            silent_threshold_min: 120,
            super_msg_threshold: 10_000,
            super_time_threshold_min: 600,
        }
    }
}

/// Applies the outlier rules to every row (integer arithmetic on
/// milliseconds, so a zero-duration flood still counts as high rate).
pub fn flag_outliers(per_peer: &[PeerDerived], rules: &OutlierRules) -> Vec<(PeerId, OutlierFlag)> {
    let mut flags = Vec::new();
    for p in per_peer {
        let msgs = p.total_messages;
        let ms = p.connected_ms;
        if msgs * 60_000 > rules.rate_threshold_per_min * ms
            && ms < rules.rate_window_min * 60_000
            && msgs > 0
        {
            flags.push((p.peer_id.clone(), OutlierFlag::HighRate));
        }
        if ms > rules.silent_threshold_min * 60_000 && msgs == 0 {
            flags.push((p.peer_id.clone(), OutlierFlag::Silent));
        }
        if msgs > rules.super_msg_threshold && ms > rules.super_time_threshold_min * 60_000 {
            flags.push((p.peer_id.clone(), OutlierFlag::SuperPeer));
        }
    }
    flags
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Summary {
    /// Peers in the snapshot (everything discovery put in the peerstore).
    pub peerstore_size: u64,
    /// Peers with at least one deduplicated Connect event.
    pub connected_count: u64,
    pub top_shares: BTreeMap<String, TopKShare>,
    pub outliers: Vec<(PeerId, OutlierFlag)>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AnalysisReport {
    pub captured_at_ms: u64,
    pub window_ms: u64,
    pub top_k: u64,
    pub topics: Vec<String>,
    pub per_peer: Vec<PeerDerived>,
    /// One row per family, in [`ClientFamily::ALL`] order.
    pub per_client: Vec<ClientRow>,
    /// Sorted by peer count descending, then country name.
    pub per_country: Vec<CountryRow>,
    pub summary: Summary,
}

/// Derives the full report with default top-k and outlier rules.
pub fn aggregate(snapshot: &MetricsSnapshot, policy: &DedupPolicy) -> AnalysisReport {
    aggregate_with(snapshot, policy, DEFAULT_TOP_K, &OutlierRules::default())
}

pub fn aggregate_with(
    snapshot: &MetricsSnapshot,
    policy: &DedupPolicy,
    top_k: u64,
    rules: &OutlierRules,
) -> AnalysisReport {
    let topics = snapshot.topics();

    let mut per_peer: Vec<PeerDerived> = snapshot
        .peers
        .iter()
        .map(|peer| {
            let deduped = dedup_events(&peer.events, policy).expect("snapshot events are sorted");
            let sessions = connection_sessions(&deduped, snapshot.captured_at_ms);
            let connections = deduped
                .iter()
                .filter(|e| e.kind == EventKind::Connect)
                .count() as u64;
            let disconnections = deduped
                .iter()
                .filter(|e| e.kind == EventKind::Disconnect)
                .count() as u64;
            PeerDerived {
                peer_id: peer.info.peer_id.clone(),
                client_family: peer.info.client_family,
                client_version: peer.info.client_version.clone(),
                country: peer.info.country.clone(),
                latency_us: peer.info.latency_us,
                connections,
                disconnections,
                connected_ms: sessions.total_connected_ms,
                sessions: sessions.sessions,
                counters: peer.counters.clone(),
                total_messages: peer.total_messages(),
                anomalies: sessions.anomalies,
            }
        })
        .collect();
    per_peer.sort_by(|a, b| a.peer_id.cmp(&b.peer_id));

    let per_client = ClientFamily::ALL
        .iter()
        .map(|family| {
            let rows: Vec<&PeerDerived> = per_peer
                .iter()
                .filter(|p| p.client_family == *family)
                .collect();
            let n = rows.len() as u64;
            let versions: BTreeSet<&str> = rows.iter().map(|p| p.client_version.as_str()).collect();
            let sum_conn: u64 = rows.iter().map(|p| p.connections).sum();
            let sum_disc: u64 = rows.iter().map(|p| p.disconnections).sum();
            let sum_ms: u64 = rows.iter().map(|p| p.connected_ms).sum();
            let sum_latency: u64 = rows.iter().map(|p| p.latency_us).sum();
            let topic_totals: BTreeMap<String, u64> = topics
                .iter()
                .map(|t| {
                    (
                        t.clone(),
                        rows.iter()
                            .map(|p| p.counters.get(t).copied().unwrap_or(0))
                            .sum(),
                    )
                })
                .collect();
            let topic_avgs_micro = topic_totals
                .iter()
                .map(|(t, total)| (t.clone(), json::ratio_micros(*total, n)))
                .collect();
            ClientRow {
                family: *family,
                peer_count: n,
                version_count: if n == 0 { 0 } else { versions.len() as u64 },
                avg_connections_micro: json::ratio_micros(sum_conn, n),
                avg_disconnections_micro: json::ratio_micros(sum_disc, n),
                avg_connected_min_micro: json::ratio_micros(sum_ms, 60_000 * n),
                avg_latency_us: sum_latency.checked_div(n).unwrap_or(0),
                topic_totals,
                topic_avgs_micro,
            }
        })
        .collect();

    let mut country_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for p in &per_peer {
        *country_counts.entry(p.country.as_str()).or_insert(0) += 1;
    }
    let mut per_country: Vec<CountryRow> = country_counts
        .into_iter()
        .map(|(country, peer_count)| CountryRow {
            country: country.to_string(),
            peer_count,
        })
        .collect();
    per_country.sort_by(|a, b| {
        b.peer_count
            .cmp(&a.peer_count)
            .then_with(|| a.country.cmp(&b.country))
    });

    let top_shares = topics
        .iter()
        .map(|t| (t.clone(), top_k_counts(&per_peer, t, top_k)))
        .collect();
    let summary = Summary {
        peerstore_size: per_peer.len() as u64,
        connected_count: per_peer.iter().filter(|p| p.connections > 0).count() as u64,
        top_shares,
        outliers: flag_outliers(&per_peer, rules),
    };

    AnalysisReport {
        captured_at_ms: snapshot.captured_at_ms,
        window_ms: policy.window_ms,
        top_k,
        topics,
        per_peer,
        per_client,
        per_country,
        summary,
    }
}

// ---------------------------------------------------------------------------
// report rendering
// ---------------------------------------------------------------------------

/// CSV dialect: comma separators, header row, UTF-8; fields are quoted only
/// when they contain a comma or a quote (quotes double inside).
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        let mut out = String::with_capacity(s.len() + 2);
        out.push('"');
        for c in s.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
        out
    } else {
        s.to_string()
    }
}

fn csv_row(fields: &[String]) -> String {
    let mut out = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&csv_field(f));
    }
    out.push('\n');
    out
}

fn per_peer_csv(report: &AnalysisReport) -> String {
    let mut header = alloc::vec![
        "peer_id".to_string(),
        "client_family".to_string(),
        "client_version".to_string(),
        "country".to_string(),
        "latency_s".to_string(),
        "connections".to_string(),
        "disconnections".to_string(),
        "connected_time_min".to_string(),
    ];
    header.extend(report.topics.iter().cloned());
    header.push("total_messages".to_string());
    let mut out = csv_row(&header);
    for p in &report.per_peer {
        let mut row = alloc::vec![
            p.peer_id.0.clone(),
            p.client_family.as_str().to_string(),
            p.client_version.clone(),
            p.country.clone(),
            json::format_micros(p.latency_us),
            p.connections.to_string(),
            p.disconnections.to_string(),
            p.connected_time_min(),
        ];
        for t in &report.topics {
            row.push(p.counters.get(t).copied().unwrap_or(0).to_string());
        }
        row.push(p.total_messages.to_string());
        out.push_str(&csv_row(&row));
    }
    out
}

fn per_client_csv(report: &AnalysisReport) -> String {
    let mut header = alloc::vec![
        "client_family".to_string(),
        "peer_count".to_string(),
        "version_count".to_string(),
        "avg_connections".to_string(),
        "avg_disconnections".to_string(),
        "avg_connected_time_min".to_string(),
        "avg_latency_s".to_string(),
    ];
    for t in &report.topics {
        header.push(alloc::format!("total_{t}"));
    }
    for t in &report.topics {
        header.push(alloc::format!("avg_{t}"));
    }
    let mut out = csv_row(&header);
    for c in &report.per_client {
        let mut row = alloc::vec![
            c.family.as_str().to_string(),
            c.peer_count.to_string(),
            c.version_count.to_string(),
            json::format_micros(c.avg_connections_micro),
            json::format_micros(c.avg_disconnections_micro),
            json::format_micros(c.avg_connected_min_micro),
            json::format_micros(c.avg_latency_us),
        ];
        for t in &report.topics {
            row.push(c.topic_totals.get(t).copied().unwrap_or(0).to_string());
        }
        for t in &report.topics {
            row.push(json::format_micros(
                c.topic_avgs_micro.get(t).copied().unwrap_or(0),
            ));
        }
        out.push_str(&csv_row(&row));
    }
    out
}

fn per_country_csv(report: &AnalysisReport) -> String {
    let mut out = csv_row(&["country".to_string(), "peer_count".to_string()]);
    for row in &report.per_country {
        out.push_str(&csv_row(&[row.country.clone(), row.peer_count.to_string()]));
    }
    out
}

fn summary_csv(report: &AnalysisReport) -> String {
    let mut out = csv_row(&["key".to_string(), "value".to_string()]);
    let mut push = |k: &str, v: String| out.push_str(&csv_row(&[k.to_string(), v]));
    push("captured_at_ms", report.captured_at_ms.to_string());
    push("window_ms", report.window_ms.to_string());
    push("top_k", report.top_k.to_string());
    push("peerstore_size", report.summary.peerstore_size.to_string());
    push(
        "connected_count",
        report.summary.connected_count.to_string(),
    );
    for (topic, share) in &report.summary.top_shares {
        push(
            &alloc::format!("top_share_{topic}"),
            json::format_micros(share.share_micro()),
        );
    }
    for (peer, flag) in &report.summary.outliers {
        push(&alloc::format!("outlier_{}", flag.as_str()), peer.0.clone());
    }
    out
}

fn short_id(peer: &PeerId) -> String {
    peer.0[..peer.0.len().min(8)].to_string()
}

/// Renders every report file as `(relative name, contents)`, sorted by
/// name. Output is a pure function of the report.
pub fn render_report(report: &AnalysisReport) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut add =
        |name: &str, content: String| files.push((name.to_string(), content.into_bytes()));

    add("per_peer.csv", per_peer_csv(report));
    add("per_client.csv", per_client_csv(report));
    add("per_country.csv", per_country_csv(report));
    add("summary.csv", summary_csv(report));

    let country_bars: Vec<(String, u64)> = report
        .per_country
        .iter()
        .map(|c| (c.country.clone(), c.peer_count * 1_000_000))
        .collect();
    add(
        "peers_per_country.svg",
        svg::bar_chart("Peers per country", "peers", &country_bars),
    );

    let client_bars: Vec<(String, u64)> = report
        .per_client
        .iter()
        .map(|c| (c.family.as_str().to_string(), c.peer_count * 1_000_000))
        .collect();
    add(
        "peers_per_client.svg",
        svg::bar_chart("Peers per client", "peers", &client_bars),
    );

    let conn_bars: Vec<(String, u64)> = report
        .per_peer
        .iter()
        .map(|p| (short_id(&p.peer_id), p.connections * 1_000_000))
        .collect();
    add(
        "connections_per_peer.svg",
        svg::bar_chart("Connections per peer", "connections", &conn_bars),
    );

    let disc_bars: Vec<(String, u64)> = report
        .per_peer
        .iter()
        .map(|p| (short_id(&p.peer_id), p.disconnections * 1_000_000))
        .collect();
    add(
        "disconnections_per_peer.svg",
        svg::bar_chart("Disconnections per peer", "disconnections", &disc_bars),
    );

    let time_bars: Vec<(String, u64)> = report
        .per_peer
        .iter()
        .map(|p| {
            (
                short_id(&p.peer_id),
                json::ratio_micros(p.connected_ms, 60_000),
            )
        })
        .collect();
    add(
        "connected_time_per_peer.svg",
        svg::bar_chart("Time connected per peer", "minutes", &time_bars),
    );

    let latency_bars: Vec<(String, u64)> = report
        .per_peer
        .iter()
        .map(|p| (short_id(&p.peer_id), p.latency_us))
        .collect();
    add(
        "latency_per_peer.svg",
        svg::bar_chart("Connection latency per peer", "seconds", &latency_bars),
    );

    let client_metric = |f: &dyn Fn(&ClientRow) -> u64| -> Vec<(String, u64)> {
        report
            .per_client
            .iter()
            .map(|c| (c.family.as_str().to_string(), f(c)))
            .collect()
    };
    add(
        "avg_connections_per_client.svg",
        svg::bar_chart(
            "Average connections per client",
            "connections",
            &client_metric(&|c| c.avg_connections_micro),
        ),
    );
    add(
        "avg_disconnections_per_client.svg",
        svg::bar_chart(
            "Average disconnections per client",
            "disconnections",
            &client_metric(&|c| c.avg_disconnections_micro),
        ),
    );
    add(
        "avg_connected_time_per_client.svg",
        svg::bar_chart(
            "Average time connected per client",
            "minutes",
            &client_metric(&|c| c.avg_connected_min_micro),
        ),
    );
    add(
        "avg_latency_per_client.svg",
        svg::bar_chart(
            "Average latency per client",
            "seconds",
            &client_metric(&|c| c.avg_latency_us),
        ),
    );
    add(
        "messages_total_per_client.svg",
        svg::bar_chart(
            "Messages received per client",
            "messages",
            &client_metric(&|c| c.topic_totals.values().sum::<u64>() * 1_000_000),
        ),
    );
    add(
        "messages_avg_per_client.svg",
        svg::bar_chart(
            "Average messages received per client",
            "messages",
            &client_metric(&|c| c.topic_avgs_micro.values().sum::<u64>()),
        ),
    );

    let scatter: Vec<(u64, u64)> = report
        .per_peer
        .iter()
        .map(|p| {
            (
                json::ratio_micros(p.connected_ms, 60_000),
                p.total_messages * 1_000_000,
            )
        })
        .collect();
    add(
        "messages_vs_connected_time.svg",
        svg::scatter_chart(
            "Total messages vs time connected",
            "minutes connected",
            "messages",
            &scatter,
        ),
    );

    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::PeerInfo;
    use crate::metrics::{default_topics, PeerMetrics};
    use proptest::prelude::*;

    fn ev(kind: EventKind, t_ms: u64) -> ConnectionEvent {
        ConnectionEvent { kind, t_ms }
    }

    fn connects(ts: &[u64]) -> Vec<ConnectionEvent> {
        ts.iter().map(|&t| ev(EventKind::Connect, t)).collect()
    }

    /// Exhaustive reference: an event survives iff no *kept* event of the
    /// same kind lies within the trailing window — checked against the full
    /// kept prefix rather than a running anchor.
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
    fn burst_of_five_collapses_to_one() {
        let events = connects(&[0, 1, 2, 3, 4]);
        let out = dedup_events(&events, &DedupPolicy::default()).unwrap();
        assert_eq!(out, connects(&[0]));
    }

    #[test]
    fn window_boundary_via_pairwise_oracle() {
        // brute-force check over every pair (0, x) for x in 0..=1000
        let policy = DedupPolicy::default();
        for x in 0..=1000u64 {
            let events = connects(&[0, x]);
            let got = dedup_events(&events, &policy).unwrap();
            let expect = dedup_reference(&events, policy.window_ms);
            assert_eq!(got, expect, "x = {x}");
            assert_eq!(got.len(), if x >= 500 { 2 } else { 1 }, "x = {x}");
        }
    }

    #[test]
    fn different_kinds_do_not_mask_each_other() {
        let events = alloc::vec![ev(EventKind::Connect, 0), ev(EventKind::Disconnect, 100)];
        let out = dedup_events(&events, &DedupPolicy::default()).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn connect_at_600_survives_default_window() {
        let out = dedup_events(&connects(&[0, 600]), &DedupPolicy::default()).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn window_of_one_keeps_distinct_timestamps() {
        let out = dedup_events(&connects(&[0, 1, 2, 3, 4]), &DedupPolicy { window_ms: 1 }).unwrap();
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn unsorted_input_is_an_error() {
        let events = alloc::vec![ev(EventKind::Connect, 100), ev(EventKind::Connect, 50)];
        assert_eq!(
            dedup_events(&events, &DedupPolicy::default()),
            Err(UnsortedInput)
        );
    }

    #[test]
    fn dedup_is_idempotent_on_samples() {
        let events = alloc::vec![
            ev(EventKind::Connect, 0),
            ev(EventKind::Connect, 100),
            ev(EventKind::Disconnect, 120),
            ev(EventKind::Connect, 650),
            ev(EventKind::Disconnect, 700),
        ];
        let once = dedup_events(&events, &DedupPolicy::default()).unwrap();
        let twice = dedup_events(&once, &DedupPolicy::default()).unwrap();
        assert_eq!(once, twice);
    }

    proptest! {
        #[test]
        fn prop_dedup_matches_reference(
            raw in proptest::collection::vec((any::<bool>(), 0u64..5_000), 0..12),
            window in 1u64..1500,
        ) {
            let mut events: Vec<ConnectionEvent> = raw
                .into_iter()
                .map(|(c, t)| ev(if c { EventKind::Connect } else { EventKind::Disconnect }, t))
                .collect();
            events.sort_by_key(|e| e.t_ms);
            let policy = DedupPolicy { window_ms: window };
            let got = dedup_events(&events, &policy).unwrap();
            let expect = dedup_reference(&events, window);
            prop_assert_eq!(&got, &expect);
            // idempotence and shape invariants
            prop_assert_eq!(dedup_events(&got, &policy).unwrap(), got.clone());
            prop_assert!(got.len() <= events.len());
            prop_assert!(got.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
        }
    }

    #[test]
    fn simple_session_duration() {
        let events = alloc::vec![
            ev(EventKind::Connect, 0),
            ev(EventKind::Disconnect, 600_000)
        ];
        let d = connection_sessions(&events, 1_000_000);
        assert_eq!(d.sessions, alloc::vec![(0, 600_000)]);
        assert_eq!(
            json::format_ms_as_minutes(d.total_connected_ms),
            "10.000000"
        );
    }

    #[test]
    fn trailing_connect_clamps_to_snapshot_end() {
        // oracle: exact division 1_476_025 / 60_000 truncated at 6 digits
        let events = alloc::vec![ev(EventKind::Connect, 0)];
        let d = connection_sessions(&events, 1_476_025);
        assert_eq!(d.total_connected_ms, 1_476_025);
        assert_eq!(
            json::format_ms_as_minutes(d.total_connected_ms),
            "24.600416"
        );
    }

    #[test]
    fn leading_disconnect_is_dropped_and_flagged() {
        let events = alloc::vec![ev(EventKind::Disconnect, 50), ev(EventKind::Connect, 100),];
        let d = connection_sessions(&events, 160_000);
        assert_eq!(d.sessions, alloc::vec![(100, 160_000)]);
        assert_eq!(
            d.anomalies,
            alloc::vec![SessionAnomaly::LeadingDisconnect { t_ms: 50 }]
        );
    }

    #[test]
    fn session_totals_are_additive_for_disjoint_pairs() {
        let base = alloc::vec![
            ev(EventKind::Connect, 1_000),
            ev(EventKind::Disconnect, 61_000)
        ];
        let before = connection_sessions(&base, 600_000).total_connected_ms;
        let mut extended = base.clone();
        extended.push(ev(EventKind::Connect, 100_000));
        extended.push(ev(EventKind::Disconnect, 160_000));
        let after = connection_sessions(&extended, 600_000).total_connected_ms;
        assert_eq!(after, before + 60_000);
    }

    fn peer(
        id: &str,
        family: ClientFamily,
        version: &str,
        country: &str,
        conn_count: u64,
    ) -> PeerMetrics {
        let mut p = PeerMetrics {
            info: PeerInfo::stub(PeerId(id.to_string())),
            events: Vec::new(),
            counters: default_topics().iter().map(|t| (t.clone(), 0)).collect(),
        };
        p.info.client_family = family;
        p.info.client_version = version.to_string();
        p.info.country = country.to_string();
        for i in 0..conn_count {
            p.events.push(ev(EventKind::Connect, i * 10_000));
            p.events.push(ev(EventKind::Disconnect, i * 10_000 + 5_000));
        }
        p
    }

    fn snapshot_of(peers: Vec<PeerMetrics>) -> MetricsSnapshot {
        let mut peers = peers;
        peers.sort_by(|a, b| a.info.peer_id.cmp(&b.info.peer_id));
        MetricsSnapshot {
            captured_at_ms: 3_600_000,
            host_node_id: "aa".to_string(),
            network_id: "mainnet".to_string(),
            peers,
        }
    }

    #[test]
    fn per_client_averages_are_plain_means() {
        // families {Lighthouse: 2 peers, Prysm: 1 peer}, connections {4, 6, 10}
        let snap = snapshot_of(alloc::vec![
            peer("l1", ClientFamily::Lighthouse, "v1", "Spain", 4),
            peer("l2", ClientFamily::Lighthouse, "v2", "Spain", 6),
            peer("p1", ClientFamily::Prysm, "v1", "Germany", 10),
        ]);
        let report = aggregate(&snap, &DedupPolicy::default());
        // brute-force oracle: recompute means from the raw rows
        for family in [ClientFamily::Lighthouse, ClientFamily::Prysm] {
            let rows: Vec<&PeerDerived> = report
                .per_peer
                .iter()
                .filter(|p| p.client_family == family)
                .collect();
            let mean_micro =
                json::ratio_micros(rows.iter().map(|p| p.connections).sum(), rows.len() as u64);
            let row = report
                .per_client
                .iter()
                .find(|c| c.family == family)
                .unwrap();
            assert_eq!(row.avg_connections_micro, mean_micro);
        }
        let lighthouse = &report.per_client[0];
        assert_eq!(lighthouse.family, ClientFamily::Lighthouse);
        assert_eq!(lighthouse.avg_connections_micro, 5_000_000);
        let prysm = report
            .per_client
            .iter()
            .find(|c| c.family == ClientFamily::Prysm)
            .unwrap();
        assert_eq!(prysm.avg_connections_micro, 10_000_000);
    }

    #[test]
    fn version_counts_per_family() {
        // Lighthouse 5 distinct, Teku 5, Nimbus 2, Prysm 5, Lodestar 0, Unknown 1
        let mut peers = Vec::new();
        for (family, n) in [
            (ClientFamily::Lighthouse, 5),
            (ClientFamily::Teku, 5),
            (ClientFamily::Nimbus, 2),
            (ClientFamily::Prysm, 5),
        ] {
            for i in 0..n {
                peers.push(peer(
                    &alloc::format!("{}-{i}", family.as_str()),
                    family,
                    &alloc::format!("v{i}"),
                    "Spain",
                    1,
                ));
            }
        }
        peers.push(peer("unknown-1", ClientFamily::Unknown, "", "Spain", 1));
        let report = aggregate(&snapshot_of(peers), &DedupPolicy::default());
        let counts: Vec<u64> = report.per_client.iter().map(|c| c.version_count).collect();
        assert_eq!(counts, alloc::vec![5, 5, 2, 5, 0, 1]);
    }

    #[test]
    fn empty_snapshot_aggregates_to_zeros() {
        let report = aggregate(&snapshot_of(Vec::new()), &DedupPolicy::default());
        assert!(report.per_peer.is_empty());
        assert!(report.per_country.is_empty());
        assert_eq!(report.summary.peerstore_size, 0);
        assert_eq!(report.summary.connected_count, 0);
        assert!(report.per_client.iter().all(|c| c.peer_count == 0));
        assert!(report.summary.top_shares.values().all(|s| s.share() == 0.0));
    }

    fn derived_with_counts(counts: &[u64]) -> Vec<PeerDerived> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| PeerDerived {
                peer_id: PeerId(alloc::format!("p{i:03}")),
                client_family: ClientFamily::Unknown,
                client_version: String::new(),
                country: "Unknown".to_string(),
                latency_us: 0,
                connections: 1,
                disconnections: 1,
                connected_ms: 60_000,
                sessions: alloc::vec![(0, 60_000)],
                counters: [("BeaconBlock".to_string(), c)].into_iter().collect(),
                total_messages: c,
                anomalies: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn top_k_share_is_exact_on_constructed_data() {
        // 10 peers hold 75 of 100 messages, the rest hold 25
        let mut counts = alloc::vec![];
        counts.extend([9u64, 8, 8, 8, 8, 8, 8, 6, 6, 6]); // = 75
        counts.extend(std::iter::repeat_n(1, 25));
        counts.extend(std::iter::repeat_n(0, 5));
        let per_peer = derived_with_counts(&counts);
        let share = top_k_counts(&per_peer, "BeaconBlock", 10);
        assert_eq!((share.numerator, share.denominator), (75, 100));
        assert!((top_k_share(&per_peer, "BeaconBlock", 10) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn top_k_share_edge_cases() {
        let per_peer = derived_with_counts(&[3, 2, 1]);
        assert!((top_k_share(&per_peer, "BeaconBlock", 10) - 1.0).abs() < 1e-12);
        let zeros = derived_with_counts(&[0, 0]);
        assert_eq!(top_k_share(&zeros, "BeaconBlock", 5), 0.0);
    }

    #[test]
    fn top_k_share_is_nondecreasing_in_k() {
        let per_peer = derived_with_counts(&[10, 7, 5, 3, 2, 1, 0]);
        let mut prev = 0.0;
        for k in 1..=7 {
            let s = top_k_share(&per_peer, "BeaconBlock", k);
            assert!(s >= prev);
            prev = s;
        }
        // k = number of peers with nonzero counts reaches 1.0
        assert!((top_k_share(&per_peer, "BeaconBlock", 6) - 1.0).abs() < 1e-12);
    }

    fn outlier_row(id: &str, msgs: u64, minutes: u64) -> PeerDerived {
        let mut rows = derived_with_counts(&[msgs]);
        let mut row = rows.remove(0);
        row.peer_id = PeerId(id.to_string());
        row.connected_ms = minutes * 60_000;
        row
    }

    #[test]
    fn outlier_rules_from_defaults() {
        let rows = alloc::vec![
            outlier_row("super", 100_000, 2_160), // ~36 hours, huge volume
            outlier_row("quiet", 0, 24),          // low duration, no messages: no flag
            outlier_row("flood", 5_000, 5),       // 1000/min over 5 min
            outlier_row("eclipse", 0, 180),       // 3 h silent
        ];
        let flags = flag_outliers(&rows, &OutlierRules::default());
        assert_eq!(
            flags,
            alloc::vec![
                (PeerId("super".to_string()), OutlierFlag::SuperPeer),
                (PeerId("flood".to_string()), OutlierFlag::HighRate),
                (PeerId("eclipse".to_string()), OutlierFlag::Silent),
            ]
        );
    }

    #[test]
    fn aggregation_conserves_topic_totals() {
        let mut peers = Vec::new();
        for i in 0..6 {
            let mut p = peer(
                &alloc::format!("p{i}"),
                ClientFamily::ALL[i % 6],
                "v",
                "Spain",
                2,
            );
            for (j, c) in p.counters.values_mut().enumerate() {
                *c = (i * 7 + j * 3) as u64;
            }
            peers.push(p);
        }
        let snap = snapshot_of(peers);
        let report = aggregate(&snap, &DedupPolicy::default());
        for topic in &report.topics {
            let from_peers: u64 = report.per_peer.iter().map(|p| p.counters[topic]).sum();
            let from_clients: u64 = report
                .per_client
                .iter()
                .map(|c| c.topic_totals[topic])
                .sum();
            let from_snapshot: u64 = snap.peers.iter().map(|p| p.counters[topic]).sum();
            assert_eq!(from_peers, from_clients);
            assert_eq!(from_peers, from_snapshot);
        }
    }

    #[test]
    fn report_rendering_is_deterministic() {
        let snap = snapshot_of(alloc::vec![
            peer("a", ClientFamily::Teku, "v20, beta", "United States", 3),
            peer("b", ClientFamily::Prysm, "v1", "Germany", 1),
        ]);
        let report = aggregate(&snap, &DedupPolicy::default());
        let one = render_report(&report);
        let two = render_report(&report);
        assert_eq!(one, two);
        let names: Vec<&str> = one.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"per_peer.csv"));
        assert!(names.contains(&"peers_per_country.svg"));
        assert!(names.contains(&"messages_vs_connected_time.svg"));
        assert_eq!(names.len(), 17);
        // a version containing a comma gets quoted
        let per_peer = one.iter().find(|(n, _)| n == "per_peer.csv").unwrap();
        let text = core::str::from_utf8(&per_peer.1).unwrap();
        assert!(text.contains("\"v20, beta\""));
    }

    #[test]
    fn empty_report_renders_headers_and_no_data() {
        let report = aggregate(&snapshot_of(Vec::new()), &DedupPolicy::default());
        let files = render_report(&report);
        let per_peer = files.iter().find(|(n, _)| n == "per_peer.csv").unwrap();
        assert_eq!(
            core::str::from_utf8(&per_peer.1).unwrap().lines().count(),
            1
        );
        let chart = files
            .iter()
            .find(|(n, _)| n == "connections_per_peer.svg")
            .unwrap();
        assert!(core::str::from_utf8(&chart.1).unwrap().contains("no data"));
    }
}
