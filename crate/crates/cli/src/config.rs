//! Host configuration file parsing.
//!
//! The config is a JSON object whose keys match the `HostConfig` field
//! names; every key is optional and falls back to the default. Unknown keys
//! are rejected so typos fail loudly.
//!
//! ```json
//! {
//!   "ip": "127.0.0.1",
//!   "tcp_port": 9000,
//!   "udp_port": 9000,
//!   "network_id": "mainnet",
//!   "topics": ["BeaconBlock", "BeaconAggregateAndProof", "VoluntaryExit",
//!              "ProposerSlashing", "AttesterSlashing"],
//!   "export_interval_s": 300,
//!   "max_outbound_dials_in_flight": 8,
//!   "geo_provider": {"provider": "static", "path": "data/geo.json"},
//!   "user_agent": "gossipwatch/0.1.0"
//! }
//! ```

use anyhow::{anyhow, bail, Result};
use gossipwatch_core::crawler::{GeoProviderConfig, HostConfig};
use serde_json::Value;

const KNOWN_KEYS: [&str; 9] = [
    "ip",
    "tcp_port",
    "udp_port",
    "network_id",
    "topics",
    "export_interval_s",
    "max_outbound_dials_in_flight",
    "geo_provider",
    "user_agent",
];

fn port(v: &Value, key: &str) -> Result<u16> {
    v.as_u64()
        .and_then(|n| u16::try_from(n).ok())
        .ok_or_else(|| anyhow!("`{key}` must be a port number"))
}

pub fn parse_host_config(text: &str) -> Result<HostConfig> {
    let doc: Value = serde_json::from_str(text)?;
    let obj = doc
        .as_object()
        .ok_or_else(|| anyhow!("config must be a JSON object"))?;
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("unknown config key `{key}`");
        }
    }

    let mut config = HostConfig::default();
    if let Some(v) = obj.get("ip") {
        let s = v.as_str().ok_or_else(|| anyhow!("`ip` must be a string"))?;
        config.ip = s
            .parse()
            .map_err(|_| anyhow!("`ip` is not a valid address: {s}"))?;
    }
    if let Some(v) = obj.get("tcp_port") {
        config.tcp_port = port(v, "tcp_port")?;
    }
    if let Some(v) = obj.get("udp_port") {
        config.udp_port = port(v, "udp_port")?;
    }
    if let Some(v) = obj.get("network_id") {
        config.network_id = v
            .as_str()
            .ok_or_else(|| anyhow!("`network_id` must be a string"))?
            .to_string();
    }
    if let Some(v) = obj.get("topics") {
        let arr = v
            .as_array()
            .ok_or_else(|| anyhow!("`topics` must be an array"))?;
        config.topics = arr
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| anyhow!("`topics` entries must be strings"))
            })
            .collect::<Result<Vec<String>>>()?;
    }
    if let Some(v) = obj.get("export_interval_s") {
        config.export_interval_s = v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| anyhow!("`export_interval_s` must be an unsigned integer"))?;
    }
    if let Some(v) = obj.get("max_outbound_dials_in_flight") {
        config.max_outbound_dials_in_flight = v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| anyhow!("`max_outbound_dials_in_flight` must be an unsigned integer"))?;
    }
    if let Some(v) = obj.get("geo_provider") {
        let g = v
            .as_object()
            .ok_or_else(|| anyhow!("`geo_provider` must be an object"))?;
        config.geo_provider = GeoProviderConfig {
            provider: g
                .get("provider")
                .and_then(Value::as_str)
                .ok_or_else(|| anyhow!("`geo_provider.provider` must be a string"))?
                .to_string(),
            path: g
                .get("path")
                .and_then(Value::as_str)
                .ok_or_else(|| anyhow!("`geo_provider.path` must be a string"))?
                .to_string(),
        };
    }
    if let Some(v) = obj.get("user_agent") {
        config.user_agent = v
            .as_str()
            .ok_or_else(|| anyhow!("`user_agent` must be a string"))?
            .to_string();
    }

    config.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(config)
}
