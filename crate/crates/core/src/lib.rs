//! Core library for `gossipwatch`, a monitoring crawler and analyzer for
//! GossipSub-style p2p networks with DHT-based peer discovery.
//!
//! The crate is organized around the pipeline the binary exposes:
//!
//! - [`identity`]: signed, sequence-numbered node records and keypairs.
//! - [`discovery`]: the DHT-backed peerstore, bootstrapping, and iterative
//!   random lookups that feed new peers to the crawler.
//! - [`gossip`]: a simplified GossipSub router (mesh, seen cache,
//!   IHAVE/IWANT) with first-relayer attribution.
//! - [`crawler`]: the monitoring host orchestration — connect-all policy,
//!   status handshake, client classification, latency and geolocation.
//! - [`metrics`]: the shared per-peer metrics model and the canonical
//!   snapshot format the crawler exports and the analyzer consumes.
//! - [`analyzer`]: event deduplication, connection-session derivation, and
//!   the aggregate tables/charts emitted as CSV and SVG.
//! - [`simnet`]: a deterministic, virtual-time simulated network with
//!   ground-truth oracles used to verify the whole pipeline.
//!
//! Everything in this crate is `no_std`-compatible (with `alloc`): all
//! protocol logic is written sans-IO against a virtual clock, and the
//! companion CLI crate carries file IO and process concerns. This keeps
//! every run byte-for-byte reproducible from a seed.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analyzer;
pub mod crawler;
pub mod discovery;
pub mod gossip;
pub mod identity;
pub mod metrics;
pub mod rng;
pub mod simnet;

mod json;
mod svg;
