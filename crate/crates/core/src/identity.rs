//! Signed node records and the keypairs that produce them.
//!
//! A [`NodeRecord`] is the unit of peer identity exchanged through
//! discovery: it carries the node's public key, a monotonically increasing
//! sequence number, its network endpoint, and the identifier of the network
//! it claims membership of. Records are signed over a canonical encoding so
//! any mutation after signing is detectable.
//!
//! The signature scheme is Ed25519. It was chosen because key generation is
//! deterministic from a 32-byte seed and signatures themselves are
//! deterministic, which makes golden tests and the simulator reproducible.
//! The node id is the SHA-256 digest of the raw public key bytes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};

pub const NODE_ID_LEN: usize = 32;
pub const PUBKEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// 32-byte node identifier, the SHA-256 digest of the public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub [u8; NODE_ID_LEN]);

impl NodeId {
    pub fn for_pubkey(pubkey: &[u8; PUBKEY_LEN]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(pubkey);
        NodeId(hasher.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; NODE_ID_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; NODE_ID_LEN] = bytes.try_into().ok()?;
        Some(NodeId(arr))
    }

    pub fn xor_distance(&self, other: &NodeId) -> [u8; NODE_ID_LEN] {
        let mut out = [0u8; NODE_ID_LEN];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = self.0[i] ^ other.0[i];
        }
        out
    }

    /// Index of the highest set bit of the XOR distance, in `0..=255`.
    /// `None` when the ids are equal.
    pub fn log2_distance(&self, other: &NodeId) -> Option<u16> {
        let dist = self.xor_distance(other);
        for (i, byte) in dist.iter().enumerate() {
            if *byte != 0 {
                let bit = 7 - byte.leading_zeros() as u16;
                return Some((NODE_ID_LEN - 1 - i) as u16 * 8 + bit);
            }
        }
        None
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({}..)", &self.to_hex()[..8])
    }
}

/// Ed25519 keypair. Generation from a 32-byte seed is deterministic.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl Keypair {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        Keypair {
            signing: SigningKey::from_bytes(seed),
        }
    }

    pub fn public_bytes(&self) -> [u8; PUBKEY_LEN] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn node_id(&self) -> NodeId {
        NodeId::for_pubkey(&self.public_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> [u8; SIGNATURE_LEN] {
        self.signing.sign(message).to_bytes()
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair")
            .field("node_id", &self.node_id())
            .finish_non_exhaustive()
    }
}

pub fn verify_signature(
    pubkey: &[u8; PUBKEY_LEN],
    message: &[u8],
    signature: &[u8; SIGNATURE_LEN],
) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(pubkey) else {
        return false;
    };
    vk.verify(message, &Signature::from_bytes(signature))
        .is_ok()
}

/// Signed, sequence-numbered identity record.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NodeRecord {
    pub node_id: NodeId,
    pub pubkey: [u8; PUBKEY_LEN],
    pub seq: u64,
    pub ip: IpAddr,
    pub tcp_port: u16,
    pub udp_port: u16,
    pub network_id: String,
    pub signature: [u8; SIGNATURE_LEN],
}

/// Field updates applied by [`bump_record`]. Unset fields keep their value.
#[derive(Clone, Default, Debug)]
pub struct RecordUpdate {
    pub ip: Option<IpAddr>,
    pub tcp_port: Option<u16>,
    pub udp_port: Option<u16>,
    pub network_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyMismatch;

impl fmt::Display for KeyMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "keypair public key does not match the record")
    }
}

impl core::error::Error for KeyMismatch {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    Truncated,
    TrailingBytes,
    BadIpTag(u8),
    BadLength,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::Truncated => write!(f, "record bytes truncated"),
            DecodeError::TrailingBytes => write!(f, "unexpected trailing bytes"),
            DecodeError::BadIpTag(t) => write!(f, "unknown ip tag {t}"),
            DecodeError::BadLength => write!(f, "length field out of range"),
        }
    }
}

impl core::error::Error for DecodeError {}

/// Generates a keypair and its first record (`seq = 1`).
///
/// Deterministic: the same seed and endpoint always produce bit-identical
/// output.
pub fn generate_identity(
    seed: &[u8; 32],
    ip: IpAddr,
    tcp_port: u16,
    udp_port: u16,
    network_id: &str,
) -> (Keypair, NodeRecord) {
    let keypair = Keypair::from_seed(seed);
    let mut record = NodeRecord {
        node_id: keypair.node_id(),
        pubkey: keypair.public_bytes(),
        seq: 1,
        ip,
        tcp_port,
        udp_port,
        network_id: network_id.to_string(),
        signature: [0; SIGNATURE_LEN],
    };
    record.signature = keypair.sign(&signing_preimage(&record));
    (keypair, record)
}

/// Canonical signing preimage: every field except the signature, in fixed
/// order with length-prefixed variable fields.
pub fn signing_preimage(record: &NodeRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(96 + record.network_id.len());
    out.extend_from_slice(record.node_id.as_bytes());
    out.extend_from_slice(&record.pubkey);
    out.extend_from_slice(&record.seq.to_be_bytes());
    match record.ip {
        IpAddr::V4(v4) => {
            out.push(4);
            out.extend_from_slice(&v4.octets());
        }
        IpAddr::V6(v6) => {
            out.push(6);
            out.extend_from_slice(&v6.octets());
        }
    }
    out.extend_from_slice(&record.tcp_port.to_be_bytes());
    out.extend_from_slice(&record.udp_port.to_be_bytes());
    out.extend_from_slice(&(record.network_id.len() as u32).to_be_bytes());
    out.extend_from_slice(record.network_id.as_bytes());
    out
}

/// Canonical full encoding: the signing preimage followed by the signature.
pub fn encode_record(record: &NodeRecord) -> Vec<u8> {
    let mut out = signing_preimage(record);
    out.extend_from_slice(&record.signature);
    out
}

pub fn decode_record(bytes: &[u8]) -> Result<NodeRecord, DecodeError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let node_id = NodeId(cur.take_array::<NODE_ID_LEN>()?);
    let pubkey = cur.take_array::<PUBKEY_LEN>()?;
    let seq = u64::from_be_bytes(cur.take_array::<8>()?);
    let ip = match cur.take_byte()? {
        4 => IpAddr::V4(Ipv4Addr::from(cur.take_array::<4>()?)),
        6 => IpAddr::V6(Ipv6Addr::from(cur.take_array::<16>()?)),
        t => return Err(DecodeError::BadIpTag(t)),
    };
    let tcp_port = u16::from_be_bytes(cur.take_array::<2>()?);
    let udp_port = u16::from_be_bytes(cur.take_array::<2>()?);
    let net_len = u32::from_be_bytes(cur.take_array::<4>()?) as usize;
    if net_len > 1024 {
        return Err(DecodeError::BadLength);
    }
    let network_id =
        String::from_utf8(cur.take_slice(net_len)?.to_vec()).map_err(|_| DecodeError::BadLength)?;
    let signature = cur.take_array::<SIGNATURE_LEN>()?;
    if cur.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes);
    }
    Ok(NodeRecord {
        node_id,
        pubkey,
        seq,
        ip,
        tcp_port,
        udp_port,
        network_id,
        signature,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take_slice(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.bytes.len() {
            return Err(DecodeError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self
            .take_slice(N)?
            .try_into()
            .expect("slice length checked"))
    }

    fn take_byte(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take_slice(1)?[0])
    }
}

/// True iff the signature verifies under the record's public key and the
/// node id matches the digest of the public key. Malformed input is `false`,
/// never an error.
pub fn verify_record(record: &NodeRecord) -> bool {
    if record.node_id != NodeId::for_pubkey(&record.pubkey) {
        return false;
    }
    if record.seq == 0 {
        return false;
    }
    verify_signature(&record.pubkey, &signing_preimage(record), &record.signature)
}

/// Produces the successor record: `seq + 1`, `changes` applied, re-signed.
pub fn bump_record(
    keypair: &Keypair,
    record: &NodeRecord,
    changes: &RecordUpdate,
) -> Result<NodeRecord, KeyMismatch> {
    if keypair.public_bytes() != record.pubkey {
        return Err(KeyMismatch);
    }
    let mut next = record.clone();
    next.seq = record.seq + 1;
    if let Some(ip) = changes.ip {
        next.ip = ip;
    }
    if let Some(tcp) = changes.tcp_port {
        next.tcp_port = tcp;
    }
    if let Some(udp) = changes.udp_port {
        next.udp_port = udp;
    }
    if let Some(net) = &changes.network_id {
        next.network_id = net.clone();
    }
    next.signature = keypair.sign(&signing_preimage(&next));
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextParseError(pub String);

impl fmt::Display for TextParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bad record text: {}", self.0)
    }
}

impl core::error::Error for TextParseError {}

impl NodeRecord {
    /// Text form used in config files. Grammar (fields separated by `/`):
    ///
    /// ```text
    /// nodeid:<64 hex>/seq:<decimal>/<ip>:<tcp>:<udp>/net:<network_id>/pk:<base64url>/sig:<base64url>
    /// ```
    ///
    /// IPv6 addresses are bracketed (`[2001:db8::1]:9000:9000`). The key and
    /// signature fields use the unpadded URL-safe base64 alphabet so that
    /// `/` only ever separates fields; consequently `network_id` must not
    /// contain `/`.
    pub fn to_text(&self) -> String {
        let ip = match self.ip {
            IpAddr::V4(v4) => v4.to_string(),
            IpAddr::V6(v6) => alloc::format!("[{v6}]"),
        };
        alloc::format!(
            "nodeid:{}/seq:{}/{}:{}:{}/net:{}/pk:{}/sig:{}",
            self.node_id.to_hex(),
            self.seq,
            ip,
            self.tcp_port,
            self.udp_port,
            self.network_id,
            URL_SAFE_NO_PAD.encode(self.pubkey),
            URL_SAFE_NO_PAD.encode(self.signature),
        )
    }

    /// Parses the text form. Does not verify the signature; callers that
    /// admit parsed records should run [`verify_record`].
    pub fn from_text(text: &str) -> Result<Self, TextParseError> {
        let err = |m: &str| TextParseError(m.to_string());
        let parts: Vec<&str> = text.split('/').collect();
        if parts.len() != 6 {
            return Err(err("expected 6 '/'-separated fields"));
        }
        let node_id = NodeId::from_hex(
            parts[0]
                .strip_prefix("nodeid:")
                .ok_or_else(|| err("missing nodeid: prefix"))?,
        )
        .ok_or_else(|| err("nodeid is not 64 hex chars"))?;
        let seq: u64 = parts[1]
            .strip_prefix("seq:")
            .ok_or_else(|| err("missing seq: prefix"))?
            .parse()
            .map_err(|_| err("seq is not a decimal integer"))?;
        let (ip, tcp_port, udp_port) =
            parse_endpoint(parts[2]).ok_or_else(|| err("bad endpoint"))?;
        let network_id = parts[3]
            .strip_prefix("net:")
            .ok_or_else(|| err("missing net: prefix"))?
            .to_string();
        let pubkey: [u8; PUBKEY_LEN] = URL_SAFE_NO_PAD
            .decode(
                parts[4]
                    .strip_prefix("pk:")
                    .ok_or_else(|| err("missing pk: prefix"))?,
            )
            .map_err(|_| err("pk is not base64url"))?
            .try_into()
            .map_err(|_| err("pk has wrong length"))?;
        let signature: [u8; SIGNATURE_LEN] = URL_SAFE_NO_PAD
            .decode(
                parts[5]
                    .strip_prefix("sig:")
                    .ok_or_else(|| err("missing sig: prefix"))?,
            )
            .map_err(|_| err("sig is not base64url"))?
            .try_into()
            .map_err(|_| err("sig has wrong length"))?;
        Ok(NodeRecord {
            node_id,
            pubkey,
            seq,
            ip,
            tcp_port,
            udp_port,
            network_id,
            signature,
        })
    }
}

fn parse_endpoint(s: &str) -> Option<(IpAddr, u16, u16)> {
    let (ip, rest) = if let Some(stripped) = s.strip_prefix('[') {
        let (v6, rest) = stripped.split_once(']')?;
        let rest = rest.strip_prefix(':')?;
        (IpAddr::V6(v6.parse().ok()?), rest)
    } else {
        let (v4, rest) = s.split_once(':')?;
        (IpAddr::V4(v4.parse().ok()?), rest)
    };
    let (tcp, udp) = rest.split_once(':')?;
    Some((ip, tcp.parse().ok()?, udp.parse().ok()?))
}
