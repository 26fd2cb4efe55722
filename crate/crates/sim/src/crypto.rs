//! Third factor: keyed message authentication over a canonical packet
//! encoding. Legitimate nodes share one 32-byte network key; outsider
//! adversaries hold a different key, so everything they originate fails
//! verification at honest receivers.
//!
//! The canonical encoding is documented byte-by-byte in
//! `docs/packet_encoding.md`; the checked-in test vectors in
//! `crates/sim/tests/data/mac_vectors.json` pin it.

use sha2::{Digest, Sha256};

use crate::packet::{Packet, PacketContent, PacketKind};
use crate::types::NodeId;

pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 16;

/// Truncated HMAC-SHA256 tag attached to every packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MacTag(pub [u8; TAG_LEN]);

impl MacTag {
    pub fn to_hex(self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Keys for one run, derived deterministically from the master seed.
#[derive(Debug, Clone)]
pub struct KeyRing {
    pub network_key: [u8; KEY_LEN],
    pub outsider_key: [u8; KEY_LEN],
}

impl KeyRing {
    pub fn derive(master_seed: u64) -> KeyRing {
        KeyRing {
            network_key: derive_key(master_seed, b"network"),
            outsider_key: derive_key(master_seed, b"outsider"),
        }
    }
}

fn derive_key(master_seed: u64, label: &[u8]) -> [u8; KEY_LEN] {
    let mut h = Sha256::new();
    h.update(b"manet-sim key v1:");
    h.update(master_seed.to_be_bytes());
    h.update(b":");
    h.update(label);
    h.finalize().into()
}

/// HMAC-SHA256 (RFC 2104), block size 64.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    const BLOCK: usize = 64;
    let mut key_block = [0u8; BLOCK];
    if key.len() > BLOCK {
        key_block[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        key_block[..key.len()].copy_from_slice(key);
    }
    let mut inner = Sha256::new();
    let ipad: Vec<u8> = key_block.iter().map(|b| b ^ 0x36).collect();
    inner.update(&ipad);
    inner.update(message);
    let inner_hash = inner.finalize();
    let mut outer = Sha256::new();
    let opad: Vec<u8> = key_block.iter().map(|b| b ^ 0x5c).collect();
    outer.update(&opad);
    outer.update(inner_hash);
    outer.finalize().into()
}

fn put_node(buf: &mut Vec<u8>, n: NodeId) {
    buf.extend_from_slice(&n.0.to_be_bytes());
}

/// Canonical byte encoding of every MAC-covered field. Per-hop mutable
/// fields (`hop_count`, `prev_hop`) are never covered; `source_route` is
/// covered except on RREQs, where it accumulates while in flight.
pub fn canonical_encoding(packet: &Packet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64);
    buf.push(packet.kind.code());
    put_node(&mut buf, packet.origin);
    put_node(&mut buf, packet.target);
    buf.extend_from_slice(&packet.seq_or_id.to_be_bytes());
    buf.extend_from_slice(&packet.payload_len.to_be_bytes());
    buf.extend_from_slice(&packet.payload_digest.to_be_bytes());
    buf.extend_from_slice(&packet.originated_at.seconds().to_bits().to_be_bytes());
    buf.extend_from_slice(&packet.uid.to_be_bytes());
    match (&packet.source_route, packet.kind) {
        (_, PacketKind::Rreq) | (None, _) => buf.push(0),
        (Some(route), _) => {
            buf.push(1);
            buf.extend_from_slice(&(route.len() as u16).to_be_bytes());
            for n in route {
                put_node(&mut buf, *n);
            }
        }
    }
    match &packet.content {
        PacketContent::None => buf.push(0),
        PacketContent::Report(entries) => {
            buf.push(1);
            buf.extend_from_slice(&(entries.len() as u16).to_be_bytes());
            for (subject, rating) in entries {
                put_node(&mut buf, *subject);
                buf.extend_from_slice(&rating.to_bits().to_be_bytes());
            }
        }
        PacketContent::Warn {
            accused,
            evidence_rating,
        } => {
            buf.push(2);
            put_node(&mut buf, *accused);
            buf.extend_from_slice(&evidence_rating.to_bits().to_be_bytes());
        }
        PacketContent::RouteError {
            broken_from,
            broken_to,
            dests,
        } => {
            buf.push(3);
            put_node(&mut buf, *broken_from);
            put_node(&mut buf, *broken_to);
            buf.extend_from_slice(&(dests.len() as u16).to_be_bytes());
            for d in dests {
                put_node(&mut buf, *d);
            }
        }
    }
    buf
}

pub fn tag_packet(key: &[u8; KEY_LEN], packet: &Packet) -> MacTag {
    let mac = hmac_sha256(key, &canonical_encoding(packet));
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&mac[..TAG_LEN]);
    MacTag(tag)
}

pub fn verify_packet(key: &[u8; KEY_LEN], packet: &Packet) -> bool {
    // Constant-content comparison: always compares the full tag.
    let expected = tag_packet(key, packet);
    let mut diff = 0u8;
    for (a, b) in expected.0.iter().zip(packet.mac_tag.0.iter()) {
        diff |= a ^ b;
    }
    diff == 0
}
