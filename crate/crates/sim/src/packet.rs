//! In-simulator packet representation. Packets never leave the process;
//! the field layout here is a documented in-memory schema, and the
//! canonical byte encoding used for MAC computation lives in `crypto`.

use crate::crypto::MacTag;
use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PacketKind {
    Data,
    Rreq,
    Rrep,
    Rerr,
    Report,
    Warn,
}

impl PacketKind {
    pub fn is_control(self) -> bool {
        !matches!(self, PacketKind::Data)
    }

    pub fn code(self) -> u8 {
        match self {
            PacketKind::Data => 0,
            PacketKind::Rreq => 1,
            PacketKind::Rrep => 2,
            PacketKind::Rerr => 3,
            PacketKind::Report => 4,
            PacketKind::Warn => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Data => "DATA",
            PacketKind::Rreq => "RREQ",
            PacketKind::Rrep => "RREP",
            PacketKind::Rerr => "RERR",
            PacketKind::Report => "REPORT",
            PacketKind::Warn => "WARN",
        }
    }
}

/// Kind-specific payload carried by control packets.
#[derive(Debug, Clone, PartialEq)]
pub enum PacketContent {
    None,
    /// Reputation report: one (subject, direct rating) entry per observed
    /// neighbor of the reporter.
    Report(Vec<(NodeId, f64)>),
    /// One-hop accusation broadcast.
    Warn {
        accused: NodeId,
        evidence_rating: f64,
    },
    /// Link-break notice. `dests` lists destinations whose routes through
    /// the broken link are now invalid.
    RouteError {
        broken_from: NodeId,
        broken_to: NodeId,
        dests: Vec<NodeId>,
    },
}

/// A data or control packet.
///
/// `prev_hop` and `hop_count` mutate at every hop and are excluded from
/// MAC coverage; `source_route` mutates while an RREQ accumulates its
/// path and is excluded for RREQs only.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub origin: NodeId,
    pub target: NodeId,
    pub prev_hop: NodeId,
    /// AODV destination sequence number (RREP), RREQ id (RREQ/DSR
    /// request id), zero otherwise.
    pub seq_or_id: u64,
    pub hop_count: u32,
    /// DSR only: ordered node list. DATA/RREP carry the full path,
    /// RREQ the accumulated prefix.
    pub source_route: Option<Vec<NodeId>>,
    pub payload_len: u32,
    /// Stand-in for payload content; tampering flips a bit here.
    pub payload_digest: u64,
    pub originated_at: SimTime,
    pub content: PacketContent,
    pub mac_tag: MacTag,
    /// Unique per run; preserved across forwards of the same packet.
    pub uid: u64,
}

impl Packet {
    /// Fresh untagged packet with sane defaults; callers fill in the rest
    /// and attach a tag before transmission.
    pub fn new(kind: PacketKind, origin: NodeId, target: NodeId, uid: u64, now: SimTime) -> Packet {
        Packet {
            kind,
            origin,
            target,
            prev_hop: origin,
            seq_or_id: 0,
            hop_count: 0,
            source_route: None,
            payload_len: 0,
            payload_digest: 0,
            originated_at: now,
            content: PacketContent::None,
            mac_tag: MacTag::default(),
            uid,
        }
    }
}
