//! Misbehavior interceptors: blackhole, grayhole/selfish, tamperer, and
//! wrong-key outsider profiles with scheduled onset and repentance.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;

use crate::packet::{Packet, PacketKind};
use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum AdversaryKind {
    /// Forwards control traffic (so it attracts routes) but drops all DATA.
    Blackhole,
    /// Drops DATA with probability drop_prob.
    Grayhole,
    /// Flips one payload bit with probability tamper_prob, leaving the
    /// stale tag in place.
    Tamperer,
    /// Behaves honestly but holds the wrong key: everything it originates
    /// fails verification at legitimate receivers.
    Outsider,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryProfile {
    pub node: NodeId,
    pub kind: AdversaryKind,
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default)]
    pub tamper_prob: f64,
    #[serde(default)]
    pub onset_at: f64,
    #[serde(default)]
    pub repent_at: Option<f64>,
}

impl AdversaryProfile {
    pub fn validate(&self, node_count: u32) -> Result<(), String> {
        if self.node.0 >= node_count {
            return Err(format!("adversary node {} out of range", self.node));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(format!(
                "drop_prob must be in [0,1], got {}",
                self.drop_prob
            ));
        }
        if !(0.0..=1.0).contains(&self.tamper_prob) {
            return Err(format!(
                "tamper_prob must be in [0,1], got {}",
                self.tamper_prob
            ));
        }
        if let Some(r) = self.repent_at {
            if self.onset_at >= r {
                return Err(format!(
                    "onset_at {} must precede repent_at {r}",
                    self.onset_at
                ));
            }
        }
        Ok(())
    }

    /// Whether the malicious window covers `now`.
    pub fn active_at(&self, now: SimTime) -> bool {
        now.seconds() >= self.onset_at && self.repent_at.is_none_or(|r| now.seconds() < r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterceptDecision {
    Forward,
    Drop,
    /// Forward a copy with one payload bit flipped and the original tag.
    Tamper,
}

/// Consulted at the owning node just before honest forwarding of DATA.
pub fn intercept_forward(
    profile: &AdversaryProfile,
    packet: &Packet,
    now: SimTime,
    rng: &mut ChaCha12Rng,
) -> InterceptDecision {
    if packet.kind != PacketKind::Data || !profile.active_at(now) {
        return InterceptDecision::Forward;
    }
    match profile.kind {
        AdversaryKind::Blackhole => InterceptDecision::Drop,
        AdversaryKind::Grayhole => {
            if profile.drop_prob > 0.0 && rng.gen_bool(profile.drop_prob) {
                InterceptDecision::Drop
            } else {
                InterceptDecision::Forward
            }
        }
        AdversaryKind::Tamperer => {
            if profile.tamper_prob > 0.0 && rng.gen_bool(profile.tamper_prob) {
                InterceptDecision::Tamper
            } else {
                InterceptDecision::Forward
            }
        }
        AdversaryKind::Outsider => InterceptDecision::Forward,
    }
}

/// Apply a tamper decision: flip one payload bit chosen from the
/// adversary stream, keep the now-stale tag.
pub fn tamper(packet: &mut Packet, rng: &mut ChaCha12Rng) {
    let bit = rng.gen_range(0..64u32);
    packet.payload_digest ^= 1u64 << bit;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(99)
    }

    fn profile(kind: AdversaryKind) -> AdversaryProfile {
        AdversaryProfile {
            node: NodeId(1),
            kind,
            drop_prob: 0.0,
            tamper_prob: 0.0,
            onset_at: 10.0,
            repent_at: Some(150.0),
        }
    }

    fn data() -> Packet {
        Packet::new(PacketKind::Data, NodeId(0), NodeId(3), 1, SimTime::ZERO)
    }

    #[test]
    fn blackhole_drops_data_in_window() {
        let p = profile(AdversaryKind::Blackhole);
        let mut r = rng();
        assert_eq!(
            intercept_forward(&p, &data(), SimTime::new(10.0), &mut r),
            InterceptDecision::Drop
        );
        assert_eq!(
            intercept_forward(&p, &data(), SimTime::new(149.9), &mut r),
            InterceptDecision::Drop
        );
    }

    #[test]
    fn honest_outside_active_window() {
        let p = profile(AdversaryKind::Blackhole);
        let mut r = rng();
        assert_eq!(
            intercept_forward(&p, &data(), SimTime::new(9.9), &mut r),
            InterceptDecision::Forward
        );
        assert_eq!(
            intercept_forward(&p, &data(), SimTime::new(150.0), &mut r),
            InterceptDecision::Forward
        );
        let forever = AdversaryProfile {
            repent_at: None,
            ..p
        };
        assert_eq!(
            intercept_forward(&forever, &data(), SimTime::new(1e6), &mut r),
            InterceptDecision::Drop
        );
    }

    #[test]
    fn blackhole_forwards_control_packets() {
        let p = profile(AdversaryKind::Blackhole);
        let mut r = rng();
        for kind in [
            PacketKind::Rreq,
            PacketKind::Rrep,
            PacketKind::Rerr,
            PacketKind::Report,
            PacketKind::Warn,
        ] {
            let pkt = Packet::new(kind, NodeId(0), NodeId(3), 1, SimTime::ZERO);
            assert_eq!(
                intercept_forward(&p, &pkt, SimTime::new(50.0), &mut r),
                InterceptDecision::Forward
            );
        }
    }

    #[test]
    fn grayhole_zero_drop_prob_is_honest() {
        let p = AdversaryProfile {
            drop_prob: 0.0,
            ..profile(AdversaryKind::Grayhole)
        };
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(
                intercept_forward(&p, &data(), SimTime::new(50.0), &mut r),
                InterceptDecision::Forward
            );
        }
    }

    #[test]
    fn grayhole_drop_rate_converges() {
        let p = AdversaryProfile {
            drop_prob: 0.8,
            ..profile(AdversaryKind::Grayhole)
        };
        let mut r = rng();
        let n = 10_000;
        let drops = (0..n)
            .filter(|_| {
                intercept_forward(&p, &data(), SimTime::new(50.0), &mut r)
                    == InterceptDecision::Drop
            })
            .count();
        let rate = drops as f64 / n as f64;
        assert!((rate - 0.8).abs() <= 0.02, "observed {rate}");
    }

    #[test]
    fn tamper_flips_exactly_one_bit() {
        let mut r = rng();
        let mut pkt = data();
        pkt.payload_digest = 0xABCDEF;
        let before = pkt.payload_digest;
        tamper(&mut pkt, &mut r);
        assert_eq!((pkt.payload_digest ^ before).count_ones(), 1);
    }

    #[test]
    fn validation_rejects_bad_windows_and_probs() {
        let mut p = profile(AdversaryKind::Grayhole);
        p.drop_prob = 1.5;
        assert!(p.validate(4).is_err());
        let mut p = profile(AdversaryKind::Blackhole);
        p.onset_at = 200.0;
        assert!(p.validate(4).is_err(), "onset after repent");
        let p = AdversaryProfile {
            node: NodeId(9),
            ..profile(AdversaryKind::Blackhole)
        };
        assert!(p.validate(4).is_err());
    }
}
