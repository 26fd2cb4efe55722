//! Per-run measurement: delivery, throughput, normalized routing
//! overhead, path rejections, blacklist churn, and the data-packet
//! accounting identity. The report is a pure fold over the metric event
//! log, so recomputing from the persisted log reproduces it exactly.

use crate::types::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricsEvent {
    Originated,
    Delivered { delay: f64, bits: u64 },
    ControlTx,
    PathRejection,
    BlacklistTransition { honest_now: bool },
    DroppedAdversary,
    DroppedLoss,
    DroppedNoRoute,
    DiscoveryStarted,
    DiscoverySucceeded,
}

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub log: Vec<MetricsEvent>,
    originated: u64,
    delivered: u64,
    delivered_bits: u64,
    delay_sum: f64,
    control_packets: u64,
    path_rejections: u64,
    false_accusations: u64,
    blacklist_events: u64,
    dropped_adversary: u64,
    dropped_loss: u64,
    dropped_no_route: u64,
    discovery_attempts: u64,
    discovery_successes: u64,
}

/// Final per-run aggregates. `nro` is None when nothing was delivered
/// and is emitted as the sentinel "inf" in CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub originated: u64,
    pub delivered: u64,
    pub pdr: f64,
    pub throughput_bps: f64,
    pub control_packets: u64,
    pub nro: Option<f64>,
    pub path_rejections: u64,
    pub false_accusations: u64,
    pub blacklist_events: u64,
    pub mean_delay: f64,
    pub dropped_adversary: u64,
    pub dropped_loss: u64,
    pub dropped_no_route: u64,
    pub buffered_at_end: u64,
    pub in_flight_at_end: u64,
    pub discovery_attempts: u64,
    pub discovery_successes: u64,
}

impl Metrics {
    pub fn record(&mut self, event: MetricsEvent) {
        self.log.push(event);
        self.apply(event);
    }

    fn apply(&mut self, event: MetricsEvent) {
        match event {
            MetricsEvent::Originated => self.originated += 1,
            MetricsEvent::Delivered { delay, bits } => {
                self.delivered += 1;
                self.delivered_bits += bits;
                self.delay_sum += delay;
            }
            MetricsEvent::ControlTx => self.control_packets += 1,
            MetricsEvent::PathRejection => self.path_rejections += 1,
            MetricsEvent::BlacklistTransition { honest_now } => {
                self.blacklist_events += 1;
                if honest_now {
                    self.false_accusations += 1;
                }
            }
            MetricsEvent::DroppedAdversary => self.dropped_adversary += 1,
            MetricsEvent::DroppedLoss => self.dropped_loss += 1,
            MetricsEvent::DroppedNoRoute => self.dropped_no_route += 1,
            MetricsEvent::DiscoveryStarted => self.discovery_attempts += 1,
            MetricsEvent::DiscoverySucceeded => self.discovery_successes += 1,
        }
    }

    /// Fold an event log into a report; used to check that live counters
    /// are a pure function of the log.
    pub fn replay(
        log: &[MetricsEvent],
        duration: f64,
        buffered: u64,
        in_flight: u64,
    ) -> MetricsReport {
        let mut m = Metrics::default();
        for e in log {
            m.apply(*e);
        }
        m.finalize(duration, buffered, in_flight)
    }

    pub fn finalize(
        &self,
        duration: f64,
        buffered_at_end: u64,
        in_flight_at_end: u64,
    ) -> MetricsReport {
        let pdr = if self.originated == 0 {
            0.0
        } else {
            self.delivered as f64 / self.originated as f64
        };
        let throughput_bps = if self.delivered == 0 {
            0.0
        } else {
            self.delivered_bits as f64 / duration
        };
        let nro = if self.delivered == 0 {
            None
        } else {
            Some(self.control_packets as f64 / self.delivered as f64)
        };
        let mean_delay = if self.delivered == 0 {
            0.0
        } else {
            self.delay_sum / self.delivered as f64
        };
        MetricsReport {
            originated: self.originated,
            delivered: self.delivered,
            pdr,
            throughput_bps,
            control_packets: self.control_packets,
            nro,
            path_rejections: self.path_rejections,
            false_accusations: self.false_accusations,
            blacklist_events: self.blacklist_events,
            mean_delay,
            dropped_adversary: self.dropped_adversary,
            dropped_loss: self.dropped_loss,
            dropped_no_route: self.dropped_no_route,
            buffered_at_end,
            in_flight_at_end,
            discovery_attempts: self.discovery_attempts,
            discovery_successes: self.discovery_successes,
        }
    }
}

impl MetricsReport {
    /// originated = delivered + dropped buckets + unresolved at run end.
    pub fn accounting_identity_holds(&self) -> bool {
        self.originated
            == self.delivered
                + self.dropped_adversary
                + self.dropped_loss
                + self.dropped_no_route
                + self.buffered_at_end
                + self.in_flight_at_end
    }

    /// CSV column order is fixed: see [`MetricsReport::CSV_FIELDS`].
    pub const CSV_FIELDS: &'static [&'static str] = &[
        "originated",
        "delivered",
        "pdr",
        "throughput_bps",
        "control_packets",
        "nro",
        "path_rejections",
        "false_accusations",
        "blacklist_events",
        "mean_delay",
        "dropped_adversary",
        "dropped_loss",
        "dropped_no_route",
        "buffered_at_end",
        "in_flight_at_end",
        "discovery_attempts",
        "discovery_successes",
    ];

    /// Numeric view in CSV field order; nro sentinel becomes +inf.
    pub fn field_values(&self) -> Vec<f64> {
        vec![
            self.originated as f64,
            self.delivered as f64,
            self.pdr,
            self.throughput_bps,
            self.control_packets as f64,
            self.nro.unwrap_or(f64::INFINITY),
            self.path_rejections as f64,
            self.false_accusations as f64,
            self.blacklist_events as f64,
            self.mean_delay,
            self.dropped_adversary as f64,
            self.dropped_loss as f64,
            self.dropped_no_route as f64,
            self.buffered_at_end as f64,
            self.in_flight_at_end as f64,
            self.discovery_attempts as f64,
            self.discovery_successes as f64,
        ]
    }

    pub fn csv_row(&self) -> String {
        self.field_values()
            .iter()
            .map(|v| format_value(*v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Shortest round-trip decimal; infinity prints as the sentinel "inf".
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Timestamp formatting shared by CSV emitters.
pub fn format_time(t: SimTime) -> String {
    format!("{}", t.seconds())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdr_from_counts() {
        let mut m = Metrics::default();
        for _ in 0..100 {
            m.record(MetricsEvent::Originated);
        }
        for _ in 0..80 {
            m.record(MetricsEvent::Delivered {
                delay: 0.01,
                bits: 4096,
            });
        }
        for _ in 0..20 {
            m.record(MetricsEvent::DroppedAdversary);
        }
        let r = m.finalize(200.0, 0, 0);
        assert!((r.pdr - 0.8).abs() < 1e-12);
        assert!((r.throughput_bps - 1638.4).abs() < 1e-9);
        assert!(r.accounting_identity_holds());
    }

    #[test]
    fn zero_delivered_sentinels() {
        let mut m = Metrics::default();
        m.record(MetricsEvent::Originated);
        m.record(MetricsEvent::DroppedNoRoute);
        m.record(MetricsEvent::ControlTx);
        let r = m.finalize(10.0, 0, 0);
        assert_eq!(r.nro, None);
        assert_eq!(r.pdr, 0.0);
        assert_eq!(r.throughput_bps, 0.0);
        assert!(r.csv_row().contains(",inf,"));
    }

    #[test]
    fn zero_control_means_zero_nro() {
        let mut m = Metrics::default();
        m.record(MetricsEvent::Originated);
        m.record(MetricsEvent::Delivered {
            delay: 0.0,
            bits: 8,
        });
        let r = m.finalize(10.0, 0, 0);
        assert_eq!(r.nro, Some(0.0));
    }

    #[test]
    fn false_accusation_counting() {
        let mut m = Metrics::default();
        m.record(MetricsEvent::BlacklistTransition { honest_now: true });
        m.record(MetricsEvent::BlacklistTransition { honest_now: false });
        m.record(MetricsEvent::PathRejection);
        let r = m.finalize(1.0, 0, 0);
        assert_eq!(r.blacklist_events, 2);
        assert_eq!(r.false_accusations, 1);
        assert_eq!(r.path_rejections, 1);
    }

    #[test]
    fn replay_equals_live() {
        let mut m = Metrics::default();
        let events = [
            MetricsEvent::Originated,
            MetricsEvent::Originated,
            MetricsEvent::ControlTx,
            MetricsEvent::Delivered {
                delay: 0.25,
                bits: 1024,
            },
            MetricsEvent::DroppedLoss,
            MetricsEvent::DiscoveryStarted,
            MetricsEvent::DiscoverySucceeded,
        ];
        for e in events {
            m.record(e);
        }
        assert_eq!(Metrics::replay(&m.log, 50.0, 0, 0), m.finalize(50.0, 0, 0));
    }
}
