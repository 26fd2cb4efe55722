//! Deterministic discrete-event engine: virtual clock, (fire_at, seq)
//! ordered queue, seeded randomness split into independent streams,
//! random-waypoint mobility, and a unit-disk radio with optional loss.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::packet::Packet;
use crate::types::{NodeId, SimTime};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("cannot schedule at {requested} before current clock {clock}")]
    SchedulingInPast { requested: SimTime, clock: SimTime },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimerKind {
    WatchdogCheck {
        observer: NodeId,
        subject: NodeId,
        uid: u64,
    },
    RreqRetry {
        node: NodeId,
        dest: NodeId,
    },
    ProbationReview {
        observer: NodeId,
        subject: NodeId,
        started: SimTime,
    },
    Repent {
        node: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    FrameArrival {
        to: NodeId,
        sender: NodeId,
        packet: Packet,
    },
    /// Overheard copy of a unicast frame addressed to someone else;
    /// feeds the watchdog.
    PromiscuousCopy {
        observer: NodeId,
        sender: NodeId,
        packet: Packet,
    },
    MobilityStep {
        node: NodeId,
    },
    AppSend {
        flow: usize,
        n: u32,
    },
    ReportRound {
        node: NodeId,
    },
    ProbationEnd {
        observer: NodeId,
        subject: NodeId,
        until: SimTime,
    },
    Timer(TimerKind),
}

#[derive(Debug, Clone)]
pub struct Event {
    pub fire_at: SimTime,
    pub kind: EventKind,
}

/// Permits cancellation of a scheduled event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventHandle(u64);

#[derive(Debug)]
struct Queued {
    fire_at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so BinaryHeap pops the earliest (fire_at, seq) first.
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RadioModel {
    pub range: f64,
    pub frame_loss_prob: f64,
    pub per_hop_latency: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MobilityParams {
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_time: f64,
    pub step_interval: f64,
}

impl MobilityParams {
    pub fn is_static(&self) -> bool {
        self.speed_max <= 0.0
    }
}

#[derive(Debug, Clone)]
pub struct NodeKinematics {
    pub position: (f64, f64),
    pub waypoint: (f64, f64),
    pub speed: f64,
    pub pause_until: SimTime,
}

/// Result of one radio transmission.
#[derive(Debug, Clone, Copy)]
pub struct TransmitOutcome {
    /// For unicast: whether the addressee will actually receive the frame
    /// (in range and survived the loss trial). Broadcast: count > 0.
    pub delivered: bool,
    pub receivers_reached: u32,
}

pub struct Kernel {
    clock: SimTime,
    queue: BinaryHeap<Queued>,
    next_seq: u64,
    cancelled: BTreeSet<u64>,
    last_fired: Option<(SimTime, u64)>,
    pub radio: RadioModel,
    pub arena: Arena,
    pub mobility: MobilityParams,
    kin: Vec<NodeKinematics>,
    pub rng_loss: ChaCha12Rng,
    pub rng_mobility: ChaCha12Rng,
    pub rng_adversary: ChaCha12Rng,
    pub rng_traffic: ChaCha12Rng,
    // Loss accounting: offered = scheduled + lost, per run.
    pub frames_offered: u64,
    pub frames_scheduled: u64,
    pub frames_lost: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Kernel {
    pub fn new(seed: u64, radio: RadioModel, arena: Arena, mobility: MobilityParams) -> Kernel {
        Kernel {
            clock: SimTime::ZERO,
            queue: BinaryHeap::new(),
            next_seq: 0,
            cancelled: BTreeSet::new(),
            last_fired: None,
            radio,
            arena,
            mobility,
            kin: Vec::new(),
            rng_loss: stream(seed, 1),
            rng_mobility: stream(seed, 2),
            rng_adversary: stream(seed, 3),
            rng_traffic: stream(seed, 4),
            frames_offered: 0,
            frames_scheduled: 0,
            frames_lost: 0,
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn node_count(&self) -> usize {
        self.kin.len()
    }

    /// Place nodes. With explicit positions their count must match the
    /// caller's node count; otherwise positions are drawn uniformly from
    /// the mobility stream in node-id order.
    pub fn place_nodes(&mut self, count: usize, explicit: Option<&[(f64, f64)]>) {
        self.kin.clear();
        for i in 0..count {
            let position = match explicit {
                Some(p) => p[i],
                None => (
                    self.rng_mobility.gen_range(0.0..self.arena.width),
                    self.rng_mobility.gen_range(0.0..self.arena.height),
                ),
            };
            self.kin.push(NodeKinematics {
                position,
                waypoint: position,
                speed: 0.0,
                pause_until: SimTime::ZERO,
            });
        }
        if !self.mobility.is_static() {
            for i in 0..count {
                let (wp, speed) = self.draw_leg();
                self.kin[i].waypoint = wp;
                self.kin[i].speed = speed;
            }
        }
    }

    fn draw_leg(&mut self) -> ((f64, f64), f64) {
        let wp = (
            self.rng_mobility.gen_range(0.0..self.arena.width),
            self.rng_mobility.gen_range(0.0..self.arena.height),
        );
        let speed = if self.mobility.speed_max > self.mobility.speed_min {
            self.rng_mobility
                .gen_range(self.mobility.speed_min..=self.mobility.speed_max)
        } else {
            self.mobility.speed_max
        };
        (wp, speed)
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        self.kin[node.0 as usize].position
    }

    pub fn schedule(&mut self, event: Event) -> Result<EventHandle, KernelError> {
        if event.fire_at < self.clock {
            return Err(KernelError::SchedulingInPast {
                requested: event.fire_at,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued {
            fire_at: event.fire_at,
            seq,
            kind: event.kind,
        });
        Ok(EventHandle(seq))
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pop the next event with fire_at <= end, advancing the clock to it.
    /// Returns None when the queue holds nothing due before `end`.
    pub fn next_before(&mut self, end: SimTime) -> Option<(SimTime, EventKind)> {
        loop {
            let due = match self.queue.peek() {
                Some(q) if q.fire_at <= end => true,
                _ => return None,
            };
            debug_assert!(due);
            let q = self.queue.pop().unwrap();
            if self.cancelled.remove(&q.seq) {
                continue;
            }
            debug_assert!(
                self.last_fired.is_none_or(|prev| prev < (q.fire_at, q.seq)),
                "event ordering violated"
            );
            self.last_fired = Some((q.fire_at, q.seq));
            self.clock = q.fire_at;
            return Some((q.fire_at, q.kind));
        }
    }

    /// Advance the clock to `end` once all due events have been drained.
    pub fn finish(&mut self, end: SimTime) {
        if end > self.clock {
            self.clock = end;
        }
    }

    /// Remaining DATA frames already transmitted but not yet arrived.
    pub fn pending_data_frames(&self) -> u64 {
        self.queue
            .iter()
            .filter(|q| {
                !self.cancelled.contains(&q.seq)
                    && matches!(&q.kind,
                        EventKind::FrameArrival { packet, .. } if !packet.kind.is_control())
            })
            .count() as u64
    }

    fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let pa = self.kin[a.0 as usize].position;
        let pb = self.kin[b.0 as usize].position;
        ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt()
    }

    /// All other nodes within radio range, boundary inclusive, in id order.
    pub fn neighbors_of(&self, node: NodeId) -> Result<Vec<NodeId>, KernelError> {
        if node.0 as usize >= self.kin.len() {
            return Err(KernelError::UnknownNode(node));
        }
        let mut out = Vec::new();
        for i in 0..self.kin.len() {
            let other = NodeId(i as u32);
            if other != node && self.distance(node, other) <= self.radio.range {
                out.push(other);
            }
        }
        Ok(out)
    }

    /// Radio transmission. Unicast (`dest = Some`) delivers a FrameArrival
    /// to the addressee and a PromiscuousCopy to every other in-range node;
    /// broadcast delivers FrameArrival to all neighbors. Every receiver runs
    /// an independent Bernoulli loss trial. Out-of-range unicast is a
    /// silent radio failure.
    pub fn transmit_frame(
        &mut self,
        from: NodeId,
        dest: Option<NodeId>,
        packet: &Packet,
    ) -> Result<TransmitOutcome, KernelError> {
        let neighbors = self.neighbors_of(from)?;
        let arrive_at = self.clock.after(self.radio.per_hop_latency);
        let mut delivered = false;
        let mut reached = 0u32;
        for r in neighbors {
            self.frames_offered += 1;
            let lost = self.radio.frame_loss_prob > 0.0
                && self.rng_loss.gen_bool(self.radio.frame_loss_prob);
            if lost {
                self.frames_lost += 1;
                continue;
            }
            self.frames_scheduled += 1;
            reached += 1;
            let intended = dest.is_none_or(|d| d == r);
            let kind = if intended {
                delivered = true;
                EventKind::FrameArrival {
                    to: r,
                    sender: from,
                    packet: packet.clone(),
                }
            } else {
                EventKind::PromiscuousCopy {
                    observer: r,
                    sender: from,
                    packet: packet.clone(),
                }
            };
            self.schedule(Event {
                fire_at: arrive_at,
                kind,
            })
            .expect("arrival is never in the past");
        }
        Ok(TransmitOutcome {
            delivered,
            receivers_reached: reached,
        })
    }

    /// Advance one node along the random-waypoint model by `step_interval`.
    pub fn mobility_step(&mut self, node: NodeId) {
        if self.mobility.is_static() {
            return;
        }
        let now = self.clock;
        let dt = self.mobility.step_interval;
        let k = &self.kin[node.0 as usize];
        if now < k.pause_until {
            return;
        }
        let (px, py) = k.position;
        let (wx, wy) = k.waypoint;
        let dx = wx - px;
        let dy = wy - py;
        let dist = (dx * dx + dy * dy).sqrt();
        let step = k.speed * dt;
        if dist <= step || dist == 0.0 {
            // Arrived: pause, then pick the next leg.
            let pause_until = now.after(self.mobility.pause_time);
            let (wp, speed) = self.draw_leg();
            let k = &mut self.kin[node.0 as usize];
            k.position = (wx, wy);
            k.pause_until = pause_until;
            k.waypoint = wp;
            k.speed = speed;
        } else {
            let k = &mut self.kin[node.0 as usize];
            k.position = (px + dx / dist * step, py + dy / dist * step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{Packet, PacketKind};

    fn radio(range: f64, loss: f64) -> RadioModel {
        RadioModel {
            range,
            frame_loss_prob: loss,
            per_hop_latency: 0.002,
        }
    }

    fn static_kernel(positions: &[(f64, f64)], range: f64, loss: f64) -> Kernel {
        let mut k = Kernel::new(
            7,
            radio(range, loss),
            Arena {
                width: 1000.0,
                height: 1000.0,
            },
            MobilityParams {
                speed_min: 0.0,
                speed_max: 0.0,
                pause_time: 0.0,
                step_interval: 1.0,
            },
        );
        k.place_nodes(positions.len(), Some(positions));
        k
    }

    fn timer(node: u32) -> EventKind {
        EventKind::Timer(TimerKind::Repent { node: NodeId(node) })
    }

    #[test]
    fn schedule_at_clock_boundary_is_allowed() {
        let mut k = static_kernel(&[(0.0, 0.0)], 100.0, 0.0);
        k.schedule(Event {
            fire_at: SimTime::new(5.0),
            kind: timer(0),
        })
        .unwrap();
        assert!(k.next_before(SimTime::new(10.0)).is_some());
        assert_eq!(k.clock(), SimTime::new(5.0));
        // Equal to clock: accepted.
        k.schedule(Event {
            fire_at: SimTime::new(5.0),
            kind: timer(0),
        })
        .unwrap();
    }

    #[test]
    fn schedule_in_past_rejected() {
        let mut k = static_kernel(&[(0.0, 0.0)], 100.0, 0.0);
        k.schedule(Event {
            fire_at: SimTime::new(5.0),
            kind: timer(0),
        })
        .unwrap();
        k.next_before(SimTime::new(10.0));
        let err = k
            .schedule(Event {
                fire_at: SimTime::new(3.0),
                kind: timer(0),
            })
            .unwrap_err();
        assert!(matches!(err, KernelError::SchedulingInPast { .. }));
    }

    #[test]
    fn equal_time_events_fire_in_schedule_order() {
        let mut k = static_kernel(&[(0.0, 0.0)], 100.0, 0.0);
        k.schedule(Event {
            fire_at: SimTime::new(7.0),
            kind: timer(1),
        })
        .unwrap();
        k.schedule(Event {
            fire_at: SimTime::new(7.0),
            kind: timer(2),
        })
        .unwrap();
        let (_, first) = k.next_before(SimTime::new(10.0)).unwrap();
        let (_, second) = k.next_before(SimTime::new(10.0)).unwrap();
        assert_eq!(first, timer(1));
        assert_eq!(second, timer(2));
    }

    #[test]
    fn run_until_leaves_later_events_pending() {
        let mut k = static_kernel(&[(0.0, 0.0)], 100.0, 0.0);
        k.schedule(Event {
            fire_at: SimTime::new(2.0),
            kind: timer(1),
        })
        .unwrap();
        k.schedule(Event {
            fire_at: SimTime::new(2.0),
            kind: timer(2),
        })
        .unwrap();
        k.schedule(Event {
            fire_at: SimTime::new(9.0),
            kind: timer(3),
        })
        .unwrap();
        let mut fired = Vec::new();
        while let Some((_, kind)) = k.next_before(SimTime::new(5.0)) {
            fired.push(kind);
        }
        k.finish(SimTime::new(5.0));
        assert_eq!(fired, vec![timer(1), timer(2)]);
        assert_eq!(k.clock(), SimTime::new(5.0));
    }

    #[test]
    fn cancelled_events_do_not_fire() {
        let mut k = static_kernel(&[(0.0, 0.0)], 100.0, 0.0);
        let h = k
            .schedule(Event {
                fire_at: SimTime::new(1.0),
                kind: timer(1),
            })
            .unwrap();
        k.cancel(h);
        assert!(k.next_before(SimTime::new(5.0)).is_none());
    }

    #[test]
    fn neighbor_boundary_is_inclusive() {
        let k = static_kernel(&[(0.0, 0.0), (99.9, 0.0), (150.0, 0.0)], 100.0, 0.0);
        assert_eq!(k.neighbors_of(NodeId(0)).unwrap(), vec![NodeId(1)]);
        let k = static_kernel(&[(0.0, 0.0), (100.0, 0.0)], 100.0, 0.0);
        assert_eq!(k.neighbors_of(NodeId(0)).unwrap(), vec![NodeId(1)]);
    }

    #[test]
    fn neighbors_symmetric_irreflexive() {
        let k = static_kernel(
            &[(0.0, 0.0), (50.0, 10.0), (90.0, 90.0), (300.0, 0.0)],
            120.0,
            0.0,
        );
        for a in 0..4u32 {
            let na = k.neighbors_of(NodeId(a)).unwrap();
            assert!(!na.contains(&NodeId(a)));
            for b in &na {
                assert!(k.neighbors_of(*b).unwrap().contains(&NodeId(a)));
            }
        }
    }

    #[test]
    fn unknown_node_error() {
        let k = static_kernel(&[(0.0, 0.0)], 100.0, 0.0);
        assert_eq!(
            k.neighbors_of(NodeId(5)).unwrap_err(),
            KernelError::UnknownNode(NodeId(5))
        );
    }

    #[test]
    fn lossless_unicast_schedules_exactly_one_arrival() {
        let mut k = static_kernel(&[(0.0, 0.0), (50.0, 0.0)], 100.0, 0.0);
        let p = Packet::new(PacketKind::Data, NodeId(0), NodeId(1), 1, SimTime::ZERO);
        let out = k.transmit_frame(NodeId(0), Some(NodeId(1)), &p).unwrap();
        assert!(out.delivered);
        let (at, kind) = k.next_before(SimTime::new(1.0)).unwrap();
        assert_eq!(at, SimTime::new(0.002));
        assert!(matches!(
            kind,
            EventKind::FrameArrival { to: NodeId(1), .. }
        ));
        assert!(k.next_before(SimTime::new(1.0)).is_none());
    }

    #[test]
    fn total_loss_drops_everything() {
        let mut k = static_kernel(&[(0.0, 0.0), (50.0, 0.0)], 100.0, 1.0);
        let p = Packet::new(PacketKind::Data, NodeId(0), NodeId(1), 1, SimTime::ZERO);
        let out = k.transmit_frame(NodeId(0), Some(NodeId(1)), &p).unwrap();
        assert!(!out.delivered);
        assert!(k.next_before(SimTime::new(1.0)).is_none());
        assert_eq!(k.frames_lost, 1);
    }

    #[test]
    fn broadcast_reaches_all_in_range_neighbors() {
        let mut k = static_kernel(
            &[
                (0.0, 0.0),
                (50.0, 0.0),
                (0.0, 50.0),
                (60.0, 60.0),
                (500.0, 0.0),
            ],
            100.0,
            0.0,
        );
        let p = Packet::new(PacketKind::Rreq, NodeId(0), NodeId(4), 1, SimTime::ZERO);
        let out = k.transmit_frame(NodeId(0), None, &p).unwrap();
        assert_eq!(out.receivers_reached, 3);
        let mut arrivals = 0;
        while let Some((_, kind)) = k.next_before(SimTime::new(1.0)) {
            assert!(matches!(kind, EventKind::FrameArrival { .. }));
            arrivals += 1;
        }
        assert_eq!(arrivals, 3);
    }

    #[test]
    fn unicast_overhearing_goes_to_other_neighbors() {
        let mut k = static_kernel(&[(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)], 100.0, 0.0);
        let p = Packet::new(PacketKind::Data, NodeId(0), NodeId(1), 1, SimTime::ZERO);
        k.transmit_frame(NodeId(0), Some(NodeId(1)), &p).unwrap();
        let mut kinds = Vec::new();
        while let Some((_, kind)) = k.next_before(SimTime::new(1.0)) {
            kinds.push(kind);
        }
        assert_eq!(kinds.len(), 2);
        assert!(matches!(
            kinds[0],
            EventKind::FrameArrival { to: NodeId(1), .. }
        ));
        assert!(matches!(
            kinds[1],
            EventKind::PromiscuousCopy {
                observer: NodeId(2),
                ..
            }
        ));
    }

    #[test]
    fn loss_accounting_identity() {
        let mut k = static_kernel(&[(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)], 100.0, 0.4);
        let p = Packet::new(PacketKind::Data, NodeId(0), NodeId(1), 1, SimTime::ZERO);
        for _ in 0..500 {
            k.transmit_frame(NodeId(0), Some(NodeId(1)), &p).unwrap();
        }
        assert_eq!(k.frames_offered, 1000);
        assert_eq!(k.frames_scheduled + k.frames_lost, k.frames_offered);
    }

    #[test]
    fn static_nodes_never_move() {
        let mut k = static_kernel(&[(10.0, 20.0)], 100.0, 0.0);
        for _ in 0..50 {
            k.mobility_step(NodeId(0));
        }
        assert_eq!(k.position(NodeId(0)), (10.0, 20.0));
    }

    #[test]
    fn mobility_advances_toward_waypoint() {
        let mut k = Kernel::new(
            1,
            radio(100.0, 0.0),
            Arena {
                width: 100.0,
                height: 100.0,
            },
            MobilityParams {
                speed_min: 2.0,
                speed_max: 2.0,
                pause_time: 0.0,
                step_interval: 1.0,
            },
        );
        k.place_nodes(1, Some(&[(0.0, 0.0)]));
        // Pin the waypoint for the arithmetic check.
        k.kin[0].waypoint = (10.0, 0.0);
        k.kin[0].speed = 2.0;
        k.mobility_step(NodeId(0));
        let (x, y) = k.position(NodeId(0));
        assert!((x - 2.0).abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn mobility_trace_is_deterministic() {
        let run = || {
            let mut k = Kernel::new(
                42,
                radio(100.0, 0.0),
                Arena {
                    width: 500.0,
                    height: 500.0,
                },
                MobilityParams {
                    speed_min: 1.0,
                    speed_max: 5.0,
                    pause_time: 2.0,
                    step_interval: 1.0,
                },
            );
            k.place_nodes(5, None);
            let mut trace = Vec::new();
            for step in 0..200 {
                k.finish(SimTime::new(step as f64));
                for n in 0..5 {
                    k.mobility_step(NodeId(n));
                    trace.push(k.position(NodeId(n)));
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn positions_stay_inside_arena() {
        let mut k = Kernel::new(
            9,
            radio(100.0, 0.0),
            Arena {
                width: 300.0,
                height: 200.0,
            },
            MobilityParams {
                speed_min: 1.0,
                speed_max: 10.0,
                pause_time: 0.5,
                step_interval: 1.0,
            },
        );
        k.place_nodes(8, None);
        for step in 0..500 {
            k.finish(SimTime::new(step as f64));
            for n in 0..8 {
                k.mobility_step(NodeId(n));
                let (x, y) = k.position(NodeId(n));
                assert!((0.0..=300.0).contains(&x) && (0.0..=200.0).contains(&y));
            }
        }
    }
}
