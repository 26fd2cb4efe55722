//! One simulation run: wires the kernel event loop to the routing state
//! machines, the trust tables, packet authentication, adversary
//! interceptors, and metrics. Strictly sequential; a run is a pure
//! function of (scenario config, security mode, seed).

use std::collections::{BTreeMap, BTreeSet};

use crate::adversary::{
    intercept_forward, tamper, AdversaryKind, AdversaryProfile, InterceptDecision,
};
use crate::crypto::{tag_packet, verify_packet, KeyRing, KEY_LEN};
use crate::kernel::{Arena, Event, EventKind, Kernel, MobilityParams, RadioModel, TimerKind};
use crate::metrics::{Metrics, MetricsEvent, MetricsReport};
use crate::packet::{Packet, PacketContent, PacketKind};
use crate::routing::{
    select_route, AodvState, BufferedData, Discovery, DsrState, RouteEntry, RoutingState,
    SeenCache, SendBuffer, MAX_DISCOVERY_RETRIES, RREQ_RETRY_WAIT,
};
use crate::scenario::{Protocol, ScenarioConfig, SecurityMode};
use crate::trust::{MisbehaviorCause, TrustAction, TrustLogRow, TrustTable};
use crate::types::{NodeId, SimTime};

struct AdversaryRuntime {
    profile: AdversaryProfile,
    disabled: bool,
}

impl AdversaryRuntime {
    fn active_at(&self, now: SimTime) -> bool {
        !self.disabled && self.profile.active_at(now)
    }
}

struct NodeState {
    routing: RoutingState,
    buffer: SendBuffer,
    discovery: BTreeMap<NodeId, Discovery>,
    rreq_seen: SeenCache,
    rreq_counter: u64,
    trust: Option<TrustTable>,
    adversary: Option<AdversaryRuntime>,
    /// Outstanding watchdog expectations: (subject, data uid).
    expectations: BTreeSet<(NodeId, u64)>,
}

impl NodeState {
    fn aodv(&mut self) -> &mut AodvState {
        match &mut self.routing {
            RoutingState::Aodv(s) => s,
            RoutingState::Dsr(_) => panic!("AODV state on a DSR run"),
        }
    }

    fn dsr(&mut self) -> &mut DsrState {
        match &mut self.routing {
            RoutingState::Dsr(s) => s,
            RoutingState::Aodv(_) => panic!("DSR state on an AODV run"),
        }
    }
}

/// Per-data-packet outcome, exposed so experiments can slice delivery by
/// origination time.
#[derive(Debug, Clone)]
pub struct DeliveryRecord {
    pub uid: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub originated_at: SimTime,
    pub delivered_at: Option<SimTime>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub metric_log: Vec<MetricsEvent>,
    pub trust_log: Vec<TrustLogRow>,
    pub deliveries: Vec<DeliveryRecord>,
    pub trace: Option<Vec<String>>,
    pub frames_offered: u64,
    pub frames_scheduled: u64,
    pub frames_lost: u64,
}

pub struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    mode: SecurityMode,
    kernel: Kernel,
    keys: KeyRing,
    nodes: Vec<NodeState>,
    metrics: Metrics,
    deliveries: Vec<DeliveryRecord>,
    delivery_idx: BTreeMap<u64, usize>,
    next_uid: u64,
    trace: Option<Vec<String>>,
}

fn digest_for(uid: u64) -> u64 {
    uid.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31)
}

impl<'a> Simulation<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        mode: SecurityMode,
        seed: u64,
        collect_trace: bool,
    ) -> Self {
        let radio = RadioModel {
            range: cfg.radio.range,
            frame_loss_prob: cfg.radio.frame_loss_prob,
            per_hop_latency: cfg.radio.per_hop_latency,
        };
        let arena = Arena {
            width: cfg.arena.width,
            height: cfg.arena.height,
        };
        let mobility = MobilityParams {
            speed_min: cfg.mobility.speed_min,
            speed_max: cfg.mobility.speed_max,
            pause_time: cfg.mobility.pause_time,
            step_interval: cfg.mobility.step_interval,
        };
        let mut kernel = Kernel::new(seed, radio, arena, mobility);
        kernel.place_nodes(cfg.node_count as usize, cfg.positions.as_deref());

        let mut nodes: Vec<NodeState> = (0..cfg.node_count)
            .map(|i| NodeState {
                routing: match cfg.protocol {
                    Protocol::Aodv => RoutingState::Aodv(AodvState::default()),
                    Protocol::Dsr => RoutingState::Dsr(DsrState::default()),
                },
                buffer: SendBuffer::default(),
                discovery: BTreeMap::new(),
                rreq_seen: SeenCache::default(),
                rreq_counter: 0,
                trust: (mode == SecurityMode::TripleFactor)
                    .then(|| TrustTable::new(NodeId(i), cfg.trust)),
                adversary: None,
                expectations: BTreeSet::new(),
            })
            .collect();
        for profile in &cfg.adversaries {
            nodes[profile.node.0 as usize].adversary = Some(AdversaryRuntime {
                profile: profile.clone(),
                disabled: false,
            });
        }

        Simulation {
            cfg,
            mode,
            kernel,
            keys: KeyRing::derive(seed),
            nodes,
            metrics: Metrics::default(),
            deliveries: Vec::new(),
            delivery_idx: BTreeMap::new(),
            next_uid: 0,
            trace: collect_trace.then(Vec::new),
        }
    }

    fn tf(&self) -> bool {
        self.mode == SecurityMode::TripleFactor
    }

    fn now(&self) -> SimTime {
        self.kernel.clock()
    }

    fn fresh_uid(&mut self) -> u64 {
        let uid = self.next_uid;
        self.next_uid += 1;
        uid
    }

    fn node_key(&self, node: NodeId) -> &[u8; KEY_LEN] {
        let is_outsider = self.nodes[node.0 as usize]
            .adversary
            .as_ref()
            .is_some_and(|a| a.profile.kind == AdversaryKind::Outsider);
        if is_outsider {
            &self.keys.outsider_key
        } else {
            &self.keys.network_key
        }
    }

    fn trace_line(&mut self, line: String) {
        if let Some(t) = &mut self.trace {
            t.push(line);
        }
    }

    /// Blacklist view of one observer; empty in baseline mode.
    fn blacklist_of(&self, observer: NodeId) -> BTreeSet<NodeId> {
        match &self.nodes[observer.0 as usize].trust {
            Some(t) => (0..self.cfg.node_count)
                .map(NodeId)
                .filter(|n| !t.is_admissible(*n))
                .collect(),
            None => BTreeSet::new(),
        }
    }

    /// Routing admissibility veto with lazy neutral-record creation.
    fn admissible(&mut self, observer: NodeId, subject: NodeId) -> bool {
        let now = self.now();
        match &mut self.nodes[observer.0 as usize].trust {
            Some(t) => t.admissible(subject, now),
            None => true,
        }
    }

    fn node_is_honest_now(&self, node: NodeId) -> bool {
        self.nodes[node.0 as usize]
            .adversary
            .as_ref()
            .is_none_or(|a| !a.active_at(self.now()))
    }

    fn apply_trust_actions(&mut self, observer: NodeId, actions: Vec<TrustAction>) {
        let now = self.now();
        for action in actions {
            match action {
                TrustAction::Warn {
                    accused,
                    evidence_rating,
                } => {
                    let uid = self.fresh_uid();
                    let mut warn = Packet::new(PacketKind::Warn, observer, observer, uid, now);
                    warn.content = PacketContent::Warn {
                        accused,
                        evidence_rating,
                    };
                    warn.mac_tag = tag_packet(self.node_key(observer), &warn);
                    self.transmit(observer, None, &warn);
                }
                TrustAction::Blacklist {
                    subject,
                    probation_end,
                } => {
                    let honest_now = self.node_is_honest_now(subject);
                    self.metrics
                        .record(MetricsEvent::BlacklistTransition { honest_now });
                    self.trace_line(format!("{now} blacklist {observer} -> {subject}"));
                    if let Some(until) = probation_end {
                        self.kernel
                            .schedule(Event {
                                fire_at: until,
                                kind: EventKind::ProbationEnd {
                                    observer,
                                    subject,
                                    until,
                                },
                            })
                            .expect("probation end in the future");
                    }
                }
                TrustAction::ProbationStart { subject, review_at } => {
                    self.kernel
                        .schedule(Event {
                            fire_at: review_at,
                            kind: EventKind::Timer(TimerKind::ProbationReview {
                                observer,
                                subject,
                                started: now,
                            }),
                        })
                        .expect("review in the future");
                }
            }
        }
    }

    fn transmit(&mut self, from: NodeId, dest: Option<NodeId>, packet: &Packet) -> bool {
        if packet.kind.is_control() {
            self.metrics.record(MetricsEvent::ControlTx);
        }
        let outcome = self
            .kernel
            .transmit_frame(from, dest, packet)
            .expect("known node");
        outcome.delivered
    }

    // ---- setup -----------------------------------------------------------

    fn setup(&mut self) {
        let mobile = !self.kernel.mobility.is_static();
        let step = self.kernel.mobility.step_interval;
        for i in 0..self.cfg.node_count {
            if mobile {
                self.kernel
                    .schedule(Event {
                        fire_at: SimTime::new(step),
                        kind: EventKind::MobilityStep { node: NodeId(i) },
                    })
                    .unwrap();
            }
            if self.tf() {
                self.kernel
                    .schedule(Event {
                        fire_at: SimTime::new(self.cfg.trust.report_interval),
                        kind: EventKind::ReportRound { node: NodeId(i) },
                    })
                    .unwrap();
            }
        }
        for (i, flow) in self.cfg.traffic.iter().enumerate() {
            self.kernel
                .schedule(Event {
                    fire_at: SimTime::new(flow.start_at),
                    kind: EventKind::AppSend { flow: i, n: 0 },
                })
                .unwrap();
        }
        let repents: Vec<(NodeId, f64)> = self
            .cfg
            .adversaries
            .iter()
            .filter_map(|a| a.repent_at.map(|r| (a.node, r)))
            .collect();
        for (node, at) in repents {
            self.kernel
                .schedule(Event {
                    fire_at: SimTime::new(at),
                    kind: EventKind::Timer(TimerKind::Repent { node }),
                })
                .unwrap();
        }
    }

    // ---- main loop -------------------------------------------------------

    pub fn run(mut self) -> RunOutput {
        self.setup();
        let end = SimTime::new(self.cfg.duration);
        while let Some((at, kind)) = self.kernel.next_before(end) {
            self.dispatch(at, kind);
        }
        self.kernel.finish(end);

        let buffered_at_end: u64 = self.nodes.iter().map(|n| n.buffer.len() as u64).sum();
        let in_flight_at_end = self.kernel.pending_data_frames();
        let report = self
            .metrics
            .finalize(self.cfg.duration, buffered_at_end, in_flight_at_end);
        let mut trust_log: Vec<TrustLogRow> = Vec::new();
        for node in &mut self.nodes {
            if let Some(t) = &mut node.trust {
                trust_log.append(&mut t.log);
            }
        }
        trust_log.sort_by_key(|a| a.time);
        RunOutput {
            report,
            metric_log: self.metrics.log.clone(),
            trust_log,
            deliveries: self.deliveries,
            trace: self.trace,
            frames_offered: self.kernel.frames_offered,
            frames_scheduled: self.kernel.frames_scheduled,
            frames_lost: self.kernel.frames_lost,
        }
    }

    fn dispatch(&mut self, at: SimTime, kind: EventKind) {
        match kind {
            EventKind::FrameArrival { to, sender, packet } => {
                self.trace_line(format!(
                    "{at} rx {} at {to} from {sender} uid={} origin={}",
                    packet.kind.name(),
                    packet.uid,
                    packet.origin
                ));
                self.on_frame(to, sender, packet);
            }
            EventKind::PromiscuousCopy {
                observer,
                sender,
                packet,
            } => {
                self.on_overhear(observer, sender, packet);
            }
            EventKind::MobilityStep { node } => {
                self.kernel.mobility_step(node);
                let next = at.after(self.kernel.mobility.step_interval);
                if next.seconds() <= self.cfg.duration {
                    self.kernel
                        .schedule(Event {
                            fire_at: next,
                            kind: EventKind::MobilityStep { node },
                        })
                        .unwrap();
                }
            }
            EventKind::AppSend { flow, n } => self.on_app_send(at, flow, n),
            EventKind::ReportRound { node } => self.on_report_round(at, node),
            EventKind::ProbationEnd {
                observer,
                subject,
                until,
            } => {
                let actions = match &mut self.nodes[observer.0 as usize].trust {
                    Some(t) => t.reintegrate(subject, until, at),
                    None => Vec::new(),
                };
                self.apply_trust_actions(observer, actions);
            }
            EventKind::Timer(timer) => self.on_timer(at, timer),
        }
    }

    fn on_timer(&mut self, at: SimTime, timer: TimerKind) {
        match timer {
            TimerKind::WatchdogCheck {
                observer,
                subject,
                uid,
            } => {
                if self.nodes[observer.0 as usize]
                    .expectations
                    .remove(&(subject, uid))
                {
                    self.trace_line(format!(
                        "{at} watchdog-timeout {observer} accuses {subject} uid={uid}"
                    ));
                    let actions = match &mut self.nodes[observer.0 as usize].trust {
                        Some(t) => t.observe_misbehavior(subject, MisbehaviorCause::NoForward, at),
                        None => Vec::new(),
                    };
                    self.apply_trust_actions(observer, actions);
                }
            }
            TimerKind::RreqRetry { node, dest } => self.on_rreq_retry(node, dest),
            TimerKind::ProbationReview {
                observer,
                subject,
                started,
            } => {
                let actions = match &mut self.nodes[observer.0 as usize].trust {
                    Some(t) => t.probation_review(subject, started, at),
                    None => Vec::new(),
                };
                self.apply_trust_actions(observer, actions);
            }
            TimerKind::Repent { node } => {
                if let Some(a) = &mut self.nodes[node.0 as usize].adversary {
                    a.disabled = true;
                }
                self.trace_line(format!("{at} repent {node}"));
            }
        }
    }

    // ---- traffic ---------------------------------------------------------

    fn on_app_send(&mut self, at: SimTime, flow_idx: usize, n: u32) {
        let flow = self.cfg.traffic[flow_idx].clone();
        let uid = self.fresh_uid();
        self.metrics.record(MetricsEvent::Originated);
        self.delivery_idx.insert(uid, self.deliveries.len());
        self.deliveries.push(DeliveryRecord {
            uid,
            src: flow.src,
            dst: flow.dst,
            originated_at: at,
            delivered_at: None,
        });
        self.originate_data(flow.src, flow.dst, flow.payload_bytes, uid, at);
        if n + 1 < flow.count {
            let next = at.after(flow.interval);
            if next.seconds() <= self.cfg.duration {
                self.kernel
                    .schedule(Event {
                        fire_at: next,
                        kind: EventKind::AppSend {
                            flow: flow_idx,
                            n: n + 1,
                        },
                    })
                    .unwrap();
            }
        }
    }

    fn originate_data(
        &mut self,
        src: NodeId,
        dst: NodeId,
        payload_bytes: u32,
        uid: u64,
        at: SimTime,
    ) {
        match self.resolve_route(src, dst) {
            Some(route) => {
                let packet = self.build_data(src, dst, payload_bytes, uid, at, route.full_path);
                self.forward_data(src, packet, route.next_hop);
            }
            None => {
                let evicted = self.nodes[src.0 as usize].buffer.push(BufferedData {
                    dest: dst,
                    payload_len: payload_bytes,
                    payload_digest: digest_for(uid),
                    originated_at: at,
                    uid,
                });
                if evicted.is_some() {
                    self.metrics.record(MetricsEvent::DroppedNoRoute);
                }
                self.ensure_discovery(src, dst);
            }
        }
    }

    fn build_data(
        &self,
        src: NodeId,
        dst: NodeId,
        payload_bytes: u32,
        uid: u64,
        originated_at: SimTime,
        path: Option<Vec<NodeId>>,
    ) -> Packet {
        let mut p = Packet::new(PacketKind::Data, src, dst, uid, originated_at);
        p.payload_len = payload_bytes;
        p.payload_digest = digest_for(uid);
        p.source_route = path;
        p.mac_tag = tag_packet(self.node_key(src), &p);
        p
    }

    // ---- route resolution ------------------------------------------------

    /// AODV: next-hop chain reconstructed from tables at send time, so a
    /// sender can veto any hop it currently blacklists.
    fn aodv_chain(&self, from: NodeId, dest: NodeId) -> Vec<NodeId> {
        let now = self.now();
        let mut chain = Vec::new();
        let mut cur = from;
        while chain.len() < self.cfg.node_count as usize {
            let entry = match &self.nodes[cur.0 as usize].routing {
                RoutingState::Aodv(s) => s.lookup(dest, now),
                RoutingState::Dsr(_) => None,
            };
            let Some(e) = entry else { break };
            if chain.contains(&e.next_hop) {
                break;
            }
            chain.push(e.next_hop);
            if e.next_hop == dest {
                break;
            }
            cur = e.next_hop;
        }
        chain
    }

    fn resolve_route(&mut self, src: NodeId, dst: NodeId) -> Option<ResolvedRoute> {
        let now = self.now();
        match self.cfg.protocol {
            Protocol::Aodv => {
                let entry = self.nodes[src.0 as usize]
                    .aodv()
                    .lookup(dst, now)
                    .cloned()?;
                if self.tf() {
                    let chain = self.aodv_chain(src, dst);
                    let vetoed: Vec<NodeId> = chain
                        .iter()
                        .copied()
                        .filter(|h| !self.admissible(src, *h))
                        .collect();
                    if !vetoed.is_empty() {
                        for _ in &vetoed {
                            self.metrics.record(MetricsEvent::PathRejection);
                        }
                        self.nodes[src.0 as usize].aodv().table.remove(&dst);
                        return None;
                    }
                }
                self.nodes[src.0 as usize].aodv().refresh(dst, now);
                Some(ResolvedRoute {
                    next_hop: entry.next_hop,
                    full_path: None,
                })
            }
            Protocol::Dsr => {
                let blacklist = self.blacklist_of(src);
                let mut rejections = 0u64;
                let selected = {
                    let cache = match &self.nodes[src.0 as usize].routing {
                        RoutingState::Dsr(s) => s,
                        RoutingState::Aodv(_) => unreachable!(),
                    };
                    let candidates = cache.candidates(dst);
                    select_route(&candidates, &&blacklist, &mut rejections)
                        .ok()
                        .map(|e| e.path.clone())
                };
                for _ in 0..rejections {
                    self.metrics.record(MetricsEvent::PathRejection);
                }
                let path = selected?;
                self.nodes[src.0 as usize].dsr().touch(&path);
                Some(ResolvedRoute {
                    next_hop: path[1],
                    full_path: Some(path),
                })
            }
        }
    }

    fn forward_data(&mut self, from: NodeId, mut packet: Packet, next_hop: NodeId) {
        packet.prev_hop = from;
        packet.hop_count += 1;
        let now = self.now();
        self.trace_line(format!(
            "{now} tx DATA {from} -> {next_hop} uid={}",
            packet.uid
        ));
        let delivered = self.transmit(from, Some(next_hop), &packet);
        if !delivered {
            self.metrics.record(MetricsEvent::DroppedLoss);
            // The link layer saw the failure: tear down routes through
            // the unreachable neighbor so traffic stops bleeding into it.
            self.handle_link_failure(from, next_hop, &packet);
            return;
        }
        if self.tf() && next_hop != packet.target {
            self.nodes[from.0 as usize]
                .expectations
                .insert((next_hop, packet.uid));
            let timeout = now.after(self.cfg.trust.watchdog_timeout);
            self.kernel
                .schedule(Event {
                    fire_at: timeout,
                    kind: EventKind::Timer(TimerKind::WatchdogCheck {
                        observer: from,
                        subject: next_hop,
                        uid: packet.uid,
                    }),
                })
                .unwrap();
        }
    }

    // ---- discovery -------------------------------------------------------

    fn ensure_discovery(&mut self, node: NodeId, dest: NodeId) {
        if self.nodes[node.0 as usize].discovery.contains_key(&dest) {
            return;
        }
        self.metrics.record(MetricsEvent::DiscoveryStarted);
        self.start_discovery(node, dest, 0);
    }

    fn start_discovery(&mut self, node: NodeId, dest: NodeId, attempt: u32) {
        let now = self.now();
        let state = &mut self.nodes[node.0 as usize];
        let rreq_id = state.rreq_counter;
        state.rreq_counter += 1;
        state.discovery.insert(dest, Discovery { rreq_id, attempt });
        let uid = self.fresh_uid();
        let mut rreq = Packet::new(PacketKind::Rreq, node, dest, uid, now);
        rreq.seq_or_id = rreq_id;
        if self.cfg.protocol == Protocol::Dsr {
            rreq.source_route = Some(vec![node]);
        }
        rreq.mac_tag = tag_packet(self.node_key(node), &rreq);
        self.trace_line(format!(
            "{now} rreq {node} -> {dest} id={rreq_id} attempt={attempt}"
        ));
        self.transmit(node, None, &rreq);
        self.kernel
            .schedule(Event {
                fire_at: now.after(RREQ_RETRY_WAIT),
                kind: EventKind::Timer(TimerKind::RreqRetry { node, dest }),
            })
            .unwrap();
    }

    fn on_rreq_retry(&mut self, node: NodeId, dest: NodeId) {
        match self.nodes[node.0 as usize].discovery.get(&dest).cloned() {
            Some(disc) => {
                if disc.attempt < MAX_DISCOVERY_RETRIES {
                    self.start_discovery(node, dest, disc.attempt + 1);
                } else {
                    self.nodes[node.0 as usize].discovery.remove(&dest);
                    let dropped = self.nodes[node.0 as usize].buffer.drain_dest(dest);
                    for _ in &dropped {
                        self.metrics.record(MetricsEvent::DroppedNoRoute);
                    }
                    let now = self.now();
                    self.trace_line(format!(
                        "{now} discovery-failed {node} -> {dest}, dropped {}",
                        dropped.len()
                    ));
                }
            }
            None => {
                // Deferred rediscovery after a RERR purged the route.
                if self.nodes[node.0 as usize].buffer.has_dest(dest) {
                    self.ensure_discovery(node, dest);
                }
            }
        }
    }

    // ---- frame handling --------------------------------------------------

    fn on_frame(&mut self, node: NodeId, sender: NodeId, packet: Packet) {
        let skip_verify = self.nodes[node.0 as usize]
            .adversary
            .as_ref()
            .is_some_and(|a| a.profile.kind == AdversaryKind::Outsider);
        if self.tf() && !skip_verify && !verify_packet(&self.keys.network_key, &packet) {
            let now = self.now();
            self.trace_line(format!(
                "{now} mac-failure at {node}: {} uid={} from {}",
                packet.kind.name(),
                packet.uid,
                packet.prev_hop
            ));
            if !packet.kind.is_control() {
                self.metrics.record(MetricsEvent::DroppedAdversary);
            }
            let accused = packet.prev_hop;
            let now = self.now();
            let actions = match &mut self.nodes[node.0 as usize].trust {
                Some(t) => t.observe_misbehavior(accused, MisbehaviorCause::MacFailure, now),
                None => Vec::new(),
            };
            self.apply_trust_actions(node, actions);
            return;
        }
        if packet.kind == PacketKind::Rerr {
            self.cancel_expectations_for(node, packet.origin);
        }
        match packet.kind {
            PacketKind::Data => self.handle_data(node, packet),
            PacketKind::Rreq => self.handle_rreq(node, sender, packet),
            PacketKind::Rrep => self.handle_rrep(node, sender, packet),
            PacketKind::Rerr => self.handle_rerr(node, sender, packet),
            PacketKind::Report => self.handle_report(node, packet),
            PacketKind::Warn => self.handle_warn(node, packet),
        }
    }

    fn on_overhear(&mut self, observer: NodeId, sender: NodeId, packet: Packet) {
        if !self.tf() {
            return;
        }
        match packet.kind {
            PacketKind::Data => {
                if self.nodes[observer.0 as usize]
                    .expectations
                    .remove(&(sender, packet.uid))
                {
                    let now = self.now();
                    let actions = match &mut self.nodes[observer.0 as usize].trust {
                        Some(t) => t.observe_forward(sender, now),
                        None => Vec::new(),
                    };
                    self.apply_trust_actions(observer, actions);
                }
            }
            PacketKind::Rerr if packet.origin == sender => {
                // A neighbor visibly reporting a broken route is not
                // silently dropping; excuse its outstanding expectations.
                self.cancel_expectations_for(observer, sender);
            }
            _ => {}
        }
    }

    fn cancel_expectations_for(&mut self, observer: NodeId, subject: NodeId) {
        self.nodes[observer.0 as usize]
            .expectations
            .retain(|(s, _)| *s != subject);
    }

    fn handle_data(&mut self, node: NodeId, mut packet: Packet) {
        let now = self.now();
        if node == packet.target {
            let delay = now.seconds() - packet.originated_at.seconds();
            self.metrics.record(MetricsEvent::Delivered {
                delay,
                bits: packet.payload_len as u64 * 8,
            });
            if let Some(idx) = self.delivery_idx.get(&packet.uid) {
                self.deliveries[*idx].delivered_at = Some(now);
            }
            self.trace_line(format!("{now} delivered uid={} at {node}", packet.uid));
            return;
        }
        // Adversary interceptor sits between reception and forwarding.
        if let Some(adv) = &self.nodes[node.0 as usize].adversary {
            let profile = adv.profile.clone();
            if adv.active_at(now) {
                match intercept_forward(&profile, &packet, now, &mut self.kernel.rng_adversary) {
                    InterceptDecision::Forward => {}
                    InterceptDecision::Drop => {
                        self.metrics.record(MetricsEvent::DroppedAdversary);
                        self.trace_line(format!(
                            "{now} adversary-drop uid={} at {node}",
                            packet.uid
                        ));
                        return;
                    }
                    InterceptDecision::Tamper => {
                        tamper(&mut packet, &mut self.kernel.rng_adversary);
                        self.trace_line(format!(
                            "{now} adversary-tamper uid={} at {node}",
                            packet.uid
                        ));
                    }
                }
            }
        }
        match self.cfg.protocol {
            Protocol::Dsr => {
                let route = packet.source_route.clone().unwrap_or_default();
                let pos = route.iter().position(|n| *n == node);
                let Some(pos) = pos.filter(|p| p + 1 < route.len()) else {
                    self.metrics.record(MetricsEvent::DroppedNoRoute);
                    return;
                };
                let next = route[pos + 1];
                if self.tf() && !self.admissible(node, next) {
                    self.metrics.record(MetricsEvent::PathRejection);
                    self.metrics.record(MetricsEvent::DroppedNoRoute);
                    self.originate_rerr_dsr(node, &route, pos, next, packet.target);
                    return;
                }
                self.forward_data(node, packet, next);
            }
            Protocol::Aodv => {
                let entry = self.nodes[node.0 as usize]
                    .aodv()
                    .lookup(packet.target, now)
                    .cloned();
                match entry {
                    None => {
                        self.metrics.record(MetricsEvent::DroppedNoRoute);
                        self.originate_rerr_aodv(node, packet.target, packet.target);
                    }
                    Some(e) if self.tf() && !self.admissible(node, e.next_hop) => {
                        self.metrics.record(MetricsEvent::PathRejection);
                        self.metrics.record(MetricsEvent::DroppedNoRoute);
                        self.nodes[node.0 as usize]
                            .aodv()
                            .table
                            .remove(&packet.target);
                        self.originate_rerr_aodv(node, e.next_hop, packet.target);
                    }
                    Some(e) => {
                        self.nodes[node.0 as usize]
                            .aodv()
                            .refresh(packet.target, now);
                        self.forward_data(node, packet, e.next_hop);
                    }
                }
            }
        }
    }

    fn handle_rreq(&mut self, node: NodeId, sender: NodeId, packet: Packet) {
        let now = self.now();
        if packet.origin == node {
            return;
        }
        if self.tf() && !self.admissible(node, sender) {
            self.metrics.record(MetricsEvent::PathRejection);
            return;
        }
        let origin = packet.origin;
        let rreq_id = packet.seq_or_id;
        if node == packet.target {
            // The destination answers every loop-free copy so the origin
            // learns alternate paths; intermediates never reply from cache.
            let uid = self.fresh_uid();
            let mut rrep = Packet::new(PacketKind::Rrep, node, origin, uid, now);
            match self.cfg.protocol {
                Protocol::Aodv => {
                    let aodv = self.nodes[node.0 as usize].aodv();
                    // Every copy of one discovery gets the same dest_seq.
                    let dest_seq = match aodv.replied.get(&(origin, rreq_id)).copied() {
                        Some(s) => s,
                        None => {
                            aodv.own_seq += 1;
                            let s = aodv.own_seq;
                            aodv.replied.insert((origin, rreq_id), s);
                            s
                        }
                    };
                    rrep.seq_or_id = dest_seq;
                }
                Protocol::Dsr => {
                    let mut full = packet.source_route.clone().unwrap_or_default();
                    if full.contains(&node) {
                        return; // looped accumulation: protocol violation
                    }
                    full.push(node);
                    rrep.source_route = Some(full);
                }
            }
            rrep.prev_hop = node;
            rrep.mac_tag = tag_packet(self.node_key(node), &rrep);
            self.trace_line(format!("{now} rrep {node} -> {origin} via {sender}"));
            self.transmit(node, Some(sender), &rrep);
            return;
        }
        if self.nodes[node.0 as usize]
            .rreq_seen
            .check_and_insert((origin, rreq_id))
        {
            return;
        }
        let mut packet = packet;
        match self.cfg.protocol {
            Protocol::Aodv => {
                let expires = now.after(crate::routing::ACTIVE_ROUTE_LIFETIME);
                self.nodes[node.0 as usize]
                    .aodv()
                    .reverse
                    .insert(origin, (sender, expires));
            }
            Protocol::Dsr => {
                let route = packet.source_route.get_or_insert_with(Vec::new);
                if route.contains(&node) {
                    return;
                }
                route.push(node);
            }
        }
        packet.hop_count += 1;
        packet.prev_hop = node;
        self.transmit(node, None, &packet);
    }

    fn handle_rrep(&mut self, node: NodeId, sender: NodeId, mut packet: Packet) {
        let now = self.now();
        if self.tf() && !self.admissible(node, sender) {
            self.metrics.record(MetricsEvent::PathRejection);
            return;
        }
        match self.cfg.protocol {
            Protocol::Aodv => {
                let dest = packet.origin;
                let cand = RouteEntry {
                    next_hop: sender,
                    hop_count: packet.hop_count + 1,
                    dest_seq: packet.seq_or_id,
                    expires_at: now.after(crate::routing::ACTIVE_ROUTE_LIFETIME),
                };
                if node == packet.target {
                    self.nodes[node.0 as usize]
                        .aodv()
                        .install_if_fresher(dest, cand);
                    if self.tf() {
                        let chain = self.aodv_chain(node, dest);
                        let vetoed = chain
                            .iter()
                            .copied()
                            .filter(|h| !self.admissible(node, *h))
                            .count();
                        if vetoed > 0 {
                            for _ in 0..vetoed {
                                self.metrics.record(MetricsEvent::PathRejection);
                            }
                            self.nodes[node.0 as usize].aodv().table.remove(&dest);
                            return;
                        }
                    }
                    self.complete_discovery(node, dest);
                } else {
                    self.nodes[node.0 as usize]
                        .aodv()
                        .install_if_fresher(dest, cand);
                    let rev = self.nodes[node.0 as usize]
                        .aodv()
                        .reverse_toward(packet.target, now);
                    let Some(rev) = rev else { return }; // broken reverse path
                    if self.tf() && !self.admissible(node, rev) {
                        self.metrics.record(MetricsEvent::PathRejection);
                        return;
                    }
                    packet.hop_count += 1;
                    packet.prev_hop = node;
                    self.transmit(node, Some(rev), &packet);
                }
            }
            Protocol::Dsr => {
                let path = packet.source_route.clone().unwrap_or_default();
                if path.len() < 2 {
                    return;
                }
                if node == packet.target {
                    let dest = *path.last().unwrap();
                    if self.tf() {
                        let vetoed = path[1..]
                            .iter()
                            .filter(|h| !self.admissible(node, **h))
                            .count();
                        if vetoed > 0 {
                            for _ in 0..vetoed {
                                self.metrics.record(MetricsEvent::PathRejection);
                            }
                            return;
                        }
                    }
                    self.nodes[node.0 as usize].dsr().insert(path, now);
                    self.complete_discovery(node, dest);
                } else {
                    let Some(pos) = path.iter().position(|n| *n == node) else {
                        return;
                    };
                    if pos == 0 {
                        return;
                    }
                    let next = path[pos - 1];
                    packet.hop_count += 1;
                    packet.prev_hop = node;
                    self.transmit(node, Some(next), &packet);
                }
            }
        }
    }

    fn complete_discovery(&mut self, node: NodeId, dest: NodeId) {
        let now = self.now();
        if self.nodes[node.0 as usize]
            .discovery
            .remove(&dest)
            .is_some()
        {
            self.metrics.record(MetricsEvent::DiscoverySucceeded);
            self.trace_line(format!("{now} discovery-success {node} -> {dest}"));
        }
        let buffered = self.nodes[node.0 as usize].buffer.drain_dest(dest);
        for b in buffered {
            match self.resolve_route(node, dest) {
                Some(route) => {
                    let packet = self.build_data(
                        node,
                        dest,
                        b.payload_len,
                        b.uid,
                        b.originated_at,
                        route.full_path,
                    );
                    self.forward_data(node, packet, route.next_hop);
                }
                None => {
                    // Route vanished between install and flush; re-buffer
                    // and let the retry timer or next send rediscover.
                    self.nodes[node.0 as usize].buffer.push(BufferedData {
                        dest,
                        payload_len: b.payload_len,
                        payload_digest: b.payload_digest,
                        originated_at: b.originated_at,
                        uid: b.uid,
                    });
                    self.ensure_discovery(node, dest);
                    break;
                }
            }
        }
    }

    fn handle_link_failure(&mut self, node: NodeId, next_hop: NodeId, packet: &Packet) {
        match self.cfg.protocol {
            Protocol::Aodv => {
                let purged = self.nodes[node.0 as usize].aodv().purge_all_via(next_hop);
                if purged.is_empty() {
                    return;
                }
                let now = self.now();
                let uid = self.fresh_uid();
                let mut rerr = Packet::new(PacketKind::Rerr, node, node, uid, now);
                rerr.content = PacketContent::RouteError {
                    broken_from: node,
                    broken_to: next_hop,
                    dests: purged.clone(),
                };
                rerr.mac_tag = tag_packet(self.node_key(node), &rerr);
                self.trace_line(format!("{now} link-failure {node} -> {next_hop}"));
                self.transmit(node, None, &rerr);
                self.schedule_rediscovery_for_buffered(node, &purged);
            }
            Protocol::Dsr => {
                let route = packet.source_route.clone().unwrap_or_default();
                match route.iter().position(|n| *n == node) {
                    Some(pos) if pos > 0 => {
                        self.originate_rerr_dsr(node, &route, pos, next_hop, packet.target);
                    }
                    _ => {
                        self.nodes[node.0 as usize].dsr().purge_link(node, next_hop);
                    }
                }
            }
        }
    }

    fn originate_rerr_aodv(&mut self, node: NodeId, broken_to: NodeId, dest: NodeId) {
        let now = self.now();
        let uid = self.fresh_uid();
        let mut rerr = Packet::new(PacketKind::Rerr, node, node, uid, now);
        rerr.content = PacketContent::RouteError {
            broken_from: node,
            broken_to,
            dests: vec![dest],
        };
        rerr.mac_tag = tag_packet(self.node_key(node), &rerr);
        self.trace_line(format!("{now} rerr {node} link->{broken_to} dest {dest}"));
        self.transmit(node, None, &rerr);
    }

    fn originate_rerr_dsr(
        &mut self,
        node: NodeId,
        route: &[NodeId],
        pos: usize,
        broken_to: NodeId,
        dest: NodeId,
    ) {
        self.nodes[node.0 as usize]
            .dsr()
            .purge_link(node, broken_to);
        if pos == 0 {
            return; // origin vetoed locally; selection already skips it
        }
        let now = self.now();
        let reverse: Vec<NodeId> = route[..=pos].iter().rev().copied().collect();
        let origin = *reverse.last().unwrap();
        let uid = self.fresh_uid();
        let mut rerr = Packet::new(PacketKind::Rerr, node, origin, uid, now);
        rerr.source_route = Some(reverse.clone());
        rerr.content = PacketContent::RouteError {
            broken_from: node,
            broken_to,
            dests: vec![dest],
        };
        rerr.mac_tag = tag_packet(self.node_key(node), &rerr);
        self.trace_line(format!(
            "{now} rerr {node} link->{broken_to} toward {origin}"
        ));
        self.transmit(node, Some(reverse[1]), &rerr);
    }

    fn handle_rerr(&mut self, node: NodeId, sender: NodeId, mut packet: Packet) {
        let now = self.now();
        let PacketContent::RouteError {
            broken_from,
            broken_to,
            dests,
        } = packet.content.clone()
        else {
            return;
        };
        match self.cfg.protocol {
            Protocol::Aodv => {
                let purged = self.nodes[node.0 as usize].aodv().purge_via(sender, &dests);
                if purged.is_empty() {
                    return;
                }
                self.schedule_rediscovery_for_buffered(node, &purged);
                // Propagate upstream, naming only what this node lost.
                let uid = self.fresh_uid();
                let mut fwd = Packet::new(PacketKind::Rerr, node, node, uid, now);
                fwd.content = PacketContent::RouteError {
                    broken_from,
                    broken_to,
                    dests: purged,
                };
                fwd.mac_tag = tag_packet(self.node_key(node), &fwd);
                self.transmit(node, None, &fwd);
            }
            Protocol::Dsr => {
                self.nodes[node.0 as usize]
                    .dsr()
                    .purge_link(broken_from, broken_to);
                if node == packet.target {
                    self.schedule_rediscovery_for_buffered(node, &dests);
                    return;
                }
                let route = packet.source_route.clone().unwrap_or_default();
                let Some(pos) = route.iter().position(|n| *n == node) else {
                    return;
                };
                if pos + 1 >= route.len() {
                    return;
                }
                packet.hop_count += 1;
                packet.prev_hop = node;
                let next = route[pos + 1];
                self.transmit(node, Some(next), &packet);
            }
        }
    }

    fn schedule_rediscovery_for_buffered(&mut self, node: NodeId, dests: &[NodeId]) {
        let now = self.now();
        for d in dests {
            if self.nodes[node.0 as usize].buffer.has_dest(*d)
                && !self.nodes[node.0 as usize].discovery.contains_key(d)
            {
                self.kernel
                    .schedule(Event {
                        fire_at: now.after(RREQ_RETRY_WAIT),
                        kind: EventKind::Timer(TimerKind::RreqRetry { node, dest: *d }),
                    })
                    .unwrap();
            }
        }
    }

    // ---- trust traffic ---------------------------------------------------

    fn on_report_round(&mut self, at: SimTime, node: NodeId) {
        if let Some(t) = &mut self.nodes[node.0 as usize].trust {
            t.prune_idle(at);
            let entries = t.share_entries();
            if !entries.is_empty() {
                let uid = self.fresh_uid();
                let mut report = Packet::new(PacketKind::Report, node, node, uid, at);
                report.content = PacketContent::Report(entries);
                report.mac_tag = tag_packet(self.node_key(node), &report);
                self.transmit(node, None, &report);
            }
        }
        let next = at.after(self.cfg.trust.report_interval);
        if next.seconds() <= self.cfg.duration {
            self.kernel
                .schedule(Event {
                    fire_at: next,
                    kind: EventKind::ReportRound { node },
                })
                .unwrap();
        }
    }

    fn handle_report(&mut self, node: NodeId, packet: Packet) {
        if !self.tf() {
            return;
        }
        let reporter = packet.origin;
        if !self.admissible(node, reporter) {
            return;
        }
        let PacketContent::Report(entries) = packet.content else {
            return;
        };
        let now = self.now();
        for (subject, rating) in entries {
            if subject == node {
                continue;
            }
            let actions = match &mut self.nodes[node.0 as usize].trust {
                Some(t) => t.ingest_report(reporter, subject, rating, now),
                None => Vec::new(),
            };
            self.apply_trust_actions(node, actions);
        }
    }

    fn handle_warn(&mut self, node: NodeId, packet: Packet) {
        if !self.tf() {
            return;
        }
        let accuser = packet.origin;
        // Warns from blacklisted accusers carry no weight.
        if !self.admissible(node, accuser) {
            return;
        }
        let PacketContent::Warn {
            accused,
            evidence_rating,
        } = packet.content
        else {
            return;
        };
        if accused == node {
            return;
        }
        let now = self.now();
        let actions = match &mut self.nodes[node.0 as usize].trust {
            Some(t) => t.ingest_report(accuser, accused, evidence_rating, now),
            None => Vec::new(),
        };
        self.apply_trust_actions(node, actions);
    }
}

struct ResolvedRoute {
    next_hop: NodeId,
    full_path: Option<Vec<NodeId>>,
}

/// Convenience wrapper: run one seeded simulation of a scenario.
pub fn run_once(
    cfg: &ScenarioConfig,
    mode: SecurityMode,
    seed: u64,
    collect_trace: bool,
) -> RunOutput {
    Simulation::new(cfg, mode, seed, collect_trace).run()
}
