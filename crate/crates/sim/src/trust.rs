//! Triple-factor trust core: per-neighbor direct ratings built from
//! watchdog observations, distributed ratings merged from neighbor
//! reports and warns, composite classification into
//! Normal/Suspected/Blacklisted, and probation-based reintegration.
//!
//! Each node owns one `TrustTable`; all state is per (observer, subject)
//! pair. Operations return `TrustAction`s so the caller (the engine)
//! performs the side effects: broadcasting warns, scheduling probation
//! timers, counting blacklist transitions.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustParams {
    /// Weight of the direct rating in the composite.
    pub alpha: f64,
    /// Composite below this: Blacklisted.
    pub t_black: f64,
    /// Composite at or above this: Normal; in between: Suspected.
    pub t_ok: f64,
    /// Reports deviating from own direct rating by more than this are
    /// discarded once the observer has enough first-hand evidence.
    pub deviation_delta: f64,
    /// Base probation delay P; doubled per strike.
    pub probation_period: f64,
    /// Clean-observation window that ends probation; defaults to P/2.
    pub probation_window: Option<f64>,
    pub report_interval: f64,
    pub watchdog_timeout: f64,
    /// Reports older than this are ignored on merge.
    pub report_ttl: f64,
    /// Normal records idle longer than this are pruned.
    pub record_idle_timeout: f64,
    /// Blacklisted nodes re-enter via probation when true; when false
    /// blacklisting is permanent.
    pub reintegration: bool,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            alpha: 0.7,
            t_black: 0.3,
            t_ok: 0.5,
            deviation_delta: 0.4,
            probation_period: 200.0,
            probation_window: None,
            report_interval: 10.0,
            watchdog_timeout: 0.05,
            report_ttl: 30.0,
            record_idle_timeout: 60.0,
            reintegration: true,
        }
    }
}

impl TrustParams {
    pub fn probation_window(&self) -> f64 {
        self.probation_window.unwrap_or(self.probation_period / 2.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("trust.alpha must be in (0,1], got {}", self.alpha));
        }
        if !(0.0 <= self.t_black && self.t_black < self.t_ok && self.t_ok <= 1.0) {
            return Err(format!(
                "trust thresholds must satisfy 0 <= t_black < t_ok <= 1, got {} / {}",
                self.t_black, self.t_ok
            ));
        }
        for (name, v) in [
            ("deviation_delta", self.deviation_delta),
            ("probation_period", self.probation_period),
            ("report_interval", self.report_interval),
            ("watchdog_timeout", self.watchdog_timeout),
            ("report_ttl", self.report_ttl),
            ("record_idle_timeout", self.record_idle_timeout),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("trust.{name} must be positive, got {v}"));
            }
        }
        if let Some(w) = self.probation_window {
            if !w.is_finite() || w <= 0.0 {
                return Err(format!("trust.probation_window must be positive, got {w}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustState {
    Normal,
    Suspected,
    Blacklisted,
    Probation,
}

impl TrustState {
    pub fn name(self) -> &'static str {
        match self {
            TrustState::Normal => "Normal",
            TrustState::Suspected => "Suspected",
            TrustState::Blacklisted => "Blacklisted",
            TrustState::Probation => "Probation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisbehaviorCause {
    NoForward,
    MacFailure,
    ProtocolViolation,
}

impl MisbehaviorCause {
    pub fn name(self) -> &'static str {
        match self {
            MisbehaviorCause::NoForward => "no_forward",
            MisbehaviorCause::MacFailure => "mac_failure",
            MisbehaviorCause::ProtocolViolation => "protocol_violation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrustRecord {
    pub forwards: u64,
    pub misbehaviors: u64,
    pub direct: f64,
    pub distributed: f64,
    pub composite: f64,
    pub state: TrustState,
    pub strikes: u32,
    pub probation_until: Option<SimTime>,
    pub probation_started: Option<SimTime>,
    pub last_touched: SimTime,
    /// Result of the last report merge; None means fall back to direct.
    merged: Option<f64>,
}

impl TrustRecord {
    fn neutral(now: SimTime) -> TrustRecord {
        TrustRecord {
            forwards: 0,
            misbehaviors: 0,
            direct: 0.5,
            distributed: 0.5,
            composite: 0.5,
            state: TrustState::Normal,
            strikes: 0,
            probation_until: None,
            probation_started: None,
            last_touched: now,
            merged: None,
        }
    }
}

/// Side effect requested by a trust operation.
#[derive(Debug, Clone, PartialEq)]
pub enum TrustAction {
    /// Broadcast a one-hop WARN about `accused`.
    Warn {
        accused: NodeId,
        evidence_rating: f64,
    },
    /// Subject transitioned into Blacklisted; schedule ProbationEnd when set.
    Blacklist {
        subject: NodeId,
        probation_end: Option<SimTime>,
    },
    /// Subject entered probation; schedule the clean-window review.
    ProbationStart { subject: NodeId, review_at: SimTime },
}

#[derive(Debug, Clone)]
pub struct TrustLogRow {
    pub time: SimTime,
    pub observer: NodeId,
    pub subject: NodeId,
    pub event: String,
    pub forwards: u64,
    pub misbehaviors: u64,
    pub direct: f64,
    pub distributed: f64,
    pub composite: f64,
    pub state: TrustState,
}

/// Beta-prior mean used for the direct rating: neutral 0.5 with no data.
pub fn direct_rating(forwards: u64, misbehaviors: u64) -> f64 {
    (forwards as f64 + 1.0) / (forwards as f64 + misbehaviors as f64 + 2.0)
}

pub fn composite_trust(alpha: f64, direct: f64, distributed: f64) -> f64 {
    alpha * direct + (1.0 - alpha) * distributed
}

/// Trust-weighted mean of report ratings; None when the weights vanish.
/// Scaling all weights by a common positive constant leaves the result
/// unchanged.
pub fn weighted_mean(pairs: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = pairs.iter().map(|(w, _)| w).sum();
    if pairs.is_empty() || total <= 0.0 {
        return None;
    }
    Some(pairs.iter().map(|(w, r)| w * r).sum::<f64>() / total)
}

#[derive(Debug, Clone)]
struct StoredReport {
    rating: f64,
    issued_at: SimTime,
}

pub struct TrustTable {
    observer: NodeId,
    params: TrustParams,
    records: BTreeMap<NodeId, TrustRecord>,
    /// Latest report per (subject, reporter).
    reports: BTreeMap<NodeId, BTreeMap<NodeId, StoredReport>>,
    pub log: Vec<TrustLogRow>,
}

impl TrustTable {
    pub fn new(observer: NodeId, params: TrustParams) -> TrustTable {
        TrustTable {
            observer,
            params,
            records: BTreeMap::new(),
            reports: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn params(&self) -> &TrustParams {
        &self.params
    }

    pub fn record(&self, subject: NodeId) -> Option<&TrustRecord> {
        self.records.get(&subject)
    }

    fn ensure(&mut self, subject: NodeId, now: SimTime) -> &mut TrustRecord {
        self.records
            .entry(subject)
            .or_insert_with(|| TrustRecord::neutral(now))
    }

    fn push_log(&mut self, subject: NodeId, event: String, now: SimTime) {
        let rec = &self.records[&subject];
        self.log.push(TrustLogRow {
            time: now,
            observer: self.observer,
            subject,
            event,
            forwards: rec.forwards,
            misbehaviors: rec.misbehaviors,
            direct: rec.direct,
            distributed: rec.distributed,
            composite: rec.composite,
            state: rec.state,
        });
    }

    /// Recompute ratings and, for floating states, re-classify. Sticky
    /// states (Blacklisted, Probation) only leave via their dedicated
    /// paths: probation end, strike, or review.
    fn refresh(&mut self, subject: NodeId, now: SimTime, out: &mut Vec<TrustAction>) {
        let params = self.params;
        let rec = self.records.get_mut(&subject).expect("record exists");
        rec.direct = direct_rating(rec.forwards, rec.misbehaviors);
        rec.distributed = rec.merged.unwrap_or(rec.direct);
        rec.composite = composite_trust(params.alpha, rec.direct, rec.distributed);
        rec.last_touched = now;
        if matches!(rec.state, TrustState::Blacklisted | TrustState::Probation) {
            return;
        }
        let new_state = if rec.composite < params.t_black {
            TrustState::Blacklisted
        } else if rec.composite < params.t_ok {
            TrustState::Suspected
        } else {
            TrustState::Normal
        };
        if new_state == rec.state {
            return;
        }
        let old = rec.state;
        rec.state = new_state;
        match new_state {
            TrustState::Blacklisted => {
                let probation_end = params.reintegration.then(|| {
                    now.after(params.probation_period * f64::powi(2.0, rec.strikes as i32))
                });
                rec.probation_until = probation_end;
                let evidence = rec.direct;
                out.push(TrustAction::Warn {
                    accused: subject,
                    evidence_rating: evidence,
                });
                out.push(TrustAction::Blacklist {
                    subject,
                    probation_end,
                });
                self.push_log(subject, "blacklist".into(), now);
            }
            TrustState::Suspected => {
                if old == TrustState::Normal {
                    let evidence = rec.direct;
                    out.push(TrustAction::Warn {
                        accused: subject,
                        evidence_rating: evidence,
                    });
                }
                self.push_log(subject, "suspected".into(), now);
            }
            TrustState::Normal => {
                self.push_log(subject, "normal".into(), now);
            }
            TrustState::Probation => unreachable!(),
        }
    }

    /// A watchdog expectation for `subject` was met: its retransmission
    /// was overheard in time.
    pub fn observe_forward(&mut self, subject: NodeId, now: SimTime) -> Vec<TrustAction> {
        let mut out = Vec::new();
        self.ensure(subject, now).forwards += 1;
        self.refresh(subject, now, &mut out);
        self.push_log(subject, "forward".into(), now);
        out
    }

    pub fn observe_misbehavior(
        &mut self,
        subject: NodeId,
        cause: MisbehaviorCause,
        now: SimTime,
    ) -> Vec<TrustAction> {
        let mut out = Vec::new();
        let params = self.params;
        let rec = self.ensure(subject, now);
        rec.misbehaviors += 1;
        let in_probation = rec.state == TrustState::Probation;
        if in_probation {
            // One strike: straight back to the blacklist, probation doubled.
            rec.strikes += 1;
            rec.state = TrustState::Blacklisted;
            let probation_end = params
                .reintegration
                .then(|| now.after(params.probation_period * f64::powi(2.0, rec.strikes as i32)));
            rec.probation_until = probation_end;
            rec.probation_started = None;
            self.refresh(subject, now, &mut out);
            let evidence = self.records[&subject].direct;
            out.push(TrustAction::Warn {
                accused: subject,
                evidence_rating: evidence,
            });
            out.push(TrustAction::Blacklist {
                subject,
                probation_end,
            });
            self.push_log(subject, format!("strike:{}", cause.name()), now);
        } else {
            self.refresh(subject, now, &mut out);
            self.push_log(subject, format!("misbehavior:{}", cause.name()), now);
        }
        out
    }

    /// Store a received report or warn and re-merge the subject.
    pub fn ingest_report(
        &mut self,
        reporter: NodeId,
        subject: NodeId,
        rating: f64,
        now: SimTime,
    ) -> Vec<TrustAction> {
        if reporter == self.observer || subject == self.observer {
            return Vec::new();
        }
        self.reports.entry(subject).or_default().insert(
            reporter,
            StoredReport {
                rating: rating.clamp(0.0, 1.0),
                issued_at: now,
            },
        );
        self.merge_reports(subject, now)
    }

    /// Recompute the distributed rating for `subject` from stored fresh
    /// reports: deviation-filter against own direct evidence, then
    /// combine with the observer's composite trust of each reporter as
    /// weight. No surviving reports: fall back to the direct rating.
    pub fn merge_reports(&mut self, subject: NodeId, now: SimTime) -> Vec<TrustAction> {
        let mut out = Vec::new();
        let params = self.params;
        self.ensure(subject, now);
        let fresh: Vec<(NodeId, f64)> = self
            .reports
            .get(&subject)
            .map(|per_reporter| {
                per_reporter
                    .iter()
                    .filter(|(_, r)| now.seconds() - r.issued_at.seconds() <= params.report_ttl)
                    .map(|(reporter, r)| (*reporter, r.rating))
                    .collect()
            })
            .unwrap_or_default();
        let rec = &self.records[&subject];
        let own_evidence = rec.forwards + rec.misbehaviors;
        let own_direct = rec.direct;
        let surviving: Vec<(NodeId, f64)> = fresh
            .into_iter()
            .filter(|(_, rating)| {
                own_evidence < 5 || (rating - own_direct).abs() <= params.deviation_delta
            })
            .collect();
        let pairs: Vec<(f64, f64)> = surviving
            .iter()
            .map(|(reporter, rating)| {
                let weight = self.ensure(*reporter, now).composite;
                (weight, *rating)
            })
            .collect();
        let merged = weighted_mean(&pairs);
        self.records
            .get_mut(&subject)
            .expect("record exists")
            .merged = merged;
        self.refresh(subject, now, &mut out);
        self.push_log(subject, "merge".into(), now);
        out
    }

    /// Entries for this node's periodic REPORT: one (subject, direct)
    /// pair per subject with at least one first-hand observation.
    pub fn share_entries(&self) -> Vec<(NodeId, f64)> {
        self.records
            .iter()
            .filter(|(_, r)| r.forwards + r.misbehaviors >= 1)
            .map(|(subject, r)| (*subject, r.direct))
            .collect()
    }

    /// ProbationEnd fired. Guarded against stale timers via `until`.
    pub fn reintegrate(
        &mut self,
        subject: NodeId,
        until: SimTime,
        now: SimTime,
    ) -> Vec<TrustAction> {
        let mut out = Vec::new();
        let params = self.params;
        let Some(rec) = self.records.get_mut(&subject) else {
            return out;
        };
        if rec.state != TrustState::Blacklisted || rec.probation_until != Some(until) {
            return out;
        }
        rec.state = TrustState::Probation;
        rec.forwards = 0;
        rec.misbehaviors = 0;
        rec.merged = None;
        rec.probation_until = None;
        rec.probation_started = Some(now);
        self.reports.remove(&subject);
        self.refresh(subject, now, &mut out);
        let review_at = now.after(params.probation_window());
        out.push(TrustAction::ProbationStart { subject, review_at });
        self.push_log(subject, "probation".into(), now);
        out
    }

    /// Clean-window review: a subject still in probation (no strike since
    /// `started`) is fully rehabilitated.
    pub fn probation_review(
        &mut self,
        subject: NodeId,
        started: SimTime,
        now: SimTime,
    ) -> Vec<TrustAction> {
        let mut out = Vec::new();
        let Some(rec) = self.records.get_mut(&subject) else {
            return out;
        };
        if rec.state != TrustState::Probation || rec.probation_started != Some(started) {
            return out;
        }
        rec.state = TrustState::Normal;
        rec.strikes = 0;
        rec.probation_started = None;
        self.refresh(subject, now, &mut out);
        self.push_log(subject, "rehabilitated".into(), now);
        out
    }

    /// Routing admissibility veto: false only while Blacklisted.
    pub fn admissible(&mut self, subject: NodeId, now: SimTime) -> bool {
        if subject == self.observer {
            return true;
        }
        self.ensure(subject, now).state != TrustState::Blacklisted
    }

    /// Read-only admissibility (no lazy record creation).
    pub fn is_admissible(&self, subject: NodeId) -> bool {
        self.records
            .get(&subject)
            .is_none_or(|r| r.state != TrustState::Blacklisted)
    }

    pub fn state_of(&self, subject: NodeId) -> TrustState {
        self.records
            .get(&subject)
            .map_or(TrustState::Normal, |r| r.state)
    }

    /// Drop Normal records (and their reports) idle longer than the
    /// configured timeout. Suspect and blacklist state is never forgotten
    /// by pruning.
    pub fn prune_idle(&mut self, now: SimTime) {
        let cutoff = now.seconds() - self.params.record_idle_timeout;
        let stale: Vec<NodeId> = self
            .records
            .iter()
            .filter(|(_, r)| {
                r.state == TrustState::Normal
                    && r.last_touched.seconds() < cutoff
                    && r.forwards + r.misbehaviors > 0
            })
            .map(|(n, _)| *n)
            .collect();
        for n in stale {
            self.records.remove(&n);
            self.reports.remove(&n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: f64 = 1e-12;

    fn table() -> TrustTable {
        TrustTable::new(NodeId(0), TrustParams::default())
    }

    fn t(s: f64) -> SimTime {
        SimTime::new(s)
    }

    #[test]
    fn direct_rating_formula() {
        assert!((direct_rating(0, 0) - 0.5).abs() < T);
        assert!((direct_rating(1, 0) - 2.0 / 3.0).abs() < T);
        assert!((direct_rating(8, 0) - 0.9).abs() < T);
        assert!((direct_rating(1, 7) - 0.2).abs() < T);
    }

    #[test]
    fn composite_formula() {
        assert!((composite_trust(0.7, 0.9, 0.5) - 0.78).abs() < T);
        assert!((composite_trust(0.3, 0.42, 0.42) - 0.42).abs() < T);
        assert!((composite_trust(1.0, 0.9, 0.1) - 0.9).abs() < T);
    }

    #[test]
    fn weighted_mean_example() {
        let merged = weighted_mean(&[(0.8, 0.9), (0.2, 0.1)]).unwrap();
        assert!((merged - 0.74).abs() < T);
        assert!(weighted_mean(&[]).is_none());
    }

    #[test]
    fn observe_forward_updates_direct() {
        let mut tb = table();
        tb.observe_forward(NodeId(1), t(1.0));
        let rec = tb.record(NodeId(1)).unwrap();
        assert!((rec.direct - 2.0 / 3.0).abs() < T);
        assert_eq!(rec.state, TrustState::Normal);
    }

    #[test]
    fn misbehavior_drives_states_down() {
        let mut tb = table();
        let s = NodeId(1);
        tb.observe_forward(s, t(0.5));
        // f=1, m grows: 2/4=0.5 Normal, 2/5=0.4 Suspected, 2/6=0.333,
        // 2/7=0.2857 < 0.3 -> Blacklisted.
        let mut actions = Vec::new();
        for i in 0..5 {
            actions.extend(tb.observe_misbehavior(
                s,
                MisbehaviorCause::NoForward,
                t(1.0 + i as f64),
            ));
        }
        assert_eq!(tb.record(s).unwrap().state, TrustState::Blacklisted);
        let warns = actions
            .iter()
            .filter(|a| matches!(a, TrustAction::Warn { .. }))
            .count();
        // One warn for Normal->Suspected, one for ->Blacklisted.
        assert_eq!(warns, 2);
        assert!(!tb.admissible(s, t(10.0)));
    }

    #[test]
    fn warns_are_edge_triggered() {
        let mut tb = table();
        let s = NodeId(1);
        let mut warns = 0;
        for i in 0..20 {
            let acts = tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(i as f64));
            warns += acts
                .iter()
                .filter(|a| matches!(a, TrustAction::Warn { .. }))
                .count();
        }
        // 1/(m+2): 0.333 Suspected at m=1 (warn), 0.25 Blacklisted at m=2
        // (warn), then no further transitions.
        assert_eq!(warns, 2);
    }

    #[test]
    fn merge_example_and_fallback() {
        let mut tb = table();
        let s = NodeId(9);
        // Give reporters the composites from the worked example.
        // Reporter 1: f high enough for composite ~0.8 is fiddly; drive
        // via direct observations: f=6,m=0 -> direct 7/8=0.875, composite 0.875.
        // Instead exercise weighted_mean directly above; here check the
        // fallback and deviation-filter behavior through the table.
        assert!(tb.merge_reports(s, t(1.0)).is_empty());
        let rec = tb.record(s).unwrap();
        assert!((rec.distributed - rec.direct).abs() < T);

        // Bad-mouthing resistance: own direct 0.9 (f=8), incoming 0.1 -> filtered.
        for i in 0..8 {
            tb.observe_forward(s, t(1.0 + i as f64 * 0.1));
        }
        tb.ingest_report(NodeId(2), s, 0.1, t(2.0));
        let rec = tb.record(s).unwrap();
        assert!((rec.direct - 0.9).abs() < T);
        assert!(
            (rec.distributed - 0.9).abs() < T,
            "deviating report must be discarded"
        );
    }

    #[test]
    fn merge_accepts_close_reports_before_enough_evidence() {
        let mut tb = table();
        let s = NodeId(9);
        // Zero own observations: filter inactive, neutral reporter weight 0.5.
        tb.ingest_report(NodeId(2), s, 0.1, t(2.0));
        let rec = tb.record(s).unwrap();
        assert!((rec.distributed - 0.1).abs() < T);
        assert!((rec.composite - (0.7 * 0.5 + 0.3 * 0.1)).abs() < T);
    }

    #[test]
    fn stale_reports_ignored() {
        let mut tb = table();
        let s = NodeId(9);
        tb.ingest_report(NodeId(2), s, 0.1, t(2.0));
        // 40s later the stored report is past the 30s TTL.
        tb.merge_reports(s, t(42.0));
        let rec = tb.record(s).unwrap();
        assert!((rec.distributed - rec.direct).abs() < T);
    }

    #[test]
    fn classification_thresholds() {
        // Exercise via composite values 0.25 / 0.40 / 0.55 using merged
        // reports with alpha small so distributed dominates.
        let params = TrustParams {
            alpha: 0.000001,
            ..TrustParams::default()
        };
        for (rating, expect) in [
            (0.25, TrustState::Blacklisted),
            (0.40, TrustState::Suspected),
            (0.55, TrustState::Normal),
        ] {
            let mut tb = TrustTable::new(NodeId(0), params);
            tb.ingest_report(NodeId(2), NodeId(9), rating, t(1.0));
            assert_eq!(
                tb.record(NodeId(9)).unwrap().state,
                expect,
                "rating {rating}"
            );
        }
    }

    #[test]
    fn probation_lifecycle_clean_window() {
        let mut tb = table();
        let s = NodeId(1);
        for i in 0..2 {
            tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(100.0 + i as f64));
        }
        let rec = tb.record(s).unwrap();
        assert_eq!(rec.state, TrustState::Blacklisted);
        let until = rec.probation_until.unwrap();
        assert!(
            (until.seconds() - 301.0).abs() < 1e-9,
            "P=200 after blacklist at t=101"
        );

        let acts = tb.reintegrate(s, until, until);
        let rec = tb.record(s).unwrap();
        assert_eq!(rec.state, TrustState::Probation);
        assert!((rec.composite - 0.5).abs() < T);
        assert!(tb.admissible(s, until));
        let review_at = match acts.last().unwrap() {
            TrustAction::ProbationStart { review_at, .. } => *review_at,
            other => panic!("unexpected {other:?}"),
        };
        assert!((review_at.seconds() - (until.seconds() + 100.0)).abs() < 1e-9);

        tb.probation_review(s, until, review_at);
        let rec = tb.record(s).unwrap();
        assert_eq!(rec.state, TrustState::Normal);
        assert_eq!(rec.strikes, 0);
    }

    #[test]
    fn strike_during_probation_doubles_probation() {
        let mut tb = table();
        let s = NodeId(1);
        for _ in 0..2 {
            tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(100.0));
        }
        let until = tb.record(s).unwrap().probation_until.unwrap();
        tb.reintegrate(s, until, t(300.0));
        let acts = tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(310.0));
        let rec = tb.record(s).unwrap();
        assert_eq!(rec.state, TrustState::Blacklisted);
        assert_eq!(rec.strikes, 1);
        assert!((rec.probation_until.unwrap().seconds() - 710.0).abs() < 1e-9);
        assert!(acts
            .iter()
            .any(|a| matches!(a, TrustAction::Blacklist { .. })));
    }

    #[test]
    fn stale_probation_end_ignored() {
        let mut tb = table();
        let s = NodeId(1);
        for _ in 0..2 {
            tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(100.0));
        }
        let until = tb.record(s).unwrap().probation_until.unwrap();
        // Wrong token: no-op.
        tb.reintegrate(s, t(999.0), t(999.0));
        assert_eq!(tb.record(s).unwrap().state, TrustState::Blacklisted);
        tb.reintegrate(s, until, until);
        assert_eq!(tb.record(s).unwrap().state, TrustState::Probation);
    }

    #[test]
    fn reintegration_disabled_blacklists_forever() {
        let params = TrustParams {
            reintegration: false,
            ..TrustParams::default()
        };
        let mut tb = TrustTable::new(NodeId(0), params);
        let s = NodeId(1);
        for _ in 0..2 {
            tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(1.0));
        }
        let rec = tb.record(s).unwrap();
        assert_eq!(rec.state, TrustState::Blacklisted);
        assert_eq!(rec.probation_until, None);
    }

    #[test]
    fn admissible_defaults_and_states() {
        let mut tb = table();
        assert!(tb.admissible(NodeId(7), t(0.0)));
        assert!(
            tb.record(NodeId(7)).is_some(),
            "lazy neutral record created"
        );
    }

    #[test]
    fn share_entries_requires_observations() {
        let mut tb = table();
        assert!(tb.share_entries().is_empty());
        tb.admissible(NodeId(5), t(0.0)); // record without observations
        assert!(tb.share_entries().is_empty());
        tb.observe_forward(NodeId(1), t(1.0));
        tb.observe_forward(NodeId(2), t(1.0));
        tb.observe_misbehavior(NodeId(3), MisbehaviorCause::MacFailure, t(1.0));
        assert_eq!(tb.share_entries().len(), 3);
    }

    #[test]
    fn prune_drops_only_idle_normals() {
        let mut tb = table();
        tb.observe_forward(NodeId(1), t(0.0));
        for _ in 0..2 {
            tb.observe_misbehavior(NodeId(2), MisbehaviorCause::NoForward, t(0.0));
        }
        tb.prune_idle(t(100.0));
        assert!(tb.record(NodeId(1)).is_none());
        assert_eq!(tb.record(NodeId(2)).unwrap().state, TrustState::Blacklisted);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ratings_stay_bounded(ops in proptest::collection::vec((0u8..4, 1u32..6, 0.0f64..=1.0), 0..120)) {
                let mut tb = table();
                let mut now = 0.0;
                for (op, subject, rating) in ops {
                    now += 0.5;
                    let s = NodeId(subject);
                    match op {
                        0 => { tb.observe_forward(s, t(now)); }
                        1 => { tb.observe_misbehavior(s, MisbehaviorCause::NoForward, t(now)); }
                        2 => { tb.ingest_report(NodeId(subject % 3 + 6), s, rating, t(now)); }
                        _ => { tb.merge_reports(s, t(now)); }
                    }
                    for n in 1..10u32 {
                        if let Some(rec) = tb.record(NodeId(n)) {
                            prop_assert!((0.0..=1.0).contains(&rec.direct));
                            prop_assert!((0.0..=1.0).contains(&rec.distributed));
                            prop_assert!((0.0..=1.0).contains(&rec.composite));
                        }
                    }
                }
            }

            #[test]
            fn misbehavior_never_raises_composite(f in 0u64..50, m in 0u64..50, dist in 0.0f64..=1.0, alpha in 0.01f64..=1.0) {
                // Distributed held fixed.
                let before = composite_trust(alpha, direct_rating(f, m), dist);
                let after = composite_trust(alpha, direct_rating(f, m + 1), dist);
                prop_assert!(after <= before + 1e-15);
                let forward = composite_trust(alpha, direct_rating(f + 1, m), dist);
                prop_assert!(forward >= before - 1e-15);
            }

            #[test]
            fn merge_invariant_under_weight_scaling(
                pairs in proptest::collection::vec((0.01f64..=1.0, 0.0f64..=1.0), 1..8),
                scale in 0.1f64..=10.0,
            ) {
                let scaled: Vec<(f64, f64)> = pairs.iter().map(|(w, r)| (w * scale, *r)).collect();
                let a = weighted_mean(&pairs).unwrap();
                let b = weighted_mean(&scaled).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
