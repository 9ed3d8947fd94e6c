//! Summary numbers derived from a trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::trace::{EndReason, TraceEvent};
use crate::types::{Level, MessageKind, ProcessId, Round, Time};
use crate::verifier::{
    buffer_high_water, measured_recovery, recovery_bound, RecoveryBound, TraceView,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub p: ProcessId,
    pub level: Level,
    pub round: Round,
    pub t: Time,
}

#[derive(Clone, Debug, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub end_time: Time,
    pub end_reason: Option<EndReason>,
    pub decisions: Vec<Decision>,
    /// Lowest decided level over correct processes at the end.
    pub min_decided_level: Level,
    pub max_decision_round: Round,
    pub buffer_high_water: BTreeMap<ProcessId, usize>,
    pub sends_by_kind: BTreeMap<MessageKind, u64>,
    pub deliveries: u64,
    pub drops_pre_gst: u64,
    pub drops_post_gst: u64,
    pub pulls: u64,
    /// Chains fetched by pull are modelled as arriving within 2δ.
    pub delta_pull: Time,
    pub recovery_bound: RecoveryBound,
    /// Δrt, when the correct processes synchronized within the trace.
    pub measured_recovery: Option<Time>,
}

pub fn metrics(view: &TraceView<'_>) -> Metrics {
    let s = view.scenario();
    let tau = s.sim.gst;
    let mut decisions = Vec::new();
    let mut sends_by_kind: BTreeMap<MessageKind, u64> = BTreeMap::new();
    let (mut deliveries, mut drops_pre, mut drops_post, mut pulls) = (0, 0, 0, 0);
    for rec in &view.trace.records {
        match &rec.e {
            TraceEvent::Decide {
                p, level, round, ..
            } => decisions.push(Decision {
                p: *p,
                level: *level,
                round: *round,
                t: rec.t,
            }),
            TraceEvent::Send { msg, .. } => *sends_by_kind.entry(msg.0.kind()).or_default() += 1,
            TraceEvent::Deliver { .. } => deliveries += 1,
            TraceEvent::Drop { .. } if rec.t < tau => drops_pre += 1,
            TraceEvent::Drop { .. } => drops_post += 1,
            TraceEvent::Pull { .. } => pulls += 1,
            _ => {}
        }
    }
    let end_chains = view.chains_at(Time::MAX);
    let min_decided_level = end_chains
        .values()
        .map(|c| c.len() as Level - 1)
        .min()
        .unwrap_or(0);
    let bound = recovery_bound(view);
    Metrics {
        scenario: s.name.clone(),
        seed: s.sim.seed,
        end_time: view.trace.end_time(),
        end_reason: view.end_reason(),
        max_decision_round: decisions.iter().map(|d| d.round).max().unwrap_or(0),
        decisions,
        min_decided_level,
        buffer_high_water: buffer_high_water(view),
        sends_by_kind,
        deliveries,
        drops_pre_gst: drops_pre,
        drops_post_gst: drops_post,
        pulls,
        delta_pull: bound.delta_pull,
        recovery_bound: bound,
        measured_recovery: measured_recovery(view).map(|(t, _)| t - tau),
    }
}
