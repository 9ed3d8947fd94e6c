//! Oracles over finished traces. They read only the trace (whose header
//! carries the scenario), so stored traces can be re-checked offline.
//!
//! Safety oracles are prefix-closed. Liveness oracles (termination,
//! progress, recovery bound) may answer `Inconclusive` when the trace is
//! too short to decide.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::chain::{check_head_certificate, validate_blocks, Chain, ChainFault, Committees};
use crate::driver::ProtocolParams;
use crate::scenario::{ConfigError, Property, Scenario};
use crate::synchronizer::{level_start, DurationFn, Phase};
use crate::trace::{EndReason, Trace, TraceEvent};
use crate::types::{
    vote_digest, Digest, Level, MessageKind, ProcessId, QcKind, QuorumCertificate, Round, Time,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "FAIL",
            Outcome::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub outcome: Outcome,
    /// Index into the trace records of the first offending record.
    pub counterexample: Option<usize>,
    pub detail: String,
}

impl Verdict {
    fn pass(property: Property, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            outcome: Outcome::Pass,
            counterexample: None,
            detail: detail.into(),
        }
    }

    fn fail(property: Property, index: usize, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            outcome: Outcome::Fail,
            counterexample: Some(index),
            detail: detail.into(),
        }
    }

    fn inconclusive(property: Property, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            outcome: Outcome::Inconclusive,
            counterexample: None,
            detail: detail.into(),
        }
    }
}

/// A correct process's chain right after one of its records changed it.
#[derive(Clone, Debug)]
pub struct ChainUpdate {
    pub index: usize,
    pub t: Time,
    pub p: ProcessId,
    /// Lowest level whose block was replaced or added.
    pub from: usize,
    pub chain: Chain,
    pub certificate: QuorumCertificate,
}

/// A trace with its scenario's parameters and the replayed chain history
/// of every correct process.
pub struct TraceView<'a> {
    pub trace: &'a Trace,
    pub params: Arc<ProtocolParams>,
    pub correct: BTreeSet<ProcessId>,
    pub updates: Vec<ChainUpdate>,
}

impl<'a> TraceView<'a> {
    pub fn new(trace: &'a Trace) -> Result<TraceView<'a>, ConfigError> {
        let scenario = trace.scenario();
        scenario.validate()?;
        let params = scenario.params()?;
        let correct: BTreeSet<ProcessId> = scenario.correct_ids().into_iter().collect();
        let genesis = params.genesis_chain();
        let mut chains: HashMap<ProcessId, Chain> = HashMap::new();
        let mut updates = Vec::new();
        for (index, rec) in trace.records.iter().enumerate() {
            let (p, at, blocks, certificate) = match &rec.e {
                TraceEvent::Decide {
                    p,
                    level,
                    block,
                    qc,
                    ..
                } => (*p, *level as usize, vec![block.0.clone()], &qc.0),
                TraceEvent::Adopt {
                    p,
                    kept,
                    blocks,
                    certificate,
                } => (
                    *p,
                    *kept,
                    blocks.iter().map(|b| b.0.clone()).collect(),
                    &certificate.0,
                ),
                TraceEvent::HeadSwap {
                    p,
                    level,
                    block,
                    certificate,
                    ..
                } => (*p, *level as usize, vec![block.0.clone()], &certificate.0),
                _ => continue,
            };
            if !correct.contains(&p) {
                continue;
            }
            let cur = chains.entry(p).or_insert_with(|| genesis.clone());
            let from = at.min(cur.len());
            *cur = cur.spliced(at, blocks);
            updates.push(ChainUpdate {
                index,
                t: rec.t,
                p,
                from,
                chain: cur.clone(),
                certificate: certificate.clone(),
            });
        }
        Ok(TraceView {
            trace,
            params,
            correct,
            updates,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.trace.scenario()
    }

    fn is_correct(&self, p: ProcessId) -> bool {
        self.correct.contains(&p)
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        match self.trace.records.last().map(|r| &r.e) {
            Some(TraceEvent::End { reason }) => Some(reason.clone()),
            _ => None,
        }
    }

    /// Chains of every correct process as of records with `t ≤ at`.
    pub fn chains_at(&self, at: Time) -> BTreeMap<ProcessId, Chain> {
        let genesis = self.params.genesis_chain();
        let mut out: BTreeMap<ProcessId, Chain> =
            self.correct.iter().map(|&p| (p, genesis.clone())).collect();
        for u in self.updates.iter().take_while(|u| u.t <= at) {
            out.insert(u.p, u.chain.clone());
        }
        out
    }

    /// The longest chain held by a correct process at `at`.
    pub fn longest_chain_at(&self, at: Time) -> Chain {
        self.chains_at(at)
            .into_values()
            .max_by_key(|c| c.len())
            .unwrap_or_else(|| self.params.genesis_chain())
    }
}

/// Runs the requested oracles.
pub fn check(trace: &Trace, props: &[Property]) -> Result<Vec<Verdict>, ConfigError> {
    let view = TraceView::new(trace)?;
    Ok(props.iter().map(|&p| check_property(&view, p)).collect())
}

pub fn check_property(view: &TraceView<'_>, prop: Property) -> Verdict {
    match prop {
        Property::Agreement => check_agreement(view),
        Property::Validity => check_validity(view),
        Property::VoteOnce => check_vote_once(view),
        Property::QcUniqueness => check_qc_uniqueness(view),
        Property::BufferBound => check_buffer_bound(view),
        Property::Termination => check_termination(view),
        Property::Progress => check_progress(view),
        Property::RecoveryBound => check_recovery(view),
    }
}

/// Committed blocks (every block but the head) agree across correct
/// processes level by level.
pub fn check_agreement(view: &TraceView<'_>) -> Verdict {
    let prop = Property::Agreement;
    let mut committed: BTreeMap<usize, (Digest, ProcessId, usize)> = BTreeMap::new();
    for u in &view.updates {
        let head = u.chain.len() - 1;
        let lo = u.from.saturating_sub(1).max(1);
        for level in lo..head {
            let h = u.chain.hashes()[level];
            match committed.get(&level) {
                None => {
                    committed.insert(level, (h, u.p, u.index));
                }
                Some(&(other, q, at)) if other != h => {
                    return Verdict::fail(
                        prop,
                        u.index,
                        format!(
                            "level {level}: {} committed {h}, {q} committed {other} (record {at})",
                            u.p
                        ),
                    );
                }
                Some(_) => {}
            }
        }
    }
    Verdict::pass(prop, format!("{} committed levels agree", committed.len()))
}

/// Every chain a correct process held is valid for its head certificate.
pub fn check_validity(view: &TraceView<'_>) -> Verdict {
    let prop = Property::Validity;
    let mut committees = Committees::new(view.params.committee.clone());
    for u in &view.updates {
        let res = if u.chain.hash_at(0) != Some(view.params.genesis_hash) {
            Err(ChainFault::Genesis)
        } else {
            validate_blocks(&u.chain, u.from.max(1) as Level, &mut committees)
                .and_then(|()| check_head_certificate(&u.chain, &u.certificate, &mut committees))
        };
        if let Err(fault) = res {
            return Verdict::fail(
                prop,
                u.index,
                format!("{} holds an invalid chain: {fault}", u.p),
            );
        }
    }
    Verdict::pass(prop, format!("{} chain updates valid", view.updates.len()))
}

/// No correct process sends two preendorsements (or endorsements) for the
/// same level and round.
pub fn check_vote_once(view: &TraceView<'_>) -> Verdict {
    let prop = Property::VoteOnce;
    let mut seen: HashMap<(ProcessId, MessageKind, Level, Round), usize> = HashMap::new();
    for (i, rec) in view.trace.records.iter().enumerate() {
        let TraceEvent::Send { p, msg, .. } = &rec.e else {
            continue;
        };
        let m = &msg.0;
        if !view.is_correct(*p) || m.sender != *p || m.voted_hash().is_none() {
            continue;
        }
        let key = (*p, m.kind(), m.level, m.round);
        if let Some(&j) = seen.get(&key) {
            return Verdict::fail(
                prop,
                i,
                format!(
                    "{p} sent two {:?} votes at level {} round {} (records {j}, {i})",
                    m.kind(),
                    m.level,
                    m.round
                ),
            );
        }
        seen.insert(key, i);
    }
    Verdict::pass(prop, format!("{} votes, none repeated", seen.len()))
}

/// A certificate whose votes come from at least `quorum` distinct signers,
/// each vote matching the claim.
fn well_formed(qc: &QuorumCertificate, quorum: usize) -> bool {
    let claim = qc.claim();
    let mut signers: Vec<ProcessId> = qc
        .votes
        .iter()
        .filter(|v| v.digest == vote_digest(&claim, v.signer))
        .map(|v| v.signer)
        .collect();
    signers.dedup();
    signers.len() >= quorum
}

/// Per (kind, level, round), every well-formed certificate seen anywhere in
/// the trace attests the same value on the same predecessor.
pub fn check_qc_uniqueness(view: &TraceView<'_>) -> Verdict {
    let prop = Property::QcUniqueness;
    let quorum = view.params.committee.quorum();
    let mut seen: HashMap<(QcKind, Level, Round), (Digest, Digest, usize)> = HashMap::new();
    for (i, rec) in view.trace.records.iter().enumerate() {
        let qcs: Vec<&QuorumCertificate> = match &rec.e {
            TraceEvent::Send { msg, .. } => msg.0.certificates(),
            TraceEvent::Decide { block, qc, .. } => {
                let h = &block.0.header;
                std::iter::once(&qc.0)
                    .chain(h.eqc.iter())
                    .chain(h.pqc.iter())
                    .collect()
            }
            TraceEvent::Adopt {
                blocks,
                certificate,
                ..
            } => std::iter::once(&certificate.0)
                .chain(
                    blocks
                        .iter()
                        .flat_map(|b| b.0.header.eqc.iter().chain(b.0.header.pqc.iter())),
                )
                .collect(),
            TraceEvent::HeadSwap {
                block, certificate, ..
            } => {
                let h = &block.0.header;
                std::iter::once(&certificate.0)
                    .chain(h.eqc.iter())
                    .chain(h.pqc.iter())
                    .collect()
            }
            _ => continue,
        };
        for qc in qcs {
            if !well_formed(qc, quorum) {
                continue;
            }
            let key = (qc.kind, qc.level, qc.round);
            match seen.get(&key) {
                None => {
                    seen.insert(key, (qc.pred_hash, qc.value_hash, i));
                }
                Some(&(pred, value, j)) if (pred, value) != (qc.pred_hash, qc.value_hash) => {
                    return Verdict::fail(
                        prop,
                        i,
                        format!(
                            "two {:?} certificates at level {} round {}: value {} vs {} (record {j})",
                            qc.kind, qc.level, qc.round, qc.value_hash, value
                        ),
                    );
                }
                Some(_) => {}
            }
        }
    }
    Verdict::pass(
        prop,
        format!("{} certified (kind, level, round) slots", seen.len()),
    )
}

/// Highest buffer size reported by each correct process.
pub fn buffer_high_water(view: &TraceView<'_>) -> BTreeMap<ProcessId, usize> {
    let mut out: BTreeMap<ProcessId, usize> = view.correct.iter().map(|&p| (p, 0)).collect();
    for rec in &view.trace.records {
        if let TraceEvent::Buffer { p, size } = rec.e {
            if let Some(m) = out.get_mut(&p) {
                *m = (*m).max(size);
            }
        }
    }
    out
}

pub fn buffer_bound(n: usize) -> usize {
    4 * n + 2
}

pub fn check_buffer_bound(view: &TraceView<'_>) -> Verdict {
    let prop = Property::BufferBound;
    let bound = buffer_bound(view.params.committee.n);
    let mut high = 0;
    for (i, rec) in view.trace.records.iter().enumerate() {
        if let TraceEvent::Buffer { p, size } = rec.e {
            if !view.is_correct(p) {
                continue;
            }
            if size > bound {
                return Verdict::fail(
                    prop,
                    i,
                    format!("{p} buffers {size} messages > 4n+2 = {bound}"),
                );
            }
            high = high.max(size);
        }
    }
    Verdict::pass(prop, format!("high-water {high} ≤ {bound}"))
}

/// Correct bakers that start a level (at or after τ) in a round no later
/// than the scenario's `sync_round` r must decide it by the end of round
/// r+f+1, or of round r when there are no Byzantine processes.
pub fn check_termination(view: &TraceView<'_>) -> Verdict {
    let prop = Property::Termination;
    let scenario = view.scenario();
    let Some(r) = scenario.oracles.sync_round else {
        return Verdict::inconclusive(prop, "scenario declares no sync_round");
    };
    let bound = if scenario.adversary.byzantine.is_empty() {
        r
    } else {
        r + scenario.protocol.f as Round + 1
    };
    let tau = scenario.sim.gst;
    // (p, level) -> whether the level is under check
    let mut tracked: HashMap<(ProcessId, Level), bool> = HashMap::new();
    let mut settled = 0usize;
    let mut max_round = 0;
    let mut levels: HashMap<ProcessId, usize> = HashMap::new();
    let mut next_update = 0;
    for (i, rec) in view.trace.records.iter().enumerate() {
        match &rec.e {
            TraceEvent::Phase {
                p,
                level,
                round,
                baker,
                ..
            } if view.is_correct(*p) => {
                let checked = *tracked
                    .entry((*p, *level))
                    .or_insert(rec.t >= tau && *baker && *round <= r);
                if checked && *round > bound {
                    return Verdict::fail(
                        prop,
                        i,
                        format!("{p} reached round {round} at level {level} without deciding (bound {bound})"),
                    );
                }
            }
            TraceEvent::Decide {
                p, level, round, ..
            }
            | TraceEvent::HeadSwap {
                p,
                level,
                new_round: round,
                ..
            } if view.is_correct(*p) && tracked.get(&(*p, *level)) == Some(&true) => {
                max_round = max_round.max(*round);
            }
            _ => {}
        }
        while next_update < view.updates.len() && view.updates[next_update].index <= i {
            let u = &view.updates[next_update];
            next_update += 1;
            let len = u.chain.len();
            let before = levels.insert(u.p, len).unwrap_or(1);
            for level in before..len {
                if tracked.get(&(u.p, level as Level)) == Some(&true) {
                    settled += 1;
                }
            }
        }
    }
    if settled == 0 {
        return Verdict::inconclusive(prop, "no tracked level was decided before the trace ended");
    }
    Verdict::pass(
        prop,
        format!("{settled} baker-levels decided, highest decision round {max_round} ≤ {bound}"),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RecoveryBound {
    pub tau: Time,
    /// Highest level decided by a correct process at τ.
    pub level: Level,
    /// Start of the level after it.
    pub t1: Time,
    pub delta_pull: Time,
    pub r: Round,
    pub r_prime: Round,
    pub bound: Time,
}

/// max(Δerr, I + Δpull + Δ(r), Δ(r′) + Δ(r′+1)) with
/// r = Δinv(τ + I + Δpull − t¹) and r′ = Δinv(τ − t¹). Negative offsets
/// (τ before t¹) count as round 1.
pub fn recovery_bound_formula(
    d: &DurationFn,
    delta_err: Time,
    pull_interval: Time,
    delta_pull: Time,
    tau: Time,
    t1: Time,
) -> (Round, Round, Time) {
    let r = d.delta_inv((tau + pull_interval + delta_pull - t1).max(0));
    let r_prime = d.delta_inv((tau - t1).max(0));
    let bound = delta_err
        .max(pull_interval + delta_pull + d.round_duration(r))
        .max(d.round_duration(r_prime) + d.round_duration(r_prime + 1));
    (r, r_prime, bound)
}

pub fn recovery_bound(view: &TraceView<'_>) -> RecoveryBound {
    let s = view.scenario();
    let tau = s.sim.gst;
    let chain = view.longest_chain_at(tau);
    let d = &view.params.durations;
    let t1 = level_start(&chain, s.protocol.t0, d);
    let delta_pull = 2 * s.sim.delta;
    let (r, r_prime, bound) = recovery_bound_formula(
        d,
        s.sim.delta_err,
        s.protocol.pull_interval,
        delta_pull,
        tau,
        t1,
    );
    RecoveryBound {
        tau,
        level: chain.len() as Level - 1,
        t1,
        delta_pull,
        r,
        r_prime,
        bound,
    }
}

/// First time T ≥ τ at which every correct process has just entered the
/// proposal phase of the same (level, round), with the index of the last
/// record at T.
pub fn measured_recovery(view: &TraceView<'_>) -> Option<(Time, usize)> {
    let tau = view.scenario().sim.gst;
    let recs = &view.trace.records;
    let mut last: HashMap<ProcessId, (Time, Level, Round, Phase, Time)> = HashMap::new();
    let mut i = 0;
    while i < recs.len() {
        let t = recs[i].t;
        while i < recs.len() && recs[i].t == t {
            if let TraceEvent::Phase {
                p,
                level,
                round,
                phase,
                offset,
                ..
            } = recs[i].e
            {
                if view.is_correct(p) {
                    last.insert(p, (recs[i].t, level, round, phase, offset));
                }
            }
            i += 1;
        }
        if t < tau || last.len() < view.correct.len() {
            continue;
        }
        let mut it = last.values();
        let first = *it.next()?;
        let (_, level, round, _, _) = first;
        let synced = last.values().all(|&(at, l, r, ph, off)| {
            at == t && l == level && r == round && ph == Phase::Propose && off == 0
        });
        if synced {
            return Some((t, i - 1));
        }
    }
    None
}

/// Measured Δrt against the recovery bound; assumes no clock skew after τ.
pub fn check_recovery(view: &TraceView<'_>) -> Verdict {
    let prop = Property::RecoveryBound;
    let s = view.scenario();
    if s.sim.rho != 0 {
        return Verdict::inconclusive(prop, "the recovery bound assumes ρ = 0");
    }
    let b = recovery_bound(view);
    match measured_recovery(view) {
        Some((t, i)) => {
            let rt = t - b.tau;
            if rt <= b.bound {
                Verdict::pass(
                    prop,
                    format!(
                        "Δrt = {rt} ≤ bound {} (r = {}, r′ = {})",
                        b.bound, b.r, b.r_prime
                    ),
                )
            } else {
                Verdict::fail(
                    prop,
                    i,
                    format!(
                        "Δrt = {rt} > bound {} (r = {}, r′ = {})",
                        b.bound, b.r, b.r_prime
                    ),
                )
            }
        }
        None => {
            let end = view.trace.end_time();
            if end >= b.tau + b.bound && view.end_reason() == Some(EndReason::Horizon) {
                Verdict::fail(
                    prop,
                    view.trace.records.len().saturating_sub(1),
                    format!("not synchronized by τ + {} = {}", b.bound, b.tau + b.bound),
                )
            } else {
                Verdict::inconclusive(prop, "trace ended before correct processes synchronized")
            }
        }
    }
}

/// Default checkpoint spacing: two levels of f+2 rounds each.
pub fn default_progress_window(params: &ProtocolParams) -> Time {
    let f = params.committee.f as Round;
    2 * params.durations.level_duration(f + 2)
}

/// After τ plus the recovery allowance, every correct process's decided
/// level grows across consecutive checkpoints. The first window also
/// covers f+1 rounds past the round in progress at its start. A run that
/// stops at its target level counts its final partial window as growth.
pub fn check_progress(view: &TraceView<'_>) -> Verdict {
    let prop = Property::Progress;
    let s = view.scenario();
    let d = &view.params.durations;
    let f = view.params.committee.f as Round;
    let start = s.sim.gst + recovery_bound(view).bound;
    let window = s
        .oracles
        .progress_window
        .unwrap_or_else(|| default_progress_window(&view.params));
    let end = view.trace.end_time();
    let target_reached = view.end_reason() == Some(EndReason::Target);

    let longest = view.longest_chain_at(start);
    let ls = level_start(&longest, s.protocol.t0, d);
    let r = d.delta_inv((start - ls).max(0));
    let first = window
        .max(d.round_start_offset(r + f + 2) - d.round_start_offset(r) + s.protocol.pull_interval);

    let mut checked = 0;
    let mut a = start;
    let mut len = first;
    loop {
        let b = a + len;
        let complete = b <= end;
        if !complete && !(target_reached && a < end) {
            break;
        }
        let before = view.chains_at(a);
        let after = view.chains_at(b.min(end));
        for (p, c) in &before {
            let grew = after[p].len() > c.len();
            if !grew && complete {
                let idx = view
                    .trace
                    .records
                    .iter()
                    .rposition(|r| r.t <= b)
                    .unwrap_or(0);
                return Verdict::fail(
                    prop,
                    idx,
                    format!(
                        "{p} stayed at level {} between t={a} and t={b}",
                        c.len() - 1
                    ),
                );
            }
        }
        checked += 1;
        if !complete {
            break;
        }
        a = b;
        len = window;
    }
    if checked == 0 {
        if target_reached {
            return Verdict::pass(prop, "target level reached before the first checkpoint");
        }
        return Verdict::inconclusive(prop, format!("no complete window after t={start}"));
    }
    Verdict::pass(
        prop,
        format!("{checked} windows from t={start}, spacing {window}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;

    const BASE: &str = r#"
name = "v"
[sim]
seed = 11
delta = 10000
horizon = 30000000
target_level = 6
[protocol]
n = 4
f = 1
k = 2
universe = 5
pull_interval = 200000
[protocol.durations]
base = 30000
lin_step = 30000
[oracles]
sync_round = 1
"#;

    fn run(text: &str) -> Trace {
        sim::run(&Scenario::from_toml(text).unwrap()).unwrap()
    }

    #[test]
    fn fault_free_trace_passes_everything() {
        let t = run(BASE);
        for v in check(&t, &Property::ALL).unwrap() {
            assert_eq!(v.outcome, Outcome::Pass, "{v:?}");
        }
    }

    #[test]
    fn recovery_is_immediate_when_synchronized_from_the_start() {
        let t = run(BASE);
        let view = TraceView::new(&t).unwrap();
        assert_eq!(measured_recovery(&view).map(|x| x.0), Some(0));
    }

    #[test]
    fn recovery_bound_monotone_in_pull_interval() {
        let d = DurationFn::new(Scenario::from_toml(BASE).unwrap().protocol.durations).unwrap();
        for tau in [0, 50_000, 400_000, 1_000_000] {
            let mut prev = 0;
            for i in [0, 10_000, 100_000, 500_000, 2_000_000] {
                let (_, _, b) = recovery_bound_formula(&d, 5000, i, 20_000, tau, 0);
                assert!(b >= prev);
                prev = b;
            }
        }
    }

    #[test]
    fn recovery_bound_by_hand() {
        // Δ'(r) = 30, 60, 120, 240 ms; Δ(r) = 90, 180, 360, 720 ms;
        // round starts 0, 90, 270, 630, 1350 ms.
        let d = DurationFn::new(Scenario::from_toml(BASE).unwrap().protocol.durations).unwrap();
        // τ − t¹ = 100 ms → r′ = 2; τ + I + 2δ − t¹ = 320 ms → r = 3
        let (r, rp, b) = recovery_bound_formula(&d, 5000, 200_000, 20_000, 100_000, 0);
        assert_eq!((r, rp), (3, 2));
        // Δ(2) + Δ(3) = 540 ms is the smaller term
        assert_eq!(b, 200_000 + 20_000 + 360_000);
    }

    #[test]
    fn termination_needs_declared_sync_round() {
        let t = run(&BASE.replace("sync_round = 1", ""));
        let v = check(&t, &[Property::Termination]).unwrap();
        assert_eq!(v[0].outcome, Outcome::Inconclusive);
    }

    #[test]
    fn short_horizon_is_inconclusive_not_failure() {
        let t = run(&BASE.replace("horizon = 30000000", "horizon = 50000"));
        let v = check(&t, &[Property::Termination, Property::Progress]).unwrap();
        assert!(
            v.iter().all(|v| v.outcome == Outcome::Inconclusive),
            "{v:?}"
        );
        let safety = check(&t, &Property::SAFETY).unwrap();
        assert!(safety.iter().all(|v| v.outcome == Outcome::Pass));
    }
}
