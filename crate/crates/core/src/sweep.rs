//! Many independent simulations, each checked by the oracles. With the
//! `parallel` feature runs are spread over a rayon pool; every run is
//! deterministic, so the report does not depend on scheduling.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::metrics::metrics;
use crate::scenario::{Property, Scenario};
use crate::sim;
use crate::types::{Level, Round, Time};
use crate::verifier::{check_property, Outcome, TraceView, Verdict};

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    /// Set when the run could not be simulated or checked.
    pub error: Option<String>,
    pub verdicts: Vec<Verdict>,
    pub min_decided_level: Level,
    pub max_decision_round: Round,
    pub buffer_high_water: usize,
    pub measured_recovery: Option<Time>,
}

impl RunSummary {
    pub fn outcome(&self, p: Property) -> Option<Outcome> {
        self.verdicts
            .iter()
            .find(|v| v.property == p)
            .map(|v| v.outcome)
    }
}

pub fn run_one(s: &Scenario, props: &[Property]) -> RunSummary {
    let mut out = RunSummary {
        label: s.label(),
        seed: s.sim.seed,
        error: None,
        verdicts: Vec::new(),
        min_decided_level: 0,
        max_decision_round: 0,
        buffer_high_water: 0,
        measured_recovery: None,
    };
    let trace = match sim::run(s) {
        Ok(t) => t,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let view = match TraceView::new(&trace) {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.verdicts = props.iter().map(|&p| check_property(&view, p)).collect();
    let m = metrics(&view);
    out.min_decided_level = m.min_decided_level;
    out.max_decision_round = m.max_decision_round;
    out.buffer_high_water = m.buffer_high_water.values().copied().max().unwrap_or(0);
    out.measured_recovery = m.measured_recovery;
    out
}

pub fn run_sequential(scenarios: &[Scenario], props: &[Property]) -> Vec<RunSummary> {
    scenarios.iter().map(|s| run_one(s, props)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_parallel(
    scenarios: &[Scenario],
    props: &[Property],
    jobs: Option<usize>,
) -> Vec<RunSummary> {
    use rayon::prelude::*;
    let go = || scenarios.par_iter().map(|s| run_one(s, props)).collect();
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .expect("thread pool")
            .install(go),
        None => go(),
    }
}

/// Runs every scenario; `jobs` caps the worker count (all cores if unset).
/// Without the `parallel` feature this is sequential.
pub fn run_all(scenarios: &[Scenario], props: &[Property], jobs: Option<usize>) -> Vec<RunSummary> {
    #[cfg(feature = "parallel")]
    if jobs != Some(1) {
        return run_parallel(scenarios, props, jobs);
    }
    let _ = jobs;
    run_sequential(scenarios, props)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GroupReport {
    pub runs: usize,
    pub errors: usize,
    pub properties: BTreeMap<Property, Tally>,
    /// Count of runs per highest decision round.
    pub decision_rounds: BTreeMap<Round, usize>,
    pub buffer_high_water: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepReport {
    pub total: GroupReport,
    /// Keyed by the run label (the varied parameters).
    pub groups: BTreeMap<String, GroupReport>,
}

impl GroupReport {
    fn add(&mut self, r: &RunSummary) {
        self.runs += 1;
        if r.error.is_some() {
            self.errors += 1;
        }
        for v in &r.verdicts {
            let t = self.properties.entry(v.property).or_default();
            match v.outcome {
                Outcome::Pass => t.pass += 1,
                Outcome::Fail => t.fail += 1,
                Outcome::Inconclusive => t.inconclusive += 1,
            }
        }
        *self
            .decision_rounds
            .entry(r.max_decision_round)
            .or_default() += 1;
        self.buffer_high_water = self.buffer_high_water.max(r.buffer_high_water);
    }

    pub fn failures(&self) -> usize {
        self.errors + self.properties.values().map(|t| t.fail).sum::<usize>()
    }

    pub fn inconclusive(&self) -> usize {
        self.properties.values().map(|t| t.inconclusive).sum()
    }
}

pub fn summarize(runs: &[RunSummary]) -> SweepReport {
    let mut rep = SweepReport::default();
    for r in runs {
        rep.total.add(r);
        rep.groups.entry(r.label.clone()).or_default().add(r);
    }
    rep
}
