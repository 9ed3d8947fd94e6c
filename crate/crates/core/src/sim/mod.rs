//! Discrete-event network simulator.
//!
//! Virtual time is integer µs. Before τ a message is dropped with the
//! scenario's loss rate (always, if either end is isolated) and otherwise
//! takes 1..=10δ; from τ on every message arrives within 1..=δ. Broadcasts
//! include the sender, whose copy goes through the same channel. Runs are
//! a pure function of the scenario, seed included.

mod adversary;
pub mod clock;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use adversary::ByzantineNode;
pub use clock::Clock;

use crate::chain::Chain;
use crate::consensus::ProposalOrCertificate;
use crate::driver::{Effect, InputEvent, Observation, ProcessNode, ProtocolParams, TimerKind};
use crate::scenario::{ConfigError, Scenario};
use crate::trace::{EndReason, Hex, Trace, TraceEvent};
use crate::types::{Digest, FastHash, Message, ProcessId, QuorumCertificate, Signature, Time};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A process emitted a signature it could not have produced.
    #[error("process {p} at t={t}: {detail}")]
    Forgery {
        p: ProcessId,
        t: Time,
        detail: String,
    },
}

enum Actor {
    Correct(Box<ProcessNode>),
    Byzantine(Box<ByzantineNode>),
}

impl Actor {
    fn apply(&mut self, ev: InputEvent, now: Time) -> Vec<Effect> {
        match self {
            Actor::Correct(n) => n.apply(ev, now),
            Actor::Byzantine(b) => b.apply(ev, now),
        }
    }

    fn decided_len(&self) -> usize {
        match self {
            Actor::Correct(n) => n.chain().len(),
            Actor::Byzantine(b) => b.inner().chain().len(),
        }
    }
}

enum Delivery {
    Start,
    Timer { kind: TimerKind, token: u64 },
    Message { id: u64, msg: Arc<Message> },
    // boxed to keep queue entries small
    Chain(Box<(Chain, Option<ProposalOrCertificate>)>),
    PullRequest { from: ProcessId },
}

struct Queued {
    time: Time,
    seq: u64,
    to: usize,
    what: Delivery,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(o.time, o.seq))
    }
}

pub struct Simulation {
    scenario: Scenario,
    actors: Vec<Actor>,
    clocks: Vec<Clock>,
    correct: Vec<bool>,
    isolated: Vec<bool>,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    next_msg_id: u64,
    issued: HashSet<Signature, FastHash>,
    /// Blocks whose certificates already passed the signature check.
    vetted: HashSet<Digest, FastHash>,
    trace: Trace,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Simulation, SimError> {
        scenario.validate()?;
        let params: Arc<ProtocolParams> = scenario.params()?;
        let sim = &scenario.sim;
        let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
        let universe = scenario.universe();
        let strategies: HashMap<u32, _> = scenario
            .adversary
            .byzantine
            .iter()
            .map(|b| (b.id, b.strategy))
            .collect();
        let mut actors = Vec::with_capacity(universe.len());
        let mut clocks = Vec::with_capacity(universe.len());
        let mut correct = Vec::with_capacity(universe.len());
        for &p in &universe {
            clocks.push(Clock::sample(&mut rng, sim.gst, sim.delta_err, sim.rho));
            let node = ProcessNode::new(p, params.clone());
            match strategies.get(&p.0) {
                Some(&s) => {
                    let brng = ChaCha8Rng::seed_from_u64(rng.gen());
                    actors.push(Actor::Byzantine(Box::new(ByzantineNode::new(
                        node,
                        s,
                        universe.clone(),
                        brng,
                    ))));
                    correct.push(false);
                }
                None => {
                    actors.push(Actor::Correct(Box::new(node)));
                    correct.push(true);
                }
            }
        }
        let mut isolated = vec![false; universe.len()];
        for &i in &scenario.adversary.isolated {
            isolated[i as usize] = true;
        }
        let mut s = Simulation {
            scenario: scenario.clone(),
            actors,
            clocks,
            correct,
            isolated,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            next_msg_id: 0,
            issued: HashSet::default(),
            vetted: HashSet::default(),
            trace: Trace::new(scenario.clone()),
        };
        for &p in &universe {
            let c = s.clocks[p.0 as usize];
            s.trace.push(
                scenario.protocol.t0.min(scenario.start_time(p)),
                TraceEvent::Started {
                    p,
                    pre_gst_skew: c.pre_gst,
                    post_gst_skew: c.post_gst,
                },
            );
            s.enqueue(scenario.start_time(p), p.0 as usize, Delivery::Start);
        }
        Ok(s)
    }

    fn enqueue(&mut self, time: Time, to: usize, what: Delivery) {
        self.seq += 1;
        self.queue.push(Reverse(Queued {
            time,
            seq: self.seq,
            to,
            what,
        }));
    }

    /// Arrival time of a point-to-point send, or `None` if it is lost.
    fn transit(&mut self, now: Time, from: usize, to: usize) -> Option<Time> {
        let sim = &self.scenario.sim;
        let delta = sim.delta;
        if now < sim.gst {
            if self.isolated[from] || self.isolated[to] {
                return None;
            }
            let loss = sim.loss_rate;
            if loss > 0.0 && self.rng.gen_bool(loss) {
                return None;
            }
            Some(now + self.rng.gen_range(1..=10 * delta))
        } else {
            Some(now + self.rng.gen_range(1..=delta))
        }
    }

    fn reached_target(&self) -> bool {
        let Some(target) = self.scenario.sim.target_level else {
            return false;
        };
        self.actors
            .iter()
            .zip(&self.correct)
            .filter(|(_, c)| **c)
            .all(|(a, _)| a.decided_len() as u64 > target)
    }

    pub fn run(mut self) -> Result<Trace, SimError> {
        let horizon = self.scenario.sim.horizon;
        loop {
            let Some(Reverse(q)) = self.queue.pop() else {
                self.trace.push(
                    horizon,
                    TraceEvent::End {
                        reason: EndReason::Horizon,
                    },
                );
                break;
            };
            if q.time > horizon {
                self.trace.push(
                    horizon,
                    TraceEvent::End {
                        reason: EndReason::Horizon,
                    },
                );
                break;
            }
            let t = q.time;
            self.step(q)?;
            if self.reached_target() {
                self.trace.push(
                    t,
                    TraceEvent::End {
                        reason: EndReason::Target,
                    },
                );
                break;
            }
        }
        Ok(self.trace)
    }

    fn step(&mut self, q: Queued) -> Result<(), SimError> {
        let t = q.time;
        let p = ProcessId(q.to as u32);
        let event = match q.what {
            Delivery::Start => InputEvent::Start,
            Delivery::Timer { kind, token } => InputEvent::Timer { kind, token },
            Delivery::Message { id, msg } => {
                self.trace.push(t, TraceEvent::Deliver { p, id });
                InputEvent::NewMessage(msg)
            }
            Delivery::Chain(c) => {
                let (chain, poc) = *c;
                InputEvent::NewChain { chain, poc }
            }
            Delivery::PullRequest { from } => InputEvent::PullRequest { from },
        };
        let now = self.clocks[q.to].local(t);
        let effects = self.actors[q.to].apply(event, now);
        for e in effects {
            self.effect(t, q.to, e)?;
        }
        Ok(())
    }

    fn effect(&mut self, t: Time, from: usize, e: Effect) -> Result<(), SimError> {
        let p = ProcessId(from as u32);
        match e {
            Effect::Broadcast(msg) => {
                let all: Vec<usize> = (0..self.actors.len()).collect();
                self.send(t, from, msg, &all)?;
            }
            Effect::Multicast { to, msg } => {
                let to: Vec<usize> = to
                    .iter()
                    .map(|q| q.0 as usize)
                    .filter(|&q| q < self.actors.len())
                    .collect();
                self.send(t, from, msg, &to)?;
            }
            Effect::Pull => {
                for to in 0..self.actors.len() {
                    if to != from {
                        if let Some(at) = self.transit(t, from, to) {
                            self.enqueue(at, to, Delivery::PullRequest { from: p });
                        }
                    }
                }
            }
            Effect::SendChain { to, chain, poc } => {
                if !self.correct[from] {
                    self.check_chain(t, from, &chain, poc.as_ref())?;
                }
                let to = to.0 as usize;
                if to < self.actors.len() {
                    if let Some(at) = self.transit(t, from, to) {
                        self.enqueue(at, to, Delivery::Chain(Box::new((chain, poc))));
                    }
                }
            }
            Effect::Schedule { kind, token, delay } => {
                self.enqueue(t + delay.max(0), from, Delivery::Timer { kind, token });
            }
            Effect::Observe(o) => {
                if self.correct[from] {
                    self.observe(t, p, o);
                }
            }
        }
        Ok(())
    }

    fn send(
        &mut self,
        t: Time,
        from: usize,
        msg: Arc<Message>,
        to: &[usize],
    ) -> Result<(), SimError> {
        self.check_message(t, from, &msg)?;
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        let p = ProcessId(from as u32);
        self.trace.push(
            t,
            TraceEvent::Send {
                p,
                id,
                msg: Hex(msg.clone()),
            },
        );
        for &r in to {
            match self.transit(t, from, r) {
                Some(at) => self.enqueue(
                    at,
                    r,
                    Delivery::Message {
                        id,
                        msg: msg.clone(),
                    },
                ),
                None => self.trace.push(
                    t,
                    TraceEvent::Drop {
                        p: ProcessId(r as u32),
                        id,
                    },
                ),
            }
        }
        Ok(())
    }

    fn forgery<T>(&self, t: Time, from: usize, detail: String) -> Result<T, SimError> {
        Err(SimError::Forgery {
            p: ProcessId(from as u32),
            t,
            detail,
        })
    }

    /// A signature is acceptable if the emitter is its owner, or if its
    /// owner already emitted it.
    fn check_signature(
        &mut self,
        t: Time,
        from: usize,
        sig: &Signature,
        what: &str,
    ) -> Result<(), SimError> {
        if sig.signer.0 as usize == from {
            self.issued.insert(*sig);
            Ok(())
        } else if self.issued.contains(sig) {
            Ok(())
        } else {
            self.forgery(
                t,
                from,
                format!("{what} carries a signature of {} never issued", sig.signer),
            )
        }
    }

    fn check_qc_votes(
        &mut self,
        t: Time,
        from: usize,
        qc: &QuorumCertificate,
    ) -> Result<(), SimError> {
        for v in &qc.votes {
            self.check_signature(t, from, v, "certificate")?;
        }
        Ok(())
    }

    fn check_message(&mut self, t: Time, from: usize, msg: &Message) -> Result<(), SimError> {
        if !msg.is_authentic() {
            return self.forgery(
                t,
                from,
                "message signature does not match its content".into(),
            );
        }
        self.check_signature(t, from, &msg.sig, "message")?;
        for qc in msg.certificates() {
            self.check_qc_votes(t, from, qc)?;
        }
        Ok(())
    }

    fn check_chain(
        &mut self,
        t: Time,
        from: usize,
        chain: &Chain,
        poc: Option<&ProposalOrCertificate>,
    ) -> Result<(), SimError> {
        for (b, hash) in chain.blocks().iter().zip(chain.hashes()) {
            if self.vetted.contains(hash) {
                continue;
            }
            let h = &b.header;
            for qc in h.eqc.iter().chain(h.pqc.iter()) {
                self.check_qc_votes(t, from, qc)?;
            }
            self.vetted.insert(*hash);
        }
        match poc {
            Some(ProposalOrCertificate::Proposal(m)) => self.check_message(t, from, m),
            Some(ProposalOrCertificate::Certificate(qc)) => self.check_qc_votes(t, from, qc),
            None => Ok(()),
        }
    }

    fn observe(&mut self, t: Time, p: ProcessId, o: Observation) {
        let e = match o {
            Observation::Phase {
                level,
                round,
                phase,
                phase_offset,
                locked_round,
                endorsable_round,
                baker,
            } => TraceEvent::Phase {
                p,
                level,
                round,
                phase,
                offset: phase_offset,
                locked_round,
                endorsable_round,
                baker,
            },
            Observation::Decide {
                level,
                round,
                block,
                qc,
            } => TraceEvent::Decide {
                p,
                level,
                round,
                block: Hex(block),
                qc: Hex(qc),
            },
            Observation::Adopt {
                kept,
                blocks,
                certificate,
            } => TraceEvent::Adopt {
                p,
                kept,
                blocks: blocks.into_iter().map(Hex).collect(),
                certificate: Hex(certificate),
            },
            Observation::HeadSwap {
                level,
                old_round,
                new_round,
                block,
                certificate,
            } => TraceEvent::HeadSwap {
                p,
                level,
                old_round,
                new_round,
                block: Hex(block),
                certificate: Hex(certificate),
            },
            Observation::BufferSize(size) => TraceEvent::Buffer { p, size },
            Observation::PullRequested { out_of_band } => TraceEvent::Pull { p, out_of_band },
            Observation::ChainReceived { outcome, fault } => {
                TraceEvent::ChainRejected { p, outcome, fault }
            }
        };
        self.trace.push(t, e);
    }
}

/// Runs one scenario to completion.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    Simulation::new(scenario)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Strategy;

    pub(crate) const HAPPY: &str = r#"
name = "happy"
[sim]
seed = 3
delta = 10000
rho = 1000
horizon = 20000000
target_level = 8
[protocol]
n = 4
f = 1
k = 2
universe = 5
pull_interval = 200000
[protocol.durations]
base = 30000
lin_step = 30000
"#;

    fn decides(trace: &Trace) -> Vec<(ProcessId, u64, u64)> {
        trace
            .records
            .iter()
            .filter_map(|r| match &r.e {
                TraceEvent::Decide {
                    p, level, round, ..
                } => Some((*p, *level, *round)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn synchronous_run_decides_every_level_in_round_one() {
        let s = Scenario::from_toml(HAPPY).unwrap();
        let trace = run(&s).unwrap();
        assert!(matches!(
            trace.records.last().unwrap().e,
            TraceEvent::End {
                reason: EndReason::Target
            }
        ));
        let d = decides(&trace);
        assert!(!d.is_empty());
        assert!(d.iter().all(|&(_, _, r)| r == 1), "{d:?}");
        for p in s.correct_ids() {
            let mut levels: Vec<_> = d.iter().filter(|x| x.0 == p).map(|x| x.1).collect();
            levels.dedup();
            assert_eq!(levels, (1..=8).collect::<Vec<_>>(), "process {p}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let s = Scenario::from_toml(HAPPY).unwrap();
        assert_eq!(run(&s).unwrap().to_jsonl(), run(&s).unwrap().to_jsonl());
        let mut other = s.clone();
        other.sim.seed = 4;
        assert_ne!(run(&s).unwrap().to_jsonl(), run(&other).unwrap().to_jsonl());
    }

    #[test]
    fn every_strategy_runs_without_forgery() {
        for st in Strategy::ALL {
            let mut s = Scenario::from_toml(HAPPY).unwrap();
            s.adversary.byzantine = vec![crate::scenario::ByzantineSpec {
                id: 1,
                strategy: st,
            }];
            s.sim.gst = 500_000;
            s.sim.loss_rate = 0.3;
            s.sim.delta_err = 5000;
            let trace = run(&s).unwrap_or_else(|e| panic!("{st}: {e}"));
            assert!(decides(&trace).iter().any(|x| x.1 >= 8), "{st} stalled");
        }
    }
}
