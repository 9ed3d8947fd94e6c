//! Byzantine behaviours. Each wraps an honest node and rewrites its
//! effects; every strategy signs only as itself.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chain::Chain;
use crate::consensus::ProposalOrCertificate;
use crate::driver::{Effect, InputEvent, Observation, ProcessNode};
use crate::scenario::Strategy;
use crate::types::{
    Block, BlockHeader, Digest, Message, Payload, ProcessId, Proposal, QcClaim, QcKind,
    QuorumCertificate, Signer, Time, Value,
};

const STASH: usize = 64;
const REPLAYS_PER_PHASE: usize = 8;
/// Nonce bit marking adversarial values, so they never collide with the
/// wrapped node's own counter.
const FORGED_NONCE: u64 = 1 << 62;

pub struct ByzantineNode {
    inner: ProcessNode,
    strategy: Strategy,
    signer: Signer,
    rng: ChaCha8Rng,
    universe: Vec<ProcessId>,
    stash: VecDeque<Arc<Message>>,
    counter: u64,
    /// Fake extension served to every puller until our own head moves.
    garbage: Option<(Digest, Chain, Option<QuorumCertificate>)>,
}

impl ByzantineNode {
    pub fn new(
        inner: ProcessNode,
        strategy: Strategy,
        universe: Vec<ProcessId>,
        rng: ChaCha8Rng,
    ) -> Self {
        ByzantineNode {
            signer: Signer::new(inner.id()),
            inner,
            strategy,
            rng,
            universe,
            stash: VecDeque::new(),
            counter: 0,
            garbage: None,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn inner(&self) -> &ProcessNode {
        &self.inner
    }

    pub fn apply(&mut self, event: InputEvent, now: Time) -> Vec<Effect> {
        match self.strategy {
            Strategy::Silent => Vec::new(),
            Strategy::Equivocator => {
                let fx = self.inner.apply(event, now);
                self.equivocate(fx)
            }
            Strategy::DoubleVoter => {
                let fx = self.inner.apply(event, now);
                self.double_vote(fx)
            }
            Strategy::StaleSpammer => {
                if let InputEvent::NewMessage(m) = &event {
                    if self.stash.len() == STASH {
                        self.stash.pop_front();
                    }
                    self.stash.push_back(m.clone());
                }
                let fx = self.inner.apply(event, now);
                self.replay_stale(fx)
            }
            Strategy::FutureLiar => {
                if let InputEvent::PullRequest { from } = event {
                    return vec![self.garbage_chain(from)];
                }
                let fx = self.inner.apply(event, now);
                self.lie_about_future(fx)
            }
        }
    }

    fn forged_value(&mut self, level: u64, round: u64) -> Value {
        self.counter += 1;
        Value {
            creator: self.signer.id(),
            level,
            round,
            nonce: FORGED_NONCE | self.counter,
        }
    }

    fn equivocate(&mut self, fx: Vec<Effect>) -> Vec<Effect> {
        let mut out = Vec::with_capacity(fx.len() + 1);
        for e in fx {
            let Effect::Broadcast(m) = &e else {
                out.push(e);
                continue;
            };
            let Some(p) = m.proposal() else {
                out.push(e);
                continue;
            };
            let alt_value = self.forged_value(m.level, m.round);
            let alt = self.signer.message(
                m.level,
                m.round,
                m.pred_hash,
                Payload::Propose(Proposal {
                    eqc: p.eqc.clone(),
                    value: alt_value,
                    endorsable_round: 0,
                    pqc: None,
                }),
            );
            let half = self.universe.len() / 2;
            out.push(Effect::Multicast {
                to: self.universe[..half].to_vec(),
                msg: m.clone(),
            });
            out.push(Effect::Multicast {
                to: self.universe[half..].to_vec(),
                msg: Arc::new(alt),
            });
        }
        out
    }

    fn double_vote(&mut self, fx: Vec<Effect>) -> Vec<Effect> {
        let mut out = Vec::with_capacity(fx.len() + 1);
        for e in fx {
            if let Effect::Broadcast(m) = &e {
                let other = match m.payload {
                    Payload::Preendorse(_) | Payload::Endorse(_) => {
                        let h = self.forged_value(m.level, m.round).hash();
                        Some(match m.payload {
                            Payload::Preendorse(_) => Payload::Preendorse(h),
                            _ => Payload::Endorse(h),
                        })
                    }
                    _ => None,
                };
                if let Some(payload) = other {
                    let extra = self.signer.message(m.level, m.round, m.pred_hash, payload);
                    out.push(e);
                    out.push(Effect::Broadcast(Arc::new(extra)));
                    continue;
                }
            }
            out.push(e);
        }
        out
    }

    fn replay_stale(&mut self, mut fx: Vec<Effect>) -> Vec<Effect> {
        let entered = fx.iter().find_map(|e| match e {
            Effect::Observe(Observation::Phase { level, round, .. }) => Some((*level, *round)),
            _ => None,
        });
        if let Some(now_at) = entered {
            let stale: Vec<_> = self
                .stash
                .iter()
                .filter(|m| (m.level, m.round) < now_at)
                .take(REPLAYS_PER_PHASE)
                .cloned()
                .collect();
            fx.extend(stale.into_iter().map(Effect::Broadcast));
        }
        fx
    }

    fn lie_about_future(&mut self, mut fx: Vec<Effect>) -> Vec<Effect> {
        let entered = fx
            .iter()
            .any(|e| matches!(e, Effect::Observe(Observation::Phase { .. })));
        if entered {
            let ahead = self.rng.gen_range(1..=3);
            let level = self.inner.level() + ahead;
            let pred = Digest::of(b"future", &self.counter.to_be_bytes());
            let junk = self.forged_value(level, 1).hash();
            let msg = self
                .signer
                .message(level, 1, pred, Payload::Preendorse(junk));
            fx.push(Effect::Broadcast(Arc::new(msg)));
        }
        fx
    }

    fn self_qc(&self, kind: QcKind, block: &Block) -> QuorumCertificate {
        let claim = QcClaim {
            kind,
            level: block.header.level,
            round: block.header.round,
            pred_hash: block.header.pred_hash,
            value_hash: block.contents.hash(),
        };
        QuorumCertificate::new(claim, vec![self.signer.vote(&claim)])
    }

    /// The real chain extended with blocks certified only by this process.
    fn garbage_chain(&mut self, to: ProcessId) -> Effect {
        let head = self.inner.chain().head_hash();
        if self.garbage.as_ref().is_none_or(|(h, _, _)| *h != head) {
            let mut blocks = Vec::new();
            let mut pred = head;
            let mut cert = self.inner.head_certificate().cloned();
            let extra = self.rng.gen_range(1..=3);
            for i in 0..extra {
                let level = self.inner.chain().len() as u64 + i;
                let block = Block {
                    header: BlockHeader {
                        level,
                        round: 1,
                        pred_hash: pred,
                        eqc: if level >= 2 { cert.clone() } else { None },
                        endorsable_round: 0,
                        pqc: None,
                    },
                    contents: self.forged_value(level, 1),
                };
                cert = Some(self.self_qc(QcKind::Endorsement, &block));
                pred = block.hash();
                blocks.push(block);
            }
            let chain = self.inner.chain().spliced(usize::MAX, blocks);
            self.garbage = Some((head, chain, cert));
        }
        let (_, chain, cert) = self.garbage.as_ref().expect("just built");
        Effect::SendChain {
            to,
            chain: chain.clone(),
            poc: cert.clone().map(ProposalOrCertificate::Certificate),
        }
    }
}
