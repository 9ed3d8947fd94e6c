//! Per-process state machine: level progression, phase timers, pulls and
//! chain adoption around the single-shot instance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{
    check_head_certificate, validate_blocks, Chain, ChainFault, CommitteeConfig, Committees,
};
use crate::consensus::{
    get_certificate, suggests_behind, Handled, InstanceCtx, InstanceState, ProposalOrCertificate,
};
use crate::synchronizer::{
    get_next_phase, level_start, synchronize_from, DurationFn, Phase, SyncError,
};
use crate::types::{
    Block, Digest, Genesis, Level, Message, ProcessId, QuorumCertificate, Round, Signer, Time,
    Value,
};

/// Protocol parameters every correct process agrees on.
#[derive(Clone, Debug)]
pub struct ProtocolParams {
    pub genesis: Genesis,
    pub genesis_block: Block,
    pub genesis_hash: Digest,
    pub committee: Arc<CommitteeConfig>,
    pub durations: DurationFn,
    pub pull_interval: Time,
}

impl ProtocolParams {
    pub fn new(
        genesis: Genesis,
        committee: CommitteeConfig,
        durations: DurationFn,
        pull_interval: Time,
    ) -> Self {
        let genesis_block = genesis.block();
        let genesis_hash = genesis_block.hash();
        ProtocolParams {
            genesis,
            genesis_block,
            genesis_hash,
            committee: Arc::new(committee),
            durations,
            pull_interval,
        }
    }

    pub fn genesis_chain(&self) -> Chain {
        Chain::genesis(self.genesis_block.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerKind {
    PhaseEnd,
    Pull,
    /// Re-synchronization attempt while ahead.
    Retry,
}

#[derive(Clone, Debug)]
pub enum InputEvent {
    Start,
    Timer {
        kind: TimerKind,
        token: u64,
    },
    NewMessage(Arc<Message>),
    NewChain {
        chain: Chain,
        poc: Option<ProposalOrCertificate>,
    },
    PullRequest {
        from: ProcessId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainOutcome {
    Adopted,
    HeadSwapped,
    /// Shorter, identical, or not a better head.
    Ignored,
    NoJustification,
    Invalid,
}

#[derive(Clone, Debug)]
pub enum Observation {
    Phase {
        level: Level,
        round: Round,
        phase: Phase,
        phase_offset: Time,
        locked_round: Round,
        endorsable_round: Round,
        baker: bool,
    },
    Decide {
        level: Level,
        round: Round,
        block: Block,
        qc: QuorumCertificate,
    },
    /// A longer chain replaced ours: the first `kept` blocks stay.
    Adopt {
        kept: usize,
        blocks: Vec<Block>,
        certificate: QuorumCertificate,
    },
    HeadSwap {
        level: Level,
        old_round: Round,
        new_round: Round,
        block: Block,
        certificate: QuorumCertificate,
    },
    BufferSize(usize),
    PullRequested {
        out_of_band: bool,
    },
    ChainReceived {
        outcome: ChainOutcome,
        fault: Option<String>,
    },
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Effect {
    Broadcast(Arc<Message>),
    /// Point-to-point sends; used by adversaries only.
    Multicast {
        to: Vec<ProcessId>,
        msg: Arc<Message>,
    },
    Pull,
    SendChain {
        to: ProcessId,
        chain: Chain,
        poc: Option<ProposalOrCertificate>,
    },
    Schedule {
        kind: TimerKind,
        token: u64,
        delay: Time,
    },
    Observe(Observation),
}

const PULL_TOKEN: u64 = 0;

/// Instance context from disjoint node fields, so the instance itself can
/// be borrowed mutably alongside it.
macro_rules! ctx {
    ($node:expr) => {
        InstanceCtx {
            level: $node.chain.len() as Level,
            pred_hash: $node.chain.head_hash(),
            head: $node.chain.head(),
            head_certificate: $node.head_certificate.as_ref(),
            committee: &$node.committee,
            prev_committee: &$node.prev_committee,
            f: $node.params.committee.f,
        }
    };
}

pub struct ProcessNode {
    id: ProcessId,
    signer: Signer,
    params: Arc<ProtocolParams>,
    committees: Committees,
    chain: Chain,
    head_certificate: Option<QuorumCertificate>,
    level_start: Time,
    committee: Arc<[ProcessId]>,
    prev_committee: Arc<[ProcessId]>,
    instance: InstanceState,
    timer_token: u64,
    next_nonce: u64,
    last_oob_pull: Option<(Level, Round)>,
    /// Round-1 messages of the next level that reached us before we
    /// finished the current one; at most one per (sender, kind).
    early: Vec<Arc<Message>>,
    reported_buffer: usize,
    started: bool,
}

impl ProcessNode {
    pub fn new(id: ProcessId, params: Arc<ProtocolParams>) -> Self {
        let mut committees = Committees::new(params.committee.clone());
        let chain = params.genesis_chain();
        let committee = committees.at_level(&chain, 1).expect("genesis committee");
        ProcessNode {
            id,
            signer: Signer::new(id),
            committees,
            level_start: params.genesis.t0,
            prev_committee: committee.clone(),
            committee,
            chain,
            head_certificate: None,
            instance: InstanceState::new(),
            timer_token: PULL_TOKEN,
            next_nonce: 0,
            last_oob_pull: None,
            early: Vec::new(),
            reported_buffer: 0,
            started: false,
            params,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// ℓp: the level currently being decided.
    pub fn level(&self) -> Level {
        self.chain.len() as Level
    }

    pub fn head_hash(&self) -> Digest {
        self.chain.head_hash()
    }

    pub fn head_certificate(&self) -> Option<&QuorumCertificate> {
        self.head_certificate.as_ref()
    }

    pub fn instance(&self) -> &InstanceState {
        &self.instance
    }

    pub fn committee(&self) -> &[ProcessId] {
        &self.committee
    }

    pub fn is_baker(&self) -> bool {
        self.committee.contains(&self.id)
    }

    pub fn level_start(&self) -> Time {
        self.level_start
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn apply(&mut self, event: InputEvent, now: Time) -> Vec<Effect> {
        let mut fx = Vec::new();
        match event {
            InputEvent::Start => self.start(now, &mut fx),
            InputEvent::Timer { kind, token } => self.on_timer(kind, token, now, &mut fx),
            InputEvent::NewMessage(msg) => self.on_message(&msg, &mut fx),
            InputEvent::NewChain { chain, poc } => self.on_new_chain(chain, poc, now, &mut fx),
            InputEvent::PullRequest { from } => self.answer_pull(from, &mut fx),
        }
        let size = self.instance.buffer_len();
        if size != self.reported_buffer {
            self.reported_buffer = size;
            fx.push(Effect::Observe(Observation::BufferSize(size)));
        }
        fx
    }

    fn start(&mut self, now: Time, fx: &mut Vec<Effect>) {
        if self.started {
            return;
        }
        self.started = true;
        fx.push(Effect::Schedule {
            kind: TimerKind::Pull,
            token: PULL_TOKEN,
            delay: self.params.pull_interval,
        });
        let genesis = self.params.genesis_chain();
        self.update_state(genesis, None);
        self.instance.init();
        self.enter_instance(now, fx);
    }

    fn update_state(&mut self, chain: Chain, certificate: Option<QuorumCertificate>) {
        self.chain = chain;
        self.head_certificate = certificate;
        self.level_start = level_start(&self.chain, self.params.genesis.t0, &self.params.durations);
        let level = self.level();
        self.committee = self
            .committees
            .at_level(&self.chain, level)
            .expect("a chain of length ℓ determines the committee at ℓ");
        self.prev_committee = self
            .committees
            .at_level(&self.chain, level - 1)
            .expect("prefix committee");
    }

    fn new_token(&mut self) -> u64 {
        self.timer_token += 1;
        self.timer_token
    }

    fn enter_instance(&mut self, now: Time, fx: &mut Vec<Effect>) {
        let token = self.new_token();
        let d = &self.params.durations;
        let sync = match synchronize_from(self.level_start, now, d) {
            Ok(s) => s,
            Err(SyncError::ClockBeforeLevelStart { level_start, .. }) => {
                fx.push(Effect::Schedule {
                    kind: TimerKind::Retry,
                    token,
                    delay: level_start - now,
                });
                return;
            }
        };
        if self.instance.round > sync.round {
            // ahead: wait until our round starts on the local clock
            let target = d.round_start_offset(self.instance.round);
            let here = d.round_start_offset(sync.round) + sync.round_offset;
            fx.push(Effect::Schedule {
                kind: TimerKind::Retry,
                token,
                delay: (target - here).max(1),
            });
            return;
        }
        let pos = get_next_phase(sync.round, sync.round_offset, d);
        self.instance.set_round(sync.round);
        self.enter_phase(pos.phase, pos.phase_offset, token, fx);
    }

    fn enter_phase(&mut self, phase: Phase, phase_offset: Time, token: u64, fx: &mut Vec<Effect>) {
        self.instance.phase = phase;
        let round = self.instance.round;
        fx.push(Effect::Schedule {
            kind: TimerKind::PhaseEnd,
            token,
            delay: self.params.durations.phase_duration(round) - phase_offset,
        });
        let baker = self.is_baker();
        fx.push(Effect::Observe(Observation::Phase {
            level: self.level(),
            round,
            phase,
            phase_offset,
            locked_round: self.instance.locked_round(),
            endorsable_round: self.instance.endorsable_round(),
            baker,
        }));
        let signer = baker.then_some(self.signer);
        let sent = match phase {
            Phase::Propose => {
                let fresh = Value {
                    creator: self.id,
                    level: self.level(),
                    round,
                    nonce: self.next_nonce,
                };
                let out = self
                    .instance
                    .propose_action(&ctx!(self), signer.as_ref(), || fresh);
                if out
                    .iter()
                    .any(|m| m.proposal().is_some_and(|p| p.value == fresh))
                {
                    self.next_nonce += 1;
                }
                out
            }
            Phase::Preendorse => self
                .instance
                .preendorse_action(&ctx!(self), signer.as_ref()),
            Phase::Endorse => self.instance.endorse_action(&ctx!(self), signer.as_ref()),
        };
        fx.extend(sent.into_iter().map(|m| Effect::Broadcast(Arc::new(m))));
    }

    fn on_timer(&mut self, kind: TimerKind, token: u64, now: Time, fx: &mut Vec<Effect>) {
        if !self.started {
            return;
        }
        match kind {
            TimerKind::Pull => {
                fx.push(Effect::Pull);
                fx.push(Effect::Observe(Observation::PullRequested {
                    out_of_band: false,
                }));
                fx.push(Effect::Schedule {
                    kind: TimerKind::Pull,
                    token: PULL_TOKEN,
                    delay: self.params.pull_interval,
                });
            }
            _ if token != self.timer_token => {}
            TimerKind::Retry => self.enter_instance(now, fx),
            TimerKind::PhaseEnd => self.on_phase_end(now, fx),
        }
    }

    fn on_phase_end(&mut self, now: Time, fx: &mut Vec<Effect>) {
        match self.instance.phase.next() {
            Some(next) => {
                let token = self.new_token();
                self.enter_phase(next, 0, token, fx);
            }
            None => match self.instance.get_decision(&ctx!(self)) {
                Some((block, qc)) => {
                    let chain = self
                        .chain
                        .append_decided(block.clone())
                        .expect("decided block extends the head");
                    fx.push(Effect::Observe(Observation::Decide {
                        level: block.header.level,
                        round: block.header.round,
                        block,
                        qc: qc.clone(),
                    }));
                    self.update_state(chain, Some(qc));
                    self.begin_level(now, fx);
                }
                None => {
                    self.instance.round += 1;
                    self.instance.filter_messages();
                    self.instance.refresh_endorsable(&ctx!(self));
                    self.enter_instance(now, fx);
                }
            },
        }
    }

    /// Fresh instance at the level our chain now ends at.
    fn begin_level(&mut self, now: Time, fx: &mut Vec<Effect>) {
        self.instance.init();
        for m in std::mem::take(&mut self.early) {
            if m.level == self.level() {
                self.on_message(&m, fx);
            }
        }
        self.enter_instance(now, fx);
    }

    fn on_message(&mut self, msg: &Arc<Message>, fx: &mut Vec<Effect>) {
        if !self.started {
            return;
        }
        let (level, hp) = (self.level(), self.chain.head_hash());
        let outcome = self.instance.handle_message(msg, &ctx!(self));
        // With skewed clocks a peer may open the next level slightly before
        // us; its first-round messages are the "next round" ones we keep.
        if outcome == Handled::OutOfScope
            && msg.level == level + 1
            && msg.round == 1
            && self.params.committee.universe.contains(&msg.sender)
            && !self
                .early
                .iter()
                .any(|m| m.sender == msg.sender && m.kind() == msg.kind())
        {
            self.early.push(msg.clone());
        }
        if outcome == Handled::OutOfScope && suggests_behind(msg, level, hp) {
            let key = (level, self.instance.round);
            if self.last_oob_pull != Some(key) {
                self.last_oob_pull = Some(key);
                fx.push(Effect::Pull);
                fx.push(Effect::Observe(Observation::PullRequested {
                    out_of_band: true,
                }));
            }
        }
    }

    fn on_new_chain(
        &mut self,
        chain: Chain,
        poc: Option<ProposalOrCertificate>,
        now: Time,
        fx: &mut Vec<Effect>,
    ) {
        let proposal = match &poc {
            Some(ProposalOrCertificate::Proposal(m)) => Some(m.clone()),
            _ => None,
        };
        let outcome = self.evaluate_chain(chain, poc, now, fx);
        if let Err((outcome, fault)) = outcome {
            if outcome != ChainOutcome::Ignored {
                fx.push(Effect::Observe(Observation::ChainReceived {
                    outcome,
                    fault: fault.map(|f| f.to_string()),
                }));
            }
        }
        // A proposal riding on a pull answer is a message like any other.
        // After catching up it is usually the current level's proposal,
        // which reached us while we were still behind and was dropped.
        if let Some(m) = proposal {
            if m.level == self.level() {
                self.on_message(&m, fx);
            }
        }
    }

    fn evaluate_chain(
        &mut self,
        chain: Chain,
        poc: Option<ProposalOrCertificate>,
        now: Time,
        fx: &mut Vec<Effect>,
    ) -> Result<(), (ChainOutcome, Option<ChainFault>)> {
        if !self.started {
            return Err((ChainOutcome::Ignored, None));
        }
        let len = chain.len();
        let own = self.chain.len();
        if len < own || (len == own && chain.head_hash() == self.chain.head_hash()) {
            return Err((ChainOutcome::Ignored, None));
        }
        let Some(poc) = poc else {
            return Err((ChainOutcome::NoJustification, None));
        };
        let certificate = get_certificate(&poc).map_err(|_| (ChainOutcome::Invalid, None))?;
        if chain.hash_at(0) != Some(self.params.genesis_hash) {
            return Err((ChainOutcome::Invalid, Some(ChainFault::Genesis)));
        }
        if len == own {
            // only a better head is of interest; check that before validating
            let cand = chain.head_round();
            if !self
                .instance
                .better_head(cand, self.chain.head_round(), &poc)
            {
                return Err((ChainOutcome::Ignored, None));
            }
        }
        let common = chain.common_prefix(&self.chain).max(1);
        let invalid = |e| (ChainOutcome::Invalid, Some(e));
        validate_blocks(&chain, common as Level, &mut self.committees).map_err(invalid)?;
        check_head_certificate(&chain, &certificate, &mut self.committees).map_err(invalid)?;
        if len > own {
            let kept = chain.common_prefix(&self.chain);
            fx.push(Effect::Observe(Observation::Adopt {
                kept,
                blocks: chain.blocks()[kept..]
                    .iter()
                    .map(|b| (**b).clone())
                    .collect(),
                certificate: certificate.clone(),
            }));
            self.update_state(chain, Some(certificate));
            self.begin_level(now, fx);
            return Ok(());
        }
        if let ProposalOrCertificate::Proposal(m) = &poc {
            if !self.proposal_fits(&chain, m) {
                return Err((ChainOutcome::Invalid, None));
            }
        }
        let old_round = self.chain.head_round();
        let head = chain.head().clone();
        fx.push(Effect::Observe(Observation::HeadSwap {
            level: head.header.level,
            old_round,
            new_round: head.header.round,
            block: head,
            certificate: certificate.clone(),
        }));
        self.update_state(chain, Some(certificate));
        self.instance.retain_pred(self.chain.head_hash());
        Ok(())
    }

    /// Whether a proposal justifying a head swap is itself valid on top of
    /// the candidate chain.
    fn proposal_fits(&mut self, chain: &Chain, msg: &Message) -> bool {
        let level = chain.len() as Level;
        if msg.level != level || msg.pred_hash != chain.head_hash() {
            return false;
        }
        let (Ok(committee), Ok(prev)) = (
            self.committees.at_level(chain, level),
            self.committees.at_level(chain, level - 1),
        ) else {
            return false;
        };
        let ctx = InstanceCtx {
            level,
            pred_hash: chain.head_hash(),
            head: chain.head(),
            head_certificate: None,
            committee: &committee,
            prev_committee: &prev,
            f: self.params.committee.f,
        };
        InstanceState::new().is_valid_message(msg, &ctx)
    }

    fn answer_pull(&mut self, from: ProcessId, fx: &mut Vec<Effect>) {
        if !self.started {
            return;
        }
        let poc = self
            .instance
            .latest_proposal()
            .cloned()
            .map(ProposalOrCertificate::Proposal)
            .or_else(|| {
                self.head_certificate
                    .clone()
                    .map(ProposalOrCertificate::Certificate)
            });
        fx.push(Effect::SendChain {
            to: from,
            chain: self.chain.clone(),
            poc,
        });
    }
}
