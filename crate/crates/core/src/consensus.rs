//! Single-shot consensus for one level: message buffering and validation,
//! endorsable/locked tracking, the three phase actions and decisions.

use std::sync::Arc;

use thiserror::Error;

use crate::chain::{endorsement_claim, legitimate_contents, proposer_in};
use crate::synchronizer::Phase;
use crate::types::{
    check_qc, Block, CertifiedValue, Digest, Level, Message, MessageKind, Payload, ProcessId,
    Proposal, QcClaim, QcKind, QuorumCertificate, Round, Signer, Value,
};

/// What the instance needs to know about its surroundings.
#[derive(Clone, Copy)]
pub struct InstanceCtx<'a> {
    pub level: Level,
    /// Hash of the head block (level `level - 1`).
    pub pred_hash: Digest,
    pub head: &'a Block,
    pub head_certificate: Option<&'a QuorumCertificate>,
    pub committee: &'a [ProcessId],
    /// Committee of the head's level; unused at level 1.
    pub prev_committee: &'a [ProcessId],
    pub f: usize,
}

impl InstanceCtx<'_> {
    fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    fn preendorsement_claim(&self, round: Round, value: &Value) -> QcClaim {
        QcClaim {
            kind: QcKind::Preendorsement,
            level: self.level,
            round,
            pred_hash: self.pred_hash,
            value_hash: value.hash(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lock {
    pub value: Value,
    pub round: Round,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endorsable {
    pub value: Value,
    pub round: Round,
    pub qc: QuorumCertificate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Handled {
    Buffered,
    /// Valid certificate carrier; informs the endorsable state only.
    Absorbed,
    Duplicate,
    Invalid,
    /// Not for this (level, round window, predecessor).
    OutOfScope,
}

impl Handled {
    pub fn changed_buffer(self) -> bool {
        self == Handled::Buffered
    }
}

/// Whether a message suggests the receiver is behind.
pub fn suggests_behind(msg: &Message, level: Level, pred_hash: Digest) -> bool {
    (msg.level == level && msg.pred_hash != pred_hash) || msg.level > level
}

#[derive(Clone, Debug)]
pub struct InstanceState {
    pub round: Round,
    pub phase: Phase,
    pub lock: Option<Lock>,
    pub endorsable: Option<Endorsable>,
    messages: Vec<Arc<Message>>,
}

impl Default for InstanceState {
    fn default() -> Self {
        InstanceState {
            round: 1,
            phase: Phase::Propose,
            lock: None,
            endorsable: None,
            messages: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PocError {
    #[error("proposal at level {0} carries no endorsement certificate")]
    MalformedPoc(Level),
}

/// Justification delivered alongside a pulled chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProposalOrCertificate {
    Proposal(Arc<Message>),
    Certificate(QuorumCertificate),
}

pub fn get_certificate(poc: &ProposalOrCertificate) -> Result<QuorumCertificate, PocError> {
    match poc {
        ProposalOrCertificate::Certificate(q) => Ok(q.clone()),
        ProposalOrCertificate::Proposal(m) => match m.proposal() {
            Some(Proposal { eqc: Some(q), .. }) => Ok(q.clone()),
            _ => Err(PocError::MalformedPoc(m.level)),
        },
    }
}

impl InstanceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn init(&mut self) {
        *self = Self::default();
    }

    pub fn locked_round(&self) -> Round {
        self.lock.as_ref().map_or(0, |l| l.round)
    }

    pub fn endorsable_round(&self) -> Round {
        self.endorsable.as_ref().map_or(0, |e| e.round)
    }

    pub fn messages(&self) -> &[Arc<Message>] {
        &self.messages
    }

    pub fn buffer_len(&self) -> usize {
        self.messages.len()
    }

    fn buffered(&self, kind: MessageKind, round: Round) -> impl Iterator<Item = &Arc<Message>> {
        self.messages
            .iter()
            .filter(move |m| m.kind() == kind && m.round == round)
    }

    pub fn proposal_at(&self, round: Round) -> Option<&Arc<Message>> {
        self.buffered(MessageKind::Propose, round).next()
    }

    /// The buffered proposal for the current round.
    pub fn proposal(&self) -> Option<&Arc<Message>> {
        self.proposal_at(self.round)
    }

    /// Highest-round buffered proposal.
    pub fn latest_proposal(&self) -> Option<&Arc<Message>> {
        self.buffered(MessageKind::Propose, self.round + 1)
            .next()
            .or_else(|| self.proposal())
    }

    pub fn proposed_value(&self) -> Option<Value> {
        self.proposal().and_then(|m| m.proposal()).map(|p| p.value)
    }

    pub fn preendorsements(&self) -> impl Iterator<Item = &Arc<Message>> {
        self.buffered(MessageKind::Preendorse, self.round)
    }

    pub fn endorsements(&self) -> impl Iterator<Item = &Arc<Message>> {
        self.buffered(MessageKind::Endorse, self.round)
    }

    fn assemble(&self, kind: QcKind, ctx: &InstanceCtx<'_>) -> Option<(Value, QuorumCertificate)> {
        let value = self.proposed_value()?;
        let votes: Vec<_> = match kind {
            QcKind::Preendorsement => self.preendorsements().map(|m| m.sig).collect(),
            QcKind::Endorsement => self.endorsements().map(|m| m.sig).collect(),
        };
        if votes.len() < ctx.quorum() {
            return None;
        }
        let claim = QcClaim {
            kind,
            level: ctx.level,
            round: self.round,
            pred_hash: ctx.pred_hash,
            value_hash: value.hash(),
        };
        Some((value, QuorumCertificate::new(claim, votes)))
    }

    pub fn is_valid_message(&self, msg: &Message, ctx: &InstanceCtx<'_>) -> bool {
        match &msg.payload {
            Payload::Propose(p) => valid_proposal(msg, p, ctx),
            Payload::Preendorse(h) | Payload::Endorse(h) => {
                ctx.committee.contains(&msg.sender)
                    && self
                        .proposal_at(msg.round)
                        .and_then(|m| m.proposal())
                        .is_some_and(|p| p.value.hash() == *h)
            }
            Payload::Preendorsements(c) => valid_certified_value(c, ctx),
        }
    }

    /// Applies an incoming message to the instance.
    pub fn handle_message(&mut self, msg: &Arc<Message>, ctx: &InstanceCtx<'_>) -> Handled {
        if msg.level != ctx.level
            || msg.pred_hash != ctx.pred_hash
            || (msg.round != self.round && msg.round != self.round + 1)
        {
            return Handled::OutOfScope;
        }
        let kind = msg.kind();
        if kind != MessageKind::Preendorsements
            && self
                .messages
                .iter()
                .any(|m| m.kind() == kind && m.sender == msg.sender && m.round == msg.round)
        {
            return Handled::Duplicate;
        }
        if !self.is_valid_message(msg, ctx) {
            return Handled::Invalid;
        }
        let outcome = if kind == MessageKind::Preendorsements {
            Handled::Absorbed
        } else {
            self.messages.push(msg.clone());
            Handled::Buffered
        };
        self.update_endorsable(msg, ctx);
        outcome
    }

    fn update_endorsable(&mut self, msg: &Message, ctx: &InstanceCtx<'_>) {
        if self.round >= self.endorsable_round() {
            if let Some((value, qc)) = self.assemble(QcKind::Preendorsement, ctx) {
                if self.endorsable_round() < self.round {
                    self.endorsable = Some(Endorsable {
                        value,
                        round: self.round,
                        qc,
                    });
                }
                return;
            }
        }
        let carried = match &msg.payload {
            Payload::Propose(Proposal {
                pqc: Some(qc),
                value,
                ..
            }) => Some((qc, *value)),
            Payload::Preendorsements(c) => Some((&c.qc, c.value)),
            _ => None,
        };
        if let Some((qc, value)) = carried {
            if qc.round > self.endorsable_round() {
                self.endorsable = Some(Endorsable {
                    value,
                    round: qc.round,
                    qc: qc.clone(),
                });
            }
        }
    }

    /// Re-applies the direct quorum rule, e.g. after the buffer changed
    /// without a new message.
    pub fn refresh_endorsable(&mut self, ctx: &InstanceCtx<'_>) {
        if self.round > self.endorsable_round() {
            if let Some((value, qc)) = self.assemble(QcKind::Preendorsement, ctx) {
                self.endorsable = Some(Endorsable {
                    value,
                    round: self.round,
                    qc,
                });
            }
        }
    }

    /// Keeps only messages for the current round.
    pub fn filter_messages(&mut self) {
        let r = self.round;
        self.messages.retain(|m| m.round == r);
    }

    /// Moves to round `round` (never backwards). A jump of more than one
    /// round keeps nothing that is outside the new window.
    pub fn set_round(&mut self, round: Round) {
        debug_assert!(round >= self.round);
        if round == self.round {
            return;
        }
        self.round = round;
        self.messages
            .retain(|m| m.round == round || m.round == round + 1);
    }

    /// Drops buffered messages built on a predecessor other than `pred_hash`.
    pub fn retain_pred(&mut self, pred_hash: Digest) {
        self.messages.retain(|m| m.pred_hash == pred_hash);
    }

    pub fn propose_action(
        &self,
        ctx: &InstanceCtx<'_>,
        signer: Option<&Signer>,
        fresh: impl FnOnce() -> Value,
    ) -> Vec<Message> {
        let Some(signer) = signer else {
            return Vec::new();
        };
        if proposer_in(ctx.committee, self.round) != signer.id() {
            return Vec::new();
        }
        let (value, endorsable_round, pqc) = match &self.endorsable {
            Some(e) if e.qc.pred_hash == ctx.pred_hash => (e.value, e.round, Some(e.qc.clone())),
            _ => (fresh(), 0, None),
        };
        let payload = Payload::Propose(Proposal {
            eqc: ctx.head_certificate.cloned(),
            value,
            endorsable_round,
            pqc,
        });
        vec![signer.message(ctx.level, self.round, ctx.pred_hash, payload)]
    }

    pub fn preendorse_action(
        &self,
        ctx: &InstanceCtx<'_>,
        signer: Option<&Signer>,
    ) -> Vec<Message> {
        let Some(signer) = signer else {
            return Vec::new();
        };
        let proposal = self.proposal().and_then(|m| m.proposal());
        if let Some(p) = proposal {
            let locked_round = self.locked_round();
            let acceptable = locked_round == 0
                || self.lock.as_ref().is_some_and(|l| l.value == p.value)
                || (locked_round < p.endorsable_round && p.endorsable_round < self.round);
            if acceptable {
                return vec![signer.message(
                    ctx.level,
                    self.round,
                    ctx.pred_hash,
                    Payload::Preendorse(p.value.hash()),
                )];
            }
        }
        match (&self.lock, &self.endorsable) {
            (Some(_), Some(e)) => vec![signer.message(
                ctx.level,
                self.round,
                ctx.pred_hash,
                Payload::Preendorsements(CertifiedValue {
                    qc: e.qc.clone(),
                    value: e.value,
                }),
            )],
            _ => Vec::new(),
        }
    }

    /// Locks on a preendorsement quorum for the current round. Observers
    /// (no signer) neither lock nor send.
    pub fn endorse_action(
        &mut self,
        ctx: &InstanceCtx<'_>,
        signer: Option<&Signer>,
    ) -> Vec<Message> {
        let Some(signer) = signer else {
            return Vec::new();
        };
        let Some((value, qc)) = self.assemble(QcKind::Preendorsement, ctx) else {
            return Vec::new();
        };
        self.lock = Some(Lock {
            value,
            round: self.round,
        });
        if self.endorsable_round() < self.round {
            self.endorsable = Some(Endorsable {
                value,
                round: self.round,
                qc: qc.clone(),
            });
        }
        vec![
            signer.message(
                ctx.level,
                self.round,
                ctx.pred_hash,
                Payload::Endorse(value.hash()),
            ),
            signer.message(
                ctx.level,
                self.round,
                ctx.pred_hash,
                Payload::Preendorsements(CertifiedValue { qc, value }),
            ),
        ]
    }

    /// The proposal of the current round with its endorsement certificate,
    /// once a quorum of endorsements is buffered.
    pub fn get_decision(&self, ctx: &InstanceCtx<'_>) -> Option<(Block, QuorumCertificate)> {
        let (_, qc) = self.assemble(QcKind::Endorsement, ctx)?;
        let block = Block::from_propose(self.proposal()?)?;
        Some((block, qc))
    }

    /// Whether a competing head at the same level should replace ours.
    /// `own_head_round` is the round of our block at level `ℓp − 1`.
    pub fn better_head(
        &self,
        candidate_head_round: Round,
        own_head_round: Round,
        poc: &ProposalOrCertificate,
    ) -> bool {
        let er = self.endorsable_round();
        match poc {
            ProposalOrCertificate::Proposal(m) => {
                let Some(p) = m.proposal() else {
                    return false;
                };
                er < p.endorsable_round
                    || (er == p.endorsable_round && candidate_head_round < own_head_round)
            }
            ProposalOrCertificate::Certificate(_) => {
                er == 0 && candidate_head_round < own_head_round
            }
        }
    }

    pub fn phase_name(&self) -> Phase {
        self.phase
    }
}

fn valid_proposal(msg: &Message, p: &Proposal, ctx: &InstanceCtx<'_>) -> bool {
    if msg.round == 0 || proposer_in(ctx.committee, msg.round) != msg.sender {
        return false;
    }
    let eqc_ok = match (&p.eqc, ctx.level) {
        (None, 1) => true,
        (Some(q), l) if l >= 2 => {
            check_qc(q, &endorsement_claim(ctx.head), ctx.prev_committee, ctx.f)
        }
        _ => false,
    };
    if !eqc_ok {
        return false;
    }
    let pqc_ok = match &p.pqc {
        None => p.endorsable_round == 0,
        Some(q) => {
            p.endorsable_round > 0
                && p.endorsable_round < msg.round
                && check_qc(
                    q,
                    &ctx.preendorsement_claim(p.endorsable_round, &p.value),
                    ctx.committee,
                    ctx.f,
                )
        }
    };
    if !pqc_ok {
        return false;
    }
    Block::from_propose(msg).is_some_and(|b| legitimate_contents(&b, ctx.committee))
}

fn valid_certified_value(c: &CertifiedValue, ctx: &InstanceCtx<'_>) -> bool {
    c.qc.round >= 1
        && c.value.level == ctx.level
        && check_qc(
            &c.qc,
            &ctx.preendorsement_claim(c.qc.round, &c.value),
            ctx.committee,
            ctx.f,
        )
}
