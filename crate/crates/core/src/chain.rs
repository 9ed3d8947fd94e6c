//! Blockchain store, committee selection and chain validation.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::Encode;
use crate::types::{
    check_qc, Block, Digest, FastHash, Level, OutputValue, ProcessId, QcClaim, QcKind,
    QuorumCertificate, Round,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("chain of length {have} cannot determine the committee at level {level}")]
    InsufficientChain { level: Level, have: usize },
    #[error("block level {got} does not extend a chain of length {expected}")]
    LevelMismatch { expected: Level, got: Level },
    #[error("block predecessor hash {got} does not match head hash {expected}")]
    HashMismatch { expected: Digest, got: Digest },
}

/// A sequence of linked blocks, `blocks[0]` being genesis. Cloning is
/// cheap; extending a shared chain copies it.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Arc<Vec<Arc<Block>>>,
    hashes: Arc<Vec<Digest>>,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.hashes == other.hashes
    }
}

impl Eq for Chain {}

impl Chain {
    pub fn genesis(block: Block) -> Chain {
        let h = block.hash();
        Chain {
            blocks: Arc::new(vec![Arc::new(block)]),
            hashes: Arc::new(vec![h]),
        }
    }

    /// Builds a chain from blocks without checking any link.
    pub fn from_blocks(blocks: Vec<Block>) -> Chain {
        let hashes = blocks.iter().map(Block::hash).collect();
        Chain {
            blocks: Arc::new(blocks.into_iter().map(Arc::new).collect()),
            hashes: Arc::new(hashes),
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn block(&self, level: Level) -> Option<&Block> {
        self.blocks.get(level as usize).map(|b| b.as_ref())
    }

    pub fn hash_at(&self, level: Level) -> Option<Digest> {
        self.hashes.get(level as usize).copied()
    }

    pub fn hashes(&self) -> &[Digest] {
        &self.hashes
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain holds at least genesis")
    }

    pub fn head_hash(&self) -> Digest {
        *self.hashes.last().expect("chain holds at least genesis")
    }

    pub fn head_round(&self) -> Round {
        self.head().header.round
    }

    /// Output values of levels `0..=last`.
    pub fn output_prefix(&self, last: Level) -> Vec<OutputValue> {
        self.blocks[..=last as usize]
            .iter()
            .map(|b| b.output_value())
            .collect()
    }

    pub fn append_decided(&self, block: Block) -> Result<Chain, ChainError> {
        let expected = self.len() as Level;
        if block.header.level != expected {
            return Err(ChainError::LevelMismatch {
                expected,
                got: block.header.level,
            });
        }
        if block.header.pred_hash != self.head_hash() {
            return Err(ChainError::HashMismatch {
                expected: self.head_hash(),
                got: block.header.pred_hash,
            });
        }
        let mut next = self.clone();
        next.push(block);
        Ok(next)
    }

    /// The chain with its head replaced by `head` (same level).
    pub fn with_head(&self, head: Block) -> Chain {
        let mut next = self.truncated(self.len() - 1);
        next.push(head);
        next
    }

    /// The first `at` blocks (or all, if fewer) followed by `blocks`.
    /// Links are not checked; trace replay relies on this.
    pub fn spliced(&self, at: usize, blocks: impl IntoIterator<Item = Block>) -> Chain {
        let mut next = self.truncated(at.min(self.len()));
        for b in blocks {
            next.push(b);
        }
        next
    }

    pub fn truncated(&self, len: usize) -> Chain {
        if len >= self.len() {
            return self.clone();
        }
        Chain {
            blocks: Arc::new(self.blocks[..len].to_vec()),
            hashes: Arc::new(self.hashes[..len].to_vec()),
        }
    }

    fn push(&mut self, block: Block) {
        Arc::make_mut(&mut self.hashes).push(block.hash());
        Arc::make_mut(&mut self.blocks).push(Arc::new(block));
    }

    /// Length of the longest common prefix with `other`.
    pub fn common_prefix(&self, other: &Chain) -> usize {
        self.hashes
            .iter()
            .zip(other.hashes.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Seeded pseudo-random n-subset of the universe, re-drawn per prefix.
    #[default]
    Shuffle,
    /// The first n members of the universe at every level.
    Static,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitteeConfig {
    pub n: usize,
    pub f: usize,
    pub k: u64,
    pub universe: Vec<ProcessId>,
    pub seed: Vec<u8>,
    pub selection: Selection,
}

impl CommitteeConfig {
    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n != 3 * self.f + 1 {
            return Err(format!(
                "n = {} must equal 3f+1 with f = {}",
                self.n, self.f
            ));
        }
        if self.k < 1 {
            return Err("committee look-back k must be at least 1".into());
        }
        if self.universe.len() < self.n {
            return Err(format!(
                "universe of {} processes is smaller than n = {}",
                self.universe.len(),
                self.n
            ));
        }
        let mut ids = self.universe.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != self.universe.len() {
            return Err("universe contains duplicate process ids".into());
        }
        Ok(())
    }
}

/// Deterministic committee for a decided prefix.
pub fn committee(prefix: &[OutputValue], cfg: &CommitteeConfig) -> Vec<ProcessId> {
    match cfg.selection {
        Selection::Static => cfg.universe[..cfg.n].to_vec(),
        Selection::Shuffle => {
            let mut bytes = Vec::with_capacity(cfg.seed.len() + 64 * prefix.len() + 8);
            cfg.seed.encode_to(&mut bytes);
            prefix.encode_to(&mut bytes);
            let lo = Digest::of(b"committee/0", &bytes);
            let hi = Digest::of(b"committee/1", &bytes);
            let mut key = [0u8; 32];
            key[..16].copy_from_slice(&lo.0);
            key[16..].copy_from_slice(&hi.0);
            let mut rng = ChaCha20Rng::from_seed(key);
            let mut pool = cfg.universe.clone();
            for i in 0..cfg.n {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(cfg.n);
            pool
        }
    }
}

/// Last level of the prefix that determines the committee at `level`.
pub fn committee_prefix_end(level: Level, k: u64) -> Level {
    level.saturating_sub(k)
}

pub fn committee_at_level(
    chain: &Chain,
    level: Level,
    cfg: &CommitteeConfig,
) -> Result<Vec<ProcessId>, ChainError> {
    let end = committee_prefix_end(level, cfg.k);
    if (chain.len() as Level) <= end {
        return Err(ChainError::InsufficientChain {
            level,
            have: chain.len(),
        });
    }
    Ok(committee(&chain.output_prefix(end), cfg))
}

pub fn proposer(
    chain: &Chain,
    level: Level,
    round: Round,
    cfg: &CommitteeConfig,
) -> Result<ProcessId, ChainError> {
    let c = committee_at_level(chain, level, cfg)?;
    Ok(proposer_in(&c, round))
}

pub fn proposer_in(committee: &[ProcessId], round: Round) -> ProcessId {
    debug_assert!(round >= 1);
    committee[((round - 1) % committee.len() as u64) as usize]
}

type CommitteeKey = (Digest, Level, Digest);

thread_local! {
    // Shared by all processes of a simulation, which would otherwise each
    // hash the same prefixes.
    static COMMITTEES: RefCell<HashMap<CommitteeKey, Arc<[ProcessId]>, FastHash>> = RefCell::new(HashMap::default());
}

/// Memoizes committees by (config, prefix end, hash of the last block of
/// the prefix). The hash pins the whole prefix, so hits are sound across
/// chains.
#[derive(Clone, Debug)]
pub struct Committees {
    cfg: Arc<CommitteeConfig>,
    cfg_id: Digest,
}

impl Committees {
    pub fn new(cfg: Arc<CommitteeConfig>) -> Self {
        let mut bytes = Vec::new();
        (cfg.n as u64).encode_to(&mut bytes);
        cfg.k.encode_to(&mut bytes);
        cfg.universe.encode_to(&mut bytes);
        cfg.seed.encode_to(&mut bytes);
        bytes.push(cfg.selection as u8);
        let cfg_id = Digest::of(b"committee-config", &bytes);
        Committees { cfg, cfg_id }
    }

    pub fn cfg(&self) -> &CommitteeConfig {
        &self.cfg
    }

    pub fn at_level(
        &mut self,
        chain: &Chain,
        level: Level,
    ) -> Result<Arc<[ProcessId]>, ChainError> {
        let end = committee_prefix_end(level, self.cfg.k);
        let Some(anchor) = chain.hash_at(end) else {
            return Err(ChainError::InsufficientChain {
                level,
                have: chain.len(),
            });
        };
        let key = (self.cfg_id, end, anchor);
        if let Some(c) = COMMITTEES.with(|m| m.borrow().get(&key).cloned()) {
            return Ok(c);
        }
        let c: Arc<[ProcessId]> = committee(&chain.output_prefix(end), &self.cfg).into();
        COMMITTEES.with(|m| {
            let mut m = m.borrow_mut();
            if m.len() >= 4096 {
                m.clear();
            }
            m.insert(key, c.clone());
        });
        Ok(c)
    }
}

pub fn is_consistent_value(v: &OutputValue, prev_block: &Block) -> bool {
    v.pred_hash == prev_block.hash()
}

/// Whether the block's contents could have come from a correct proposer:
/// fresh contents are created by the round's proposer, re-proposed contents
/// by the proposer of an earlier round no later than the endorsable round.
pub fn legitimate_contents(block: &Block, committee: &[ProcessId]) -> bool {
    let h = &block.header;
    let v = &block.contents;
    if v.level != h.level || v.round == 0 {
        return false;
    }
    let round_ok = if h.endorsable_round == 0 {
        v.round == h.round
    } else {
        v.round <= h.endorsable_round && h.endorsable_round < h.round
    };
    round_ok && v.creator == proposer_in(committee, v.round)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainFault {
    #[error("chain does not start with the agreed genesis block")]
    Genesis,
    #[error("a genesis-only chain has no certificate to check")]
    NoHead,
    #[error("head certificate does not certify the head")]
    HeadCertificate,
    #[error("level {0}: header level does not match position")]
    Level(Level),
    #[error("level {0}: broken hash link")]
    Link(Level),
    #[error("level {0}: endorsement certificate for the predecessor is invalid")]
    PredecessorCertificate(Level),
    #[error("level {0}: malformed header")]
    Header(Level),
    #[error("level {0}: preendorsement certificate is invalid")]
    EndorsableCertificate(Level),
    #[error("level {0}: contents were not created by a legitimate proposer")]
    Legitimacy(Level),
    #[error("level {0}: {1}")]
    Committee(Level, ChainError),
}

/// Endorsement claim a head certificate for `block` must attest.
pub fn endorsement_claim(block: &Block) -> QcClaim {
    QcClaim {
        kind: QcKind::Endorsement,
        level: block.header.level,
        round: block.header.round,
        pred_hash: block.header.pred_hash,
        value_hash: block.contents.hash(),
    }
}

/// Checks blocks at levels `from..len` (links into `from-1` included).
pub fn validate_blocks(
    chain: &Chain,
    from: Level,
    committees: &mut Committees,
) -> Result<(), ChainFault> {
    let f = committees.cfg().f;
    for level in from.max(1)..chain.len() as Level {
        let block = chain.block(level).expect("in range");
        let prev = chain.block(level - 1).expect("in range");
        let h = &block.header;
        if h.level != level {
            return Err(ChainFault::Level(level));
        }
        if h.pred_hash != chain.hash_at(level - 1).expect("in range") {
            return Err(ChainFault::Link(level));
        }
        if !block.header_well_formed() {
            return Err(ChainFault::Header(level));
        }
        if level >= 2 {
            let eqc = h.eqc.as_ref().ok_or(ChainFault::Header(level))?;
            let prev_committee = committees
                .at_level(chain, level - 1)
                .map_err(|e| ChainFault::Committee(level, e))?;
            if !check_qc(eqc, &endorsement_claim(prev), &prev_committee, f) {
                return Err(ChainFault::PredecessorCertificate(level));
            }
        }
        let committee = committees
            .at_level(chain, level)
            .map_err(|e| ChainFault::Committee(level, e))?;
        if let Some(pqc) = &h.pqc {
            let claim = QcClaim {
                kind: QcKind::Preendorsement,
                level,
                round: h.endorsable_round,
                pred_hash: h.pred_hash,
                value_hash: block.contents.hash(),
            };
            if !check_qc(pqc, &claim, &committee, f) {
                return Err(ChainFault::EndorsableCertificate(level));
            }
        }
        if !legitimate_contents(block, &committee) {
            return Err(ChainFault::Legitimacy(level));
        }
    }
    Ok(())
}

pub fn check_head_certificate(
    chain: &Chain,
    certificate: &QuorumCertificate,
    committees: &mut Committees,
) -> Result<(), ChainFault> {
    if chain.len() < 2 {
        return Err(ChainFault::NoHead);
    }
    let head = chain.head();
    let level = head.header.level;
    let committee = committees
        .at_level(chain, level)
        .map_err(|e| ChainFault::Committee(level, e))?;
    if !check_qc(
        certificate,
        &endorsement_claim(head),
        &committee,
        committees.cfg().f,
    ) {
        return Err(ChainFault::HeadCertificate);
    }
    Ok(())
}

/// Full validation of a chain and its head certificate.
pub fn check_chain(
    chain: &Chain,
    certificate: &QuorumCertificate,
    genesis_hash: Digest,
    committees: &mut Committees,
) -> Result<(), ChainFault> {
    if chain.hash_at(0) != Some(genesis_hash) {
        return Err(ChainFault::Genesis);
    }
    validate_blocks(chain, 1, committees)?;
    check_head_certificate(chain, certificate, committees)
}

pub fn valid_chain(
    chain: &Chain,
    certificate: &QuorumCertificate,
    genesis_hash: Digest,
    committees: &mut Committees,
) -> bool {
    check_chain(chain, certificate, genesis_hash, committees).is_ok()
}
