//! Shared protocol vocabulary: identities, simulated crypto, values, blocks,
//! messages and quorum certificates.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::encoding::{Decode, DecodeError, Encode, Reader};

pub type Level = u64;
pub type Round = u64;
/// Integer microseconds, both for virtual time and local clock readings.
pub type Time = i64;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl Encode for ProcessId {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.0.encode_to(out);
    }
}

impl Decode for ProcessId {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ProcessId(u32::decode_from(r)?))
    }
}

pub const DIGEST_LEN: usize = 16;

// Every vote and certificate check rehashes the same few values, which
// dominated simulation time. The memoized functions are pure.
type VoteKey = (ProcessId, Level, Round, Digest, bool, Digest);

/// Multiply-rotate hasher for keys made of digests and small integers;
/// much cheaper than SipHash on the hot path. Not DoS resistant.
#[derive(Default)]
pub struct FoldHasher(u64);

impl Hasher for FoldHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(w));
        }
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = (self.0.rotate_left(5) ^ n).wrapping_mul(0x517c_c1b7_2722_0a95);
    }

    fn write_u32(&mut self, n: u32) {
        self.write_u64(n as u64);
    }

    fn write_u8(&mut self, n: u8) {
        self.write_u64(n as u64);
    }

    fn write_usize(&mut self, n: usize) {
        self.write_u64(n as u64);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

pub type FastHash = BuildHasherDefault<FoldHasher>;

thread_local! {
    static VALUE_HASHES: RefCell<HashMap<Value, Digest, FastHash>> = RefCell::new(HashMap::default());
    static VOTE_DIGESTS: RefCell<HashMap<VoteKey, Digest, FastHash>> = RefCell::new(HashMap::default());
}

const MEMO_CAP: usize = 1 << 15;

fn memo<K: Hash + Eq>(
    m: &RefCell<HashMap<K, Digest, FastHash>>,
    key: K,
    f: impl FnOnce() -> Digest,
) -> Digest {
    if let Some(d) = m.borrow().get(&key) {
        return *d;
    }
    let d = f();
    let mut m = m.borrow_mut();
    if m.len() >= MEMO_CAP {
        m.clear();
    }
    m.insert(key, d);
    d
}

/// Debug builds can record every preimage hashed on this thread and panic
/// if two different ones share a digest, which the protocol model assumes
/// never happens. Off unless enabled; a no-op in release builds.
pub mod registry {
    #[cfg(debug_assertions)]
    use super::{Digest, FastHash};
    #[cfg(debug_assertions)]
    use std::{cell::RefCell, collections::HashMap};

    #[cfg(debug_assertions)]
    thread_local! {
        static SEEN: RefCell<Option<HashMap<Digest, Vec<u8>, FastHash>>> = const { RefCell::new(None) };
    }

    /// Starts (or stops and forgets) recording on the current thread.
    pub fn enable(on: bool) {
        #[cfg(debug_assertions)]
        SEEN.with(|s| *s.borrow_mut() = on.then(HashMap::default));
        #[cfg(not(debug_assertions))]
        let _ = on;
    }

    /// Distinct digests recorded so far.
    pub fn len() -> usize {
        #[cfg(debug_assertions)]
        return SEEN.with(|s| s.borrow().as_ref().map_or(0, |m| m.len()));
        #[cfg(not(debug_assertions))]
        0
    }

    #[cfg(debug_assertions)]
    pub(super) fn note(d: Digest, domain: &[u8], bytes: &[u8]) {
        SEEN.with(|s| {
            let mut s = s.borrow_mut();
            let Some(m) = s.as_mut() else { return };
            let mut pre = Vec::with_capacity(4 + domain.len() + bytes.len());
            pre.extend_from_slice(&(domain.len() as u32).to_be_bytes());
            pre.extend_from_slice(domain);
            pre.extend_from_slice(bytes);
            match m.get(&d) {
                Some(old) => assert!(*old == pre, "digest collision on {d}"),
                None => {
                    m.insert(d, pre);
                }
            }
        });
    }
}

/// Truncated SHA-256 of a domain tag and a canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn of(domain: &[u8], bytes: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update((domain.len() as u32).to_be_bytes());
        h.update(domain);
        h.update(bytes);
        let full = h.finalize();
        let mut out = [0u8; DIGEST_LEN];
        out.copy_from_slice(&full[..DIGEST_LEN]);
        let d = Digest(out);
        #[cfg(debug_assertions)]
        registry::note(d, domain, bytes);
        d
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", &self.to_hex()[..8])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 16 bytes"))?;
        Ok(Digest(arr))
    }
}

impl Encode for Digest {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.0.encode_to(out);
    }
}

impl Decode for Digest {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Digest(<[u8; DIGEST_LEN]>::decode_from(r)?))
    }
}

/// A signature is the signer's identity bound to the digest it attests.
/// Unforgeability is enforced by the simulator's emission checks.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Signature {
    pub signer: ProcessId,
    pub digest: Digest,
}

impl Encode for Signature {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.signer.encode_to(out);
        self.digest.encode_to(out);
    }
}

impl Decode for Signature {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Signature {
            signer: ProcessId::decode_from(r)?,
            digest: Digest::decode_from(r)?,
        })
    }
}

/// Opaque block contents. In simulation a value records who created it and
/// for which (level, round), plus a nonce that makes it unique.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Value {
    pub creator: ProcessId,
    pub level: Level,
    pub round: Round,
    pub nonce: u64,
}

impl Value {
    pub fn hash(&self) -> Digest {
        VALUE_HASHES.with(|m| memo(m, *self, || Digest::of(b"value", &self.encode())))
    }
}

impl Encode for Value {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.creator.encode_to(out);
        self.level.encode_to(out);
        self.round.encode_to(out);
        self.nonce.encode_to(out);
    }
}

impl Decode for Value {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Value {
            creator: ProcessId::decode_from(r)?,
            level: u64::decode_from(r)?,
            round: u64::decode_from(r)?,
            nonce: u64::decode_from(r)?,
        })
    }
}

/// What one consensus instance decides: contents plus predecessor hash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct OutputValue {
    pub value: Value,
    pub pred_hash: Digest,
}

impl Encode for OutputValue {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.value.encode_to(out);
        self.pred_hash.encode_to(out);
    }
}

impl Decode for OutputValue {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(OutputValue {
            value: Value::decode_from(r)?,
            pred_hash: Digest::decode_from(r)?,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcKind {
    Preendorsement,
    Endorsement,
}

impl QcKind {
    pub fn vote_kind(self) -> MessageKind {
        match self {
            QcKind::Preendorsement => MessageKind::Preendorse,
            QcKind::Endorsement => MessageKind::Endorse,
        }
    }
}

impl Encode for QcKind {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(match self {
            QcKind::Preendorsement => 0,
            QcKind::Endorsement => 1,
        });
    }
}

impl Decode for QcKind {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(QcKind::Preendorsement),
            1 => Ok(QcKind::Endorsement),
            tag => Err(DecodeError::InvalidTag {
                what: "qc kind",
                tag,
            }),
        }
    }
}

/// The statement a quorum certificate attests.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct QcClaim {
    pub kind: QcKind,
    pub level: Level,
    pub round: Round,
    pub pred_hash: Digest,
    pub value_hash: Digest,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct QuorumCertificate {
    pub kind: QcKind,
    pub level: Level,
    pub round: Round,
    pub pred_hash: Digest,
    pub value_hash: Digest,
    /// Sorted by signer id; duplicates are kept so malformed certificates
    /// stay representable (and rejected by [`check_qc`]).
    pub votes: Vec<Signature>,
}

impl QuorumCertificate {
    pub fn new(claim: QcClaim, mut votes: Vec<Signature>) -> Self {
        votes.sort();
        QuorumCertificate {
            kind: claim.kind,
            level: claim.level,
            round: claim.round,
            pred_hash: claim.pred_hash,
            value_hash: claim.value_hash,
            votes,
        }
    }

    pub fn claim(&self) -> QcClaim {
        QcClaim {
            kind: self.kind,
            level: self.level,
            round: self.round,
            pred_hash: self.pred_hash,
            value_hash: self.value_hash,
        }
    }

    pub fn distinct_signers(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for v in &self.votes {
            if last != Some(v.signer) {
                n += 1;
                last = Some(v.signer);
            }
        }
        n
    }
}

impl Encode for QuorumCertificate {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.kind.encode_to(out);
        self.level.encode_to(out);
        self.round.encode_to(out);
        self.pred_hash.encode_to(out);
        self.value_hash.encode_to(out);
        if self.votes.windows(2).all(|w| w[0] <= w[1]) {
            self.votes.encode_to(out);
        } else {
            let mut sorted = self.votes.clone();
            sorted.sort();
            sorted.encode_to(out);
        }
    }
}

impl Decode for QuorumCertificate {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let claim = QcClaim {
            kind: QcKind::decode_from(r)?,
            level: u64::decode_from(r)?,
            round: u64::decode_from(r)?,
            pred_hash: Digest::decode_from(r)?,
            value_hash: Digest::decode_from(r)?,
        };
        let votes = Vec::<Signature>::decode_from(r)?;
        Ok(QuorumCertificate::new(claim, votes))
    }
}

/// Checks that `qc` attests `expected` with at least `2f+1` distinct,
/// authentic votes from members of `committee`.
pub fn check_qc(
    qc: &QuorumCertificate,
    expected: &QcClaim,
    committee: &[ProcessId],
    f: usize,
) -> bool {
    if qc.claim() != *expected {
        return false;
    }
    let mut seen: Vec<ProcessId> = Vec::with_capacity(qc.votes.len());
    for vote in &qc.votes {
        if seen.contains(&vote.signer) || !committee.contains(&vote.signer) {
            return false;
        }
        if vote.digest != vote_digest(expected, vote.signer) {
            return false;
        }
        seen.push(vote.signer);
    }
    seen.len() > 2 * f
}

/// Digest a voter signs when preendorsing or endorsing `claim`.
pub fn vote_digest(claim: &QcClaim, signer: ProcessId) -> Digest {
    let payload = match claim.kind {
        QcKind::Preendorsement => Payload::Preendorse(claim.value_hash),
        QcKind::Endorsement => Payload::Endorse(claim.value_hash),
    };
    Message::signing_digest_of(signer, claim.level, claim.round, claim.pred_hash, &payload)
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct BlockHeader {
    pub level: Level,
    /// Round at which the block was proposed.
    pub round: Round,
    pub pred_hash: Digest,
    /// Endorsement certificate for the block at `level - 1`.
    pub eqc: Option<QuorumCertificate>,
    /// Endorsable round of the contents, 0 when freshly proposed.
    pub endorsable_round: Round,
    /// Preendorsement certificate justifying `endorsable_round`.
    pub pqc: Option<QuorumCertificate>,
}

impl Encode for BlockHeader {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.level.encode_to(out);
        self.round.encode_to(out);
        self.pred_hash.encode_to(out);
        self.eqc.encode_to(out);
        self.endorsable_round.encode_to(out);
        self.pqc.encode_to(out);
    }
}

impl Decode for BlockHeader {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            level: u64::decode_from(r)?,
            round: u64::decode_from(r)?,
            pred_hash: Digest::decode_from(r)?,
            eqc: Option::decode_from(r)?,
            endorsable_round: u64::decode_from(r)?,
            pqc: Option::decode_from(r)?,
        })
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Block {
    pub header: BlockHeader,
    pub contents: Value,
}

impl Block {
    pub fn hash(&self) -> Digest {
        Digest::of(b"block", &self.encode())
    }

    pub fn output_value(&self) -> OutputValue {
        OutputValue {
            value: self.contents,
            pred_hash: self.header.pred_hash,
        }
    }

    /// The block a `Propose` message stands for.
    pub fn from_propose(msg: &Message) -> Option<Block> {
        let Payload::Propose(p) = &msg.payload else {
            return None;
        };
        Some(Block {
            header: BlockHeader {
                level: msg.level,
                round: msg.round,
                pred_hash: msg.pred_hash,
                eqc: p.eqc.clone(),
                endorsable_round: p.endorsable_round,
                pqc: p.pqc.clone(),
            },
            contents: p.value,
        })
    }

    /// Header invariants on the endorsable round and its certificate.
    pub fn header_well_formed(&self) -> bool {
        let h = &self.header;
        let endorsable_ok = match &h.pqc {
            None => h.endorsable_round == 0,
            Some(q) => {
                h.endorsable_round > 0
                    && q.kind == QcKind::Preendorsement
                    && q.round == h.endorsable_round
                    && q.pred_hash == h.pred_hash
                    && q.level == h.level
                    && q.value_hash == self.contents.hash()
            }
        };
        let eqc_ok = h.level == 0 || ((h.level == 1) == h.eqc.is_none());
        endorsable_ok && eqc_ok
    }
}

impl Encode for Block {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.header.encode_to(out);
        self.contents.encode_to(out);
    }
}

impl Decode for Block {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Block {
            header: BlockHeader::decode_from(r)?,
            contents: Value::decode_from(r)?,
        })
    }
}

/// Creator id used for the genesis contents; never a real process.
pub const GENESIS_CREATOR: ProcessId = ProcessId(u32::MAX);

/// Parameters every correct process agrees on before the run.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Genesis {
    pub t0: Time,
    #[serde(with = "hex_bytes")]
    pub seed: Vec<u8>,
    pub k: u64,
}

impl Genesis {
    pub fn block(&self) -> Block {
        let mut bytes = Vec::new();
        self.t0.encode_to(&mut bytes);
        self.seed.encode_to(&mut bytes);
        self.k.encode_to(&mut bytes);
        let d = Digest::of(b"genesis", &bytes);
        let nonce = u64::from_be_bytes(d.0[..8].try_into().expect("8 bytes"));
        Block {
            header: BlockHeader {
                level: 0,
                round: 0,
                pred_hash: Digest::ZERO,
                eqc: None,
                endorsable_round: 0,
                pqc: None,
            },
            contents: Value {
                creator: GENESIS_CREATOR,
                level: 0,
                round: 0,
                nonce,
            },
        }
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Propose,
    Preendorse,
    Endorse,
    Preendorsements,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] = [
        MessageKind::Propose,
        MessageKind::Preendorse,
        MessageKind::Endorse,
        MessageKind::Preendorsements,
    ];
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Proposal {
    pub eqc: Option<QuorumCertificate>,
    pub value: Value,
    pub endorsable_round: Round,
    pub pqc: Option<QuorumCertificate>,
}

/// A preendorsement certificate travelling with the value it certifies, so
/// that a receiver adopting it as endorsable can later re-propose the value.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CertifiedValue {
    pub qc: QuorumCertificate,
    pub value: Value,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Payload {
    Propose(Proposal),
    Preendorse(Digest),
    Endorse(Digest),
    Preendorsements(CertifiedValue),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Propose(_) => MessageKind::Propose,
            Payload::Preendorse(_) => MessageKind::Preendorse,
            Payload::Endorse(_) => MessageKind::Endorse,
            Payload::Preendorsements(_) => MessageKind::Preendorsements,
        }
    }
}

impl Encode for Payload {
    fn encode_to(&self, out: &mut Vec<u8>) {
        match self {
            Payload::Propose(p) => {
                out.push(0);
                p.eqc.encode_to(out);
                p.value.encode_to(out);
                p.endorsable_round.encode_to(out);
                p.pqc.encode_to(out);
            }
            Payload::Preendorse(h) => {
                out.push(1);
                h.encode_to(out);
            }
            Payload::Endorse(h) => {
                out.push(2);
                h.encode_to(out);
            }
            Payload::Preendorsements(c) => {
                out.push(3);
                c.qc.encode_to(out);
                c.value.encode_to(out);
            }
        }
    }
}

impl Decode for Payload {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => Payload::Propose(Proposal {
                eqc: Option::decode_from(r)?,
                value: Value::decode_from(r)?,
                endorsable_round: u64::decode_from(r)?,
                pqc: Option::decode_from(r)?,
            }),
            1 => Payload::Preendorse(Digest::decode_from(r)?),
            2 => Payload::Endorse(Digest::decode_from(r)?),
            3 => Payload::Preendorsements(CertifiedValue {
                qc: QuorumCertificate::decode_from(r)?,
                value: Value::decode_from(r)?,
            }),
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "payload",
                    tag,
                })
            }
        })
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Message {
    pub sender: ProcessId,
    pub level: Level,
    pub round: Round,
    pub pred_hash: Digest,
    pub payload: Payload,
    pub sig: Signature,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    pub fn signing_digest_of(
        sender: ProcessId,
        level: Level,
        round: Round,
        pred_hash: Digest,
        payload: &Payload,
    ) -> Digest {
        let vote = match payload {
            Payload::Preendorse(h) => Some((false, *h)),
            Payload::Endorse(h) => Some((true, *h)),
            _ => None,
        };
        if let Some((endorse, h)) = vote {
            let key = (sender, level, round, pred_hash, endorse, h);
            return VOTE_DIGESTS.with(|m| {
                memo(m, key, || {
                    Self::encode_and_digest(sender, level, round, pred_hash, payload)
                })
            });
        }
        Self::encode_and_digest(sender, level, round, pred_hash, payload)
    }

    fn encode_and_digest(
        sender: ProcessId,
        level: Level,
        round: Round,
        pred_hash: Digest,
        payload: &Payload,
    ) -> Digest {
        let mut out = Vec::with_capacity(64);
        sender.encode_to(&mut out);
        level.encode_to(&mut out);
        round.encode_to(&mut out);
        pred_hash.encode_to(&mut out);
        payload.encode_to(&mut out);
        Digest::of(b"message", &out)
    }

    pub fn signing_digest(&self) -> Digest {
        Self::signing_digest_of(
            self.sender,
            self.level,
            self.round,
            self.pred_hash,
            &self.payload,
        )
    }

    pub fn is_authentic(&self) -> bool {
        self.sig.signer == self.sender && self.sig.digest == self.signing_digest()
    }

    pub fn proposal(&self) -> Option<&Proposal> {
        match &self.payload {
            Payload::Propose(p) => Some(p),
            _ => None,
        }
    }

    /// The value hash a Preendorse/Endorse vote is for.
    pub fn voted_hash(&self) -> Option<Digest> {
        match &self.payload {
            Payload::Preendorse(h) | Payload::Endorse(h) => Some(*h),
            _ => None,
        }
    }

    /// Every certificate carried in the payload.
    pub fn certificates(&self) -> Vec<&QuorumCertificate> {
        match &self.payload {
            Payload::Propose(p) => p.eqc.iter().chain(p.pqc.iter()).collect(),
            Payload::Preendorsements(c) => vec![&c.qc],
            _ => Vec::new(),
        }
    }
}

impl Encode for Message {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.sender.encode_to(out);
        self.level.encode_to(out);
        self.round.encode_to(out);
        self.pred_hash.encode_to(out);
        self.payload.encode_to(out);
        self.sig.encode_to(out);
    }
}

impl Decode for Message {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Message {
            sender: ProcessId::decode_from(r)?,
            level: u64::decode_from(r)?,
            round: u64::decode_from(r)?,
            pred_hash: Digest::decode_from(r)?,
            payload: Payload::decode_from(r)?,
            sig: Signature::decode_from(r)?,
        })
    }
}

/// Signing handle bound to one identity. The simulator hands each process
/// a signer for its own id only and rejects emissions carrying signatures
/// that were never issued by their owner.
#[derive(Clone, Copy, Debug)]
pub struct Signer {
    id: ProcessId,
}

impl Signer {
    pub fn new(id: ProcessId) -> Self {
        Signer { id }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn message(
        &self,
        level: Level,
        round: Round,
        pred_hash: Digest,
        payload: Payload,
    ) -> Message {
        let digest = Message::signing_digest_of(self.id, level, round, pred_hash, &payload);
        Message {
            sender: self.id,
            level,
            round,
            pred_hash,
            payload,
            sig: Signature {
                signer: self.id,
                digest,
            },
        }
    }

    /// Re-emits a block as this process's proposal.
    pub fn propose_block(&self, block: &Block) -> Message {
        let h = &block.header;
        self.message(
            h.level,
            h.round,
            h.pred_hash,
            Payload::Propose(Proposal {
                eqc: h.eqc.clone(),
                value: block.contents,
                endorsable_round: h.endorsable_round,
                pqc: h.pqc.clone(),
            }),
        )
    }

    pub fn vote(&self, claim: &QcClaim) -> Signature {
        Signature {
            signer: self.id,
            digest: vote_digest(claim, self.id),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(kind: QcKind) -> QcClaim {
        QcClaim {
            kind,
            level: 3,
            round: 2,
            pred_hash: Digest::of(b"t", b"pred"),
            value_hash: Digest::of(b"t", b"value"),
        }
    }

    fn committee() -> Vec<ProcessId> {
        (0..4).map(ProcessId).collect()
    }

    #[cfg(debug_assertions)]
    #[test]
    fn registry_finds_no_collision_in_a_run() {
        let s = crate::scenario::Scenario::from_toml(
            r#"
name = "reg"
[sim]
seed = 3
gst = 200000
delta = 10000
loss_rate = 0.5
horizon = 5000000
target_level = 4
[protocol]
n = 4
f = 1
k = 2
universe = 5
pull_interval = 200000
[protocol.durations]
base = 30000
lin_step = 30000
[adversary]
byzantine = [{ id = 1, strategy = "equivocator" }]
"#,
        )
        .unwrap();
        registry::enable(true);
        crate::sim::run(&s).unwrap();
        let seen = registry::len();
        registry::enable(false);
        // memoized hashes are noted once, so this counts distinct preimages
        assert!(seen > 50, "{seen}");
    }

    #[cfg(debug_assertions)]
    #[test]
    #[should_panic(expected = "digest collision")]
    fn registry_flags_a_reused_digest() {
        registry::enable(true);
        let d = Digest::of(b"t", b"one");
        registry::note(d, b"t", b"two");
    }

    fn qc_from(c: &QcClaim, ids: &[u32]) -> QuorumCertificate {
        let votes = ids
            .iter()
            .map(|&i| Signer::new(ProcessId(i)).vote(c))
            .collect();
        QuorumCertificate::new(*c, votes)
    }

    #[test]
    fn check_qc_accepts_quorum_of_distinct_members() {
        let c = claim(QcKind::Endorsement);
        assert!(check_qc(&qc_from(&c, &[0, 1, 2]), &c, &committee(), 1));
    }

    #[test]
    fn check_qc_rejects_repeated_signer() {
        let c = claim(QcKind::Endorsement);
        let mut qc = qc_from(&c, &[0, 1]);
        qc.votes.push(Signer::new(ProcessId(1)).vote(&c));
        qc.votes.sort();
        assert_eq!(qc.votes.len(), 3);
        assert!(!check_qc(&qc, &c, &committee(), 1));
    }

    #[test]
    fn check_qc_rejects_outsider() {
        let c = claim(QcKind::Preendorsement);
        assert!(!check_qc(&qc_from(&c, &[0, 1, 9]), &c, &committee(), 1));
    }

    #[test]
    fn check_qc_rejects_mismatched_claim_and_short_quorum() {
        let c = claim(QcKind::Preendorsement);
        let mut other = c;
        other.round = 3;
        assert!(!check_qc(&qc_from(&c, &[0, 1, 2]), &other, &committee(), 1));
        assert!(!check_qc(&qc_from(&c, &[0, 1]), &c, &committee(), 1));
    }

    #[test]
    fn check_qc_rejects_vote_for_other_kind() {
        let c = claim(QcKind::Preendorsement);
        let e = claim(QcKind::Endorsement);
        // endorsement signatures relabelled as a preendorsement certificate
        let mut qc = qc_from(&e, &[0, 1, 2]);
        qc.kind = QcKind::Preendorsement;
        assert!(!check_qc(&qc, &c, &committee(), 1));
    }

    #[test]
    fn vote_signatures_match_message_signatures() {
        let c = claim(QcKind::Endorsement);
        let s = Signer::new(ProcessId(2));
        let msg = s.message(
            c.level,
            c.round,
            c.pred_hash,
            Payload::Endorse(c.value_hash),
        );
        assert_eq!(msg.sig, s.vote(&c));
        assert!(msg.is_authentic());
    }

    #[test]
    fn qc_encoding_is_independent_of_vote_order() {
        let c = claim(QcKind::Endorsement);
        let a = qc_from(&c, &[2, 0, 1]);
        let mut b = qc_from(&c, &[0, 1, 2]);
        // bypass the sorting constructor
        b.votes.reverse();
        assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn values_differing_in_nonce_encode_differently() {
        let v = Value {
            creator: ProcessId(1),
            level: 1,
            round: 1,
            nonce: 0,
        };
        let w = Value { nonce: 1, ..v };
        assert_eq!(v.encode(), v.encode());
        assert_ne!(v.encode(), w.encode());
        assert_ne!(v.hash(), w.hash());
    }

    #[test]
    fn blocks_differing_in_round_hash_differently() {
        let g = Genesis {
            t0: 0,
            seed: vec![1],
            k: 1,
        }
        .block();
        let mut b = g.clone();
        b.header.round = 1;
        assert_eq!(g.hash(), g.clone().hash());
        assert_ne!(g.hash(), b.hash());
    }

    #[test]
    fn propose_and_block_interconvert() {
        let v = Value {
            creator: ProcessId(0),
            level: 1,
            round: 1,
            nonce: 9,
        };
        let s = Signer::new(ProcessId(0));
        let msg = s.message(
            1,
            1,
            Digest::ZERO,
            Payload::Propose(Proposal {
                eqc: None,
                value: v,
                endorsable_round: 0,
                pqc: None,
            }),
        );
        let block = Block::from_propose(&msg).unwrap();
        assert_eq!(s.propose_block(&block), msg);
    }
}
