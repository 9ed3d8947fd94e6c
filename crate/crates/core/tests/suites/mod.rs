//! Property suites shared by the `properties` and `acceptance` targets.
//! Each suite drives its own runner for `CASES` generated cases and
//! reports the first minimized failure.

#![allow(dead_code)]

pub mod fixtures;

use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use tenderbake::chain::{proposer_in, Chain};
use tenderbake::consensus::{InstanceCtx, InstanceState};
use tenderbake::encoding::{from_hex, to_hex, Decode, Encode};
use tenderbake::scenario::{Scenario, Strategy as Byzantine};
use tenderbake::sim;
use tenderbake::synchronizer::{
    get_next_phase, level_start, synchronize, DurationFn, DurationSpec, Phase,
};
use tenderbake::trace::Trace;
use tenderbake::types::{
    check_qc, Block, BlockHeader, CertifiedValue, Digest, Genesis, Message, MessageKind, Payload,
    ProcessId, Proposal, QcClaim, QcKind, QuorumCertificate, Round, Signature, Signer, Time, Value,
};

pub const CASES: u32 = 1000;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const ALL: [Suite; 10] = [
    ("encoding round-trip", encoding_roundtrip),
    ("encoding rejects truncation", encoding_truncation),
    ("synchronize reconstruction", synchronize_reconstruction),
    ("getNextPhase partition", next_phase_partition),
    ("Δinv interval", delta_inv_interval),
    ("Δinv at round starts", delta_inv_at_starts),
    ("checkQC against set oracle", qc_matches_oracle),
    ("checkQC accepts quorums", qc_accepts_quorums),
    ("filterMessages bound", filter_bound),
    ("trace file round-trip", trace_roundtrip),
];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(
    cases: u32,
    s: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&s, test).map_err(|e| e.to_string())
}

// ---- generators ----

fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 16]>().prop_map(Digest)
}

fn pid() -> impl Strategy<Value = ProcessId> {
    (0u32..40).prop_map(ProcessId)
}

fn value() -> impl Strategy<Value = Value> {
    (pid(), any::<u64>(), any::<u64>(), any::<u64>()).prop_map(|(creator, level, round, nonce)| {
        Value {
            creator,
            level,
            round,
            nonce,
        }
    })
}

fn signature() -> impl Strategy<Value = Signature> {
    (pid(), digest()).prop_map(|(signer, digest)| Signature { signer, digest })
}

fn qc() -> impl Strategy<Value = QuorumCertificate> {
    (
        any::<bool>(),
        any::<u64>(),
        any::<u64>(),
        digest(),
        digest(),
        vec(signature(), 0..8),
    )
        .prop_map(
            |(pre, level, round, pred_hash, value_hash, votes)| QuorumCertificate {
                kind: if pre {
                    QcKind::Preendorsement
                } else {
                    QcKind::Endorsement
                },
                level,
                round,
                pred_hash,
                value_hash,
                votes,
            },
        )
        .prop_map(|qc| QuorumCertificate::new(qc.claim(), qc.votes))
}

fn block() -> impl Strategy<Value = Block> {
    (
        any::<u64>(),
        any::<u64>(),
        digest(),
        proptest::option::of(qc()),
        any::<u64>(),
        proptest::option::of(qc()),
        value(),
    )
        .prop_map(
            |(level, round, pred_hash, eqc, endorsable_round, pqc, contents)| Block {
                header: BlockHeader {
                    level,
                    round,
                    pred_hash,
                    eqc,
                    endorsable_round,
                    pqc,
                },
                contents,
            },
        )
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (
            proptest::option::of(qc()),
            value(),
            any::<u64>(),
            proptest::option::of(qc())
        )
            .prop_map(
                |(eqc, value, endorsable_round, pqc)| Payload::Propose(Proposal {
                    eqc,
                    value,
                    endorsable_round,
                    pqc,
                })
            ),
        digest().prop_map(Payload::Preendorse),
        digest().prop_map(Payload::Endorse),
        (qc(), value())
            .prop_map(|(qc, value)| Payload::Preendorsements(CertifiedValue { qc, value })),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    (
        pid(),
        any::<u64>(),
        any::<u64>(),
        digest(),
        payload(),
        signature(),
    )
        .prop_map(|(sender, level, round, pred_hash, payload, sig)| Message {
            sender,
            level,
            round,
            pred_hash,
            payload,
            sig,
        })
}

#[derive(Debug, Clone)]
enum Encoded {
    Value(Value),
    Qc(QuorumCertificate),
    Block(Block),
    Message(Message),
}

fn encoded() -> impl Strategy<Value = Encoded> {
    prop_oneof![
        value().prop_map(Encoded::Value),
        qc().prop_map(Encoded::Qc),
        block().prop_map(Encoded::Block),
        message().prop_map(Encoded::Message),
    ]
}

fn spec() -> impl Strategy<Value = DurationSpec> {
    (1i64..5_000, 1u64..4, 1u64..4, 1u64..8, 1i64..5_000).prop_map(
        |(base, den, extra, cap_round, lin_step)| DurationSpec {
            base,
            growth_num: den + extra,
            growth_den: den,
            cap_round,
            lin_step,
        },
    )
}

// ---- oracles ----

/// Δ'(r) straight from the spec: geometric growth (at least +1 per round)
/// up to the cap, linear afterwards.
fn phase_oracle(s: &DurationSpec, r: Round) -> i128 {
    let mut d = s.base as i128;
    let mut j = 1;
    while j < r.min(s.cap_round) {
        d = (d * s.growth_num as i128 / s.growth_den as i128).max(d + 1);
        j += 1;
    }
    if r > s.cap_round {
        d += (r - s.cap_round) as i128 * s.lin_step as i128;
    }
    d
}

/// s_r as a plain sum of round durations.
fn start_oracle(s: &DurationSpec, r: Round) -> i128 {
    (1..r).map(|j| 3 * phase_oracle(s, j)).sum()
}

fn encode_any(e: &Encoded) -> Vec<u8> {
    match e {
        Encoded::Value(v) => v.encode(),
        Encoded::Qc(v) => v.encode(),
        Encoded::Block(v) => v.encode(),
        Encoded::Message(v) => v.encode(),
    }
}

fn decode_same(e: &Encoded, bytes: &[u8]) -> Result<bool, String> {
    let r = match e {
        Encoded::Value(v) => Value::decode(bytes).map(|d| d == *v),
        Encoded::Qc(v) => QuorumCertificate::decode(bytes).map(|d| d == *v),
        Encoded::Block(v) => Block::decode(bytes).map(|d| d == *v),
        Encoded::Message(v) => Message::decode(bytes).map(|d| d == *v),
    };
    r.map_err(|e| e.to_string())
}

// ---- suites ----

pub fn encoding_roundtrip() -> Result<(), String> {
    run(CASES, encoded(), |e| {
        let bytes = encode_any(&e);
        prop_assert_eq!(decode_same(&e, &bytes), Ok(true));
        if let Encoded::Block(b) = &e {
            let hex = to_hex(b);
            prop_assert_eq!(
                &from_hex::<Block>(&hex).map_err(|e| e.to_string()),
                &Ok(b.clone())
            );
        }
        Ok(())
    })
}

pub fn encoding_truncation() -> Result<(), String> {
    run(
        CASES,
        (encoded(), any::<prop::sample::Index>()),
        |(e, cut)| {
            let bytes = encode_any(&e);
            let cut = cut.index(bytes.len());
            prop_assert!(
                decode_same(&e, &bytes[..cut]).is_err(),
                "prefix of {} bytes decoded",
                cut
            );
            let mut longer = bytes.clone();
            longer.push(0);
            prop_assert!(decode_same(&e, &longer).is_err(), "trailing byte accepted");
            Ok(())
        },
    )
}

fn chain_of(rounds: &[Round]) -> Chain {
    let genesis = Genesis {
        t0: 0,
        seed: vec![1],
        k: 1,
    }
    .block();
    let mut blocks = vec![genesis];
    for (i, &round) in rounds.iter().enumerate() {
        blocks.push(Block {
            header: BlockHeader {
                level: i as u64 + 1,
                round,
                pred_hash: Digest::ZERO,
                eqc: None,
                endorsable_round: 0,
                pqc: None,
            },
            contents: Value {
                creator: ProcessId(0),
                level: i as u64 + 1,
                round,
                nonce: 0,
            },
        });
    }
    Chain::from_blocks(blocks)
}

pub fn synchronize_reconstruction() -> Result<(), String> {
    let s = (
        spec(),
        vec(1u64..10, 0..12),
        -1_000_000i64..1_000_000,
        0i64..2_000_000_000,
    );
    run(CASES, s, |(spec, rounds, t0, extra)| {
        let d = DurationFn::new(spec).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let chain = chain_of(&rounds);
        let expected_start: i128 = t0 as i128
            + rounds
                .iter()
                .map(|&r| start_oracle(&spec, r + 1))
                .sum::<i128>();
        let ls = level_start(&chain, t0, &d);
        prop_assert_eq!(ls as i128, expected_start);
        let now = ls + extra;
        let sync =
            synchronize(&chain, now, &d, t0).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(
            ls as i128 + start_oracle(&spec, sync.round) + sync.round_offset as i128,
            now as i128
        );
        prop_assert!(sync.round_offset >= 0);
        prop_assert!((sync.round_offset as i128) < 3 * phase_oracle(&spec, sync.round));
        prop_assert!(synchronize(&chain, ls - 1, &d, t0).is_err());
        Ok(())
    })
}

pub fn next_phase_partition() -> Result<(), String> {
    run(
        CASES,
        (spec(), 1u64..40, any::<prop::sample::Index>()),
        |(spec, r, at)| {
            let d = DurationFn::new(spec).map_err(|e| TestCaseError::reject(e.to_string()))?;
            let cell = phase_oracle(&spec, r);
            prop_assert_eq!(d.phase_duration(r) as i128, cell);
            prop_assert_eq!(d.round_duration(r) as i128, 3 * cell);
            let off = at.index((3 * cell) as usize) as Time;
            let pos = get_next_phase(r, off, &d);
            let i = pos.phase.index() as i128;
            prop_assert_eq!(pos.phase, Phase::ALL[(off as i128 / cell) as usize]);
            prop_assert_eq!(i * cell + pos.phase_offset as i128, off as i128);
            prop_assert!(pos.phase_offset >= 0 && (pos.phase_offset as i128) < cell);
            Ok(())
        },
    )
}

pub fn delta_inv_interval() -> Result<(), String> {
    run(CASES, (spec(), 0i64..1_000_000_000), |(spec, td)| {
        let d = DurationFn::new(spec).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let r = d.delta_inv(td);
        prop_assert!(r >= 1);
        let (lo, hi) = (start_oracle(&spec, r), start_oracle(&spec, r + 1));
        prop_assert!(
            lo <= td as i128 && (td as i128) < hi,
            "td {} not in [{}, {}) for r {}",
            td,
            lo,
            hi,
            r
        );
        Ok(())
    })
}

pub fn delta_inv_at_starts() -> Result<(), String> {
    run(CASES, (spec(), 1u64..300), |(spec, r)| {
        let d = DurationFn::new(spec).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let s = start_oracle(&spec, r);
        prop_assert_eq!(d.round_start_offset(r) as i128, s);
        prop_assert_eq!(d.delta_inv(s as Time), r);
        prop_assert_eq!(d.delta_inv((start_oracle(&spec, r + 1) - 1) as Time), r);
        Ok(())
    })
}

#[derive(Debug, Clone)]
struct QcCase {
    f: usize,
    committee: Vec<ProcessId>,
    claim: QcClaim,
    /// (signer, forged digest)
    votes: Vec<(ProcessId, bool)>,
    /// Certificate fields differ from the expected claim.
    mismatch: bool,
}

fn claim() -> impl Strategy<Value = QcClaim> {
    (any::<bool>(), 1u64..1000, 1u64..50, digest(), digest()).prop_map(
        |(pre, level, round, pred_hash, value_hash)| QcClaim {
            kind: if pre {
                QcKind::Preendorsement
            } else {
                QcKind::Endorsement
            },
            level,
            round,
            pred_hash,
            value_hash,
        },
    )
}

fn qc_case() -> impl Strategy<Value = QcCase> {
    (1usize..=4).prop_flat_map(|f| {
        let n = 3 * f + 1;
        let universe: Vec<ProcessId> = (0..(n as u32 + 3)).map(ProcessId).collect();
        (
            Just(f),
            Just(universe.clone())
                .prop_shuffle()
                .prop_map(move |u| u[..n].to_vec()),
            claim(),
            vec(
                (
                    proptest::sample::select(universe),
                    prop::bool::weighted(0.08),
                ),
                0..=n + 2,
            ),
            prop::bool::weighted(0.1),
        )
            .prop_map(|(f, committee, claim, votes, mismatch)| QcCase {
                f,
                committee,
                claim,
                votes,
                mismatch,
            })
    })
}

fn build_qc(claim: &QcClaim, votes: &[(ProcessId, bool)], mismatch: bool) -> QuorumCertificate {
    let sigs = votes
        .iter()
        .map(|&(p, forged)| {
            let mut s = Signer::new(p).vote(claim);
            if forged {
                s.digest.0[0] ^= 1;
            }
            s
        })
        .collect();
    let mut qc = QuorumCertificate::new(*claim, sigs);
    if mismatch {
        qc.round += 1;
    }
    qc
}

pub fn qc_matches_oracle() -> Result<(), String> {
    run(CASES, qc_case(), |c| {
        let qc = build_qc(&c.claim, &c.votes, c.mismatch);
        let mut signers: Vec<ProcessId> = c.votes.iter().map(|v| v.0).collect();
        signers.sort();
        signers.dedup();
        let expected = !c.mismatch
            && signers.len() == c.votes.len()
            && c.votes
                .iter()
                .all(|(p, forged)| !forged && c.committee.contains(p))
            && signers.len() > 2 * c.f;
        prop_assert_eq!(check_qc(&qc, &c.claim, &c.committee, c.f), expected);
        Ok(())
    })
}

pub fn qc_accepts_quorums() -> Result<(), String> {
    let s = (1usize..=4, claim()).prop_flat_map(|(f, claim)| {
        let n = 3 * f + 1;
        let committee: Vec<ProcessId> = (0..n as u32).map(ProcessId).collect();
        (
            Just(f),
            Just(claim),
            proptest::sample::subsequence(committee, 0..=n),
        )
    });
    run(CASES, s, |(f, claim, voters)| {
        let committee: Vec<ProcessId> = (0..(3 * f + 1) as u32).map(ProcessId).collect();
        let votes: Vec<_> = voters.iter().map(|&p| (p, false)).collect();
        let qc = build_qc(&claim, &votes, false);
        prop_assert_eq!(check_qc(&qc, &claim, &committee, f), voters.len() > 2 * f);
        // the same votes never certify a different value
        let mut other = claim;
        other.value_hash.0[15] ^= 0x80;
        prop_assert!(!check_qc(&qc, &other, &committee, f));
        Ok(())
    })
}

#[derive(Debug, Clone)]
struct Incoming {
    kind: u8,
    /// 0 → r, 1 → r+1, 2 → r+2, 3 → r-1
    round_sel: u8,
    /// 0 → the round's proposer, otherwise a committee member or outsider
    sender: u32,
    nonce: u64,
}

fn incoming(n: u32) -> impl Strategy<Value = Incoming> {
    (
        0u8..3,
        prop_oneof![3 => Just(0u8), 3 => Just(1u8), 1 => Just(2u8), 1 => Just(3u8)],
        0..n + 2,
        0u64..2,
    )
        .prop_map(|(kind, round_sel, sender, nonce)| Incoming {
            kind,
            round_sel,
            sender,
            nonce,
        })
}

pub fn filter_bound() -> Result<(), String> {
    let s = (1u32..=3, 1u64..6).prop_flat_map(|(f, r)| {
        let n = 3 * f + 1;
        (Just(f), Just(r), vec(incoming(n), 0..120))
    });
    run(CASES, s, |(f, r, stream)| {
        let n = 3 * f + 1;
        let genesis = Genesis {
            t0: 0,
            seed: vec![],
            k: 1,
        }
        .block();
        let committee: Vec<ProcessId> = (0..n).map(ProcessId).collect();
        let ctx = InstanceCtx {
            level: 1,
            pred_hash: genesis.hash(),
            head: &genesis,
            head_certificate: None,
            committee: &committee,
            prev_committee: &committee,
            f: f as usize,
        };
        let mut st = InstanceState::new();
        st.set_round(r);
        for m in &stream {
            let round = match m.round_sel {
                0 => r,
                1 => r + 1,
                2 => r + 2,
                _ => r.saturating_sub(1).max(1),
            };
            let proposer = proposer_in(&committee, round);
            let sender = if m.sender == 0 {
                proposer
            } else {
                ProcessId(m.sender - 1)
            };
            let v = Value {
                creator: proposer,
                level: 1,
                round,
                nonce: m.nonce,
            };
            let payload = match m.kind {
                0 => Payload::Propose(Proposal {
                    eqc: None,
                    value: Value {
                        creator: sender,
                        ..v
                    },
                    endorsable_round: 0,
                    pqc: None,
                }),
                1 => Payload::Preendorse(v.hash()),
                _ => Payload::Endorse(v.hash()),
            };
            let msg = Arc::new(Signer::new(sender).message(1, round, genesis.hash(), payload));
            st.handle_message(&msg, &ctx);
            prop_assert!(st.buffer_len() <= 4 * n as usize + 2);
        }
        let before: Vec<Arc<Message>> = st.messages().to_vec();
        st.set_round(r + 1);
        st.filter_messages();
        let kept: Vec<&Arc<Message>> = before.iter().filter(|m| m.round == r + 1).collect();
        prop_assert_eq!(st.messages().iter().collect::<Vec<_>>(), kept);
        prop_assert!(st.buffer_len() <= 2 * n as usize + 1);
        let proposals = st
            .messages()
            .iter()
            .filter(|m| m.kind() == MessageKind::Propose)
            .count();
        prop_assert!(proposals <= 1);
        Ok(())
    })
}

const SMALL: &str = r#"
name = "roundtrip"
[sim]
seed = 0
gst = 100000
delta = 10000
rho = 1000
delta_err = 5000
loss_rate = 0.5
horizon = 3000000
target_level = 2
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
"#;

pub fn trace_roundtrip() -> Result<(), String> {
    let base = Scenario::from_toml(SMALL).map_err(|e| e.to_string())?;
    run(CASES, (any::<u64>(), 0usize..5), move |(seed, k)| {
        let mut s = base.clone();
        s.sim.seed = seed;
        s.adversary.byzantine[0].strategy = Byzantine::ALL[k];
        let t = sim::run(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let bytes = t.to_jsonl();
        let back = Trace::read_jsonl(&bytes[..]).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(back == t);
        prop_assert!(back.to_jsonl() == bytes);
        Ok(())
    })
}
