//! Hand-corrupted traces, one per safety oracle. Each starts from a clean
//! fault-free run and plants a single violation; `expect` is the record the
//! oracle must point at (or the earliest it may point at, for agreement).

use std::sync::Arc;

use tenderbake::scenario::{Property, Scenario};
use tenderbake::sim;
use tenderbake::trace::{Hex, Trace, TraceEvent, TraceRecord};
use tenderbake::types::{CertifiedValue, Message, Payload, ProcessId, QuorumCertificate, Signer};
use tenderbake::verifier::{buffer_bound, check_property, Outcome, TraceView};

const CLEAN: &str = r#"
name = "fixture"
[sim]
seed = 5
delta = 10000
horizon = 30000000
target_level = 6
[protocol]
n = 4
f = 1
k = 2
universe = 4
pull_interval = 200000
[protocol.durations]
base = 30000
lin_step = 30000
"#;

pub struct Fixture {
    pub property: Property,
    pub trace: Trace,
    /// Index of the planted record.
    pub planted: usize,
    /// Whether the oracle must name exactly `planted`.
    pub exact: bool,
}

pub fn clean() -> Trace {
    sim::run(&Scenario::from_toml(CLEAN).expect("fixture scenario")).expect("fixture run")
}

fn position(t: &Trace, pred: impl Fn(&TraceEvent) -> bool) -> usize {
    t.records
        .iter()
        .position(|r| pred(&r.e))
        .expect("fixture needs a matching record")
}

fn next_id(t: &Trace) -> u64 {
    t.records
        .iter()
        .filter_map(|r| match r.e {
            TraceEvent::Send { id, .. } => Some(id),
            _ => None,
        })
        .max()
        .unwrap_or(0)
        + 1
}

/// Process 1 decides a different block at level 2 than everyone else.
pub fn agreement() -> Fixture {
    let mut trace = clean();
    let i = position(
        &trace,
        |e| matches!(e, TraceEvent::Decide { p, level: 2, .. } if *p == ProcessId(1)),
    );
    if let TraceEvent::Decide { block, .. } = &mut trace.records[i].e {
        block.0.contents.nonce ^= 1;
    }
    Fixture {
        property: Property::Agreement,
        trace,
        planted: i,
        exact: false,
    }
}

/// A decided block loses its endorsement certificate, so it no longer
/// extends its predecessor validly nor matches the head certificate.
pub fn validity() -> Fixture {
    let mut trace = clean();
    let i = position(&trace, |e| matches!(e, TraceEvent::Decide { level: 3, .. }));
    if let TraceEvent::Decide { block, .. } = &mut trace.records[i].e {
        block.0.header.eqc = None;
    }
    Fixture {
        property: Property::Validity,
        trace,
        planted: i,
        exact: true,
    }
}

/// A correct baker sends a second preendorsement for another value.
pub fn vote_once() -> Fixture {
    let mut trace = clean();
    let i = position(
        &trace,
        |e| matches!(e, TraceEvent::Send { msg, .. } if matches!(msg.0.payload, Payload::Preendorse(_))),
    );
    let id = next_id(&trace);
    let rec = trace.records[i].clone();
    let TraceEvent::Send { p, msg, .. } = rec.e else {
        unreachable!()
    };
    let Payload::Preendorse(mut h) = msg.0.payload.clone() else {
        unreachable!()
    };
    h.0[0] ^= 1;
    let m = Signer::new(p).message(
        msg.0.level,
        msg.0.round,
        msg.0.pred_hash,
        Payload::Preendorse(h),
    );
    trace.records.insert(
        i + 1,
        TraceRecord {
            t: rec.t,
            e: TraceEvent::Send {
                p,
                id,
                msg: Hex(Arc::new(m)),
            },
        },
    );
    Fixture {
        property: Property::VoteOnce,
        trace,
        planted: i + 1,
        exact: true,
    }
}

/// A well-formed preendorsement certificate for a second value in a slot
/// that is already certified.
pub fn qc_uniqueness() -> Fixture {
    let mut trace = clean();
    let i = position(
        &trace,
        |e| matches!(e, TraceEvent::Send { msg, .. } if matches!(msg.0.payload, Payload::Preendorsements(_))),
    );
    let id = next_id(&trace);
    let rec = trace.records[i].clone();
    let TraceEvent::Send { p, msg, .. } = rec.e else {
        unreachable!()
    };
    let Payload::Preendorsements(cv) = msg.0.payload.clone() else {
        unreachable!()
    };
    let mut value = cv.value;
    value.nonce ^= 1;
    let mut claim = cv.qc.claim();
    claim.value_hash = value.hash();
    let votes = (0..3)
        .map(|q| Signer::new(ProcessId(q)).vote(&claim))
        .collect();
    let qc = QuorumCertificate::new(claim, votes);
    let m: Message = Signer::new(p).message(
        msg.0.level,
        msg.0.round,
        msg.0.pred_hash,
        Payload::Preendorsements(CertifiedValue { qc, value }),
    );
    trace.records.insert(
        i + 1,
        TraceRecord {
            t: rec.t,
            e: TraceEvent::Send {
                p,
                id,
                msg: Hex(Arc::new(m)),
            },
        },
    );
    Fixture {
        property: Property::QcUniqueness,
        trace,
        planted: i + 1,
        exact: true,
    }
}

/// One buffer report just over 4n+2.
pub fn buffer() -> Fixture {
    let mut trace = clean();
    let i = position(&trace, |e| matches!(e, TraceEvent::Buffer { .. }));
    let n = trace.scenario().protocol.n;
    if let TraceEvent::Buffer { size, .. } = &mut trace.records[i].e {
        *size = buffer_bound(n) + 1;
    }
    Fixture {
        property: Property::BufferBound,
        trace,
        planted: i,
        exact: true,
    }
}

pub fn all() -> Vec<Fixture> {
    vec![
        agreement(),
        validity(),
        vote_once(),
        qc_uniqueness(),
        buffer(),
    ]
}

/// The oracle's verdict on the fixture, or why it is unacceptable.
pub fn judge(fx: &Fixture) -> Result<usize, String> {
    let view = TraceView::new(&fx.trace).map_err(|e| e.to_string())?;
    let clean_trace = clean();
    let clean_view = TraceView::new(&clean_trace).map_err(|e| e.to_string())?;
    let before = check_property(&clean_view, fx.property);
    if before.outcome != Outcome::Pass {
        return Err(format!(
            "clean trace already {}: {}",
            before.outcome, before.detail
        ));
    }
    let v = check_property(&view, fx.property);
    if v.outcome != Outcome::Fail {
        return Err(format!(
            "corrupted trace judged {}: {}",
            v.outcome, v.detail
        ));
    }
    let at = v.counterexample.ok_or("no counterexample index")?;
    let ok = if fx.exact {
        at == fx.planted
    } else {
        at >= fx.planted
    };
    if !ok {
        return Err(format!("counterexample {at}, planted {}", fx.planted));
    }
    Ok(at)
}
