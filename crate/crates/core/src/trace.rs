//! Trace records and the JSON-lines trace file format.
//!
//! Line 1 is a header carrying the schema id and the full scenario, so a
//! trace can be checked offline. Every further line is one record
//! `{"t": <virtual µs>, "e": {"ev": <kind>, ...}}`. Blocks, messages and
//! certificates are hex strings of their canonical encoding.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::driver::ChainOutcome;
use crate::encoding::{from_hex, to_hex, Decode, Encode};
use crate::scenario::Scenario;
use crate::synchronizer::Phase;
use crate::types::{Block, Level, Message, ProcessId, QuorumCertificate, Round, Time};

pub const SCHEMA: &str = "tbsim-trace/1";

/// Serde adapter writing a value as the hex of its canonical encoding.
#[derive(Clone, PartialEq, Eq)]
pub struct Hex<T>(pub T);

impl<T: fmt::Debug> fmt::Debug for Hex<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<T: Encode> Serialize for Hex<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(&self.0))
    }
}

impl<'de, T: Decode> Deserialize<'de> for Hex<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        from_hex(&s).map(Hex).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Horizon,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceEvent {
    Started {
        p: ProcessId,
        /// Local clock offsets before and after τ.
        pre_gst_skew: Time,
        post_gst_skew: Time,
    },
    Send {
        p: ProcessId,
        id: u64,
        msg: Hex<Arc<Message>>,
    },
    Deliver {
        p: ProcessId,
        id: u64,
    },
    Drop {
        p: ProcessId,
        id: u64,
    },
    Pull {
        p: ProcessId,
        out_of_band: bool,
    },
    ChainRejected {
        p: ProcessId,
        outcome: ChainOutcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fault: Option<String>,
    },
    Decide {
        p: ProcessId,
        level: Level,
        round: Round,
        block: Hex<Block>,
        qc: Hex<QuorumCertificate>,
    },
    Adopt {
        p: ProcessId,
        kept: usize,
        blocks: Vec<Hex<Block>>,
        certificate: Hex<QuorumCertificate>,
    },
    HeadSwap {
        p: ProcessId,
        level: Level,
        old_round: Round,
        new_round: Round,
        block: Hex<Block>,
        certificate: Hex<QuorumCertificate>,
    },
    Buffer {
        p: ProcessId,
        size: usize,
    },
    Phase {
        p: ProcessId,
        level: Level,
        round: Round,
        phase: Phase,
        offset: Time,
        locked_round: Round,
        endorsable_round: Round,
        baker: bool,
    },
    End {
        reason: EndReason,
    },
}

impl TraceEvent {
    pub fn process(&self) -> Option<ProcessId> {
        use TraceEvent::*;
        match self {
            Started { p, .. }
            | Send { p, .. }
            | Deliver { p, .. }
            | Drop { p, .. }
            | Pull { p, .. }
            | ChainRejected { p, .. }
            | Decide { p, .. }
            | Adopt { p, .. }
            | HeadSwap { p, .. }
            | Buffer { p, .. }
            | Phase { p, .. } => Some(*p),
            End { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: Time,
    pub e: TraceEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("empty trace file")]
    Empty,
    #[error("unsupported trace schema `{0}`")]
    Schema(String),
}

impl Trace {
    pub fn new(scenario: Scenario) -> Trace {
        Trace {
            header: TraceHeader {
                schema: SCHEMA.to_string(),
                scenario,
            },
            records: Vec::new(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.header.scenario
    }

    pub fn push(&mut self, t: Time, e: TraceEvent) {
        self.records.push(TraceRecord { t, e });
    }

    /// Time of the last record, or of the end marker.
    pub fn end_time(&self) -> Time {
        self.records.last().map_or(0, |r| r.t)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        out
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(&first?).map_err(|source| TraceError::Json { line: 1, source })?;
        if header.schema != SCHEMA {
            return Err(TraceError::Schema(header.schema));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|source| TraceError::Json {
                line: i + 1,
                source,
            })?;
            records.push(rec);
        }
        Ok(Trace { header, records })
    }
}
