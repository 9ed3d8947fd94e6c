//! Message-free round synchronization from a local clock and the rounds
//! recorded in block headers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Chain;
use crate::types::{Round, Time};

pub const PHASES: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Propose,
    Preendorse,
    Endorse,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Propose, Phase::Preendorse, Phase::Endorse];

    pub fn index(self) -> u64 {
        self as u64
    }

    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Propose => Some(Phase::Preendorse),
            Phase::Preendorse => Some(Phase::Endorse),
            Phase::Endorse => None,
        }
    }
}

/// Scenario-facing description of the phase duration function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationSpec {
    /// Phase duration of round 1.
    pub base: Time,
    #[serde(default = "default_growth_num")]
    pub growth_num: u64,
    #[serde(default = "default_growth_den")]
    pub growth_den: u64,
    /// Last round of geometric growth.
    #[serde(default = "default_cap_round")]
    pub cap_round: Round,
    /// Per-round increment once past `cap_round`.
    pub lin_step: Time,
}

fn default_growth_num() -> u64 {
    2
}
fn default_growth_den() -> u64 {
    1
}
fn default_cap_round() -> Round {
    4
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DurationError {
    #[error("base phase duration must be positive")]
    Base,
    #[error("growth factor {0}/{1} must be greater than one")]
    Growth(u64, u64),
    #[error("cap round must be at least 1")]
    Cap,
    #[error("linear step must be positive")]
    Step,
    #[error("phase durations overflow before the cap round")]
    Overflow,
}

/// Phase durations Δ'(r), round durations Δ(r) = 3Δ'(r) and round start
/// offsets within a level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DurationSpec", into = "DurationSpec")]
pub struct DurationFn {
    spec: DurationSpec,
    /// Δ'(r) for r in 1..=cap, at index r-1.
    phase: Vec<Time>,
    /// s_r for r in 1..=cap+1, at index r-1.
    starts: Vec<i128>,
}

impl TryFrom<DurationSpec> for DurationFn {
    type Error = DurationError;

    fn try_from(spec: DurationSpec) -> Result<Self, Self::Error> {
        DurationFn::new(spec)
    }
}

impl From<DurationFn> for DurationSpec {
    fn from(d: DurationFn) -> Self {
        d.spec
    }
}

impl DurationFn {
    pub fn new(spec: DurationSpec) -> Result<Self, DurationError> {
        if spec.base <= 0 {
            return Err(DurationError::Base);
        }
        if spec.growth_den == 0 || spec.growth_num <= spec.growth_den {
            return Err(DurationError::Growth(spec.growth_num, spec.growth_den));
        }
        if spec.cap_round < 1 || spec.cap_round > 4096 {
            return Err(DurationError::Cap);
        }
        if spec.lin_step <= 0 {
            return Err(DurationError::Step);
        }
        let mut phase = Vec::with_capacity(spec.cap_round as usize);
        let mut d = spec.base as i128;
        for _ in 0..spec.cap_round {
            if d > i64::MAX as i128 / 1024 {
                return Err(DurationError::Overflow);
            }
            phase.push(d as Time);
            let grown = d * spec.growth_num as i128 / spec.growth_den as i128;
            d = grown.max(d + 1);
        }
        let mut starts = Vec::with_capacity(phase.len() + 1);
        let mut s: i128 = 0;
        starts.push(0);
        for &p in &phase {
            s += PHASES as i128 * p as i128;
            starts.push(s);
        }
        Ok(DurationFn {
            spec,
            phase,
            starts,
        })
    }

    /// Δ'(r) = r, so Δ(r) = 3r.
    pub fn linear_unit() -> Self {
        DurationFn::new(DurationSpec {
            base: 1,
            growth_num: 2,
            growth_den: 1,
            cap_round: 1,
            lin_step: 1,
        })
        .expect("valid")
    }

    pub fn spec(&self) -> &DurationSpec {
        &self.spec
    }

    fn cap(&self) -> Round {
        self.spec.cap_round
    }

    /// Δ'(r), saturating at `Time::MAX`.
    pub fn phase_duration(&self, r: Round) -> Time {
        assert!(r >= 1, "rounds start at 1");
        if r <= self.cap() {
            return self.phase[(r - 1) as usize];
        }
        let last = *self.phase.last().expect("cap >= 1") as i128;
        let d = last + (r - self.cap()) as i128 * self.spec.lin_step as i128;
        d.min(Time::MAX as i128) as Time
    }

    /// Δ(r) = 3Δ'(r).
    pub fn round_duration(&self, r: Round) -> Time {
        (PHASES as i128 * self.phase_duration(r) as i128).min(Time::MAX as i128) as Time
    }

    fn start_wide(&self, r: Round) -> i128 {
        assert!(r >= 1, "rounds start at 1");
        let cap = self.cap();
        if r <= cap + 1 {
            return self.starts[(r - 1) as usize];
        }
        // rounds cap+1..r-1 grow linearly from Δ'(cap) + step
        let m = (r - 1 - cap).min(1 << 40) as i128;
        let last = *self.phase.last().expect("cap >= 1") as i128;
        let step = self.spec.lin_step as i128;
        let phase_sum = m * last + step * m * (m + 1) / 2;
        self.starts[cap as usize] + PHASES as i128 * phase_sum
    }

    /// s_r: offset of the start of round r from the start of its level.
    pub fn round_start_offset(&self, r: Round) -> Time {
        self.start_wide(r).min(Time::MAX as i128) as Time
    }

    /// Σ_{j=1}^{r} Δ(j), the duration of a level decided at round r.
    pub fn level_duration(&self, r: Round) -> Time {
        if r == 0 {
            return 0;
        }
        self.round_start_offset(r + 1)
    }

    /// The unique r with s_r ≤ td < s_{r+1}.
    pub fn delta_inv(&self, td: Time) -> Round {
        assert!(td >= 0, "offset must be non-negative");
        let td = td as i128;
        let (mut lo, mut hi): (Round, Round) = (1, 2);
        while self.start_wide(hi) <= td {
            lo = hi;
            hi = hi.saturating_mul(2);
        }
        // invariant: s_lo <= td < s_hi
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.start_wide(mid) <= td {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn phase_position(&self, round: Round, round_offset: Time) -> PhasePosition {
        get_next_phase(round, round_offset, self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyncResult {
    pub round: Round,
    pub round_offset: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhasePosition {
    pub phase: Phase,
    pub phase_offset: Time,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SyncError {
    #[error("local clock {now} is before the level start {level_start}")]
    ClockBeforeLevelStart { now: Time, level_start: Time },
}

/// Start time of the level following `chain`'s head: t0 plus the durations
/// of all rounds of every decided level after genesis.
pub fn level_start(chain: &Chain, t0: Time, durations: &DurationFn) -> Time {
    chain.blocks()[1..].iter().fold(t0, |acc, b| {
        acc.saturating_add(durations.level_duration(b.header.round))
    })
}

pub fn synchronize(
    chain: &Chain,
    local_now: Time,
    durations: &DurationFn,
    t0: Time,
) -> Result<SyncResult, SyncError> {
    synchronize_from(level_start(chain, t0, durations), local_now, durations)
}

pub fn synchronize_from(
    level_start: Time,
    local_now: Time,
    durations: &DurationFn,
) -> Result<SyncResult, SyncError> {
    if local_now < level_start {
        return Err(SyncError::ClockBeforeLevelStart {
            now: local_now,
            level_start,
        });
    }
    let td = local_now - level_start;
    let round = durations.delta_inv(td);
    Ok(SyncResult {
        round,
        round_offset: td - durations.round_start_offset(round),
    })
}

pub fn get_next_phase(round: Round, round_offset: Time, durations: &DurationFn) -> PhasePosition {
    let d = durations.phase_duration(round);
    debug_assert!(round_offset >= 0 && round_offset < PHASES as Time * d);
    let i = (round_offset / d).clamp(0, PHASES as Time - 1);
    PhasePosition {
        phase: Phase::ALL[i as usize],
        phase_offset: round_offset - i * d,
    }
}
