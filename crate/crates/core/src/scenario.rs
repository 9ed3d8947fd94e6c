//! Scenario files: simulation, protocol and adversary parameters, oracle
//! selection and sweep grids. All times are integer microseconds.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{CommitteeConfig, Selection};
use crate::driver::ProtocolParams;
use crate::synchronizer::{DurationFn, DurationSpec};
use crate::types::{Genesis, Level, ProcessId, Round, Time};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Silent,
    Equivocator,
    DoubleVoter,
    StaleSpammer,
    FutureLiar,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Silent,
        Strategy::Equivocator,
        Strategy::DoubleVoter,
        Strategy::StaleSpammer,
        Strategy::FutureLiar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Silent => "silent",
            Strategy::Equivocator => "equivocator",
            Strategy::DoubleVoter => "double_voter",
            Strategy::StaleSpammer => "stale_spammer",
            Strategy::FutureLiar => "future_liar",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub seed: u64,
    /// Global stabilization time τ.
    #[serde(default)]
    pub gst: Time,
    /// Post-GST message delay bound δ.
    pub delta: Time,
    /// Post-GST clock skew bound ρ.
    #[serde(default)]
    pub rho: Time,
    /// Pre-GST clock error bound.
    #[serde(default)]
    pub delta_err: Time,
    /// Pre-GST drop probability.
    #[serde(default)]
    pub loss_rate: f64,
    pub horizon: Time,
    /// Stop once every correct process has decided this level.
    #[serde(default)]
    pub target_level: Option<Level>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub n: usize,
    pub f: usize,
    pub k: u64,
    /// Universe size; process ids are `0..universe`.
    pub universe: u32,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub t0: Time,
    #[serde(default = "default_genesis_seed")]
    pub genesis_seed: String,
    pub pull_interval: Time,
    pub durations: DurationSpec,
}

fn default_genesis_seed() -> String {
    "genesis".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSpec {
    pub id: u32,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub id: u32,
    pub at: Time,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    #[serde(default)]
    pub byzantine: Vec<ByzantineSpec>,
    /// Processes whose traffic is entirely lost before τ.
    #[serde(default)]
    pub isolated: Vec<u32>,
    /// Late starters; everyone else starts at t0.
    #[serde(default)]
    pub start_times: Vec<StartSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Agreement,
    Validity,
    VoteOnce,
    QcUniqueness,
    BufferBound,
    Termination,
    Progress,
    RecoveryBound,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::Agreement,
        Property::Validity,
        Property::VoteOnce,
        Property::QcUniqueness,
        Property::BufferBound,
        Property::Termination,
        Property::Progress,
        Property::RecoveryBound,
    ];

    pub const SAFETY: [Property; 5] = [
        Property::Agreement,
        Property::Validity,
        Property::VoteOnce,
        Property::QcUniqueness,
        Property::BufferBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Agreement => "agreement",
            Property::Validity => "validity",
            Property::VoteOnce => "vote_once",
            Property::QcUniqueness => "qc_uniqueness",
            Property::BufferBound => "buffer_bound",
            Property::Termination => "termination",
            Property::Progress => "progress",
            Property::RecoveryBound => "recovery_bound",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property `{s}`"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Properties checked by default; all when empty.
    #[serde(default)]
    pub properties: Vec<Property>,
    /// Round at which correct bakers are synchronized after τ.
    #[serde(default)]
    pub sync_round: Option<Round>,
    /// Checkpoint spacing for the progress oracle.
    #[serde(default)]
    pub progress_window: Option<Time>,
}

/// Seed range written as `"a..b"` (half-open).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedRange(pub Range<u64>);

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("seed range `{s}` must look like `a..b`"))?;
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|e| format!("seed range start: {e}"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|e| format!("seed range end: {e}"))?;
        if b < a {
            return Err(format!("seed range `{s}` is decreasing"));
        }
        Ok(SeedRange(a..b))
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.0.start, self.0.end)
    }
}

impl Serialize for SeedRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SeedRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub delta: Vec<Time>,
    #[serde(default)]
    pub loss_rate: Vec<f64>,
    #[serde(default)]
    pub gst: Vec<Time>,
    /// Applied to every Byzantine process of the scenario.
    #[serde(default)]
    pub strategy: Vec<Strategy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: SeedRange,
    #[serde(default)]
    pub grid: Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub sim: SimSection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub oracles: OracleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ConfigError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn durations(&self) -> Result<DurationFn, ConfigError> {
        DurationFn::new(self.protocol.durations).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn universe(&self) -> Vec<ProcessId> {
        (0..self.protocol.universe).map(ProcessId).collect()
    }

    pub fn committee_config(&self) -> CommitteeConfig {
        CommitteeConfig {
            n: self.protocol.n,
            f: self.protocol.f,
            k: self.protocol.k,
            universe: self.universe(),
            seed: self.protocol.genesis_seed.as_bytes().to_vec(),
            selection: self.protocol.selection,
        }
    }

    pub fn genesis(&self) -> Genesis {
        Genesis {
            t0: self.protocol.t0,
            seed: self.protocol.genesis_seed.as_bytes().to_vec(),
            k: self.protocol.k,
        }
    }

    pub fn params(&self) -> Result<Arc<ProtocolParams>, ConfigError> {
        Ok(Arc::new(ProtocolParams::new(
            self.genesis(),
            self.committee_config(),
            self.durations()?,
            self.protocol.pull_interval,
        )))
    }

    pub fn byzantine_ids(&self) -> BTreeSet<ProcessId> {
        self.adversary
            .byzantine
            .iter()
            .map(|b| ProcessId(b.id))
            .collect()
    }

    pub fn correct_ids(&self) -> Vec<ProcessId> {
        let byz = self.byzantine_ids();
        self.universe()
            .into_iter()
            .filter(|p| !byz.contains(p))
            .collect()
    }

    pub fn start_time(&self, p: ProcessId) -> Time {
        self.adversary
            .start_times
            .iter()
            .find(|s| s.id == p.0)
            .map_or(self.protocol.t0, |s| s.at)
    }

    pub fn properties(&self) -> Vec<Property> {
        if self.oracles.properties.is_empty() {
            Property::ALL.to_vec()
        } else {
            self.oracles.properties.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sim = &self.sim;
        let proto = &self.protocol;
        if sim.delta <= 0 {
            return invalid("δ must be positive");
        }
        if sim.gst < 0 || sim.rho < 0 || sim.delta_err < 0 {
            return invalid("τ, ρ and Δerr must be non-negative");
        }
        if !(0.0..=1.0).contains(&sim.loss_rate) {
            return invalid(format!("loss rate {} is not a probability", sim.loss_rate));
        }
        if sim.horizon <= 0 {
            return invalid("horizon must be positive");
        }
        if proto.pull_interval <= 0 {
            return invalid("pull interval must be positive");
        }
        self.committee_config()
            .validate()
            .map_err(ConfigError::Invalid)?;
        let d = self.durations()?;
        if d.phase_duration(1) <= 2 * sim.rho {
            return invalid(format!(
                "Δ'(1) = {} ≤ 2ρ = {}",
                d.phase_duration(1),
                2 * sim.rho
            ));
        }
        let mut byz = BTreeSet::new();
        for b in &self.adversary.byzantine {
            if b.id >= proto.universe {
                return invalid(format!("Byzantine id {} is outside the universe", b.id));
            }
            if !byz.insert(b.id) {
                return invalid(format!("Byzantine id {} listed twice", b.id));
            }
        }
        if byz.len() > proto.f {
            return invalid(format!(
                "{} Byzantine processes could put more than f = {} in one committee",
                byz.len(),
                proto.f
            ));
        }
        for &i in &self.adversary.isolated {
            if i >= proto.universe {
                return invalid(format!("isolated id {i} is outside the universe"));
            }
        }
        for s in &self.adversary.start_times {
            if s.id >= proto.universe {
                return invalid(format!("start time for id {} outside the universe", s.id));
            }
            if s.at < proto.t0 {
                return invalid(format!("process {} starts before t0", s.id));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.delta.iter().any(|&x| x <= 0) {
                return invalid("grid δ values must be positive");
            }
            if sweep
                .grid
                .loss_rate
                .iter()
                .any(|x| !(0.0..=1.0).contains(x))
            {
                return invalid("grid loss rates must be probabilities");
            }
            if sweep.grid.gst.iter().any(|&x| x < 0) {
                return invalid("grid τ values must be non-negative");
            }
        }
        Ok(())
    }

    /// Every grid point of the sweep section, crossed with its seeds.
    pub fn expand_sweep(&self, seeds: Option<Range<u64>>) -> Vec<Scenario> {
        let (grid, default_seeds) = match &self.sweep {
            Some(s) => (s.grid.clone(), s.seeds.0.clone()),
            None => (Grid::default(), self.sim.seed..self.sim.seed + 1),
        };
        let seeds = seeds.unwrap_or(default_seeds);
        let pick = |v: &Vec<Time>, cur: Time| if v.is_empty() { vec![cur] } else { v.clone() };
        let deltas = pick(&grid.delta, self.sim.delta);
        let gsts = pick(&grid.gst, self.sim.gst);
        let losses = if grid.loss_rate.is_empty() {
            vec![self.sim.loss_rate]
        } else {
            grid.loss_rate.clone()
        };
        let strategies: Vec<Option<Strategy>> = if grid.strategy.is_empty() {
            vec![None]
        } else {
            grid.strategy.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &delta in &deltas {
            for &loss in &losses {
                for &gst in &gsts {
                    for strategy in &strategies {
                        for seed in seeds.clone() {
                            let mut s = self.clone();
                            s.sweep = None;
                            s.sim.delta = delta;
                            s.sim.loss_rate = loss;
                            s.sim.gst = gst;
                            s.sim.seed = seed;
                            if let Some(st) = strategy {
                                for b in &mut s.adversary.byzantine {
                                    b.strategy = *st;
                                }
                            }
                            out.push(s);
                        }
                    }
                }
            }
        }
        out
    }

    /// Short label of the parameters a sweep varies.
    pub fn label(&self) -> String {
        let strategies: BTreeSet<_> = self
            .adversary
            .byzantine
            .iter()
            .map(|b| b.strategy.name())
            .collect();
        let strategies: Vec<_> = strategies.into_iter().collect();
        format!(
            "n={} δ={} loss={} τ={} byz=[{}]",
            self.protocol.n,
            self.sim.delta,
            self.sim.loss_rate,
            self.sim.gst,
            strategies.join(",")
        )
    }
}
