//! Episode traces: line-delimited canonical JSON with a SHA-256 digest.
//!
//! Line 1 is the header, each following line one event, and the last line
//! the summary. Replaying a header regenerates the trace; verification
//! compares the regenerated text line by line.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{EngineError, Event, EventKind, SimState};
use crate::government::WelfareMetrics;
use crate::grid::EnterpriseId;
use crate::policies::{EntPolicySpec, GovPolicySpec, PolicyError};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unsupported trace format version {found} (this build reads version {TRACE_FORMAT_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("config hash mismatch: header {header}, recomputed {actual}")]
    HashMismatch { header: String, actual: String },
    #[error("malformed trace at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format_version: u32,
    pub seed: u64,
    pub config: SimConfig,
    pub config_hash: String,
    pub gov_policy: String,
    pub ent_policy: String,
    /// Punishment the baseline government aims for.
    pub punishment: f64,
}

impl TraceHeader {
    pub fn new(config: SimConfig, seed: u64, gov: GovPolicySpec, ent: EntPolicySpec, punishment: f64) -> Self {
        Self {
            format_version: TRACE_FORMAT_VERSION,
            seed,
            config_hash: config.hash(),
            config,
            gov_policy: gov.to_string(),
            ent_policy: ent.to_string(),
            punishment,
        }
    }

    /// Checks version and config hash and resolves the policy names.
    pub fn resolve(&self) -> Result<(GovPolicySpec, EntPolicySpec), TraceError> {
        if self.format_version != TRACE_FORMAT_VERSION {
            return Err(TraceError::UnsupportedVersion {
                found: self.format_version as u64,
            });
        }
        let actual = self.config.hash();
        if actual != self.config_hash {
            return Err(TraceError::HashMismatch {
                header: self.config_hash.clone(),
                actual,
            });
        }
        Ok((self.gov_policy.parse()?, self.ent_policy.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterpriseSummary {
    pub id: EnterpriseId,
    pub size: f64,
    pub research: f64,
    pub coins: f64,
    pub wealth: f64,
    pub utility: f64,
    pub reward_sum: f64,
    pub emissions: f64,
    pub excess: f64,
    pub income: f64,
    pub emission_level: f64,
    pub produces: u32,
    pub investments: u32,
    pub trades: u32,
    pub projects_built: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub metrics: WelfareMetrics,
    pub government_reward_sum: f64,
    pub cumulative_emissions: f64,
    pub excess_emissions: f64,
    pub trades: usize,
    pub properties: usize,
    pub projects_complete: usize,
    pub projects_placed: usize,
    pub investments: usize,
    pub enterprises: Vec<EnterpriseSummary>,
}

impl TraceSummary {
    /// Summary of a finished episode; `reward_sums` are per-enterprise sums
    /// of step rewards.
    pub fn from_state(state: &SimState, reward_sums: &[f64], government_reward_sum: f64) -> Self {
        let enterprises: Vec<EnterpriseSummary> = state
            .enterprises()
            .iter()
            .zip(reward_sums)
            .map(|(s, &reward_sum)| EnterpriseSummary {
                id: s.id,
                size: s.skills.size,
                research: s.skills.research,
                coins: s.coins,
                wealth: s.wealth(),
                utility: s.utility_prev,
                reward_sum,
                emissions: s.total_emissions,
                excess: s.excess_record,
                income: s.total_income,
                emission_level: s.emission_level,
                produces: s.n_produce,
                investments: s.n_invest,
                trades: s.n_trades,
                projects_built: s.n_projects_built,
            })
            .collect();
        let (projects_placed, projects_complete) = state.grid().count_projects();
        Self {
            metrics: state.metrics(),
            government_reward_sum,
            cumulative_emissions: enterprises.iter().map(|e| e.emissions).sum(),
            excess_emissions: enterprises.iter().map(|e| e.excess).sum(),
            trades: state.book().trades().len(),
            properties: state.grid().count_properties(),
            projects_complete,
            projects_placed,
            investments: enterprises.iter().map(|e| e.investments as usize).sum(),
            enterprises,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryLine {
    summary: TraceSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
    pub summary: TraceSummary,
}

/// Result of comparing a trace with its regeneration.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Verified,
    Diverged {
        /// Zero-based line index of the first difference.
        line: usize,
        /// Timestep of the regenerated event at that line, if it is one.
        t: Option<usize>,
        expected: Option<String>,
        found: Option<String>,
    },
}

impl EpisodeTrace {
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.events.len() + 2);
        out.push(serde_json::to_string(&self.header).expect("header serializes"));
        out.extend(
            self.events
                .iter()
                .map(|e| serde_json::to_string(e).expect("event serializes")),
        );
        out.push(
            serde_json::to_string(&SummaryLine {
                summary: self.summary.clone(),
            })
            .expect("summary serializes"),
        );
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = self.lines().join("\n");
        s.push('\n');
        s
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    /// Parses only the header line, checking the format version first so
    /// old traces fail with a clear message.
    pub fn parse_header(line: &str) -> Result<TraceHeader, TraceError> {
        let malformed = |reason: String| TraceError::Malformed { line: 0, reason };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == TRACE_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(TraceError::UnsupportedVersion { found: v }),
            None => return Err(malformed("missing format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| malformed(e.to_string()))
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 2 {
            return Err(TraceError::Malformed {
                line: lines.len(),
                reason: "trace needs a header and a summary".into(),
            });
        }
        let header = Self::parse_header(lines[0])?;
        let last = lines.len() - 1;
        let events = lines[1..last]
            .iter()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| TraceError::Malformed {
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<Event>, _>>()?;
        let summary = serde_json::from_str::<SummaryLine>(lines[last])
            .map_err(|e| TraceError::Malformed {
                line: last,
                reason: e.to_string(),
            })?
            .summary;
        Ok(Self {
            header,
            events,
            summary,
        })
    }

    /// Number of allocation events, i.e. periods started.
    pub fn allocation_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Allocation { .. }))
            .count()
    }
}

/// Regenerates the trace described by `header`.
pub fn replay(header: &TraceHeader) -> Result<EpisodeTrace, TraceError> {
    let (gov, ent) = header.resolve()?;
    Ok(crate::runner::run_episode(&crate::runner::EpisodeSpec {
        config: header.config.clone(),
        seed: header.seed,
        gov,
        ent,
        punishment: header.punishment,
    })?)
}

/// Replays the header of `text` and compares the regenerated trace line by
/// line.
pub fn verify(text: &str) -> Result<Verdict, TraceError> {
    let first = text.lines().next().ok_or(TraceError::Malformed {
        line: 0,
        reason: "empty trace".into(),
    })?;
    let header = EpisodeTrace::parse_header(first)?;
    let regenerated = replay(&header)?;
    let fresh = regenerated.lines();
    let given: Vec<&str> = text.lines().collect();
    let n = fresh.len().max(given.len());
    for i in 0..n {
        let expected = fresh.get(i).map(String::as_str);
        let found = given.get(i).copied();
        if expected != found {
            let t = (i >= 1 && i <= regenerated.events.len()).then(|| regenerated.events[i - 1].t);
            return Ok(Verdict::Diverged {
                line: i,
                t,
                expected: expected.map(str::to_owned),
                found: found.map(str::to_owned),
            });
        }
    }
    if !text.ends_with('\n') {
        return Ok(Verdict::Diverged {
            line: n.saturating_sub(1),
            t: None,
            expected: Some("trailing newline".into()),
            found: None,
        });
    }
    Ok(Verdict::Verified)
}
