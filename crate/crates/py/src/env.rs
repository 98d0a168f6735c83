//! Multi-agent reset/step environment over one simulator episode.
//!
//! Agents are named `government` and `enterprise_<i>`. Each agent is either
//! controlled from outside or driven by a named scripted policy. One call to
//! [`Env::step`] advances one timestep: at period starts only the
//! government's action is consumed, at every other step only the
//! enterprises' actions are.
//!
//! Arrays are flat and row-major; [`SpaceDescriptor`] gives their shapes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use carbonsim::government::ACTION_LEVELS;
use carbonsim::observation::{EnterpriseObservation, GovernmentObservation, MAP_CHANNELS};
use carbonsim::policies::{EnterprisePolicy, GovernmentPolicy, PolicyError};
use carbonsim::runner::{enterprise_stream, government_stream};
use carbonsim::trace::{TraceSummary, TRACE_FORMAT_VERSION};
use carbonsim::{
    Action, ConfigError, EngineError, EntPolicySpec, EnterpriseId, EpisodeTrace, Event, EventKind, GovPolicySpec,
    GovernmentAction, RngStream, SimConfig, SimState, TraceHeader,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentId {
    Government,
    Enterprise(EnterpriseId),
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Government => f.write_str("government"),
            AgentId::Enterprise(id) => write!(f, "enterprise_{}", id.0),
        }
    }
}

impl FromStr for AgentId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        if s == "government" {
            return Ok(AgentId::Government);
        }
        s.strip_prefix("enterprise_")
            .and_then(|i| i.parse().ok())
            .map(|i| AgentId::Enterprise(EnterpriseId(i)))
            .ok_or_else(|| EnvError::UnknownAgent(s.to_owned()))
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("unknown agent {0:?}; expected government or enterprise_<i>")]
    UnknownAgent(String),
    #[error("{0} is not an agent of this environment")]
    NoSuchAgent(AgentId),
    #[error("reset must be called before step")]
    NotReset,
    #[error("episode already terminated")]
    Terminated,
    #[error("missing action for {0}")]
    MissingAction(AgentId),
    #[error("bad action for {agent}: {reason}")]
    BadAction { agent: AgentId, reason: String },
}

/// Options fixed for the lifetime of an environment handle.
#[derive(Debug, Clone)]
pub struct EnvOptions {
    pub config: SimConfig,
    pub controlled: Vec<AgentId>,
    /// Drives the government when it is not controlled, and names it in the trace header.
    pub gov_policy: GovPolicySpec,
    /// Drives uncontrolled enterprises, and names them in the trace header.
    pub ent_policy: EntPolicySpec,
    pub punishment: f64,
    /// Trainer-side discount factor. Reported in the spaces, never used here.
    pub discount: f64,
}

impl EnvOptions {
    pub fn new(config: SimConfig) -> Self {
        let punishment = config.default_punishment;
        Self {
            config,
            controlled: Vec::new(),
            gov_policy: GovPolicySpec::Random,
            ent_policy: EntPolicySpec::Scripted,
            punishment,
            discount: 1.0,
        }
    }
}

/// One agent's action as supplied from outside.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentAction {
    /// Flat enterprise action index.
    Discrete(usize),
    /// Government levels, `n_enterprises + 2` values in `0..=100`.
    MultiDiscrete(Vec<u32>),
}

/// Named flat arrays handed to one agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub arrays: BTreeMap<&'static str, Vec<f64>>,
    pub action_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArraySpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    MultiDiscrete { nvec: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSpace {
    pub observation: Vec<ArraySpec>,
    pub action_mask_len: usize,
    pub action: ActionSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceDescriptor {
    pub format_version: u32,
    pub discount: f64,
    pub map_channels: Vec<&'static str>,
    pub agents: BTreeMap<String, AgentSpace>,
}

pub struct StepResult {
    pub observations: BTreeMap<AgentId, Observation>,
    pub rewards: BTreeMap<AgentId, f64>,
    pub terminated: bool,
    pub t: usize,
    pub events: usize,
}

struct Episode {
    state: SimState,
    government: Box<dyn GovernmentPolicy + Send>,
    enterprises: Vec<Box<dyn EnterprisePolicy + Send>>,
    gov_rng: RngStream,
    ent_rngs: Vec<RngStream>,
    header: TraceHeader,
    events: Vec<Event>,
    reward_sums: Vec<f64>,
    gov_sum: f64,
}

pub struct Env {
    options: EnvOptions,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(options: EnvOptions) -> Result<Self, EnvError> {
        options.config.validate()?;
        let n = options.config.n_enterprises as u32;
        for &a in &options.controlled {
            if let AgentId::Enterprise(id) = a {
                if id.0 >= n {
                    return Err(EnvError::NoSuchAgent(a));
                }
            }
        }
        let mut options = options;
        options.controlled.sort();
        options.controlled.dedup();
        Ok(Self { options, episode: None })
    }

    pub fn options(&self) -> &EnvOptions {
        &self.options
    }

    pub fn controlled(&self) -> &[AgentId] {
        &self.options.controlled
    }

    fn is_controlled(&self, a: AgentId) -> bool {
        self.options.controlled.binary_search(&a).is_ok()
    }

    pub fn spaces(&self) -> SpaceDescriptor {
        let c = &self.options.config;
        let levels = c.trade_price_levels as usize;
        let history = c.price_history_periods;
        let n = c.n_enterprises;
        let ent_actions = Action::space_size(c.trade_price_levels);
        let mut agents = BTreeMap::new();
        for &a in &self.options.controlled {
            let space = match a {
                AgentId::Enterprise(_) => AgentSpace {
                    observation: vec![
                        ArraySpec {
                            name: "local_map",
                            shape: vec![c.view_size(), c.view_size(), MAP_CHANNELS.len()],
                        },
                        ArraySpec {
                            name: "features",
                            shape: vec![EnterpriseObservation::feature_len(levels, history)],
                        },
                    ],
                    action_mask_len: ent_actions,
                    action: ActionSpace::Discrete { n: ent_actions },
                },
                AgentId::Government => AgentSpace {
                    observation: vec![
                        ArraySpec {
                            name: "grid",
                            shape: vec![c.grid_height, c.grid_width, MAP_CHANNELS.len()],
                        },
                        ArraySpec {
                            name: "features",
                            shape: vec![GovernmentObservation::feature_len(n, levels, history)],
                        },
                    ],
                    action_mask_len: (n + 2) * ACTION_LEVELS as usize,
                    action: ActionSpace::MultiDiscrete {
                        nvec: vec![ACTION_LEVELS as usize; n + 2],
                    },
                },
            };
            agents.insert(a.to_string(), space);
        }
        SpaceDescriptor {
            format_version: TRACE_FORMAT_VERSION,
            discount: self.options.discount,
            map_channels: MAP_CHANNELS.to_vec(),
            agents,
        }
    }

    /// Starts a fresh episode and returns the observations of the
    /// controlled agents that act at the first step.
    pub fn reset(&mut self, seed: u64) -> Result<BTreeMap<AgentId, Observation>, EnvError> {
        let o = &self.options;
        let n = o.config.n_enterprises;
        let state = SimState::new(o.config.clone(), seed)?;
        self.episode = Some(Episode {
            state,
            government: o.gov_policy.build(&o.config, o.punishment),
            enterprises: o.ent_policy.build(n),
            gov_rng: government_stream(seed),
            ent_rngs: (0..n)
                .map(|i| enterprise_stream(seed, EnterpriseId(i as u32)))
                .collect(),
            header: TraceHeader::new(o.config.clone(), seed, o.gov_policy, o.ent_policy, o.punishment),
            events: Vec::new(),
            reward_sums: vec![0.0; n],
            gov_sum: 0.0,
        });
        Ok(self.observations())
    }

    /// Observations for the controlled agents due to act next.
    fn observations(&self) -> BTreeMap<AgentId, Observation> {
        let mut out = BTreeMap::new();
        let Some(ep) = &self.episode else { return out };
        let s = &ep.state;
        if s.is_done() {
            return out;
        }
        if s.is_government_step() {
            if self.is_controlled(AgentId::Government) {
                let obs = s.observe_government();
                let mask_len = (s.enterprises().len() + 2) * ACTION_LEVELS as usize;
                out.insert(
                    AgentId::Government,
                    Observation {
                        arrays: BTreeMap::from([("grid", obs.grid_tensor()), ("features", obs.features())]),
                        action_mask: vec![true; mask_len],
                    },
                );
            }
        } else {
            for &a in &self.options.controlled {
                if let AgentId::Enterprise(id) = a {
                    let obs = s.observe_enterprise(id);
                    out.insert(
                        a,
                        Observation {
                            arrays: BTreeMap::from([
                                ("features", obs.features()),
                                ("local_map", obs.local_map.data.clone()),
                            ]),
                            action_mask: obs.action_mask,
                        },
                    );
                }
            }
        }
        out
    }

    /// Advances one timestep. Actions of agents not due to act are ignored;
    /// every controlled agent that is due must have one.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, AgentAction>) -> Result<StepResult, EnvError> {
        for a in actions.keys() {
            if !self.is_controlled(*a) {
                return Err(EnvError::NoSuchAgent(*a));
            }
        }
        let controlled = self.options.controlled.clone();
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        let s = &ep.state;
        if s.is_done() {
            return Err(EnvError::Terminated);
        }
        let levels = s.config().trade_price_levels;
        let n = s.enterprises().len();
        let (gov, ent) = if s.is_government_step() {
            let action = if controlled.contains(&AgentId::Government) {
                match actions.get(&AgentId::Government) {
                    Some(AgentAction::MultiDiscrete(raw)) => GovernmentAction::new(raw.clone()),
                    Some(other) => {
                        return Err(EnvError::BadAction {
                            agent: AgentId::Government,
                            reason: format!("expected {} levels, got {other:?}", n + 2),
                        })
                    }
                    None => return Err(EnvError::MissingAction(AgentId::Government)),
                }
            } else {
                ep.government.act(&s.observe_government(), &mut ep.gov_rng)
            };
            (Some(action), Vec::new())
        } else {
            let mut chosen = Vec::with_capacity(n);
            for i in 0..n {
                let id = EnterpriseId(i as u32);
                let agent = AgentId::Enterprise(id);
                let action = if controlled.contains(&agent) {
                    match actions.get(&agent) {
                        Some(&AgentAction::Discrete(k)) => {
                            Action::from_index(k, levels).ok_or_else(|| EnvError::BadAction {
                                agent,
                                reason: format!("index {k} outside 0..{}", Action::space_size(levels)),
                            })?
                        }
                        Some(other) => {
                            return Err(EnvError::BadAction {
                                agent,
                                reason: format!("expected one index, got {other:?}"),
                            })
                        }
                        None => return Err(EnvError::MissingAction(agent)),
                    }
                } else {
                    let obs = s.observe_enterprise(id);
                    ep.enterprises[i].act(&obs, s.config(), &mut ep.ent_rngs[i])
                };
                chosen.push(action);
            }
            (None, chosen)
        };
        let out = ep.state.step(gov.as_ref(), &ent)?;
        for (acc, r) in ep.reward_sums.iter_mut().zip(&out.rewards) {
            *acc += r;
        }
        ep.gov_sum += out.government_reward.unwrap_or(0.0);
        let events = out.events.len();
        ep.events.extend(out.events);
        let rewards = controlled
            .iter()
            .map(|&a| {
                let r = match a {
                    AgentId::Government => out.government_reward.unwrap_or(0.0),
                    AgentId::Enterprise(id) => out.rewards[id.index()],
                };
                (a, r)
            })
            .collect();
        let t = ep.state.t() - 1;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            terminated: out.done,
            t,
            events,
        })
    }

    /// The episode so far as a trace; complete once terminated.
    pub fn trace(&self) -> Result<EpisodeTrace, EnvError> {
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        Ok(EpisodeTrace {
            header: ep.header.clone(),
            events: ep.events.clone(),
            summary: TraceSummary::from_state(&ep.state, &ep.reward_sums, ep.gov_sum),
        })
    }

    pub fn is_terminated(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.state.is_done())
    }

    pub fn close(&mut self) {
        self.episode = None;
    }
}

/// Per-step actions of a finished trace, keyed by agent. Enterprise steps
/// list every enterprise (NO-OP when nothing was logged); period starts
/// list only the government.
pub fn recorded_actions(trace: &EpisodeTrace) -> Vec<BTreeMap<AgentId, AgentAction>> {
    let c = &trace.header.config;
    let levels = c.trade_price_levels;
    let mut steps: Vec<BTreeMap<AgentId, AgentAction>> = (0..c.horizon())
        .map(|t| {
            if t % c.steps_per_period == 0 {
                BTreeMap::new()
            } else {
                (0..c.n_enterprises)
                    .map(|i| (AgentId::Enterprise(EnterpriseId(i as u32)), AgentAction::Discrete(0)))
                    .collect()
            }
        })
        .collect();
    for e in &trace.events {
        match &e.kind {
            EventKind::Allocation { raw, .. } => {
                steps[e.t].insert(AgentId::Government, AgentAction::MultiDiscrete(raw.clone()));
            }
            EventKind::Action { agent, action } => {
                steps[e.t].insert(
                    AgentId::Enterprise(*agent),
                    AgentAction::Discrete(action.to_index(levels)),
                );
            }
            _ => {}
        }
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_names_round_trip() {
        for a in [AgentId::Government, AgentId::Enterprise(EnterpriseId(3))] {
            assert_eq!(a.to_string().parse::<AgentId>().unwrap(), a);
        }
        assert!("enterprise_x".parse::<AgentId>().is_err());
        assert!("planner".parse::<AgentId>().is_err());
    }

    #[test]
    fn out_of_range_enterprise_is_rejected() {
        let mut o = EnvOptions::new(SimConfig::default());
        o.controlled = vec![AgentId::Enterprise(EnterpriseId(9))];
        assert!(matches!(Env::new(o), Err(EnvError::NoSuchAgent(_))));
    }
}
