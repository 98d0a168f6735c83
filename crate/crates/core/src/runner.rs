//! Policy-driven episode rollouts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{AuditError, EngineError, SimState};
use crate::enterprise::Action;
use crate::government::GovernmentAction;
use crate::grid::EnterpriseId;
use crate::policies::{EntPolicySpec, EnterprisePolicy, GovPolicySpec, GovernmentPolicy};
use crate::rng::{labels, RngStream};
use crate::trace::{EpisodeTrace, TraceHeader, TraceSummary};

/// Everything needed to reproduce one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub config: SimConfig,
    pub seed: u64,
    pub gov: GovPolicySpec,
    pub ent: EntPolicySpec,
    pub punishment: f64,
}

impl EpisodeSpec {
    pub fn header(&self) -> TraceHeader {
        TraceHeader::new(self.config.clone(), self.seed, self.gov, self.ent, self.punishment)
    }
}

/// Policy stream for the government.
pub fn government_stream(seed: u64) -> RngStream {
    RngStream::derive(seed, &format!("{}/government", labels::POLICY))
}

/// Policy stream for one enterprise.
pub fn enterprise_stream(seed: u64, id: EnterpriseId) -> RngStream {
    RngStream::derive(seed, &format!("{}/{}", labels::POLICY, id.0))
}

/// A set of policies bound to one episode, with their random streams.
pub struct Controllers {
    pub government: Box<dyn GovernmentPolicy + Send>,
    pub enterprises: Vec<Box<dyn EnterprisePolicy + Send>>,
    gov_rng: RngStream,
    ent_rngs: Vec<RngStream>,
}

impl Controllers {
    pub fn new(
        seed: u64,
        government: Box<dyn GovernmentPolicy + Send>,
        enterprises: Vec<Box<dyn EnterprisePolicy + Send>>,
    ) -> Self {
        let ent_rngs = (0..enterprises.len())
            .map(|i| enterprise_stream(seed, EnterpriseId(i as u32)))
            .collect();
        Self {
            government,
            enterprises,
            gov_rng: government_stream(seed),
            ent_rngs,
        }
    }

    pub fn from_spec(spec: &EpisodeSpec) -> Self {
        Self::new(
            spec.seed,
            spec.gov.build(&spec.config, spec.punishment),
            spec.ent.build(spec.config.n_enterprises),
        )
    }

    /// Actions for the state's next step.
    pub fn decide(&mut self, state: &SimState) -> (Option<GovernmentAction>, Vec<Action>) {
        if state.is_government_step() {
            let obs = state.observe_government();
            (Some(self.government.act(&obs, &mut self.gov_rng)), Vec::new())
        } else {
            let actions = self
                .enterprises
                .iter_mut()
                .zip(&mut self.ent_rngs)
                .enumerate()
                .map(|(i, (policy, rng))| {
                    let obs = state.observe_enterprise(EnterpriseId(i as u32));
                    policy.act(&obs, state.config(), rng)
                })
                .collect();
            (None, actions)
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// Runs an episode to the horizon, calling `inspect` after every step and
/// stopping at its first error.
pub fn run_with<F>(header: TraceHeader, mut controllers: Controllers, mut inspect: F) -> Result<EpisodeTrace, RunError>
where
    F: FnMut(&SimState) -> Result<(), AuditError>,
{
    let mut state = SimState::new(header.config.clone(), header.seed)?;
    let mut events = Vec::new();
    let mut reward_sums = vec![0.0; state.enterprises().len()];
    let mut gov_sum = 0.0;
    while !state.is_done() {
        let (gov, actions) = controllers.decide(&state);
        let out = state.step(gov.as_ref(), &actions)?;
        for (acc, r) in reward_sums.iter_mut().zip(&out.rewards) {
            *acc += r;
        }
        gov_sum += out.government_reward.unwrap_or(0.0);
        events.extend(out.events);
        inspect(&state)?;
    }
    let summary = TraceSummary::from_state(&state, &reward_sums, gov_sum);
    Ok(EpisodeTrace {
        header,
        events,
        summary,
    })
}

pub fn run_episode(spec: &EpisodeSpec) -> Result<EpisodeTrace, EngineError> {
    match run_with(spec.header(), Controllers::from_spec(spec), |_| Ok(())) {
        Ok(trace) => Ok(trace),
        Err(RunError::Engine(e)) => Err(e),
        Err(RunError::Audit(_)) => unreachable!("no audits requested"),
    }
}

/// Like [`run_episode`] but runs the conservation audits after every step.
pub fn run_audited(spec: &EpisodeSpec) -> Result<EpisodeTrace, RunError> {
    run_with(spec.header(), Controllers::from_spec(spec), SimState::audit)
}
