//! Deterministic cap-and-trade carbon market simulator.
//!
//! Enterprises on a grid earn coins by producing, which burns emission
//! credits. A government hands out a fixed credit budget period by period
//! and penalizes excess emissions when the episode ends. Every random draw
//! comes from a labeled stream, so an episode is fully determined by its
//! trace header and can be replayed from it.

pub mod config;
pub mod engine;
pub mod enterprise;
pub mod government;
pub mod grid;
pub mod market;
pub mod observation;
pub mod policies;
pub mod report;
pub mod rng;
pub mod runner;
pub mod trace;

pub use config::{ConfigError, SimConfig};
pub use engine::{EngineError, Event, EventKind, SimState, StepOutcome};
pub use enterprise::{Action, EnterpriseState};
pub use government::{GovernmentAction, WelfareMetrics};
pub use grid::{Direction, EnterpriseId, Grid, Pos};
pub use policies::{EntPolicySpec, GovPolicySpec, IndicatorKind, ScheduleKind};
pub use report::ReportTable;
pub use rng::RngStream;
pub use runner::{run_episode, EpisodeSpec};
pub use trace::{EpisodeTrace, TraceHeader, Verdict};
