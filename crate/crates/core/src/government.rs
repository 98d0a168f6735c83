//! Government agent: action decoding, per-period credit allocation, the
//! episode-end penalty and the welfare metrics it optimizes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::enterprise::EnterpriseState;
use crate::grid::{Grid, GridError, Pos};
use crate::rng::RngStream;

/// Number of levels per action dimension (`0..=100`).
pub const ACTION_LEVELS: u32 = 101;

#[derive(Debug, Error, PartialEq)]
pub enum GovernmentError {
    #[error("government acts only at the first step of a period (t = {0})")]
    OffSchedule(usize),
    #[error("government action has {found} dimensions, expected {expected}")]
    WrongLength { found: usize, expected: usize },
    #[error("government action level {0} exceeds 100")]
    LevelOutOfRange(u32),
}

/// Raw multi-discrete action: `[proportion, w_1..w_n, punishment]`, each in
/// `0..=100`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GovernmentAction {
    pub raw: Vec<u32>,
}

impl GovernmentAction {
    pub fn new(raw: Vec<u32>) -> Self {
        Self { raw }
    }

    pub fn dims(n_enterprises: usize) -> usize {
        n_enterprises + 2
    }

    fn validate(&self, n_enterprises: usize) -> Result<(), GovernmentError> {
        let expected = Self::dims(n_enterprises);
        if self.raw.len() != expected {
            return Err(GovernmentError::WrongLength {
                found: self.raw.len(),
                expected,
            });
        }
        if let Some(&bad) = self.raw.iter().find(|&&v| v >= ACTION_LEVELS) {
            return Err(GovernmentError::LevelOutOfRange(bad));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub period_total: f64,
    pub project_share: f64,
    pub per_enterprise: Vec<f64>,
    pub punishment: f64,
    /// Budget left after this allocation.
    pub remaining_budget: f64,
}

/// Decodes a government action at a period-start step `t`.
pub fn decode_action(
    action: &GovernmentAction,
    remaining_budget: f64,
    t: usize,
    config: &SimConfig,
) -> Result<AllocationOutcome, GovernmentError> {
    if !t.is_multiple_of(config.steps_per_period) {
        return Err(GovernmentError::OffSchedule(t));
    }
    let n = config.n_enterprises;
    action.validate(n)?;
    let raw = &action.raw;

    let period_total = if raw[0] == 100 {
        remaining_budget
    } else {
        raw[0] as f64 / 100.0 * remaining_budget
    };
    let project_share = config.project_share * period_total;
    let enterprise_total = period_total - project_share;

    let weights = &raw[1..=n];
    let sum: u32 = weights.iter().sum();
    let per_enterprise = if sum == 0 {
        vec![enterprise_total / n as f64; n]
    } else {
        weights
            .iter()
            .map(|&w| enterprise_total * w as f64 / sum as f64)
            .collect()
    };

    let punishment = if config.pin_punishment {
        config.default_punishment
    } else {
        raw[n + 1] as f64 / 100.0 * config.max_punishment
    };

    Ok(AllocationOutcome {
        period_total,
        project_share,
        per_enterprise,
        punishment,
        remaining_budget: (remaining_budget - period_total).max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationEffect {
    /// Credits each enterprise held before the reset.
    pub forfeited: Vec<f64>,
    /// Where the new project went, if any cell was free.
    pub project: Option<Pos>,
}

/// Resets every enterprise's credits to its grant and places the period's
/// project.
pub fn apply_allocation(
    outcome: &AllocationOutcome,
    states: &mut [EnterpriseState],
    grid: &mut Grid,
    rng: &mut RngStream,
) -> AllocationEffect {
    let forfeited = states
        .iter_mut()
        .zip(&outcome.per_enterprise)
        .map(|(s, &grant)| {
            let old = s.credits;
            s.credits = grant;
            s.period_grant = grant;
            s.period_excess = 0.0;
            s.period_emissions = 0.0;
            s.period_income = 0.0;
            old
        })
        .collect();
    let project = match grid.place_project(rng) {
        Ok(pos) => Some(pos),
        Err(GridError::NoEmptyCell) => None,
        Err(e) => unreachable!("place_project: {e}"),
    };
    AllocationEffect { forfeited, project }
}

/// Sum of enterprise coins.
pub fn productivity(coins: &[f64]) -> f64 {
    coins.iter().sum()
}

/// One minus the normalized mean absolute difference of coin holdings.
/// Degenerate cases (no coins at all, a single enterprise) count as perfect
/// equality.
pub fn equality(coins: &[f64]) -> f64 {
    let n = coins.len();
    let total: f64 = coins.iter().sum();
    if n < 2 || total == 0.0 {
        return 1.0;
    }
    // sum_i sum_j |x_i - x_j| = 2 * sum_k (2k - n + 1) x_(k) over sorted x.
    let mut sorted = coins.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| (2.0 * k as f64 - n as f64 + 1.0) * x)
        .sum();
    1.0 - 2.0 * weighted / (2.0 * (n as f64 - 1.0) * total)
}

pub fn social_welfare(prod: f64, eq: f64, ee: f64, climate_coeff: f64) -> f64 {
    prod * eq * (-climate_coeff * ee).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareMetrics {
    pub prod: f64,
    pub eq: f64,
    pub ee: f64,
    pub swf: f64,
}

impl WelfareMetrics {
    pub const ZERO: WelfareMetrics = WelfareMetrics {
        prod: 0.0,
        eq: 1.0,
        ee: 0.0,
        swf: 0.0,
    };

    /// Metrics over the enterprises' coins (escrow included, debts counted
    /// as zero) and summed excess records.
    pub fn compute(states: &[EnterpriseState], climate_coeff: f64) -> Self {
        let coins: Vec<f64> = states.iter().map(|s| s.wealth().max(0.0)).collect();
        let prod = productivity(&coins);
        let eq = equality(&coins);
        let ee: f64 = states.iter().map(|s| s.excess_record).sum();
        Self {
            prod,
            eq,
            ee,
            swf: social_welfare(prod, eq, ee, climate_coeff),
        }
    }
}

/// Charges `excess_record * p` coins to every enterprise. Returns the
/// amounts charged.
pub fn apply_penalty(states: &mut [EnterpriseState], punishment: f64) -> Vec<f64> {
    states
        .iter_mut()
        .map(|s| {
            let amount = s.excess_record * punishment;
            s.coins -= amount;
            amount
        })
        .collect()
}

pub fn government_reward(now: &WelfareMetrics, prev: &WelfareMetrics) -> f64 {
    now.swf - prev.swf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enterprise::Skills;
    use crate::grid::EnterpriseId;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn action(v: &[u32]) -> GovernmentAction {
        GovernmentAction::new(v.to_vec())
    }

    #[test]
    fn full_proportion_releases_everything() {
        let c = SimConfig::default();
        let out = decode_action(&action(&[100, 1, 1, 1, 1, 1, 20]), 37.5, 900, &c).unwrap();
        assert_eq!(out.period_total, 37.5);
        assert_eq!(out.remaining_budget, 0.0);
    }

    #[test]
    fn weighted_split() {
        let c = SimConfig::default();
        let out = decode_action(&action(&[10, 50, 50, 0, 0, 0, 20]), 1000.0, 0, &c).unwrap();
        assert!(close(out.period_total, 100.0, 1e-15));
        assert!(close(out.project_share, 10.0, 1e-15));
        let expect = [45.0, 45.0, 0.0, 0.0, 0.0];
        for (g, e) in out.per_enterprise.iter().zip(expect) {
            assert!(close(*g, e, 1e-12));
        }
        assert!(close(out.remaining_budget, 900.0, 1e-15));
        assert!(close(out.punishment, 20.0, 1e-15));
    }

    #[test]
    fn zero_weights_split_uniformly() {
        let c = SimConfig::default();
        let out = decode_action(&action(&[10, 0, 0, 0, 0, 0, 0]), 1000.0, 0, &c).unwrap();
        for g in &out.per_enterprise {
            assert!(close(*g, 18.0, 1e-12));
        }
    }

    #[test]
    fn decode_errors() {
        let c = SimConfig::default();
        assert_eq!(
            decode_action(&action(&[10, 0, 0, 0, 0, 0, 0]), 1.0, 5, &c),
            Err(GovernmentError::OffSchedule(5))
        );
        assert!(matches!(
            decode_action(&action(&[10, 0]), 1.0, 0, &c),
            Err(GovernmentError::WrongLength { .. })
        ));
        assert_eq!(
            decode_action(&action(&[101, 0, 0, 0, 0, 0, 0]), 1.0, 0, &c),
            Err(GovernmentError::LevelOutOfRange(101))
        );
    }

    #[test]
    fn pinned_punishment_ignores_dimension() {
        let c = SimConfig {
            pin_punishment: true,
            default_punishment: 7.0,
            ..SimConfig::default()
        };
        let out = decode_action(&action(&[10, 0, 0, 0, 0, 0, 100]), 1.0, 0, &c).unwrap();
        assert_eq!(out.punishment, 7.0);
    }

    fn states(n: usize) -> Vec<EnterpriseState> {
        (0..n)
            .map(|i| {
                EnterpriseState::new(
                    EnterpriseId(i as u32),
                    Skills {
                        size: 1.0,
                        research: 1.0,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn allocation_resets_credits() {
        let c = SimConfig::default();
        let mut ss = states(5);
        ss[0].credits = 3.2;
        let mut grid = Grid::new(5, 5);
        let mut rng = RngStream::derive(0, "project-placement");
        let out = decode_action(&action(&[10, 1, 1, 1, 1, 1, 0]), 500.0, 0, &c).unwrap();
        let fx = apply_allocation(&out, &mut ss, &mut grid, &mut rng);
        assert_eq!(fx.forfeited[0], 3.2);
        assert!(close(ss[0].credits, 9.0, 1e-12));
        assert!(fx.project.is_some());
        let granted: f64 = out.per_enterprise.iter().sum();
        assert!(close(granted + out.project_share, out.period_total, 1e-12));
    }

    #[test]
    fn empty_budget_grants_nothing() {
        let c = SimConfig::default();
        let out = decode_action(&action(&[50, 1, 2, 3, 4, 5, 0]), 0.0, 0, &c).unwrap();
        assert!(out.per_enterprise.iter().all(|&g| g == 0.0));
        assert_eq!(out.project_share, 0.0);
    }

    #[test]
    fn productivity_sums() {
        assert_eq!(productivity(&[10.0, 20.0, 30.0, 0.0, 0.0]), 60.0);
        assert_eq!(productivity(&[0.0; 5]), 0.0);
    }

    #[test]
    fn equality_values() {
        assert_eq!(equality(&[3.0; 5]), 1.0);
        assert!(equality(&[0.0, 0.0, 0.0, 0.0, 10.0]).abs() < 1e-15);
        assert!(close(equality(&[1.0, 2.0, 3.0]), 2.0 / 3.0, 1e-15));
        assert_eq!(equality(&[0.0; 4]), 1.0);
        assert_eq!(equality(&[5.0]), 1.0);
    }

    #[test]
    fn welfare_values() {
        assert_eq!(social_welfare(100.0, 0.8, 0.0, 0.01), 80.0);
        assert!(close(
            social_welfare(100.0, 0.8, 10.0, 0.01),
            72.386_993_442_876_77,
            1e-14
        ));
        assert!(social_welfare(100.0, 0.8, 11.0, 0.01) < social_welfare(100.0, 0.8, 10.0, 0.01));
    }

    #[test]
    fn penalty_is_excess_times_punishment() {
        let mut ss = states(3);
        ss[0].excess_record = 2.0;
        ss[0].coins = 100.0;
        ss[2].excess_record = 0.5;
        let charged = apply_penalty(&mut ss, 20.0);
        assert_eq!(charged, vec![40.0, 0.0, 10.0]);
        assert_eq!(ss[0].coins, 60.0);
        assert_eq!(ss[1].coins, 0.0);
        assert_eq!(charged.iter().sum::<f64>(), 20.0 * 2.5);
    }

    #[test]
    fn reward_differencing() {
        let a = WelfareMetrics {
            prod: 10.0,
            eq: 1.0,
            ee: 0.0,
            swf: 10.0,
        };
        assert_eq!(government_reward(&a, &a), 0.0);
        assert_eq!(government_reward(&a, &WelfareMetrics::ZERO), 10.0);
    }
}
