//! Enterprise agents and the dynamics of their state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::grid::{CellContent, Direction, EnterpriseId, Grid, MoveResult, Pos};
use crate::market::OrderBook;
use crate::rng::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum EnterpriseError {
    #[error("produce is illegal on this cell")]
    IllegalCell,
    #[error("invest requires positive coins")]
    NonPositiveCoins,
    #[error("insufficient coins: need {need}, have {have}")]
    InsufficientCoins { need: f64, have: f64 },
    #[error("enterprise list is empty")]
    NoEnterprises,
}

/// Manufacturing scale and R&D capability; fixed for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skills {
    pub size: f64,
    pub research: f64,
}

impl Skills {
    pub fn sample(config: &SimConfig, rng: &mut RngStream) -> Self {
        Self {
            size: rng.uniform(config.size_range.min, config.size_range.max),
            research: rng.uniform(config.research_range.min, config.research_range.max),
        }
    }
}

/// One enterprise action. Trade levels are 1-based prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    NoOp,
    Move(Direction),
    Produce,
    Invest,
    Bid(u32),
    Ask(u32),
}

impl Action {
    /// Size of the flat action space for `levels` price levels.
    pub fn space_size(levels: u32) -> usize {
        1 + 4 + 1 + 1 + 2 * levels as usize
    }

    /// Flat index: NO-OP, N, S, E, W, Produce, Invest, bids 1..=L, asks 1..=L.
    pub fn to_index(self, levels: u32) -> usize {
        match self {
            Action::NoOp => 0,
            Action::Move(Direction::North) => 1,
            Action::Move(Direction::South) => 2,
            Action::Move(Direction::East) => 3,
            Action::Move(Direction::West) => 4,
            Action::Produce => 5,
            Action::Invest => 6,
            Action::Bid(p) => 6 + p as usize,
            Action::Ask(p) => 6 + levels as usize + p as usize,
        }
    }

    /// Like [`Action::to_index`], but `None` for trade prices outside
    /// `1..=levels`.
    pub fn checked_index(self, levels: u32) -> Option<usize> {
        match self {
            Action::Bid(p) | Action::Ask(p) if p == 0 || p > levels => None,
            a => Some(a.to_index(levels)),
        }
    }

    pub fn from_index(i: usize, levels: u32) -> Option<Action> {
        let l = levels as usize;
        Some(match i {
            0 => Action::NoOp,
            1 => Action::Move(Direction::North),
            2 => Action::Move(Direction::South),
            3 => Action::Move(Direction::East),
            4 => Action::Move(Direction::West),
            5 => Action::Produce,
            6 => Action::Invest,
            i if i <= 6 + l => Action::Bid((i - 6) as u32),
            i if i <= 6 + 2 * l => Action::Ask((i - 6 - l) as u32),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterpriseState {
    pub id: EnterpriseId,
    pub skills: Skills,
    /// Liquid coins (escrow excluded).
    pub coins: f64,
    /// Current-period credits (escrow excluded).
    pub credits: f64,
    pub escrow_coins: f64,
    pub escrow_credits: f64,
    pub emission_level: f64,
    pub labor: f64,
    /// Effective investment count.
    pub invest_count: f64,
    /// Timesteps at which queued investments take effect.
    pub pending_invests: Vec<usize>,
    pub excess_record: f64,
    pub utility_prev: f64,

    pub period_grant: f64,
    pub period_excess: f64,
    pub period_emissions: f64,
    pub period_income: f64,

    pub total_emissions: f64,
    pub total_income: f64,
    pub n_produce: u32,
    pub n_invest: u32,
    pub n_trades: u32,
    pub n_projects_built: u32,
}

impl EnterpriseState {
    pub fn new(id: EnterpriseId, skills: Skills) -> Self {
        Self {
            id,
            skills,
            coins: 0.0,
            credits: 0.0,
            escrow_coins: 0.0,
            escrow_credits: 0.0,
            emission_level: 1.0,
            labor: 0.0,
            invest_count: 0.0,
            pending_invests: Vec::new(),
            excess_record: 0.0,
            utility_prev: 0.0,
            period_grant: 0.0,
            period_excess: 0.0,
            period_emissions: 0.0,
            period_income: 0.0,
            total_emissions: 0.0,
            total_income: 0.0,
            n_produce: 0,
            n_invest: 0,
            n_trades: 0,
            n_projects_built: 0,
        }
    }

    /// Coins including those escrowed in open bids; this is the income `z`.
    pub fn wealth(&self) -> f64 {
        self.coins + self.escrow_coins
    }

    pub fn power_consumption(&self, delta: f64) -> f64 {
        power_consumption(self.skills.research, self.invest_count, delta)
    }

    pub fn invest_cost(&self, config: &SimConfig) -> f64 {
        config.invest_coin_cost_numerator / self.skills.research
    }

    /// Utility at timestep `t`; negative wealth counts as zero income.
    pub fn utility(&self, t: usize, config: &SimConfig) -> f64 {
        utility(
            self.wealth().max(0.0),
            self.labor,
            labor_coefficient(t as f64, config.alpha, config.beta),
            config.eta,
        )
    }
}

/// `alpha * (1 - exp(-t / beta))`: rises from 0 toward `alpha`.
pub fn labor_coefficient(t: f64, alpha: f64, beta: f64) -> f64 {
    alpha * (1.0 - (-t / beta).exp())
}

/// Isoelastic income utility minus the labor disutility.
pub fn utility(z: f64, labor: f64, c_l: f64, eta: f64) -> f64 {
    (z.powf(1.0 - eta) - 1.0) / (1.0 - eta) - c_l * labor
}

pub fn step_reward(state: &EnterpriseState, u_now: f64) -> f64 {
    u_now - state.utility_prev
}

pub fn power_consumption(research: f64, invest_count: f64, delta: f64) -> f64 {
    (-delta * research * invest_count).exp()
}

/// `n_p / (weighted_power + n_p)`, where `weighted_power = sum(Pc_j * S_j)`.
pub fn green_rate_from(weighted_power: f64, n_projects: usize) -> f64 {
    if n_projects == 0 {
        return 0.0;
    }
    let np = n_projects as f64;
    (np / (weighted_power + np)).max(0.0)
}

pub fn green_rate(states: &[EnterpriseState], n_projects: usize, delta: f64) -> Result<f64, EnterpriseError> {
    if states.is_empty() {
        return Err(EnterpriseError::NoEnterprises);
    }
    let weighted: f64 = states.iter().map(|s| s.power_consumption(delta) * s.skills.size).sum();
    Ok(green_rate_from(weighted, n_projects))
}

/// `Pc * (1 - Gr)` clamped to `[floor, 1]`.
pub fn emission_level(pc: f64, gr: f64, floor: f64) -> f64 {
    (pc * (1.0 - gr)).clamp(floor, 1.0)
}

/// Recomputes every enterprise's emission level. Returns the green rate.
pub fn recompute_emission_levels(states: &mut [EnterpriseState], n_projects: usize, config: &SimConfig) -> f64 {
    let gr = green_rate(states, n_projects, config.delta).unwrap_or(0.0);
    for s in states.iter_mut() {
        s.emission_level = emission_level(s.power_consumption(config.delta), gr, config.emission_floor);
    }
    gr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProduceEffect {
    pub pos: Pos,
    pub income: f64,
    pub emission: f64,
    pub credits_used: f64,
    pub shortfall: f64,
    pub polluted: Vec<Pos>,
}

/// Produces on the agent's current cell: coins, credit burn (shortfall goes
/// to the excess record), property placement and possible pollution.
pub fn apply_produce(
    state: &mut EnterpriseState,
    grid: &mut Grid,
    config: &SimConfig,
    rng: &mut RngStream,
) -> Result<ProduceEffect, EnterpriseError> {
    let pos = grid.position(state.id).map_err(|_| EnterpriseError::IllegalCell)?;
    if !grid.cell(pos).is_empty() {
        return Err(EnterpriseError::IllegalCell);
    }
    let income =
        config.produce_coin_rate * state.skills.size * grid.production_multiplier(pos, config.pollution_discount);
    let emission = state.emission_level;
    let (credits_used, shortfall) = if state.credits >= emission {
        (emission, 0.0)
    } else {
        (state.credits, emission - state.credits)
    };
    grid.place_property(pos, state.id)
        .map_err(|_| EnterpriseError::IllegalCell)?;

    state.labor += config.labor_costs.produce;
    state.coins += income;
    state.credits -= credits_used;
    state.excess_record += shortfall;
    state.period_excess += shortfall;
    state.period_emissions += emission;
    state.period_income += income;
    state.total_emissions += emission;
    state.total_income += income;
    state.n_produce += 1;

    let polluted = if emission > config.pollution_threshold {
        grid.apply_pollution(
            pos,
            config.pollution_radius,
            config.pollution_discount,
            config.pollution_prob,
            rng,
        )
    } else {
        Vec::new()
    };
    Ok(ProduceEffect {
        pos,
        income,
        emission,
        credits_used,
        shortfall,
        polluted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvestEffect {
    pub cost: f64,
    /// Timestep at which the investment counts, or `None` if it failed.
    pub effective_at: Option<usize>,
}

pub fn apply_invest(
    state: &mut EnterpriseState,
    t: usize,
    config: &SimConfig,
    rng: &mut RngStream,
) -> Result<InvestEffect, EnterpriseError> {
    if state.coins <= 0.0 {
        return Err(EnterpriseError::NonPositiveCoins);
    }
    let cost = state.invest_cost(config);
    if state.coins < cost {
        return Err(EnterpriseError::InsufficientCoins {
            need: cost,
            have: state.coins,
        });
    }
    state.labor += config.labor_costs.invest;
    state.coins -= cost;
    state.n_invest += 1;
    let effective_at = (!rng.bernoulli(config.invest_fail_prob)).then_some(t + config.invest_delay);
    if let Some(at) = effective_at {
        state.pending_invests.push(at);
    }
    Ok(InvestEffect { cost, effective_at })
}

/// Moves matured investments into the effective count. Returns how many.
pub fn apply_due_investments(state: &mut EnterpriseState, t: usize) -> usize {
    let before = state.pending_invests.len();
    state.pending_invests.retain(|&at| at > t);
    let due = before - state.pending_invests.len();
    state.invest_count += due as f64;
    due
}

/// Period-boundary forgetting of past investments.
pub fn decay_investments(state: &mut EnterpriseState, forget_rate: f64) {
    state.invest_count *= 1.0 - forget_rate;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectEffect {
    pub cost: f64,
    pub labor: f64,
    pub credits: f64,
}

/// Pays for and builds a project. Completion on the grid, the project count
/// and emission recomputation are the engine's job.
pub fn apply_enter_project(state: &mut EnterpriseState, config: &SimConfig) -> Result<ProjectEffect, EnterpriseError> {
    if state.coins < config.project_coin_cost {
        return Err(EnterpriseError::InsufficientCoins {
            need: config.project_coin_cost,
            have: state.coins,
        });
    }
    state.coins -= config.project_coin_cost;
    state.labor += config.project_labor_cost;
    state.credits += config.project_credit_reward;
    state.n_projects_built += 1;
    Ok(ProjectEffect {
        cost: config.project_coin_cost,
        labor: config.project_labor_cost,
        credits: config.project_credit_reward,
    })
}

/// Legal-action mask over the flat action space.
pub fn legal_action_mask(
    state: &EnterpriseState,
    grid: &Grid,
    book: &OrderBook,
    config: &SimConfig,
    government_step: bool,
) -> Vec<bool> {
    let levels = config.trade_price_levels;
    let mut mask = vec![false; Action::space_size(levels)];
    mask[0] = true;
    if government_step {
        return mask;
    }
    for dir in Direction::ALL {
        mask[Action::Move(dir).to_index(levels)] = match grid.peek_move(state.id, dir) {
            Ok(MoveResult::Moved(_)) => true,
            Ok(MoveResult::EnteredProject(_)) => state.coins >= config.project_coin_cost,
            _ => false,
        };
    }
    if let Ok(pos) = grid.position(state.id) {
        mask[Action::Produce.to_index(levels)] = grid.cell(pos).content == CellContent::Empty;
    }
    mask[Action::Invest.to_index(levels)] = state.coins > 0.0 && state.coins >= state.invest_cost(config);
    let room = book.can_place(state.id);
    for p in 1..=levels {
        mask[Action::Bid(p).to_index(levels)] = room && state.coins >= p as f64;
        mask[Action::Ask(p).to_index(levels)] = room && state.credits >= 1.0;
    }
    mask
}
