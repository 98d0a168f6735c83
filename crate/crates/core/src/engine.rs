//! Episode state and the step function.
//!
//! Within a step the order is fixed. It runs the allocation (period starts
//! only), order expiry, investment maturity, enterprise actions in id order,
//! a matching pass, the emission-level update, the final-step penalty, and
//! finally metrics and rewards.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::enterprise::{
    self, apply_due_investments, apply_enter_project, apply_invest, apply_produce, decay_investments,
    legal_action_mask, recompute_emission_levels, Action, EnterpriseState, Skills,
};
use crate::government::{
    apply_allocation, apply_penalty, decode_action, government_reward, GovernmentAction, GovernmentError,
    WelfareMetrics,
};
use crate::grid::{Direction, EnterpriseId, Grid, GridError, MoveResult, Pos};
use crate::market::{Order, OrderBook, Side, Trade};
use crate::observation::{
    EnterpriseObservation, EnterpriseView, GovernmentObservation, LocalMap, MarketView, OwnAttributes,
};
use crate::rng::{labels, RngStream};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("episode finished at t = {0}")]
    Finished(usize),
    #[error("government action required at period start t = {0}")]
    MissingGovernmentAction(usize),
    #[error("government action given off a period start (t = {0})")]
    UnexpectedGovernmentAction(usize),
    #[error(transparent)]
    Government(#[from] GovernmentError),
    #[error("expected {expected} enterprise actions, got {found}")]
    ActionCount { found: usize, expected: usize },
    #[error("illegal action {action:?} for {agent} at t = {t}")]
    IllegalAction {
        agent: EnterpriseId,
        action: Action,
        t: usize,
    },
}

/// One logged state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Allocation {
        period: usize,
        raw: Vec<u32>,
        period_total: f64,
        project_share: f64,
        grants: Vec<f64>,
        punishment: f64,
        remaining_budget: f64,
        forfeited: Vec<f64>,
        project: Option<Pos>,
    },
    Action {
        agent: EnterpriseId,
        action: Action,
    },
    Voided {
        agent: EnterpriseId,
        action: Action,
        reason: String,
    },
    Move {
        agent: EnterpriseId,
        to: Pos,
    },
    Produce {
        agent: EnterpriseId,
        pos: Pos,
        income: f64,
        emission: f64,
        credits_used: f64,
        shortfall: f64,
    },
    Pollution {
        source: EnterpriseId,
        cells: Vec<Pos>,
    },
    Invest {
        agent: EnterpriseId,
        cost: f64,
        effective_at: Option<usize>,
    },
    InvestMatured {
        agent: EnterpriseId,
        count: usize,
    },
    ProjectComplete {
        agent: EnterpriseId,
        pos: Pos,
        cost: f64,
        credits: f64,
        purified: Vec<Pos>,
    },
    OrderPlaced {
        order: Order,
    },
    Trade {
        trade: Trade,
    },
    OrderExpired {
        order: Order,
    },
    OrderCancelled {
        order: Order,
    },
    EmissionLevels {
        green_rate: f64,
        levels: Vec<f64>,
    },
    Penalty {
        punishment: f64,
        amounts: Vec<f64>,
    },
    Metrics {
        metrics: WelfareMetrics,
    },
    Rewards {
        enterprises: Vec<f64>,
        government: Option<f64>,
    },
}

/// Running totals for the double-entry audits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub income: f64,
    pub invest_costs: f64,
    pub project_costs: f64,
    pub penalties: f64,
    pub grants: f64,
    pub project_reserve: f64,
    pub project_rewards: f64,
    pub burns: f64,
    pub forfeits: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("audit failed at t = {t}: {what}")]
pub struct AuditError {
    pub t: usize,
    pub what: String,
}

/// What a step returns besides the new state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub government_reward: Option<f64>,
    pub events: Vec<Event>,
    pub done: bool,
}

#[derive(Debug, Clone)]
struct Streams {
    pollution: RngStream,
    invest: RngStream,
    project: RngStream,
}

/// Full simulation state of one episode.
#[derive(Debug, Clone)]
pub struct SimState {
    config: SimConfig,
    config_hash: String,
    seed: u64,
    t: usize,
    grid: Grid,
    enterprises: Vec<EnterpriseState>,
    book: OrderBook,
    remaining_budget: f64,
    n_projects: usize,
    punishment: f64,
    metrics: WelfareMetrics,
    last_government_swf: f64,
    ledger: Ledger,
    streams: Streams,
}

/// Serializable snapshot used for state digests.
#[derive(Serialize)]
struct Snapshot<'a> {
    config_hash: &'a str,
    seed: u64,
    t: usize,
    grid: &'a Grid,
    enterprises: &'a [EnterpriseState],
    bids: Vec<&'a Order>,
    asks: Vec<&'a Order>,
    remaining_budget: f64,
    n_projects: usize,
    punishment: f64,
    streams: [u64; 3],
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl SimState {
    /// Fresh episode: random distinct positions, sampled skills, empty book,
    /// full budget, waiting for the first government action.
    pub fn new(config: SimConfig, seed: u64) -> Result<Self, EngineError> {
        config.validate()?;
        let mut positions = RngStream::derive(seed, labels::POSITIONS);
        let grid = Grid::with_random_agents(
            config.grid_width,
            config.grid_height,
            config.n_enterprises,
            &mut positions,
        )?;
        let mut skills = RngStream::derive(seed, labels::SKILLS);
        let enterprises = (0..config.n_enterprises)
            .map(|i| EnterpriseState::new(EnterpriseId(i as u32), Skills::sample(&config, &mut skills)))
            .collect();
        let book = OrderBook::new(
            config.trade_price_levels,
            config.order_lifetime,
            config.max_open_orders,
            config.price_history_periods,
        );
        Ok(Self {
            config_hash: config.hash(),
            seed,
            t: 0,
            grid,
            enterprises,
            book,
            remaining_budget: config.total_credit_budget,
            n_projects: 0,
            punishment: config.default_punishment,
            metrics: WelfareMetrics::ZERO,
            last_government_swf: 0.0,
            ledger: Ledger::default(),
            streams: Streams {
                pollution: RngStream::derive(seed, labels::POLLUTION),
                invest: RngStream::derive(seed, labels::INVEST),
                project: RngStream::derive(seed, labels::PROJECT),
            },
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn period(&self) -> usize {
        self.t / self.config.steps_per_period
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.horizon()
    }

    /// True when the next step is a period start, where only the government
    /// acts.
    pub fn is_government_step(&self) -> bool {
        !self.is_done() && self.t.is_multiple_of(self.config.steps_per_period)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn enterprises(&self) -> &[EnterpriseState] {
        &self.enterprises
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn remaining_budget(&self) -> f64 {
        self.remaining_budget
    }

    pub fn n_projects(&self) -> usize {
        self.n_projects
    }

    pub fn punishment(&self) -> f64 {
        self.punishment
    }

    pub fn metrics(&self) -> WelfareMetrics {
        self.metrics
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// SHA-256 over the canonical serialization of the full state.
    pub fn digest(&self) -> String {
        let snap = Snapshot {
            config_hash: &self.config_hash,
            seed: self.seed,
            t: self.t,
            grid: &self.grid,
            enterprises: &self.enterprises,
            bids: self.book.bids().collect(),
            asks: self.book.asks().collect(),
            remaining_budget: self.remaining_budget,
            n_projects: self.n_projects,
            punishment: self.punishment,
            streams: [
                self.streams.pollution.counter(),
                self.streams.invest.counter(),
                self.streams.project.counter(),
            ],
        };
        let bytes = serde_json::to_vec(&snap).expect("snapshot serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn action_mask(&self, agent: EnterpriseId) -> Vec<bool> {
        legal_action_mask(
            &self.enterprises[agent.index()],
            &self.grid,
            &self.book,
            &self.config,
            self.is_government_step() || self.is_done(),
        )
    }

    fn market_view(&self, agent: Option<EnterpriseId>) -> MarketView {
        let (own_bids, own_asks) = match agent {
            Some(a) => (self.book.own_depth(a, Side::Bid), self.book.own_depth(a, Side::Ask)),
            None => (Vec::new(), Vec::new()),
        };
        MarketView {
            price_summary: self.book.price_summary(),
            bid_depth: self.book.depth(Side::Bid),
            ask_depth: self.book.depth(Side::Ask),
            own_bids,
            own_asks,
        }
    }

    pub fn observe_enterprise(&self, agent: EnterpriseId) -> EnterpriseObservation {
        let spp = self.config.steps_per_period;
        let t = self.t.min(self.config.horizon() - 1);
        let state = &self.enterprises[agent.index()];
        let avg = self.enterprises.iter().map(|s| s.emission_level).sum::<f64>() / self.enterprises.len() as f64;
        EnterpriseObservation {
            id: agent,
            t: self.t,
            period: t / spp,
            step_in_period: t % spp,
            steps_per_period: spp,
            position: self.grid.position(agent).expect("agent on grid"),
            local_map: LocalMap::build(&self.grid, agent, self.config.view_radius),
            own_properties: self.grid.properties_of(agent),
            own: OwnAttributes::of(state),
            avg_emission_level: avg,
            punishment: self.punishment,
            market: self.market_view(Some(agent)),
            action_mask: self.action_mask(agent),
        }
    }

    pub fn observe_enterprises(&self) -> Vec<EnterpriseObservation> {
        (0..self.enterprises.len())
            .map(|i| self.observe_enterprise(EnterpriseId(i as u32)))
            .collect()
    }

    pub fn observe_government(&self) -> GovernmentObservation {
        let market = self.market_view(None);
        GovernmentObservation {
            t: self.t,
            period: self.period(),
            n_periods: self.config.n_periods,
            grid: self.grid.clone(),
            enterprises: self
                .enterprises
                .iter()
                .map(|s| EnterpriseView {
                    id: s.id,
                    skills: s.skills,
                    position: self.grid.position(s.id).expect("agent on grid"),
                    attributes: OwnAttributes::of(s),
                    last_period_emissions: s.period_emissions,
                    last_period_income: s.period_income,
                })
                .collect(),
            price_summary: market.price_summary,
            bid_depth: market.bid_depth,
            ask_depth: market.ask_depth,
            remaining_budget: self.remaining_budget,
            total_budget: self.config.total_credit_budget,
            punishment: self.punishment,
            n_projects_complete: self.n_projects,
        }
    }

    /// Advances one timestep. `government` must be present exactly at period
    /// starts; `actions` holds one action per enterprise and is ignored at
    /// period starts (it may then be empty). Illegal input is rejected
    /// before any state changes.
    pub fn step(
        &mut self,
        government: Option<&GovernmentAction>,
        actions: &[Action],
    ) -> Result<StepOutcome, EngineError> {
        let t = self.t;
        if self.is_done() {
            return Err(EngineError::Finished(t));
        }
        let n = self.enterprises.len();
        let gov_step = self.is_government_step();
        let allocation = match (gov_step, government) {
            (true, Some(a)) => Some(decode_action(a, self.remaining_budget, t, &self.config)?),
            (true, None) => return Err(EngineError::MissingGovernmentAction(t)),
            (false, Some(_)) => return Err(EngineError::UnexpectedGovernmentAction(t)),
            (false, None) => None,
        };
        if !gov_step {
            if actions.len() != n {
                return Err(EngineError::ActionCount {
                    found: actions.len(),
                    expected: n,
                });
            }
            let levels = self.config.trade_price_levels;
            for (i, &a) in actions.iter().enumerate() {
                let id = EnterpriseId(i as u32);
                if !a.checked_index(levels).is_some_and(|i| self.action_mask(id)[i]) {
                    return Err(EngineError::IllegalAction {
                        agent: id,
                        action: a,
                        t,
                    });
                }
            }
        }

        let mut events = Vec::new();
        let mut dirty = false;

        if let (Some(outcome), Some(raw)) = (allocation, government) {
            if t > 0 {
                for s in &mut self.enterprises {
                    dirty |= s.invest_count > 0.0;
                    decay_investments(s, self.config.invest_forget_rate);
                }
                for order in self.book.cancel_side(Side::Ask) {
                    let s = &mut self.enterprises[order.agent.index()];
                    s.escrow_credits -= 1.0;
                    s.credits += 1.0;
                    events.push(Event {
                        t,
                        kind: EventKind::OrderCancelled { order },
                    });
                }
                self.book.roll_period();
            }
            let effect = apply_allocation(
                &outcome,
                &mut self.enterprises,
                &mut self.grid,
                &mut self.streams.project,
            );
            self.ledger.grants += outcome.per_enterprise.iter().sum::<f64>();
            self.ledger.project_reserve += outcome.project_share;
            self.ledger.forfeits += effect.forfeited.iter().sum::<f64>();
            self.remaining_budget = outcome.remaining_budget;
            self.punishment = outcome.punishment;
            events.push(Event {
                t,
                kind: EventKind::Allocation {
                    period: self.period(),
                    raw: raw.raw.clone(),
                    period_total: outcome.period_total,
                    project_share: outcome.project_share,
                    grants: outcome.per_enterprise,
                    punishment: outcome.punishment,
                    remaining_budget: outcome.remaining_budget,
                    forfeited: effect.forfeited,
                    project: effect.project,
                },
            });
        }

        for order in self.book.expire_orders(t) {
            let s = &mut self.enterprises[order.agent.index()];
            match order.side {
                Side::Bid => {
                    s.escrow_coins -= order.price as f64;
                    s.coins += order.price as f64;
                }
                Side::Ask => {
                    s.escrow_credits -= 1.0;
                    s.credits += 1.0;
                }
            }
            events.push(Event {
                t,
                kind: EventKind::OrderExpired { order },
            });
        }

        for s in &mut self.enterprises {
            let count = apply_due_investments(s, t);
            if count > 0 {
                dirty = true;
                events.push(Event {
                    t,
                    kind: EventKind::InvestMatured { agent: s.id, count },
                });
            }
        }

        if !gov_step {
            for (i, &action) in actions.iter().enumerate() {
                dirty |= self.apply_action(EnterpriseId(i as u32), action, &mut events);
            }
        }

        let late = self.book.match_pass(t);
        self.settle(&late, &mut events);

        if dirty {
            let green_rate = recompute_emission_levels(&mut self.enterprises, self.n_projects, &self.config);
            events.push(Event {
                t,
                kind: EventKind::EmissionLevels {
                    green_rate,
                    levels: self.enterprises.iter().map(|s| s.emission_level).collect(),
                },
            });
        }

        let last = t + 1 == self.config.horizon();
        if last {
            let amounts = apply_penalty(&mut self.enterprises, self.punishment);
            self.ledger.penalties += amounts.iter().sum::<f64>();
            events.push(Event {
                t,
                kind: EventKind::Penalty {
                    punishment: self.punishment,
                    amounts,
                },
            });
        }

        self.metrics = WelfareMetrics::compute(&self.enterprises, self.config.climate_coeff);
        let rewards: Vec<f64> = self
            .enterprises
            .iter_mut()
            .map(|s| {
                let u = s.utility(t, &self.config);
                let r = enterprise::step_reward(s, u);
                s.utility_prev = u;
                r
            })
            .collect();
        let government_reward = (gov_step || last).then(|| {
            let prev = WelfareMetrics {
                swf: self.last_government_swf,
                ..WelfareMetrics::ZERO
            };
            self.last_government_swf = self.metrics.swf;
            government_reward(&self.metrics, &prev)
        });
        if gov_step || last {
            events.push(Event {
                t,
                kind: EventKind::Metrics { metrics: self.metrics },
            });
        }
        events.push(Event {
            t,
            kind: EventKind::Rewards {
                enterprises: rewards.clone(),
                government: government_reward,
            },
        });

        self.t += 1;
        Ok(StepOutcome {
            rewards,
            government_reward,
            events,
            done: last,
        })
    }

    /// Applies one enterprise action. Returns whether emission levels need
    /// recomputing.
    fn apply_action(&mut self, id: EnterpriseId, action: Action, events: &mut Vec<Event>) -> bool {
        let t = self.t;
        let cfg = &self.config;
        if action != Action::NoOp {
            events.push(Event {
                t,
                kind: EventKind::Action { agent: id, action },
            });
        }
        let void = |events: &mut Vec<Event>, reason: String| {
            events.push(Event {
                t,
                kind: EventKind::Voided {
                    agent: id,
                    action,
                    reason,
                },
            });
        };
        match action {
            Action::NoOp => false,
            Action::Move(dir) => self.apply_move(id, dir, events),
            Action::Produce => {
                let s = &mut self.enterprises[id.index()];
                match apply_produce(s, &mut self.grid, cfg, &mut self.streams.pollution) {
                    Ok(e) => {
                        self.ledger.income += e.income;
                        self.ledger.burns += e.credits_used;
                        events.push(Event {
                            t,
                            kind: EventKind::Produce {
                                agent: id,
                                pos: e.pos,
                                income: e.income,
                                emission: e.emission,
                                credits_used: e.credits_used,
                                shortfall: e.shortfall,
                            },
                        });
                        if !e.polluted.is_empty() {
                            events.push(Event {
                                t,
                                kind: EventKind::Pollution {
                                    source: id,
                                    cells: e.polluted,
                                },
                            });
                        }
                    }
                    Err(err) => void(events, err.to_string()),
                }
                false
            }
            Action::Invest => {
                let s = &mut self.enterprises[id.index()];
                match apply_invest(s, t, cfg, &mut self.streams.invest) {
                    Ok(e) => {
                        self.ledger.invest_costs += e.cost;
                        events.push(Event {
                            t,
                            kind: EventKind::Invest {
                                agent: id,
                                cost: e.cost,
                                effective_at: e.effective_at,
                            },
                        });
                    }
                    Err(err) => void(events, err.to_string()),
                }
                false
            }
            Action::Bid(price) | Action::Ask(price) => {
                let side = if matches!(action, Action::Bid(_)) {
                    Side::Bid
                } else {
                    Side::Ask
                };
                let s = &mut self.enterprises[id.index()];
                let (mut coins, mut credits) = (s.coins, s.credits);
                match self.book.submit(id, side, price, t, &mut coins, &mut credits) {
                    Ok((order, trades)) => {
                        s.escrow_coins += s.coins - coins;
                        s.escrow_credits += s.credits - credits;
                        s.coins = coins;
                        s.credits = credits;
                        s.labor += cfg.labor_costs.trade;
                        events.push(Event {
                            t,
                            kind: EventKind::OrderPlaced { order },
                        });
                        self.settle(&trades, events);
                    }
                    Err(err) => void(events, err.to_string()),
                }
                false
            }
        }
    }

    fn apply_move(&mut self, id: EnterpriseId, dir: Direction, events: &mut Vec<Event>) -> bool {
        let t = self.t;
        let action = Action::Move(dir);
        let void = |events: &mut Vec<Event>, reason: &str| {
            events.push(Event {
                t,
                kind: EventKind::Voided {
                    agent: id,
                    action,
                    reason: reason.to_owned(),
                },
            });
        };
        match self.grid.peek_move(id, dir) {
            Ok(MoveResult::Moved(_)) => {
                let Ok(MoveResult::Moved(to)) = self.grid.try_move(id, dir) else {
                    unreachable!("peeked move must succeed")
                };
                self.enterprises[id.index()].labor += self.config.labor_costs.move_;
                events.push(Event {
                    t,
                    kind: EventKind::Move { agent: id, to },
                });
                false
            }
            Ok(MoveResult::EnteredProject(pos)) => {
                let s = &mut self.enterprises[id.index()];
                match apply_enter_project(s, &self.config) {
                    Ok(e) => {
                        let fresh = self.grid.complete_project(pos);
                        debug_assert!(fresh, "open project expected");
                        self.n_projects += 1;
                        self.ledger.project_costs += e.cost;
                        self.ledger.project_rewards += e.credits;
                        let purified = self.grid.purify(pos, self.config.pollution_radius);
                        events.push(Event {
                            t,
                            kind: EventKind::ProjectComplete {
                                agent: id,
                                pos,
                                cost: e.cost,
                                credits: e.credits,
                                purified,
                            },
                        });
                        true
                    }
                    Err(err) => {
                        void(events, &err.to_string());
                        false
                    }
                }
            }
            Ok(MoveResult::Blocked) => {
                void(events, "blocked");
                false
            }
            Err(err) => {
                void(events, &err.to_string());
                false
            }
        }
    }

    fn settle(&mut self, trades: &[Trade], events: &mut Vec<Event>) {
        for trade in trades {
            let buyer = &mut self.enterprises[trade.buyer.index()];
            buyer.escrow_coins -= trade.bid_price as f64;
            buyer.coins += trade.buyer_refund() as f64;
            buyer.credits += 1.0;
            buyer.n_trades += 1;
            let seller = &mut self.enterprises[trade.seller.index()];
            seller.escrow_credits -= 1.0;
            seller.coins += trade.price as f64;
            seller.n_trades += 1;
            events.push(Event {
                t: self.t,
                kind: EventKind::Trade { trade: *trade },
            });
        }
    }

    /// Checks coin and credit conservation, escrow consistency, grid
    /// occupancy and that the book is not crossed.
    pub fn audit(&self) -> Result<(), AuditError> {
        let fail = |what: String| Err(AuditError { t: self.t, what });
        let l = &self.ledger;
        let coins: f64 = self.enterprises.iter().map(|s| s.coins + s.escrow_coins).sum();
        let expected = l.income - l.invest_costs - l.project_costs - l.penalties;
        if !close(coins, expected) {
            return fail(format!("coins {coins} != ledger {expected}"));
        }
        let credits: f64 = self.enterprises.iter().map(|s| s.credits + s.escrow_credits).sum();
        let expected = l.grants + l.project_rewards - l.burns - l.forfeits;
        if !close(credits, expected) {
            return fail(format!("credits {credits} != ledger {expected}"));
        }
        let escrow_coins: f64 = self.enterprises.iter().map(|s| s.escrow_coins).sum();
        if !close(escrow_coins, self.book.escrowed_coins()) {
            return fail(format!(
                "coin escrow {escrow_coins} != book {}",
                self.book.escrowed_coins()
            ));
        }
        let escrow_credits: f64 = self.enterprises.iter().map(|s| s.escrow_credits).sum();
        if !close(escrow_credits, self.book.escrowed_credits()) {
            return fail(format!(
                "credit escrow {escrow_credits} != book {}",
                self.book.escrowed_credits()
            ));
        }
        if let Some(s) = self
            .enterprises
            .iter()
            .find(|s| s.credits < -1e-9 || s.escrow_coins < -1e-9)
        {
            return fail(format!("{} has negative credits or escrow", s.id));
        }
        let allocated = l.grants + l.project_reserve;
        if allocated > self.config.total_credit_budget * (1.0 + 1e-12) + 1e-9 {
            return fail(format!("allocated {allocated} exceeds budget"));
        }
        if self.book.is_crossed() {
            return fail("order book crossed".into());
        }
        if self.grid.count_projects().1 != self.n_projects {
            return fail("project count mismatch".into());
        }
        self.grid
            .check_invariants()
            .map_err(|what| AuditError { t: self.t, what })
    }
}
