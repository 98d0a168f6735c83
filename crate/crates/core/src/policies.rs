//! Baseline allocation policies and scripted enterprise behavior.
//!
//! A baseline government combines a budget schedule (how much of the total
//! cap each period releases) with an indicator (how a period's credits are
//! split between enterprises). Scripted enterprises follow a fixed priority
//! heuristic so experiments can run without trained agents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ScheduleShape, SimConfig};
use crate::enterprise::Action;
use crate::government::GovernmentAction;
use crate::grid::Direction;
use crate::observation::{channel, EnterpriseObservation, GovernmentObservation};
use crate::rng::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("period {period} outside 1..={n_periods}")]
    PeriodOutOfRange { period: usize, n_periods: usize },
    #[error("indicator needs at least one enterprise")]
    EmptyHistory,
    #[error("unknown government policy {0:?}; valid: {valid}", valid = GovPolicySpec::valid_names().join(", "))]
    UnknownGovPolicy(String),
    #[error("unknown enterprise policy {0:?}; valid: {valid}", valid = EntPolicySpec::VALID.join(", "))]
    UnknownEntPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleKind {
    Flat,
    Decreasing,
    Convex,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [ScheduleKind::Flat, ScheduleKind::Decreasing, ScheduleKind::Convex];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Flat => "flat",
            ScheduleKind::Decreasing => "decreasing",
            ScheduleKind::Convex => "convex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub kind: ScheduleKind,
    pub shape: ScheduleShape,
}

impl SchedulePolicy {
    pub fn new(kind: ScheduleKind, shape: ScheduleShape) -> Self {
        Self { kind, shape }
    }

    /// Share of the whole budget granted in each period; sums to 1.
    pub fn shares(&self, n_periods: usize) -> Vec<f64> {
        let n = n_periods;
        let raw: Vec<f64> = match self.kind {
            ScheduleKind::Flat => vec![1.0; n],
            ScheduleKind::Decreasing => (1..=n)
                .map(|k| 1.0 + (n - k) as f64 * self.shape.decreasing_slope)
                .collect(),
            ScheduleKind::Convex => {
                let peak = ((n as f64 * self.shape.convex_peak_fraction).ceil() as usize).clamp(1, n);
                let reach = (peak - 1).max(n - peak);
                (1..=n)
                    .map(|k| {
                        if reach == 0 {
                            return 1.0;
                        }
                        let d = k.abs_diff(peak) as f64 / reach as f64;
                        1.0 - (1.0 - self.shape.convex_floor) * d * d
                    })
                    .collect()
            }
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Fraction of the *remaining* budget to release in 1-based `period`.
    /// The final period always releases everything.
    pub fn fraction(&self, period: usize, n_periods: usize) -> Result<f64, PolicyError> {
        if period == 0 || period > n_periods {
            return Err(PolicyError::PeriodOutOfRange { period, n_periods });
        }
        if period == n_periods {
            return Ok(1.0);
        }
        let shares = self.shares(n_periods);
        let rest: f64 = shares[period - 1..].iter().sum();
        Ok((shares[period - 1] / rest).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndicatorKind {
    /// Grandfathering: previous-period emissions.
    Gf,
    /// Benchmarking: previous-period emission intensity.
    Bm,
    /// Enterprise size.
    Si,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 3] = [IndicatorKind::Gf, IndicatorKind::Bm, IndicatorKind::Si];

    pub fn name(self) -> &'static str {
        match self {
            IndicatorKind::Gf => "gf",
            IndicatorKind::Bm => "bm",
            IndicatorKind::Si => "si",
        }
    }
}

/// What an indicator may look at: sizes plus the last completed period's
/// emissions and produce income, when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorHistory {
    pub sizes: Vec<f64>,
    pub last_period: Option<Vec<(f64, f64)>>,
}

impl IndicatorHistory {
    pub fn from_observation(obs: &GovernmentObservation) -> Self {
        let sizes = obs.enterprises.iter().map(|e| e.skills.size).collect();
        let last_period = (obs.period > 0).then(|| {
            obs.enterprises
                .iter()
                .map(|e| (e.last_period_emissions, e.last_period_income))
                .collect()
        });
        Self { sizes, last_period }
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = v.iter().sum();
    (total > 0.0 && total.is_finite()).then(|| v.iter().map(|x| x / total).collect())
}

/// Enterprise weights for one period; non-negative and summing to 1.
/// GF and BM fall back to SI without a usable previous period.
pub fn indicator_weights(kind: IndicatorKind, history: &IndicatorHistory) -> Result<Vec<f64>, PolicyError> {
    let n = history.sizes.len();
    if n == 0 {
        return Err(PolicyError::EmptyHistory);
    }
    let by_size = || normalize(&history.sizes).unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let Some(last) = history.last_period.as_ref() else {
        return Ok(by_size());
    };
    let weights = match kind {
        IndicatorKind::Si => None,
        IndicatorKind::Gf => {
            let emissions: Vec<f64> = last.iter().map(|&(e, _)| e).collect();
            normalize(&emissions)
        }
        IndicatorKind::Bm => {
            let intensity: Vec<Option<f64>> = last
                .iter()
                .map(|&(e, income)| (income > 0.0).then(|| e / income))
                .collect();
            let max = intensity.iter().flatten().copied().fold(f64::NAN, f64::max);
            if max.is_nan() {
                None
            } else {
                let filled: Vec<f64> = intensity.iter().map(|i| i.unwrap_or(max)).collect();
                normalize(&filled)
            }
        }
    };
    Ok(weights.unwrap_or_else(by_size))
}

/// A government decision rule.
pub trait GovernmentPolicy {
    fn act(&mut self, obs: &GovernmentObservation, rng: &mut RngStream) -> GovernmentAction;
}

/// Schedule × indicator baseline with a fixed punishment.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineGovernment {
    pub schedule: SchedulePolicy,
    pub indicator: IndicatorKind,
    pub punishment: f64,
    pub max_punishment: f64,
}

fn quantize(x: f64) -> u32 {
    (x * 100.0).round().clamp(0.0, 100.0) as u32
}

impl BaselineGovernment {
    pub fn new(schedule: SchedulePolicy, indicator: IndicatorKind, punishment: f64, max_punishment: f64) -> Self {
        Self {
            schedule,
            indicator,
            punishment,
            max_punishment,
        }
    }

    pub fn action(&self, obs: &GovernmentObservation) -> GovernmentAction {
        let n = obs.n_periods;
        let period = obs.period + 1;
        let proportion = if period >= n || obs.remaining_budget <= 0.0 {
            100
        } else {
            // Aim at the schedule's absolute grant; this absorbs earlier
            // quantization drift.
            let target = self.schedule.shares(n)[period - 1] * obs.total_budget;
            quantize((target / obs.remaining_budget).min(1.0))
        };
        let weights = indicator_weights(self.indicator, &IndicatorHistory::from_observation(obs))
            .expect("observation lists enterprises");
        let punishment = if self.max_punishment > 0.0 {
            quantize(self.punishment / self.max_punishment)
        } else {
            0
        };
        let mut raw = Vec::with_capacity(weights.len() + 2);
        raw.push(proportion);
        raw.extend(weights.iter().map(|&w| quantize(w)));
        raw.push(punishment);
        GovernmentAction::new(raw)
    }
}

impl GovernmentPolicy for BaselineGovernment {
    fn act(&mut self, obs: &GovernmentObservation, _rng: &mut RngStream) -> GovernmentAction {
        self.action(obs)
    }
}

/// Uniformly random government actions; used for stress testing.
#[derive(Debug, Clone, Default)]
pub struct RandomGovernment;

impl GovernmentPolicy for RandomGovernment {
    fn act(&mut self, obs: &GovernmentObservation, rng: &mut RngStream) -> GovernmentAction {
        let dims = obs.enterprises.len() + 2;
        GovernmentAction::new((0..dims).map(|_| rng.below(101) as u32).collect())
    }
}

/// An enterprise decision rule. Must return an action legal under
/// `obs.action_mask`.
pub trait EnterprisePolicy {
    fn act(&mut self, obs: &EnterpriseObservation, config: &SimConfig, rng: &mut RngStream) -> Action;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoOpEnterprise;

impl EnterprisePolicy for NoOpEnterprise {
    fn act(&mut self, _: &EnterpriseObservation, _: &SimConfig, _: &mut RngStream) -> Action {
        Action::NoOp
    }
}

/// Uniform over legal actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomEnterprise;

impl EnterprisePolicy for RandomEnterprise {
    fn act(&mut self, obs: &EnterpriseObservation, config: &SimConfig, rng: &mut RngStream) -> Action {
        let legal: Vec<usize> = obs
            .action_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &ok)| ok.then_some(i))
            .collect();
        let i = legal[rng.index(legal.len())];
        Action::from_index(i, config.trade_price_levels).expect("mask index in range")
    }
}

/// Priority heuristic standing in for a trained enterprise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEnterprisePolicy {
    /// Overdraft appetite: up to `produce_bias * steps_per_period / 10`
    /// produce actions per period beyond the credits held, scaled down as
    /// the penalty approaches the produce income.
    pub produce_bias: f64,
    /// Keep investing while the emission level is above this.
    pub invest_threshold: f64,
    /// Overdraft appetite once grants are shrinking.
    pub tight_produce_bias: f64,
    /// Bid up to this fraction of a credit's production value.
    pub trade_margin: f64,
    /// Probability of building an affordable adjacent project.
    pub project_appetite: f64,
    #[serde(skip)]
    grants: GrantMemory,
}

/// Largest per-enterprise grant seen so far, and the current one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct GrantMemory {
    period: Option<usize>,
    peak: f64,
    current: f64,
}

impl Default for ScriptedEnterprisePolicy {
    fn default() -> Self {
        Self {
            produce_bias: 0.5,
            invest_threshold: 0.8,
            tight_produce_bias: 0.0,
            trade_margin: 0.5,
            project_appetite: 0.5,
            grants: GrantMemory::default(),
        }
    }
}

/// Coins held in reserve, in units of the investment cost, before investing.
const INVEST_RESERVE: f64 = 10.0;
/// Per-step chance of investing once eligible.
const INVEST_RATE: f64 = 0.2;
/// A grant below this fraction of the peak counts as shrinking.
const SHRINK_RATIO: f64 = 0.92;
/// Street spacing of the building layout.
const STREET_ROWS: isize = 3;
const STREET_COLS: isize = 5;

impl ScriptedEnterprisePolicy {
    /// Records the grant at the first step of each period.
    fn observe_grant(&mut self, obs: &EnterpriseObservation) {
        if self.grants.period != Some(obs.period) {
            let g = obs.own.period_grant;
            self.grants = GrantMemory {
                period: Some(obs.period),
                peak: self.grants.peak.max(g),
                current: g,
            };
        }
    }

    /// Whether grants are shrinking. Expecting scarcer credits ahead, the
    /// enterprise stops producing on credit it does not hold.
    fn tightening(&self) -> bool {
        self.grants.current < SHRINK_RATIO * self.grants.peak
    }

    fn legal(obs: &EnterpriseObservation, levels: u32, a: Action) -> bool {
        obs.action_mask.get(a.to_index(levels)).copied().unwrap_or(false)
    }

    /// Decides whether to produce here, weighing any credit shortfall
    /// against the punishment.
    fn wants_produce(&self, obs: &EnterpriseObservation, config: &SimConfig) -> bool {
        let own = &obs.own;
        let xl = own.emission_level;
        if own.credits >= xl {
            return true;
        }
        let here = obs.local_map.at(0, 0);
        let income = config.produce_coin_rate * own.size * (1.0 - here[channel::POLLUTION] * config.pollution_discount);
        if income <= 0.0 {
            return false;
        }
        let margin = (1.0 - xl * obs.punishment / income).max(0.0);
        let bias = if self.tightening() {
            self.tight_produce_bias
        } else {
            self.produce_bias
        };
        let allowance = bias * margin * xl * obs.steps_per_period as f64 / 10.0;
        own.period_excess + (xl - own.credits) <= allowance
    }

    /// Whether the cell at `(dx, dy)` can be walked onto and built on.
    fn free(obs: &EnterpriseObservation, dx: isize, dy: isize) -> bool {
        let r = obs.local_map.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return false;
        }
        let c = obs.local_map.at(dx, dy);
        [
            channel::OFF_MAP,
            channel::OTHER_AGENT,
            channel::OWN_PROPERTY,
            channel::OTHER_PROPERTY,
            channel::OPEN_PROJECT,
            channel::COMPLETE_PROJECT,
        ]
        .iter()
        .all(|&ch| c[ch] == 0.0)
    }

    /// Whether `(x, y)` lies on a street: every third row and every fifth
    /// column stay unbuilt so the free cells form one connected lattice.
    fn street(x: isize, y: isize) -> bool {
        y.rem_euclid(STREET_ROWS) == 1 || x.rem_euclid(STREET_COLS) == 0
    }

    /// Whether the cell at offset `(dx, dy)` is a building lot: on the map,
    /// off the streets and next to one. Building only on lots never cuts
    /// an enterprise off, even though its own properties block it.
    fn lot(obs: &EnterpriseObservation, config: &SimConfig, dx: isize, dy: isize) -> bool {
        let (x, y) = (obs.position.x as isize + dx, obs.position.y as isize + dy);
        let (w, h) = (config.grid_width as isize, config.grid_height as isize);
        let on_map = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;
        on_map(x, y)
            && !Self::street(x, y)
            && Direction::ALL.iter().any(|d| {
                let (ex, ey) = d.delta();
                on_map(x + ex, y + ey) && Self::street(x + ex, y + ey)
            })
    }

    /// First step of a shortest path (within the view) to the best visible
    /// free lot, scoring distance plus twice its pollution. Without
    /// `lots_only` any free cell is a target.
    fn seek(obs: &EnterpriseObservation, config: &SimConfig, lots_only: bool) -> Option<Direction> {
        let levels = config.trade_price_levels;
        let r = obs.local_map.radius as isize;
        let side = (2 * r + 1) as usize;
        let slot = |dx: isize, dy: isize| ((dy + r) as usize) * side + (dx + r) as usize;
        let mut first: Vec<Option<Direction>> = vec![None; side * side];
        let mut seen = vec![false; side * side];
        let mut queue = std::collections::VecDeque::new();
        seen[slot(0, 0)] = true;
        queue.push_back((0isize, 0isize, 0usize));
        let mut best: Option<(f64, Direction)> = None;
        while let Some((x, y, depth)) = queue.pop_front() {
            for d in Direction::ALL {
                let (ddx, ddy) = d.delta();
                let (nx, ny) = (x + ddx, y + ddy);
                if !Self::free(obs, nx, ny) || seen[slot(nx, ny)] {
                    continue;
                }
                seen[slot(nx, ny)] = true;
                let step = first[slot(x, y)].unwrap_or(d);
                first[slot(nx, ny)] = Some(step);
                if !lots_only || Self::lot(obs, config, nx, ny) {
                    let score = (depth + 1) as f64 + 2.0 * obs.local_map.at(nx, ny)[channel::POLLUTION];
                    if best.is_none_or(|(s, _)| score < s) {
                        best = Some((score, step));
                    }
                }
                queue.push_back((nx, ny, depth + 1));
            }
        }
        best.map(|(_, d)| d)
            .filter(|&d| Self::legal(obs, levels, Action::Move(d)))
    }

    pub fn decide(&self, obs: &EnterpriseObservation, config: &SimConfig, rng: &mut RngStream) -> Action {
        let levels = config.trade_price_levels;
        let legal = |a: Action| Self::legal(obs, levels, a);
        if obs.action_mask.iter().filter(|&&m| m).count() <= 1 {
            return Action::NoOp;
        }
        let own = &obs.own;
        let xl = own.emission_level;
        // One draw per decision keeps the stream aligned across branches.
        let draw = rng.next_f64();

        let can_produce = legal(Action::Produce);
        let wants = self.wants_produce(obs, config);
        if can_produce && wants {
            if Self::lot(obs, config, 0, 0) {
                return Action::Produce;
            }
            if let Some(d) = Self::seek(obs, config, true) {
                return Action::Move(d);
            }
        }

        for d in Direction::ALL {
            let (dx, dy) = d.delta();
            if obs.local_map.at(dx, dy)[channel::OPEN_PROJECT] > 0.0
                && legal(Action::Move(d))
                && draw < self.project_appetite
            {
                return Action::Move(d);
            }
        }

        let invest_cost = config.invest_coin_cost_numerator / own.research;
        if xl > self.invest_threshold
            && own.coins >= INVEST_RESERVE * invest_cost
            && legal(Action::Invest)
            && draw < INVEST_RATE
        {
            return Action::Invest;
        }

        let credit_value = config.produce_coin_rate * own.size / xl;
        let reference = obs.market.recent_price().unwrap_or((levels as f64 + 1.0) / 2.0);
        let has_bid = obs.market.own_bids.iter().any(|&c| c > 0);
        let has_ask = obs.market.own_asks.iter().any(|&c| c > 0);
        if own.credits < xl && !has_bid {
            let price = (self.trade_margin * credit_value)
                .floor()
                .min(levels as f64)
                .min(own.coins.floor());
            if price >= 1.0 && reference <= self.trade_margin * credit_value {
                let bid = Action::Bid(price as u32);
                if legal(bid) {
                    return bid;
                }
            }
        }
        let usable = xl * (obs.steps_left_in_period() as f64 / 2.0 + 1.0);
        if own.credits - 1.0 >= usable && !has_ask {
            let price = reference.round().clamp(1.0, levels as f64) as u32;
            let ask = Action::Ask(price);
            if legal(ask) {
                return ask;
            }
        }

        // Off a lot, or looking for one: head for the nearest visible lot,
        // else any free cell, else wander.
        if !can_produce || wants {
            if let Some(d) = Self::seek(obs, config, true).or_else(|| Self::seek(obs, config, false)) {
                return Action::Move(d);
            }
            let moves: Vec<Action> = Direction::ALL
                .iter()
                .map(|&d| Action::Move(d))
                .filter(|&a| legal(a))
                .collect();
            if !moves.is_empty() {
                return moves[rng.index(moves.len())];
            }
        }
        Action::NoOp
    }
}

impl EnterprisePolicy for ScriptedEnterprisePolicy {
    fn act(&mut self, obs: &EnterpriseObservation, config: &SimConfig, rng: &mut RngStream) -> Action {
        self.observe_grant(obs);
        self.decide(obs, config, rng)
    }
}

/// Named government policy, as used on the command line and in trace
/// headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GovPolicySpec {
    Baseline(ScheduleKind, IndicatorKind),
    Random,
}

impl GovPolicySpec {
    pub fn all_baselines() -> Vec<GovPolicySpec> {
        ScheduleKind::ALL
            .iter()
            .flat_map(|&s| IndicatorKind::ALL.iter().map(move |&i| GovPolicySpec::Baseline(s, i)))
            .collect()
    }

    pub fn valid_names() -> Vec<String> {
        let mut v: Vec<String> = Self::all_baselines().iter().map(|p| p.to_string()).collect();
        v.push("random".into());
        v
    }

    pub fn build(self, config: &SimConfig, punishment: f64) -> Box<dyn GovernmentPolicy + Send> {
        match self {
            GovPolicySpec::Baseline(s, i) => Box::new(BaselineGovernment::new(
                SchedulePolicy::new(s, config.schedule),
                i,
                punishment,
                config.max_punishment,
            )),
            GovPolicySpec::Random => Box::new(RandomGovernment),
        }
    }
}

impl fmt::Display for GovPolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GovPolicySpec::Baseline(s, i) => write!(f, "{}-{}", s.name(), i.name()),
            GovPolicySpec::Random => f.write_str("random"),
        }
    }
}

impl FromStr for GovPolicySpec {
    type Err = PolicyError;

    /// Accepts `flat-si`, `flat×si`, `flatxsi`, `flat_si`, `flat/si`, any case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_lowercase();
        if lower == "random" {
            return Ok(GovPolicySpec::Random);
        }
        for kind in ScheduleKind::ALL {
            let Some(rest) = lower.strip_prefix(kind.name()) else {
                continue;
            };
            let rest = rest
                .strip_prefix('×')
                .or_else(|| rest.strip_prefix(['-', '_', '/', '*', 'x']))
                .unwrap_or(rest);
            if let Some(ind) = IndicatorKind::ALL.into_iter().find(|i| i.name() == rest) {
                return Ok(GovPolicySpec::Baseline(kind, ind));
            }
        }
        Err(PolicyError::UnknownGovPolicy(s.to_owned()))
    }
}

/// Named enterprise policy assignment for all enterprises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntPolicySpec {
    Scripted,
    Random,
    NoOp,
    /// Scripted on even ids, random on odd ids.
    Mixed,
}

impl EntPolicySpec {
    pub const VALID: [&'static str; 4] = ["scripted", "random", "noop", "mixed"];

    pub fn build(self, n: usize) -> Vec<Box<dyn EnterprisePolicy + Send>> {
        (0..n)
            .map(|i| -> Box<dyn EnterprisePolicy + Send> {
                match (self, i % 2) {
                    (EntPolicySpec::Scripted, _) | (EntPolicySpec::Mixed, 0) => {
                        Box::new(ScriptedEnterprisePolicy::default())
                    }
                    (EntPolicySpec::Random, _) | (EntPolicySpec::Mixed, _) => Box::new(RandomEnterprise),
                    (EntPolicySpec::NoOp, _) => Box::new(NoOpEnterprise),
                }
            })
            .collect()
    }
}

impl fmt::Display for EntPolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntPolicySpec::Scripted => "scripted",
            EntPolicySpec::Random => "random",
            EntPolicySpec::NoOp => "noop",
            EntPolicySpec::Mixed => "mixed",
        })
    }
}

impl FromStr for EntPolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "scripted" => Ok(EntPolicySpec::Scripted),
            "random" => Ok(EntPolicySpec::Random),
            "noop" | "no-op" => Ok(EntPolicySpec::NoOp),
            "mixed" => Ok(EntPolicySpec::Mixed),
            _ => Err(PolicyError::UnknownEntPolicy(s.to_owned())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn sched(kind: ScheduleKind) -> SchedulePolicy {
        SchedulePolicy::new(kind, ScheduleShape::default())
    }

    /// Absolute grants from applying the fractions to a running remainder.
    fn grants(kind: ScheduleKind, budget: f64, n: usize) -> Vec<f64> {
        let s = sched(kind);
        let mut remaining = budget;
        (1..=n)
            .map(|k| {
                let g = s.fraction(k, n).unwrap() * remaining;
                remaining -= g;
                g
            })
            .collect()
    }

    #[test]
    fn flat_grants_equal() {
        for g in grants(ScheduleKind::Flat, 1000.0, 10) {
            assert!(close(g, 100.0, 1e-12), "{g}");
        }
    }

    #[test]
    fn decreasing_grants_linear() {
        let g = grants(ScheduleKind::Decreasing, 1000.0, 10);
        assert!(close(g[0], 1000.0 * 10.0 / 55.0, 1e-12));
        for (k, gk) in g.iter().enumerate() {
            assert!(close(*gk, 1000.0 * (10 - k) as f64 / 55.0, 1e-12));
        }
    }

    #[test]
    fn convex_rises_then_falls() {
        let g = grants(ScheduleKind::Convex, 1000.0, 10);
        let peak = g
            .iter()
            .cloned()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 3);
        assert!(g[0] < g[3] && g[9] < g[3]);
        assert!(g.windows(2).skip(3).all(|w| w[1] < w[0]));
    }

    #[test]
    fn every_schedule_exhausts_budget() {
        for kind in ScheduleKind::ALL {
            for n in 1..15 {
                let total: f64 = grants(kind, 1234.5, n).iter().sum();
                assert!((total - 1234.5).abs() <= 1e-9, "{kind:?} n={n} {total}");
                assert_eq!(sched(kind).fraction(n, n).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn fraction_range_checked() {
        let s = sched(ScheduleKind::Flat);
        assert!(s.fraction(0, 10).is_err());
        assert!(s.fraction(11, 10).is_err());
    }

    fn hist(sizes: &[f64], last: Option<&[(f64, f64)]>) -> IndicatorHistory {
        IndicatorHistory {
            sizes: sizes.to_vec(),
            last_period: last.map(|l| l.to_vec()),
        }
    }

    #[test]
    fn size_indicator() {
        let w = indicator_weights(IndicatorKind::Si, &hist(&[1.0, 1.0, 2.0], None)).unwrap();
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn grandfathering() {
        let h = hist(&[1.0, 1.0, 1.0], Some(&[(0.0, 0.0), (5.0, 10.0), (5.0, 10.0)]));
        assert_eq!(indicator_weights(IndicatorKind::Gf, &h).unwrap(), vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn benchmarking() {
        let h = hist(&[1.0, 1.0], Some(&[(1.0, 10.0), (1.0, 20.0)]));
        let w = indicator_weights(IndicatorKind::Bm, &h).unwrap();
        assert!(close(w[0], 2.0 / 3.0, 1e-15) && close(w[1], 1.0 / 3.0, 1e-15));
        // Zero production takes the maximum observed intensity.
        let h = hist(&[1.0, 1.0, 1.0], Some(&[(1.0, 10.0), (1.0, 20.0), (0.0, 0.0)]));
        let w = indicator_weights(IndicatorKind::Bm, &h).unwrap();
        assert!(close(w[2], w[0], 1e-15));
    }

    #[test]
    fn indicators_fall_back_to_size() {
        let sizes = [1.0, 3.0];
        let expect = vec![0.25, 0.75];
        for kind in IndicatorKind::ALL {
            assert_eq!(indicator_weights(kind, &hist(&sizes, None)).unwrap(), expect);
        }
        let idle = hist(&sizes, Some(&[(0.0, 0.0), (0.0, 0.0)]));
        assert_eq!(indicator_weights(IndicatorKind::Gf, &idle).unwrap(), expect);
        assert_eq!(indicator_weights(IndicatorKind::Bm, &idle).unwrap(), expect);
        assert_eq!(
            indicator_weights(IndicatorKind::Si, &hist(&[], None)),
            Err(PolicyError::EmptyHistory)
        );
    }

    #[test]
    fn policy_names_parse() {
        for spec in GovPolicySpec::all_baselines() {
            assert_eq!(spec.to_string().parse::<GovPolicySpec>().unwrap(), spec);
        }
        let convex_gf = GovPolicySpec::Baseline(ScheduleKind::Convex, IndicatorKind::Gf);
        for name in ["convex×gf", "CONVEXxGF", "convex_gf", "convex/gf", "convexgf"] {
            assert_eq!(name.parse::<GovPolicySpec>().unwrap(), convex_gf, "{name}");
        }
        assert_eq!("random".parse::<GovPolicySpec>().unwrap(), GovPolicySpec::Random);
        let err = "steep-si".parse::<GovPolicySpec>().unwrap_err().to_string();
        assert!(err.contains("flat-si") && err.contains("convex-bm"), "{err}");
        assert_eq!("Mixed".parse::<EntPolicySpec>().unwrap(), EntPolicySpec::Mixed);
        assert!("genius".parse::<EntPolicySpec>().is_err());
    }
}
