//! Per-agent observations and their flat numeric layout.
//!
//! Enterprises see a square window around themselves, their own attributes,
//! the average emission level and the public market. The government sees
//! everything.

use serde::{Deserialize, Serialize};

use crate::enterprise::{EnterpriseState, Skills};
use crate::grid::{EnterpriseId, Grid, Pos};

/// Channels of the enterprise local map, in storage order.
pub const MAP_CHANNELS: [&str; 8] = [
    "self",
    "other_agent",
    "own_property",
    "other_property",
    "open_project",
    "complete_project",
    "pollution",
    "off_map",
];

pub mod channel {
    pub const SELF: usize = 0;
    pub const OTHER_AGENT: usize = 1;
    pub const OWN_PROPERTY: usize = 2;
    pub const OTHER_PROPERTY: usize = 3;
    pub const OPEN_PROJECT: usize = 4;
    pub const COMPLETE_PROJECT: usize = 5;
    pub const POLLUTION: usize = 6;
    pub const OFF_MAP: usize = 7;
}

/// Square window stored row-major as `[row][col][channel]`; row `r` is
/// offset `dy = r - radius`, column `c` is offset `dx = c - radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMap {
    pub radius: usize,
    pub data: Vec<f64>,
}

impl LocalMap {
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.size(), self.size(), MAP_CHANNELS.len()]
    }

    /// Channel values at offset `(dx, dy)` from the observer.
    pub fn at(&self, dx: isize, dy: isize) -> &[f64] {
        let r = self.radius as isize;
        debug_assert!(dx.abs() <= r && dy.abs() <= r);
        let row = (dy + r) as usize;
        let col = (dx + r) as usize;
        let c = MAP_CHANNELS.len();
        let start = (row * self.size() + col) * c;
        &self.data[start..start + c]
    }

    pub fn build(grid: &Grid, me: EnterpriseId, radius: usize) -> Self {
        use crate::grid::CellContent;
        let size = 2 * radius + 1;
        let c = MAP_CHANNELS.len();
        let mut data = vec![0.0; size * size * c];
        let centre = grid.position(me).expect("observer on grid");
        let r = radius as isize;
        for row in 0..size {
            for col in 0..size {
                let base = (row * size + col) * c;
                let x = centre.x as isize + col as isize - r;
                let y = centre.y as isize + row as isize - r;
                let Some(cell) = grid.get(x, y) else {
                    data[base + channel::OFF_MAP] = 1.0;
                    continue;
                };
                let pos = Pos::new(x as usize, y as usize);
                match grid.agent_at(pos) {
                    Some(a) if a == me => data[base + channel::SELF] = 1.0,
                    Some(_) => data[base + channel::OTHER_AGENT] = 1.0,
                    None => {}
                }
                match cell.content {
                    CellContent::Empty => {}
                    CellContent::Property { owner } if owner == me => data[base + channel::OWN_PROPERTY] = 1.0,
                    CellContent::Property { .. } => data[base + channel::OTHER_PROPERTY] = 1.0,
                    CellContent::Project { complete: false } => data[base + channel::OPEN_PROJECT] = 1.0,
                    CellContent::Project { complete: true } => data[base + channel::COMPLETE_PROJECT] = 1.0,
                }
                data[base + channel::POLLUTION] = cell.pollution;
            }
        }
        Self { radius, data }
    }
}

/// The observer's own private attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnAttributes {
    pub size: f64,
    pub research: f64,
    pub coins: f64,
    pub credits: f64,
    pub escrow_coins: f64,
    pub escrow_credits: f64,
    pub emission_level: f64,
    pub labor: f64,
    pub invest_count: f64,
    pub excess_record: f64,
    pub period_grant: f64,
    pub period_excess: f64,
}

impl OwnAttributes {
    pub const FIELDS: usize = 12;

    pub fn of(s: &EnterpriseState) -> Self {
        Self {
            size: s.skills.size,
            research: s.skills.research,
            coins: s.coins,
            credits: s.credits,
            escrow_coins: s.escrow_coins,
            escrow_credits: s.escrow_credits,
            emission_level: s.emission_level,
            labor: s.labor,
            invest_count: s.invest_count,
            excess_record: s.excess_record,
            period_grant: s.period_grant,
            period_excess: s.period_excess,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.size,
            self.research,
            self.coins,
            self.credits,
            self.escrow_coins,
            self.escrow_credits,
            self.emission_level,
            self.labor,
            self.invest_count,
            self.excess_record,
            self.period_grant,
            self.period_excess,
        ]
    }
}

/// Public market state plus the observer's own open orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketView {
    /// `[mean price, volume]` per recent period, current first.
    pub price_summary: Vec<f64>,
    pub bid_depth: Vec<u32>,
    pub ask_depth: Vec<u32>,
    pub own_bids: Vec<u32>,
    pub own_asks: Vec<u32>,
}

impl MarketView {
    /// Most recent non-empty period mean price, if any trade happened in the
    /// window.
    pub fn recent_price(&self) -> Option<f64> {
        self.price_summary.chunks(2).find(|c| c[1] > 0.0).map(|c| c[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterpriseObservation {
    pub id: EnterpriseId,
    pub t: usize,
    pub period: usize,
    pub step_in_period: usize,
    pub steps_per_period: usize,
    pub position: Pos,
    pub local_map: LocalMap,
    pub own_properties: Vec<Pos>,
    pub own: OwnAttributes,
    pub avg_emission_level: f64,
    pub punishment: f64,
    pub market: MarketView,
    pub action_mask: Vec<bool>,
}

impl EnterpriseObservation {
    pub fn steps_left_in_period(&self) -> usize {
        self.steps_per_period - self.step_in_period - 1
    }

    /// Flat feature vector: scalars about time and the agent itself first,
    /// then the market view.
    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::feature_len(
            self.market.bid_depth.len(),
            self.market.price_summary.len() / 2,
        ));
        v.push(self.t as f64);
        v.push(self.period as f64);
        v.push(self.step_in_period as f64 / self.steps_per_period as f64);
        v.push(self.position.x as f64);
        v.push(self.position.y as f64);
        v.extend(self.own.to_vec());
        v.push(self.avg_emission_level);
        v.push(self.punishment);
        v.push(self.own_properties.len() as f64);
        v.extend(&self.market.price_summary);
        for d in [
            &self.market.bid_depth,
            &self.market.ask_depth,
            &self.market.own_bids,
            &self.market.own_asks,
        ] {
            v.extend(d.iter().map(|&x| x as f64));
        }
        v
    }

    pub fn feature_len(price_levels: usize, history_periods: usize) -> usize {
        5 + OwnAttributes::FIELDS + 3 + 2 * history_periods + 4 * price_levels
    }
}

/// Everything about one enterprise, as seen by the government.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterpriseView {
    pub id: EnterpriseId,
    pub skills: Skills,
    pub position: Pos,
    pub attributes: OwnAttributes,
    pub last_period_emissions: f64,
    pub last_period_income: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernmentObservation {
    pub t: usize,
    /// Zero-based index of the period about to be allocated.
    pub period: usize,
    pub n_periods: usize,
    pub grid: Grid,
    pub enterprises: Vec<EnterpriseView>,
    pub price_summary: Vec<f64>,
    pub bid_depth: Vec<u32>,
    pub ask_depth: Vec<u32>,
    pub remaining_budget: f64,
    pub total_budget: f64,
    pub punishment: f64,
    pub n_projects_complete: usize,
}

impl GovernmentObservation {
    /// Flat features: global quantities first, then one block per
    /// enterprise.
    pub fn features(&self) -> Vec<f64> {
        let mut v = vec![
            self.t as f64,
            self.period as f64,
            self.n_periods as f64,
            self.remaining_budget,
            self.total_budget,
            self.punishment,
            self.n_projects_complete as f64,
        ];
        v.extend(&self.price_summary);
        v.extend(self.bid_depth.iter().map(|&x| x as f64));
        v.extend(self.ask_depth.iter().map(|&x| x as f64));
        for e in &self.enterprises {
            v.push(e.position.x as f64);
            v.push(e.position.y as f64);
            v.extend(e.attributes.to_vec());
            v.push(e.last_period_emissions);
            v.push(e.last_period_income);
        }
        v
    }

    pub fn feature_len(n_enterprises: usize, price_levels: usize, history_periods: usize) -> usize {
        7 + 2 * history_periods + 2 * price_levels + n_enterprises * (2 + OwnAttributes::FIELDS + 2)
    }

    /// Full-grid tensor `[height][width][channel]` using the enterprise map
    /// channels, with `self` marking every agent and `own_property` unused.
    pub fn grid_tensor(&self) -> Vec<f64> {
        use crate::grid::CellContent;
        let c = MAP_CHANNELS.len();
        let (w, h) = (self.grid.width(), self.grid.height());
        let mut data = vec![0.0; w * h * c];
        for y in 0..h {
            for x in 0..w {
                let base = (y * w + x) * c;
                let cell = self.grid.cell(Pos::new(x, y));
                match cell.content {
                    CellContent::Empty => {}
                    CellContent::Property { .. } => data[base + channel::OTHER_PROPERTY] = 1.0,
                    CellContent::Project { complete: false } => data[base + channel::OPEN_PROJECT] = 1.0,
                    CellContent::Project { complete: true } => data[base + channel::COMPLETE_PROJECT] = 1.0,
                }
                data[base + channel::POLLUTION] = cell.pollution;
            }
        }
        for p in self.grid.agent_positions() {
            data[(p.y * w + p.x) * c + channel::SELF] = 1.0;
        }
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_map_marks_edges_and_neighbours() {
        let mut g = Grid::new(5, 5);
        let me = g.add_agent(Pos::new(0, 0)).unwrap();
        let _other = g.add_agent(Pos::new(1, 0)).unwrap();
        let m = LocalMap::build(&g, me, 1);
        assert_eq!(m.shape(), [3, 3, 8]);
        assert_eq!(m.at(0, 0)[channel::SELF], 1.0);
        assert_eq!(m.at(1, 0)[channel::OTHER_AGENT], 1.0);
        assert_eq!(m.at(-1, 0)[channel::OFF_MAP], 1.0);
        assert_eq!(m.at(0, -1)[channel::OFF_MAP], 1.0);
        assert_eq!(m.at(0, 1)[channel::OFF_MAP], 0.0);
    }

    #[test]
    fn recent_price_skips_empty_periods() {
        let v = MarketView {
            price_summary: vec![0.0, 0.0, 4.5, 2.0, 3.0, 1.0],
            bid_depth: vec![],
            ask_depth: vec![],
            own_bids: vec![],
            own_asks: vec![],
        };
        assert_eq!(v.recent_price(), Some(4.5));
    }
}
