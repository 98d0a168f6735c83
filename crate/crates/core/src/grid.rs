//! The two-dimensional world the enterprises move and build in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// Index of an enterprise agent (`0..n_enterprises`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnterpriseId(pub u32);

impl EnterpriseId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for EnterpriseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::South, Direction::East, Direction::West];

    /// `(dx, dy)`; north increases `y`.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (0, 1),
            Direction::South => (0, -1),
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CellContent {
    Empty,
    Property { owner: EnterpriseId },
    Project { complete: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub content: CellContent,
    /// `0` is clean, `1` fully polluted.
    pub pollution: f64,
}

impl Cell {
    const EMPTY: Cell = Cell {
        content: CellContent::Empty,
        pollution: 0.0,
    };

    pub fn is_empty(&self) -> bool {
        matches!(self.content, CellContent::Empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveResult {
    Moved(Pos),
    Blocked,
    /// Target holds an unfinished project. The mover stays put; the engine
    /// decides whether construction happens.
    EnteredProject(Pos),
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("unknown agent {0}")]
    UnknownAgent(EnterpriseId),
    #[error("position ({}, {}) is off the map", .0.x, .0.y)]
    OffMap(Pos),
    #[error("cell ({}, {}) is not empty", .0.x, .0.y)]
    CellNotEmpty(Pos),
    #[error("agent {agent} is not standing on ({}, {})", .pos.x, .pos.y)]
    NotAtPosition { agent: EnterpriseId, pos: Pos },
    #[error("cell ({}, {}) already holds an agent", .0.x, .0.y)]
    Occupied(Pos),
    #[error("no empty cell left")]
    NoEmptyCell,
    #[error("grid too small: {cells} cells for {agents} agents")]
    TooSmall { cells: usize, agents: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    agent_positions: Vec<Pos>,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![Cell::EMPTY; width * height],
            agent_positions: Vec::new(),
        }
    }

    /// Places `n` agents on distinct uniformly random cells.
    pub fn with_random_agents(width: usize, height: usize, n: usize, rng: &mut RngStream) -> Result<Self, GridError> {
        let cells = width * height;
        if n > cells {
            return Err(GridError::TooSmall { cells, agents: n });
        }
        let mut grid = Self::new(width, height);
        // Partial Fisher-Yates over cell indices.
        let mut order: Vec<usize> = (0..cells).collect();
        for i in 0..n {
            let j = i + rng.index(cells - i);
            order.swap(i, j);
            grid.agent_positions.push(grid.pos_of(order[i]));
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn agent_positions(&self) -> &[Pos] {
        &self.agent_positions
    }

    pub fn n_agents(&self) -> usize {
        self.agent_positions.len()
    }

    /// Adds an agent at `pos` and returns its id.
    pub fn add_agent(&mut self, pos: Pos) -> Result<EnterpriseId, GridError> {
        if !self.in_bounds(pos) {
            return Err(GridError::OffMap(pos));
        }
        if self.agent_at(pos).is_some() {
            return Err(GridError::Occupied(pos));
        }
        if matches!(self.cell(pos).content, CellContent::Project { .. }) {
            return Err(GridError::CellNotEmpty(pos));
        }
        self.agent_positions.push(pos);
        Ok(EnterpriseId((self.agent_positions.len() - 1) as u32))
    }

    pub fn in_bounds(&self, pos: Pos) -> bool {
        pos.x < self.width && pos.y < self.height
    }

    fn idx(&self, pos: Pos) -> usize {
        pos.y * self.width + pos.x
    }

    fn pos_of(&self, idx: usize) -> Pos {
        Pos::new(idx % self.width, idx / self.width)
    }

    /// Panics when `pos` is off the map.
    pub fn cell(&self, pos: Pos) -> &Cell {
        &self.cells[self.idx(pos)]
    }

    fn cell_mut(&mut self, pos: Pos) -> &mut Cell {
        let i = self.idx(pos);
        &mut self.cells[i]
    }

    pub fn get(&self, x: isize, y: isize) -> Option<&Cell> {
        if x < 0 || y < 0 {
            return None;
        }
        let pos = Pos::new(x as usize, y as usize);
        self.in_bounds(pos).then(|| self.cell(pos))
    }

    pub fn position(&self, agent: EnterpriseId) -> Result<Pos, GridError> {
        self.agent_positions
            .get(agent.index())
            .copied()
            .ok_or(GridError::UnknownAgent(agent))
    }

    pub fn agent_at(&self, pos: Pos) -> Option<EnterpriseId> {
        self.agent_positions
            .iter()
            .position(|&p| p == pos)
            .map(|i| EnterpriseId(i as u32))
    }

    pub fn neighbor(&self, pos: Pos, dir: Direction) -> Option<Pos> {
        let (dx, dy) = dir.delta();
        let x = pos.x as isize + dx;
        let y = pos.y as isize + dy;
        if x < 0 || y < 0 {
            return None;
        }
        let p = Pos::new(x as usize, y as usize);
        self.in_bounds(p).then_some(p)
    }

    /// Outcome of a move without applying it.
    pub fn peek_move(&self, agent: EnterpriseId, dir: Direction) -> Result<MoveResult, GridError> {
        let from = self.position(agent)?;
        let Some(to) = self.neighbor(from, dir) else {
            return Ok(MoveResult::Blocked);
        };
        if self.agent_at(to).is_some() {
            return Ok(MoveResult::Blocked);
        }
        Ok(match self.cell(to).content {
            CellContent::Empty => MoveResult::Moved(to),
            CellContent::Property { .. } => MoveResult::Blocked,
            CellContent::Project { complete: false } => MoveResult::EnteredProject(to),
            CellContent::Project { complete: true } => MoveResult::Blocked,
        })
    }

    pub fn try_move(&mut self, agent: EnterpriseId, dir: Direction) -> Result<MoveResult, GridError> {
        let result = self.peek_move(agent, dir)?;
        if let MoveResult::Moved(to) = result {
            self.agent_positions[agent.index()] = to;
        }
        Ok(result)
    }

    pub fn place_property(&mut self, pos: Pos, owner: EnterpriseId) -> Result<(), GridError> {
        let at = self.position(owner)?;
        if at != pos {
            return Err(GridError::NotAtPosition { agent: owner, pos });
        }
        if !self.cell(pos).is_empty() {
            return Err(GridError::CellNotEmpty(pos));
        }
        self.cell_mut(pos).content = CellContent::Property { owner };
        Ok(())
    }

    /// Each empty cell within Chebyshev distance `radius` of `center`
    /// independently gains `increment` pollution (capped at 1) with
    /// probability `prob`. Cells are visited in row-major order with one draw
    /// each. Returns the cells that changed.
    pub fn apply_pollution(
        &mut self,
        center: Pos,
        radius: usize,
        increment: f64,
        prob: f64,
        rng: &mut RngStream,
    ) -> Vec<Pos> {
        let mut polluted = Vec::new();
        let y0 = center.y.saturating_sub(radius);
        let y1 = (center.y + radius).min(self.height - 1);
        let x0 = center.x.saturating_sub(radius);
        let x1 = (center.x + radius).min(self.width - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let pos = Pos::new(x, y);
                if !self.cell(pos).is_empty() {
                    continue;
                }
                if rng.bernoulli(prob) {
                    let cell = self.cell_mut(pos);
                    let next = (cell.pollution + increment).min(1.0);
                    if next != cell.pollution {
                        cell.pollution = next;
                        polluted.push(pos);
                    }
                }
            }
        }
        polluted
    }

    /// Clears pollution from empty cells within `radius` of `center`.
    pub fn purify(&mut self, center: Pos, radius: usize) -> Vec<Pos> {
        let mut cleaned = Vec::new();
        let y0 = center.y.saturating_sub(radius);
        let y1 = (center.y + radius).min(self.height - 1);
        let x0 = center.x.saturating_sub(radius);
        let x1 = (center.x + radius).min(self.width - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let pos = Pos::new(x, y);
                let cell = self.cell_mut(pos);
                if cell.is_empty() && cell.pollution > 0.0 {
                    cell.pollution = 0.0;
                    cleaned.push(pos);
                }
            }
        }
        cleaned
    }

    /// Coin multiplier for producing at `pos`: `1 - pollution * discount`.
    pub fn production_multiplier(&self, pos: Pos, discount: f64) -> f64 {
        1.0 - self.cell(pos).pollution * discount
    }

    /// Places a fresh project on a uniformly chosen empty cell that no agent
    /// stands on.
    pub fn place_project(&mut self, rng: &mut RngStream) -> Result<Pos, GridError> {
        let free: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cells[i].is_empty() && !self.agent_positions.contains(&self.pos_of(i)))
            .collect();
        if free.is_empty() {
            return Err(GridError::NoEmptyCell);
        }
        let i = free[rng.index(free.len())];
        self.cells[i].content = CellContent::Project { complete: false };
        Ok(self.pos_of(i))
    }

    /// Marks the project at `pos` complete. Returns `false` if there was no
    /// unfinished project there.
    pub fn complete_project(&mut self, pos: Pos) -> bool {
        let cell = self.cell_mut(pos);
        if cell.content == (CellContent::Project { complete: false }) {
            cell.content = CellContent::Project { complete: true };
            true
        } else {
            false
        }
    }

    pub fn count_properties(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.content, CellContent::Property { .. }))
            .count()
    }

    pub fn count_projects(&self) -> (usize, usize) {
        let mut total = 0;
        let mut complete = 0;
        for c in &self.cells {
            if let CellContent::Project { complete: done } = c.content {
                total += 1;
                complete += done as usize;
            }
        }
        (total, complete)
    }

    pub fn properties_of(&self, owner: EnterpriseId) -> Vec<Pos> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.content == CellContent::Property { owner })
            .map(|(i, _)| self.pos_of(i))
            .collect()
    }

    /// Run-length encoded cells in row-major order.
    pub fn to_rle(&self) -> Vec<CellRun> {
        let mut runs: Vec<CellRun> = Vec::new();
        for c in &self.cells {
            match runs.last_mut() {
                Some(r) if r.cell == *c => r.len += 1,
                _ => runs.push(CellRun { cell: *c, len: 1 }),
            }
        }
        runs
    }

    /// Checks the occupancy invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.cells.len() != self.width * self.height {
            return Err("cell count mismatch".into());
        }
        for (i, &p) in self.agent_positions.iter().enumerate() {
            if !self.in_bounds(p) {
                return Err(format!("agent {i} off map"));
            }
            if self.agent_positions[..i].contains(&p) {
                return Err(format!("agent {i} shares a cell"));
            }
            match self.cell(p).content {
                CellContent::Property { owner } if owner.index() != i => {
                    return Err(format!("agent {i} stands on another agent's property"));
                }
                CellContent::Project { .. } => {
                    return Err(format!("agent {i} stands on a project"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub cell: Cell,
    pub len: usize,
}
