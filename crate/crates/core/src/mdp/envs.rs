//! Benchmark environments.

use super::FiniteMdp;
use crate::dist::{FiniteDistribution, ValueDistributionTable};

pub const GRID_WIDTH: usize = 12;
pub const GRID_HEIGHT: usize = 8;
/// Northward push applied in each column.
pub const WIND: [usize; GRID_WIDTH] = [0, 0, 0, 1, 1, 1, 0, 1, 2, 2, 1, 0];
pub const WALL_COLUMN: usize = 6;
pub const DOOR_ROW: usize = 4;
pub const START_CELL: (usize, usize) = (0, 0);
pub const GOAL_CELL: (usize, usize) = (9, 5);
pub const RANDOM_MOVE_PROB: f64 = 0.1;
pub const GRIDWORLD_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::North,
        GridAction::East,
        GridAction::South,
        GridAction::West,
    ];

    fn delta(self) -> (isize, isize) {
        match self {
            GridAction::North => (0, 1),
            GridAction::East => (1, 0),
            GridAction::South => (0, -1),
            GridAction::West => (-1, 0),
        }
    }
}

/// Two-room windy gridworld. Cells are `(column, row)` with row 0 at the
/// south edge; wind pushes north.
#[derive(Debug, Clone)]
pub struct Gridworld {
    pub mdp: FiniteMdp,
    pub start: usize,
    pub goal: usize,
    cells: Vec<(usize, usize)>,
}

impl Gridworld {
    pub fn cell(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state_of(&self, cell: (usize, usize)) -> Option<usize> {
        self.cells.iter().position(|&c| c == cell)
    }
}

fn is_wall((c, r): (usize, usize)) -> bool {
    c == WALL_COLUMN && r != DOOR_ROW
}

/// One cell in direction `delta`, or stay put when blocked by the grid edge
/// or the dividing wall.
fn step((c, r): (usize, usize), (dc, dr): (isize, isize)) -> (usize, usize) {
    let nc = c as isize + dc;
    let nr = r as isize + dr;
    if nc < 0 || nr < 0 || nc >= GRID_WIDTH as isize || nr >= GRID_HEIGHT as isize {
        return (c, r);
    }
    let next = (nc as usize, nr as usize);
    if is_wall(next) {
        (c, r)
    } else {
        next
    }
}

pub fn build_windy_gridworld() -> Gridworld {
    let cells: Vec<(usize, usize)> = (0..GRID_HEIGHT)
        .flat_map(|r| (0..GRID_WIDTH).map(move |c| (c, r)))
        .filter(|&cell| !is_wall(cell))
        .collect();
    let index = |cell: (usize, usize)| cells.iter().position(|&c| c == cell).unwrap();
    let start = index(START_CELL);
    let goal = index(GOAL_CELL);
    let mut terminal = vec![false; cells.len()];
    terminal[goal] = true;

    let random_each = RANDOM_MOVE_PROB / GridAction::ALL.len() as f64;
    let mut transitions = Vec::new();
    for (x, &cell) in cells.iter().enumerate() {
        if x == goal {
            continue;
        }
        for action in GridAction::ALL {
            let mut moved = step(cell, action.delta());
            for _ in 0..WIND[cell.0] {
                moved = step(moved, (0, 1));
            }
            let mut outcomes = vec![(moved, 1.0 - RANDOM_MOVE_PROB)];
            for dir in GridAction::ALL {
                outcomes.push((step(cell, dir.delta()), random_each));
            }
            for (next_cell, p) in outcomes {
                let next = index(next_cell);
                let reward = if next == goal { 1.0 } else { 0.0 };
                transitions.push((x, action as usize, next, p, reward));
            }
        }
    }
    let mdp = FiniteMdp::new(cells.len(), 4, GRIDWORLD_GAMMA, terminal, transitions)
        .expect("gridworld construction is valid");
    Gridworld {
        mdp,
        start,
        goal,
        cells,
    }
}

/// Deterministic corridor `0 - 1 - ... - (n-1)`; action 0 moves left, action
/// 1 moves right, and entering the terminal right end pays 1.
pub fn build_chain(n_states: usize, gamma: f64) -> FiniteMdp {
    assert!(n_states >= 2, "chain needs at least two states");
    let goal = n_states - 1;
    let mut terminal = vec![false; n_states];
    terminal[goal] = true;
    let reward = |next: usize| if next == goal { 1.0 } else { 0.0 };
    let mut transitions = Vec::new();
    for x in 0..goal {
        let left = x.saturating_sub(1);
        let right = x + 1;
        transitions.push((x, 0, left, 1.0, reward(left)));
        transitions.push((x, 1, right, 1.0, reward(right)));
    }
    FiniteMdp::new(n_states, 2, gamma, terminal, transitions).expect("chain construction is valid")
}

/// A single non-terminal state looping on itself with a fixed reward.
pub fn build_self_loop(reward: f64, gamma: f64) -> FiniteMdp {
    FiniteMdp::new(1, 1, gamma, vec![false], [(0, 0, 0, 1.0, reward)])
        .expect("self-loop construction is valid")
}

/// Three-state MDP on which the projected distributional backup expands
/// every `p`-Wasserstein metric with finite `p`.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub mdp: FiniteMdp,
    pub z: ValueDistributionTable,
    pub y: ValueDistributionTable,
}

pub fn build_counterexample_mdp() -> Counterexample {
    // State 0 is the initial state x; 1 and 2 are the terminals x1 and x2.
    let mdp = FiniteMdp::new(
        3,
        1,
        1.0,
        vec![false, true, true],
        [(0, 0, 1, 2.0 / 3.0, 0.0), (0, 0, 2, 1.0 / 3.0, 0.0)],
    )
    .expect("counterexample construction is valid");
    let half = |a: f64, b: f64| FiniteDistribution::uniform(&[a, b]).unwrap();
    let z = ValueDistributionTable::new(
        3,
        1,
        vec![FiniteDistribution::dirac(0.0), half(0.0, 2.0), half(3.0, 5.0)],
    )
    .unwrap();
    let y = ValueDistributionTable::new(
        3,
        1,
        vec![FiniteDistribution::dirac(0.0), half(1.0, 2.0), half(4.0, 5.0)],
    )
    .unwrap();
    Counterexample { mdp, z, y }
}
