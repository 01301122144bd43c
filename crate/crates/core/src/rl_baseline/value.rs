use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::grid::{GridGoal, SemanticGrid, NEIGHBOR_OFFSETS};
use super::RlError;
use crate::map::SemanticClass;

/// Initial value of every non-goal cell. Any path to a goal is worth more
/// than this, so sweeps started here increase monotonically.
pub const LOWER_BOUND: f64 = -1e6;

/// Value stored for cells that cannot reach the goal (obstacles included).
pub const UNREACHABLE: f64 = -1e9;

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_VI_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub road: f64,
    pub sidewalk: f64,
    pub crosswalk: f64,
    pub goal: f64,
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            road: -3.0,
            sidewalk: -1.0,
            crosswalk: -1.0,
            goal: 0.0,
            gamma: 0.99,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RlError::InvalidRewards(format!("gamma = {}", self.gamma)));
        }
        if [self.road, self.sidewalk, self.crosswalk].iter().any(|&r| !(r <= 0.0)) {
            return Err(RlError::InvalidRewards("non-goal rewards must be <= 0".into()));
        }
        if !self.goal.is_finite() {
            return Err(RlError::InvalidRewards("goal reward must be finite".into()));
        }
        Ok(())
    }

    /// Reward for entering a cell of `class`; `None` for obstacles.
    pub fn entry_reward(&self, class: SemanticClass) -> Option<f64> {
        match class {
            SemanticClass::Road => Some(self.road),
            SemanticClass::Sidewalk => Some(self.sidewalk),
            SemanticClass::Crosswalk => Some(self.crosswalk),
            SemanticClass::Obstacle => None,
        }
    }

    /// Value of the absorbing goal state.
    pub fn goal_value(&self) -> f64 {
        self.goal / (1.0 - self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub goal: GridGoal,
    pub values: Vec<f64>,
    pub reachable: Vec<bool>,
    pub iterations: usize,
    /// Bellman residual (max-abs over reachable cells) at `values`.
    pub residual: f64,
}

impl ValueFunction {
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn is_reachable(&self, cell: usize) -> bool {
        self.reachable[cell]
    }
}

/// Cells from which `goal` can be reached through passable cells.
pub fn reachable_from(grid: &SemanticGrid, goal: usize) -> Vec<bool> {
    let mut seen = vec![false; grid.len()];
    if !grid.is_passable(goal) {
        return seen;
    }
    seen[goal] = true;
    let mut queue = VecDeque::from([goal]);
    while let Some(cell) = queue.pop_front() {
        for &off in &NEIGHBOR_OFFSETS {
            if let Some(n) = grid.neighbor(cell, off) {
                if !seen[n] && grid.is_passable(n) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    seen
}

struct Backup<'a> {
    grid: &'a SemanticGrid,
    entry: Vec<f64>,
    reachable: &'a [bool],
    gamma: f64,
}

impl Backup<'_> {
    /// `max_a [r(s') + gamma V(s')]` over passable, reachable successors.
    fn best(&self, values: &[f64], cell: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for &off in &NEIGHBOR_OFFSETS {
            if let Some(n) = self.grid.neighbor(cell, off) {
                if self.reachable[n] {
                    let q = self.entry[n] + self.gamma * values[n];
                    if q > best {
                        best = q;
                    }
                }
            }
        }
        best
    }
}

/// Bellman residual `max_s |T V(s) - V(s)|` over reachable cells.
pub fn bellman_residual(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    vf: &ValueFunction,
) -> f64 {
    let backup = Backup {
        grid,
        entry: entry_rewards(grid, rewards),
        reachable: &vf.reachable,
        gamma: rewards.gamma,
    };
    let mut residual = 0.0_f64;
    for cell in 0..grid.len() {
        if !vf.reachable[cell] {
            continue;
        }
        let target = if cell == vf.goal.cell {
            rewards.goal + rewards.gamma * vf.values[cell]
        } else {
            backup.best(&vf.values, cell)
        };
        residual = residual.max((target - vf.values[cell]).abs());
    }
    residual
}

fn entry_rewards(grid: &SemanticGrid, rewards: &RewardConfig) -> Vec<f64> {
    grid.cells
        .iter()
        .map(|&c| rewards.entry_reward(c).unwrap_or(f64::NEG_INFINITY))
        .collect()
}

/// Value iteration toward one goal with deterministic moves to the eight
/// neighbors (the targets of the 24 directions). The goal is absorbing.
///
/// Sweeps update in place, alternating scan direction, starting from
/// [`LOWER_BOUND`]; `on_sweep` sees the values after every sweep.
pub fn value_iteration_with(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    goal: GridGoal,
    tol: f64,
    max_iter: usize,
    mut on_sweep: impl FnMut(&[f64]),
) -> Result<ValueFunction, RlError> {
    rewards.validate()?;
    if goal.cell >= grid.len() || !grid.class(goal.cell).is_pedestrian_area() {
        return Err(RlError::GoalOffWalkable {
            goal: goal.id,
            position: if goal.cell < grid.len() {
                grid.center(goal.cell)
            } else {
                [f64::NAN; 2]
            },
        });
    }
    let reachable = reachable_from(grid, goal.cell);
    let mut values: Vec<f64> = reachable
        .iter()
        .map(|&r| if r { LOWER_BOUND } else { UNREACHABLE })
        .collect();
    values[goal.cell] = rewards.goal_value();
    let backup = Backup {
        grid,
        entry: entry_rewards(grid, rewards),
        reachable: &reachable,
        gamma: rewards.gamma,
    };
    let order: Vec<usize> = (0..grid.len())
        .filter(|&c| reachable[c] && c != goal.cell)
        .collect();

    let mut change = f64::INFINITY;
    for iteration in 1..=max_iter {
        change = 0.0;
        let mut sweep = |cell: usize, values: &mut [f64]| {
            let v = backup.best(values, cell);
            change = change.max((v - values[cell]).abs());
            values[cell] = v;
        };
        if iteration % 2 == 1 {
            order.iter().for_each(|&c| sweep(c, &mut values));
        } else {
            order.iter().rev().for_each(|&c| sweep(c, &mut values));
        }
        on_sweep(&values);
        // A small in-place change does not bound the synchronous residual,
        // so confirm it before stopping.
        if change < tol && residual_of(&backup, rewards, goal.cell, &order, &values) < tol {
            let mut vf = ValueFunction {
                goal,
                values,
                reachable,
                iterations: iteration,
                residual: f64::NAN,
            };
            vf.residual = bellman_residual(grid, rewards, &vf);
            return Ok(vf);
        }
    }
    Err(RlError::NoConvergence {
        iterations: max_iter,
        change,
    })
}

fn residual_of(backup: &Backup<'_>, rewards: &RewardConfig, goal: usize, order: &[usize], values: &[f64]) -> f64 {
    let goal_res = (rewards.goal + rewards.gamma * values[goal] - values[goal]).abs();
    order
        .iter()
        .map(|&c| (backup.best(values, c) - values[c]).abs())
        .fold(goal_res, f64::max)
}

pub fn value_iteration(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    goal: GridGoal,
    tol: f64,
    max_iter: usize,
) -> Result<ValueFunction, RlError> {
    value_iteration_with(grid, rewards, goal, tol, max_iter, |_| {})
}
