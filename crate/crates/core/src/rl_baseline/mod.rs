//! Grid value-iteration baseline: per-goal value functions on a semantic
//! grid, a softmax policy over 24 directions, and Monte-Carlo rollouts.

mod cache;
mod grid;
mod policy;
mod value;

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

pub use cache::{cache_key, ValueCache, CACHE_FORMAT_VERSION};
pub use grid::{
    action_offset, rasterize, GridGoal, SemanticGrid, ACTION_COUNT, DEFAULT_CELL_SIZE,
    NEIGHBOR_OFFSETS,
};
pub use policy::{
    greedy_rollout, nearest_reachable, sample_prediction, softmax_policy, GreedyPath, Pace,
    SampledPrediction,
};
pub use value::{
    bellman_residual, reachable_from, value_iteration, value_iteration_with, RewardConfig,
    ValueFunction, DEFAULT_VI_MAX_ITER, DEFAULT_VI_TOLERANCE, LOWER_BOUND, UNREACHABLE,
};

use crate::map::MapDocument;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("goal {goal} at ({}, {}) is not on a sidewalk or crosswalk cell", position[0], position[1])]
    GoalOffWalkable { goal: u32, position: [f64; 2] },
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("invalid rewards: {0}")]
    InvalidRewards(String),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("value iteration did not converge in {iterations} sweeps (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("every action from cell {cell} is blocked")]
    AllActionsBlocked { cell: usize },
    #[error("unknown goal {0}")]
    UnknownGoal(u32),
    #[error("no cell near ({}, {}) can reach the goal", position[0], position[1])]
    StartUnreachable { position: [f64; 2] },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("cache I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad cache file {path}: {message}")]
    CacheFormat { path: PathBuf, message: String },
}

/// A rasterized map with one solved value function per goal.
#[derive(Debug, Clone)]
pub struct RlModel {
    pub grid: SemanticGrid,
    pub rewards: RewardConfig,
    pub values: Vec<ValueFunction>,
}

impl RlModel {
    /// Rasterize `doc` and solve every goal, goals in parallel.
    pub fn solve(
        doc: &MapDocument,
        cell_size: f64,
        rewards: RewardConfig,
        tol: f64,
    ) -> Result<Self, RlError> {
        let grid = rasterize(doc, cell_size)?;
        Self::solve_grid(grid, rewards, tol)
    }

    pub fn solve_grid(grid: SemanticGrid, rewards: RewardConfig, tol: f64) -> Result<Self, RlError> {
        let values = grid
            .goals
            .par_iter()
            .map(|&g| value_iteration(&grid, &rewards, g, tol, DEFAULT_VI_MAX_ITER))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            grid,
            rewards,
            values,
        })
    }

    /// Like [`RlModel::solve`] but reads and writes solved goals in `cache`.
    pub fn solve_cached(
        doc: &MapDocument,
        cell_size: f64,
        rewards: RewardConfig,
        tol: f64,
        cache: &ValueCache,
    ) -> Result<Self, RlError> {
        let grid = rasterize(doc, cell_size)?;
        let key = cache_key(doc, cell_size, &rewards, tol);
        let values = grid
            .goals
            .par_iter()
            .map(|&g| {
                if let Some(vf) = cache.load(&key, &grid, g)? {
                    return Ok(vf);
                }
                let vf = value_iteration(&grid, &rewards, g, tol, DEFAULT_VI_MAX_ITER)?;
                cache.store(&key, &grid, &vf)?;
                Ok(vf)
            })
            .collect::<Result<Vec<_>, RlError>>()?;
        Ok(Self {
            grid,
            rewards,
            values,
        })
    }

    pub fn value_function(&self, goal: u32) -> Result<&ValueFunction, RlError> {
        self.values
            .iter()
            .find(|v| v.goal.id == goal)
            .ok_or(RlError::UnknownGoal(goal))
    }

    /// Goal whose position is nearest to `p`.
    pub fn nearest_goal(&self, p: [f64; 2]) -> Option<u32> {
        self.values
            .iter()
            .map(|v| {
                let c = self.grid.center(v.goal.cell);
                (v.goal.id, (c[0] - p[0]).hypot(c[1] - p[1]))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn sample(
        &self,
        goal: u32,
        start: [f64; 2],
        alpha: f64,
        steps: usize,
        samples: usize,
        pace: Pace,
        seed: u64,
    ) -> Result<SampledPrediction, RlError> {
        let vf = self.value_function(goal)?;
        let cell = nearest_reachable(&self.grid, vf, start)
            .ok_or(RlError::StartUnreachable { position: start })?;
        sample_prediction(
            &self.grid,
            &self.rewards,
            vf,
            alpha,
            cell,
            steps,
            samples,
            pace,
            seed,
        )
    }
}
