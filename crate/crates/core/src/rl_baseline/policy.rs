use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{action_offset, SemanticGrid, ACTION_COUNT};
use super::value::{RewardConfig, ValueFunction};
use super::RlError;

/// One-step backup `r(s') + gamma V(s')` per action, `None` when blocked.
fn action_values(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    vf: &ValueFunction,
    cell: usize,
) -> [Option<(usize, f64)>; ACTION_COUNT] {
    std::array::from_fn(|a| {
        let n = grid.neighbor(cell, action_offset(a))?;
        if !vf.reachable[n] {
            return None;
        }
        let r = rewards.entry_reward(grid.class(n))?;
        Some((n, r + rewards.gamma * vf.values[n]))
    })
}

/// Boltzmann policy over the 24 directions:
/// `pi(a|s) ~ exp(alpha (Q(s,a) - max Q))`, blocked actions get zero.
pub fn softmax_policy(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    vf: &ValueFunction,
    alpha: f64,
    cell: usize,
) -> Result<[f64; ACTION_COUNT], RlError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(RlError::InvalidAlpha(alpha));
    }
    let q = action_values(grid, rewards, vf, cell);
    let q_max = q
        .iter()
        .flatten()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if q_max == f64::NEG_INFINITY {
        return Err(RlError::AllActionsBlocked { cell });
    }
    let mut p = [0.0; ACTION_COUNT];
    for (pa, qa) in p.iter_mut().zip(&q) {
        if let Some((_, v)) = qa {
            *pa = (alpha * (v - q_max)).exp();
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// How far a rollout moves per prediction step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pace {
    /// One action per step.
    PerStep,
    /// Walk at `speed` m/s: each step adds `speed * t_s` meters of travel
    /// budget and actions execute while the budget covers the move length.
    Speed { speed: f64, t_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPrediction {
    /// `samples[i][k]`: position of rollout `i` after `k` steps (`k = 0` is the start).
    pub samples: Vec<Vec<[f64; 2]>>,
    pub mean: Vec<[f64; 2]>,
    /// Row-major 2x2 sample covariance (divisor `n - 1`; zero for `n = 1`).
    pub cov: Vec<[f64; 4]>,
}

impl SampledPrediction {
    pub fn from_samples(samples: Vec<Vec<[f64; 2]>>) -> Self {
        let n = samples.len();
        let steps = samples.first().map_or(0, Vec::len);
        let mut mean = vec![[0.0; 2]; steps];
        let mut cov = vec![[0.0; 4]; steps];
        for k in 0..steps {
            let m = samples.iter().fold([0.0, 0.0], |acc, s| [acc[0] + s[k][0], acc[1] + s[k][1]]);
            let m = [m[0] / n as f64, m[1] / n as f64];
            mean[k] = m;
            if n > 1 {
                let mut c = [0.0; 4];
                for s in &samples {
                    let d = [s[k][0] - m[0], s[k][1] - m[1]];
                    c[0] += d[0] * d[0];
                    c[1] += d[0] * d[1];
                    c[3] += d[1] * d[1];
                }
                let div = (n - 1) as f64;
                cov[k] = [c[0] / div, c[1] / div, c[1] / div, c[3] / div];
            }
        }
        Self { samples, mean, cov }
    }

    pub fn steps(&self) -> usize {
        self.mean.len()
    }
}

fn move_length(grid: &SemanticGrid, action: usize) -> f64 {
    let (dc, dr) = action_offset(action);
    grid.cell_size * ((dc * dc + dr * dr) as f64).sqrt()
}

fn draw(p: &[f64; ACTION_COUNT], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &pa) in p.iter().enumerate() {
        if pa > 0.0 {
            acc += pa;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    vf: &ValueFunction,
    alpha: f64,
    start: usize,
    steps: usize,
    pace: Pace,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[f64; 2]>, RlError> {
    let mut cell = start;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(grid.center(cell));
    let mut budget = 0.0;
    let mut pending: Option<usize> = None;
    for _ in 0..steps {
        match pace {
            Pace::PerStep => {
                if cell != vf.goal.cell {
                    let p = softmax_policy(grid, rewards, vf, alpha, cell)?;
                    cell = grid.neighbor(cell, action_offset(draw(&p, rng))).unwrap();
                }
            }
            Pace::Speed { speed, t_s } => {
                budget += speed * t_s;
                while cell != vf.goal.cell {
                    let a = match pending {
                        Some(a) => a,
                        None => draw(&softmax_policy(grid, rewards, vf, alpha, cell)?, rng),
                    };
                    let len = move_length(grid, a);
                    if budget < len {
                        pending = Some(a);
                        break;
                    }
                    budget -= len;
                    pending = None;
                    cell = grid.neighbor(cell, action_offset(a)).unwrap();
                }
            }
        }
        out.push(grid.center(cell));
    }
    Ok(out)
}

/// `samples` rollouts of `steps` steps from `start` under the softmax policy.
/// Rollout `i` draws from stream `i` of a ChaCha8 generator seeded with
/// `seed`, so results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn sample_prediction(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    vf: &ValueFunction,
    alpha: f64,
    start: usize,
    steps: usize,
    samples: usize,
    pace: Pace,
    seed: u64,
) -> Result<SampledPrediction, RlError> {
    if samples == 0 {
        return Err(RlError::NoSamples);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(RlError::InvalidAlpha(alpha));
    }
    if !vf.reachable[start] {
        return Err(RlError::StartUnreachable {
            position: grid.center(start),
        });
    }
    let run = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        rollout(grid, rewards, vf, alpha, start, steps, pace, &mut rng)
    };
    let paths = if samples * steps >= 4096 {
        (0..samples).into_par_iter().map(run).collect::<Result<Vec<_>, _>>()?
    } else {
        (0..samples).map(run).collect::<Result<Vec<_>, _>>()?
    };
    Ok(SampledPrediction::from_samples(paths))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPath {
    pub cells: Vec<usize>,
    /// Sum of undiscounted entry rewards along the path.
    pub reward: f64,
    pub reached_goal: bool,
}

/// Follow the best one-step backup (lowest action index on ties) until the
/// goal or `max_moves` moves.
pub fn greedy_rollout(
    grid: &SemanticGrid,
    rewards: &RewardConfig,
    vf: &ValueFunction,
    start: usize,
    max_moves: usize,
) -> Result<GreedyPath, RlError> {
    let mut cells = vec![start];
    let mut reward = 0.0;
    let mut cell = start;
    while cell != vf.goal.cell && cells.len() <= max_moves {
        let (next, _) = action_values(grid, rewards, vf, cell)
            .into_iter()
            .flatten()
            .fold(None::<(usize, f64)>, |best, (n, q)| match best {
                Some((_, bq)) if bq >= q => best,
                _ => Some((n, q)),
            })
            .ok_or(RlError::AllActionsBlocked { cell })?;
        reward += rewards.entry_reward(grid.class(next)).unwrap_or(f64::NEG_INFINITY);
        cells.push(next);
        cell = next;
    }
    Ok(GreedyPath {
        cells,
        reward,
        reached_goal: cell == vf.goal.cell,
    })
}

/// Reachable cell whose center is nearest to `p` (lowest index on ties).
pub fn nearest_reachable(grid: &SemanticGrid, vf: &ValueFunction, p: [f64; 2]) -> Option<usize> {
    if let Some(c) = grid.cell_of(p).filter(|&c| vf.reachable[c]) {
        return Some(c);
    }
    (0..grid.len())
        .filter(|&c| vf.reachable[c])
        .map(|c| {
            let q = grid.center(c);
            (c, (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| c)
}
