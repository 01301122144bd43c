use nalgebra::{Matrix2, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::StateTrack;
use super::EvalError;
use crate::dynamics::PedestrianState;
use crate::predictor::{BranchId, PredictionTree, Predictor};
use crate::rl_baseline::{Pace, RlModel};

/// One prediction request inside the evaluation loop.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub state: PedestrianState,
    pub horizon: usize,
    /// Measured positions from the start step on (index 0 is the start);
    /// used only to pick among predicted modes.
    pub future: &'a [[f64; 2]],
    /// Last measured position of the trajectory.
    pub destination: [f64; 2],
}

/// Single-mode position prediction for steps `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedPath {
    pub mean: Vec<[f64; 2]>,
    pub cov: Vec<Matrix2<f64>>,
}

pub trait PositionPredictor: Sync {
    fn name(&self) -> &str;
    fn predict_path(&self, query: &Query<'_>) -> Result<PredictedPath, EvalError>;
}

/// Leaf whose stitched mean path is closest (sum of squared distances over
/// the overlap with `measured`) to the measurement; ties go to the lowest id.
pub fn prune_to_measured(tree: &PredictionTree, measured: &[[f64; 2]]) -> BranchId {
    let mut best: Option<(BranchId, f64)> = None;
    let mut leaves: Vec<BranchId> = tree.leaves().map(|b| b.id).collect();
    leaves.sort();
    for id in leaves {
        let cost: f64 = tree
            .path(id)
            .iter()
            .zip(measured)
            .map(|(b, m)| (b.mean.x - m[0]).powi(2) + (b.mean.y - m[1]).powi(2))
            .sum();
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((id, cost));
        }
    }
    best.map(|(id, _)| id)
        .or_else(|| tree.branches.first().map(|b| b.id))
        .expect("prediction trees are never empty")
}

/// The road-graph predictor, reduced to the branch matching the measurement.
pub struct LqrPathPredictor<'a> {
    pub predictor: &'a Predictor,
    pub initial_cov: Matrix4<f64>,
}

impl PositionPredictor for LqrPathPredictor<'_> {
    fn name(&self) -> &str {
        "lqr"
    }

    fn predict_path(&self, query: &Query<'_>) -> Result<PredictedPath, EvalError> {
        let tree = self
            .predictor
            .predict_horizon(&query.state, &self.initial_cov, query.horizon)?;
        let path = tree.path(prune_to_measured(&tree, query.future));
        Ok(PredictedPath {
            mean: path.iter().map(|b| b.mean.position()).collect(),
            cov: path.iter().map(|b| b.position_cov()).collect(),
        })
    }
}

/// Sampling baseline toward the goal nearest the trajectory's destination.
pub struct RlPathPredictor<'a> {
    pub model: &'a RlModel,
    pub alpha: f64,
    pub samples: usize,
    pub t_s: f64,
    pub seed: u64,
}

impl PositionPredictor for RlPathPredictor<'_> {
    fn name(&self) -> &str {
        "rl"
    }

    fn predict_path(&self, query: &Query<'_>) -> Result<PredictedPath, EvalError> {
        let goal = self
            .model
            .nearest_goal(query.destination)
            .ok_or(EvalError::NoGoals)?;
        let pace = Pace::Speed {
            speed: query.state.v,
            t_s: self.t_s,
        };
        let s = self.model.sample(
            goal,
            query.state.position(),
            self.alpha,
            query.horizon,
            self.samples,
            pace,
            self.seed,
        )?;
        Ok(PredictedPath {
            mean: s.mean,
            cov: s.cov.iter().map(|c| Matrix2::new(c[0], c[1], c[2], c[3])).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Start every `stride`-th step.
    pub stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

/// Signed errors for one horizon, in (trajectory, start step) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonErrors {
    pub tau: usize,
    /// `(trajectory index, start step)` of each entry.
    pub index: Vec<(usize, usize)>,
    /// Measured minus predicted.
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    /// Predicted position covariance at the horizon.
    pub pred_cov: Vec<Matrix2<f64>>,
    pub mean_x: f64,
    pub mean_y: f64,
    /// `sqrt(mean_x^2 + mean_y^2)`.
    pub mean: f64,
    /// Root mean squared distance error (not a signed mean).
    pub rms: f64,
}

impl HorizonErrors {
    pub fn count(&self) -> usize {
        self.ex.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub method: String,
    /// Resampled length of each trajectory.
    pub lengths: Vec<usize>,
    pub horizons: Vec<HorizonErrors>,
}

impl ErrorTable {
    pub fn horizon(&self, tau: usize) -> Option<&HorizonErrors> {
        self.horizons.iter().find(|h| h.tau == tau)
    }
}

fn left_sum(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(0.0, |a, x| a + x)
}

/// Signed prediction errors `measured - predicted` for every trajectory,
/// start step `t` (with `t + tau` inside the track) and horizon `tau`, and
/// their averages over all `sum_i (T_i - tau)` pairs.
///
/// Each start runs one prediction to the largest horizon that fits; the
/// branch is chosen against all measured positions in that window.
pub fn prediction_errors(
    tracks: &[StateTrack],
    predictor: &dyn PositionPredictor,
    taus: &[usize],
    options: EvalOptions,
) -> Result<ErrorTable, EvalError> {
    let mut taus: Vec<usize> = taus.to_vec();
    taus.sort_unstable();
    taus.dedup();
    let stride = options.stride.max(1);

    struct Entry {
        traj: usize,
        t: usize,
        path: PredictedPath,
    }
    let per_track: Vec<Vec<Entry>> = tracks
        .par_iter()
        .enumerate()
        .map(|(i, track)| {
            let n = track.len();
            let mut out = Vec::new();
            for t in (0..n).step_by(stride) {
                let Some(&horizon) = taus.iter().rev().find(|&&tau| tau >= 1 && t + tau < n) else {
                    continue;
                };
                let query = Query {
                    state: track.states[t],
                    horizon,
                    future: &track.positions[t..=t + horizon],
                    destination: *track.positions.last().unwrap(),
                };
                out.push(Entry {
                    traj: i,
                    t,
                    path: predictor.predict_path(&query)?,
                });
            }
            Ok(out)
        })
        .collect::<Result<_, EvalError>>()?;

    let mut horizons = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let mut h = HorizonErrors {
            tau,
            index: Vec::new(),
            ex: Vec::new(),
            ey: Vec::new(),
            pred_cov: Vec::new(),
            mean_x: f64::NAN,
            mean_y: f64::NAN,
            mean: f64::NAN,
            rms: f64::NAN,
        };
        for e in per_track.iter().flatten() {
            let track = &tracks[e.traj];
            if e.t + tau >= track.len() {
                continue;
            }
            let measured = track.positions[e.t + tau];
            let predicted = e.path.mean[tau];
            h.index.push((e.traj, e.t));
            h.ex.push(measured[0] - predicted[0]);
            h.ey.push(measured[1] - predicted[1]);
            h.pred_cov.push(e.path.cov[tau]);
        }
        if h.count() == 0 {
            return Err(EvalError::NoValidWindows { tau });
        }
        let n = h.count() as f64;
        h.mean_x = left_sum(h.ex.iter().copied()) / n;
        h.mean_y = left_sum(h.ey.iter().copied()) / n;
        h.mean = (h.mean_x * h.mean_x + h.mean_y * h.mean_y).sqrt();
        h.rms = (left_sum(h.ex.iter().zip(&h.ey).map(|(x, y)| x * x + y * y)) / n).sqrt();
        horizons.push(h);
    }
    Ok(ErrorTable {
        method: predictor.name().to_string(),
        lengths: tracks.iter().map(StateTrack::len).collect(),
        horizons,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub tau: usize,
    pub count: usize,
    /// Pooled sample covariance of `(E_x, E_y)` (divisor `n - 1`).
    pub p_meas: Matrix2<f64>,
    /// Mean Frobenius norm of `P_meas - P_i`.
    pub delta_f: f64,
    /// Mean of `det(P_meas) - det(P_i)`; positive when predictions are too small.
    pub delta_lambda: f64,
    pub det_meas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub method: String,
    pub rows: Vec<CovarianceRow>,
}

impl CovarianceReport {
    pub fn row(&self, tau: usize) -> Option<&CovarianceRow> {
        self.rows.iter().find(|r| r.tau == tau)
    }
}

pub fn covariance_metrics(table: &ErrorTable) -> Result<CovarianceReport, EvalError> {
    let mut rows = Vec::with_capacity(table.horizons.len());
    for h in &table.horizons {
        let n = h.count();
        if n < 2 {
            return Err(EvalError::InsufficientSamples { tau: h.tau, count: n });
        }
        let nf = n as f64;
        let mx = left_sum(h.ex.iter().copied()) / nf;
        let my = left_sum(h.ey.iter().copied()) / nf;
        let sxx = left_sum(h.ex.iter().map(|x| (x - mx) * (x - mx))) / (nf - 1.0);
        let syy = left_sum(h.ey.iter().map(|y| (y - my) * (y - my))) / (nf - 1.0);
        let sxy = left_sum(h.ex.iter().zip(&h.ey).map(|(x, y)| (x - mx) * (y - my))) / (nf - 1.0);
        let p_meas = Matrix2::new(sxx, sxy, sxy, syy);
        let det_meas = p_meas.determinant();
        let delta_f = left_sum(h.pred_cov.iter().map(|p| (p_meas - p).norm())) / nf;
        let delta_lambda = left_sum(h.pred_cov.iter().map(|p| det_meas - p.determinant())) / nf;
        rows.push(CovarianceRow {
            tau: h.tau,
            count: n,
            p_meas,
            delta_f,
            delta_lambda,
            det_meas,
        });
    }
    Ok(CovarianceReport {
        method: table.method.clone(),
        rows,
    })
}
