//! Gaussian belief propagation over the road graph.
//!
//! On each edge the mean follows the LQR closed loop around the edge's
//! center-line reference and the covariance follows the discrete Lyapunov
//! recursion `P+ = A_K P A_K' + W`. When the mean comes within the edge's
//! switch distance of the final node, the branch terminates and a child
//! branch is spawned on every successor edge.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{wrap_angle, DiscreteModel, DynamicsError, PedestrianState};
use crate::lqr::{tracking_input, GainCache, LqrError, LqrSolution, LqrWeights};
use crate::roadgraph::{remaining_distance, Edge, EdgeId, GraphError, ReferenceState, RoadGraph};

pub const PREDICTION_FORMAT_VERSION: u32 = 1;

/// Negative eigenvalues above this magnitude indicate a real defect rather
/// than rounding and are reported by [`GaussianBelief::min_eigenvalue`].
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lqr(#[from] LqrError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid predictor parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("percentile must lie in (0, 1), got {0}")]
    InvalidPercentile(f64),
}

/// Spawning more children would exceed `max_branches`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBudgetExceeded {
    /// Children that fit the budget (lowest edge ids first).
    pub kept: Vec<Branch>,
    pub dropped: usize,
}

/// `0.3 * diag(0.1, 0.1, 0.1, pi/180)`.
pub fn default_process_noise() -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(0.1, 0.1, 0.1, PI / 180.0)) * 0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    /// Per-step process noise covariance.
    pub w: Matrix4<f64>,
    pub horizon: usize,
    pub t_s: f64,
    pub max_branches: usize,
    pub weights: LqrWeights,
    /// Allow spawning onto the reverse of the current edge.
    pub allow_uturn: bool,
    pub lqr_tol: f64,
    pub lqr_max_iter: usize,
}

impl Default for PredictorParams {
    fn default() -> Self {
        Self {
            w: default_process_noise(),
            horizon: 200,
            t_s: 0.1,
            max_branches: 64,
            weights: LqrWeights::scalar(0.02, 1.0),
            allow_uturn: false,
            lqr_tol: crate::lqr::DEFAULT_TOLERANCE,
            lqr_max_iter: crate::lqr::DEFAULT_MAX_ITER,
        }
    }
}

impl PredictorParams {
    pub fn validate(&self) -> Result<(), PredictError> {
        if self.horizon < 1 {
            return Err(PredictError::InvalidParams("horizon must be >= 1".into()));
        }
        if self.max_branches < 1 {
            return Err(PredictError::InvalidParams("max_branches must be >= 1".into()));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(PredictError::InvalidParams(format!("t_s = {}", self.t_s)));
        }
        if (self.w - self.w.transpose()).amax() > 1e-12 * (1.0 + self.w.amax()) {
            return Err(PredictError::InvalidParams("W is not symmetric".into()));
        }
        if !self.w.iter().all(|v| v.is_finite())
            || self.w.symmetric_eigenvalues().min() < -PSD_TOLERANCE
        {
            return Err(PredictError::InvalidParams(
                "W is not positive semidefinite".into(),
            ));
        }
        self.weights.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: PedestrianState,
    /// Central covariance of the state.
    pub cov: Matrix4<f64>,
}

impl GaussianBelief {
    pub fn position_cov(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.symmetric_eigenvalues().min()
    }
}

/// Symmetrize and clamp tiny negative eigenvalues produced by rounding.
fn clamp_psd(cov: Matrix4<f64>) -> Matrix4<f64> {
    let cov = (cov + cov.transpose()) * 0.5;
    if cov.cholesky().is_some() {
        return cov;
    }
    let mut eig = cov.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return cov;
    }
    eig.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
    let rebuilt = eig.recompose();
    (rebuilt + rebuilt.transpose()) * 0.5
}

/// One closed-loop step: `x+ = A x + B u + c` with `u = r_u - K (x - r_x)`,
/// equivalently `x+ = r_{k+1} + A_K (x - r_k)`; `P+ = A_K P A_K' + W`.
pub fn step_belief(
    belief: &GaussianBelief,
    model: &DiscreteModel,
    lqr: &LqrSolution,
    reference: &ReferenceState,
    w: &Matrix4<f64>,
) -> GaussianBelief {
    let u = tracking_input(&lqr.k, &belief.mean, reference);
    let mean = model.step(&belief.mean.to_vector(), &u);
    let cov = lqr.a_k * belief.cov * lqr.a_k.transpose() + w;
    GaussianBelief {
        mean: PedestrianState::from_vector(&mean),
        cov: clamp_psd(cov),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    /// Still propagating (at the end of prediction: a leaf).
    Open,
    /// Terminated by an edge switch; children continue from its last belief.
    Switched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub edge: EdgeId,
    pub parent: Option<BranchId>,
    /// Step index of `beliefs[0]`.
    pub spawn_step: usize,
    pub beliefs: Vec<GaussianBelief>,
    pub status: BranchStatus,
    /// Past a dead end: keeps following the edge heading without switching.
    pub coasting: bool,
}

impl Branch {
    pub fn last_step(&self) -> usize {
        self.spawn_step + self.beliefs.len() - 1
    }

    pub fn belief_at(&self, step: usize) -> Option<&GaussianBelief> {
        step.checked_sub(self.spawn_step)
            .and_then(|i| self.beliefs.get(i))
    }

    pub fn last_belief(&self) -> &GaussianBelief {
        self.beliefs.last().expect("branches always hold at least one belief")
    }
}

#[derive(Debug)]
pub enum StepOutcome {
    Continued,
    Spawned(Vec<Branch>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTree {
    pub branches: Vec<Branch>,
    pub horizon: usize,
    pub t_s: f64,
    pub params: PredictorParams,
    /// Some spawns were dropped to respect `max_branches`.
    pub truncated: bool,
    pub spawned: usize,
    pub pruned: usize,
}

impl PredictionTree {
    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        // Ids are dense and assigned in creation order.
        self.branches
            .get(id.0 as usize)
            .filter(|b| b.id == id)
            .or_else(|| self.branches.iter().find(|b| b.id == id))
    }

    pub fn roots(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.parent.is_none())
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.status == BranchStatus::Open)
    }

    /// Branches from the root down to `id`.
    pub fn lineage(&self, id: BranchId) -> Vec<&Branch> {
        let mut chain = Vec::new();
        let mut cur = self.branch(id);
        while let Some(b) = cur {
            chain.push(b);
            cur = b.parent.and_then(|p| self.branch(p));
        }
        chain.reverse();
        chain
    }

    /// Belief sequence along the lineage of `id`, indexed by step from the
    /// first root step. At a spawn step the child's hand-off belief is used.
    pub fn path(&self, id: BranchId) -> Vec<GaussianBelief> {
        let chain = self.lineage(id);
        let mut out = Vec::new();
        for (i, b) in chain.iter().enumerate() {
            let end = chain
                .get(i + 1)
                .map(|child| child.spawn_step)
                .unwrap_or(b.last_step() + 1);
            for step in b.spawn_step..end {
                out.push(*b.belief_at(step).expect("lineage covers step"));
            }
        }
        out
    }

    pub fn to_document(&self) -> PredictionDocument {
        PredictionDocument::from_tree(self)
    }
}

#[derive(Debug, Clone)]
pub struct EdgeDynamics {
    pub model: DiscreteModel,
    pub lqr: Arc<LqrSolution>,
}

/// Road-graph predictor with per-edge models and gains solved up front.
#[derive(Debug)]
pub struct Predictor {
    graph: Arc<RoadGraph>,
    params: PredictorParams,
    dynamics: Vec<EdgeDynamics>,
    gains: GainCache,
}

impl Predictor {
    pub fn new(graph: impl Into<Arc<RoadGraph>>, params: PredictorParams) -> Result<Self, PredictError> {
        params.validate()?;
        let graph = graph.into();
        let gains = GainCache::new(params.weights, params.t_s, params.lqr_tol, params.lqr_max_iter);
        let mut dynamics = Vec::with_capacity(graph.edges().len());
        for edge in graph.edges() {
            let model = DiscreteModel::for_edge(edge, params.t_s)?;
            let lqr = gains.get_or_solve(edge.heading, edge.v_ref, &model.a, &model.b)?;
            dynamics.push(EdgeDynamics { model, lqr });
        }
        Ok(Self {
            graph,
            params,
            dynamics,
            gains,
        })
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn params(&self) -> &PredictorParams {
        &self.params
    }

    /// Number of distinct gains solved (edges sharing heading and speed share one).
    pub fn distinct_gains(&self) -> usize {
        self.gains.len()
    }

    pub fn edge_dynamics(&self, edge: EdgeId) -> Option<&EdgeDynamics> {
        self.graph.edge_slot(edge).map(|i| &self.dynamics[i])
    }

    fn edge(&self, id: EdgeId) -> &Edge {
        self.graph.edge(id).expect("branch edges come from this graph")
    }

    /// Successor edges at the end of `edge`, ascending by id. The reverse
    /// edge is skipped unless U-turns are allowed or it is the only option.
    pub fn successors(&self, edge: &Edge) -> Vec<EdgeId> {
        let out = self
            .graph
            .outgoing_edges(edge.to_node)
            .expect("edge endpoints exist");
        if self.params.allow_uturn {
            return out.to_vec();
        }
        let forward: Vec<EdgeId> = out
            .iter()
            .copied()
            .filter(|&id| !self.edge(id).is_reverse_of(edge))
            .collect();
        if forward.is_empty() {
            out.to_vec()
        } else {
            forward
        }
    }

    fn handoff(&self, belief: &GaussianBelief, edge: &Edge) -> GaussianBelief {
        GaussianBelief {
            mean: PedestrianState {
                theta: edge.heading,
                ..belief.mean
            },
            cov: belief.cov,
        }
    }

    /// Root branches for a measured state: the nearest edge (preferring the
    /// one best aligned with the heading among equally near edges), with
    /// immediate spawning when the state is already within switch distance.
    pub fn init_branches(
        &self,
        state: &PedestrianState,
        initial_cov: &Matrix4<f64>,
    ) -> Result<Vec<Branch>, PredictError> {
        if !state.is_finite() {
            return Err(PredictError::InvalidState(format!("{state:?}")));
        }
        let candidates = self.graph.nearest_candidates(state.position());
        let best = candidates
            .iter()
            .map(|p| self.edge(p.edge))
            .fold(None::<&Edge>, |best, e| match best {
                Some(b) if (state.theta - e.heading).cos() <= (state.theta - b.heading).cos() + 1e-12 => Some(b),
                _ => Some(e),
            })
            .ok_or(GraphError::Empty)?;
        let mean = PedestrianState {
            theta: best.heading + wrap_angle(state.theta - best.heading),
            ..*state
        };
        let belief = GaussianBelief {
            mean,
            cov: (initial_cov + initial_cov.transpose()) * 0.5,
        };
        let root = |id: u32, edge: &Edge, belief: GaussianBelief, coasting: bool| Branch {
            id: BranchId(id),
            edge: edge.id,
            parent: None,
            spawn_step: 0,
            beliefs: vec![belief],
            status: BranchStatus::Open,
            coasting,
        };
        if remaining_distance(&mean, best) <= best.switch_distance {
            let targets = self.successors(best);
            if targets.is_empty() {
                return Ok(vec![root(0, best, belief, true)]);
            }
            return Ok(targets
                .iter()
                .take(self.params.max_branches)
                .enumerate()
                .map(|(i, &id)| {
                    let e = self.edge(id);
                    root(i as u32, e, self.handoff(&belief, e), false)
                })
                .collect());
        }
        Ok(vec![root(0, best, belief, false)])
    }

    /// Advance `branch` one step. On a switch the branch is closed and its
    /// children are returned with ids starting at `next_id`.
    pub fn step_branch(
        &self,
        branch: &mut Branch,
        next_id: &mut u32,
        budget: usize,
    ) -> Result<StepOutcome, BranchBudgetExceeded> {
        let edge = self.edge(branch.edge);
        let dynamics = &self.dynamics[self.graph.edge_slot(edge.id).expect("known edge")];
        let current = branch.last_belief();
        let reference = edge.reference_unchecked(edge.progress(current.mean.position()));
        let next = step_belief(current, &dynamics.model, &dynamics.lqr, &reference, &self.params.w);
        branch.beliefs.push(next);

        if branch.coasting || remaining_distance(&next.mean, edge) > edge.switch_distance {
            return Ok(StepOutcome::Continued);
        }
        let targets = self.successors(edge);
        if targets.is_empty() {
            branch.coasting = true;
            return Ok(StepOutcome::Continued);
        }
        let spawn_step = branch.last_step();
        let dropped = targets.len().saturating_sub(budget);
        let children: Vec<Branch> = targets
            .iter()
            .take(budget)
            .map(|&id| {
                let e = self.edge(id);
                let child = Branch {
                    id: BranchId(*next_id),
                    edge: id,
                    parent: Some(branch.id),
                    spawn_step,
                    beliefs: vec![self.handoff(&next, e)],
                    status: BranchStatus::Open,
                    coasting: false,
                };
                *next_id += 1;
                child
            })
            .collect();
        if children.is_empty() {
            // Nothing fits: keep the parent alive so the horizon stays covered.
            branch.coasting = true;
        } else {
            branch.status = BranchStatus::Switched;
        }
        if dropped > 0 {
            return Err(BranchBudgetExceeded {
                kept: children,
                dropped,
            });
        }
        Ok(StepOutcome::Spawned(children))
    }

    /// Predict over the configured horizon.
    pub fn predict(
        &self,
        state: &PedestrianState,
        initial_cov: &Matrix4<f64>,
    ) -> Result<PredictionTree, PredictError> {
        self.predict_horizon(state, initial_cov, self.params.horizon)
    }

    pub fn predict_horizon(
        &self,
        state: &PedestrianState,
        initial_cov: &Matrix4<f64>,
        horizon: usize,
    ) -> Result<PredictionTree, PredictError> {
        let mut branches = self.init_branches(state, initial_cov)?;
        let mut next_id = branches.len() as u32;
        let mut truncated = false;
        let mut spawned = 0;
        let mut pruned = 0;
        let mut frontier: Vec<usize> = (0..branches.len()).collect();
        for _ in 0..horizon {
            let mut next_frontier = Vec::with_capacity(frontier.len());
            for &slot in &frontier {
                let budget = self.params.max_branches.saturating_sub(branches.len());
                let outcome = self.step_branch(&mut branches[slot], &mut next_id, budget);
                let children = match outcome {
                    Ok(StepOutcome::Continued) => Vec::new(),
                    Ok(StepOutcome::Spawned(children)) => children,
                    Err(exceeded) => {
                        truncated = true;
                        pruned += exceeded.dropped;
                        exceeded.kept
                    }
                };
                if branches[slot].status == BranchStatus::Open {
                    next_frontier.push(slot);
                }
                spawned += children.len();
                for child in children {
                    next_frontier.push(branches.len());
                    branches.push(child);
                }
            }
            frontier = next_frontier;
        }
        Ok(PredictionTree {
            branches,
            horizon,
            t_s: self.params.t_s,
            params: self.params,
            truncated,
            spawned,
            pruned,
        })
    }
}

/// Build a predictor for `graph` and run it once.
pub fn predict(
    graph: impl Into<Arc<RoadGraph>>,
    state: &PedestrianState,
    initial_cov: &Matrix4<f64>,
    params: &PredictorParams,
) -> Result<PredictionTree, PredictError> {
    Predictor::new(graph, *params)?.predict(state, initial_cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis, in (-pi/2, pi/2].
    pub orientation: f64,
}

/// Chi-square quantile with two degrees of freedom.
pub fn chi2_2dof_quantile(p: f64) -> f64 {
    -2.0 * (1.0 - p).ln()
}

/// Level-set ellipse of a 2x2 position covariance holding `percentile` mass.
pub fn confidence_ellipse(cov: &Matrix2<f64>, percentile: f64) -> Result<Ellipse, PredictError> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(PredictError::InvalidPercentile(percentile));
    }
    let scale = chi2_2dof_quantile(percentile);
    let (a, b, d) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let mid = 0.5 * (a + d);
    let radius = (0.5 * (a - d)).hypot(b);
    let major = (mid + radius).max(0.0);
    let minor = (mid - radius).max(0.0);
    let mut orientation = 0.5 * (2.0 * b).atan2(a - d);
    if orientation <= -PI / 2.0 {
        orientation += PI;
    }
    Ok(Ellipse {
        semi_major: (major * scale).sqrt(),
        semi_minor: (minor * scale).sqrt(),
        orientation,
    })
}

/// Sample points on the boundary of `ellipse` centered at `center`.
pub fn ellipse_outline(center: [f64; 2], ellipse: &Ellipse, points: usize) -> Vec<[f64; 2]> {
    let (s, c) = ellipse.orientation.sin_cos();
    (0..points)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / points as f64;
            let local = Vector2::new(ellipse.semi_major * t.cos(), ellipse.semi_minor * t.sin());
            [
                center[0] + c * local[0] - s * local[1],
                center[1] + s * local[0] + c * local[1],
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// `[x, y, v, theta]`.
    pub mean: [f64; 4],
    /// Full 4x4 covariance, row-major.
    pub cov: [f64; 16],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: u32,
    pub edge: u32,
    pub parent: Option<u32>,
    pub spawn_step: usize,
    pub status: BranchStatus,
    pub steps: Vec<StepRecord>,
}

/// Serialized prediction tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDocument {
    pub format: u32,
    pub t_s: f64,
    pub horizon: usize,
    pub truncated: bool,
    pub branches: Vec<BranchRecord>,
}

impl PredictionDocument {
    pub fn from_tree(tree: &PredictionTree) -> Self {
        let branches = tree
            .branches
            .iter()
            .map(|b| BranchRecord {
                id: b.id.0,
                edge: b.edge.0,
                parent: b.parent.map(|p| p.0),
                spawn_step: b.spawn_step,
                status: b.status,
                steps: b
                    .beliefs
                    .iter()
                    .enumerate()
                    .map(|(i, belief)| {
                        let mut cov = [0.0; 16];
                        for r in 0..4 {
                            for c in 0..4 {
                                cov[r * 4 + c] = belief.cov[(r, c)];
                            }
                        }
                        let m = belief.mean;
                        StepRecord {
                            k: b.spawn_step + i,
                            mean: [m.x, m.y, m.v, m.theta],
                            cov,
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            format: PREDICTION_FORMAT_VERSION,
            t_s: tree.t_s,
            horizon: tree.horizon,
            truncated: tree.truncated,
            branches,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prediction document is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
