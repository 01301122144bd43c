use nalgebra::{Matrix4, Vector4};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::trajectory::{Label, Sample, Trajectory};
use crate::dynamics::{unicycle_rhs, wrap_angle, ControlInput, PedestrianState};
use crate::lqr::tracking_input;
use crate::map::EdgeKind;
use crate::predictor::Predictor;
use crate::roadgraph::{remaining_distance, EdgeId, NodeId, RoadGraph};

/// Sensor frame rate of the recorded data set.
pub const SENSOR_RATE: f64 = 52.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    /// How many of `count` trajectories use at least one crosswalk.
    pub crossing: usize,
    /// Multiplies the predictor's process noise.
    pub noise_scale: f64,
    pub seed: u64,
    pub rate: f64,
    /// Longest route, in edges.
    pub max_route_edges: usize,
    pub reference: ReferenceClock,
}

/// Where a simulated walker's tracking reference sits on its edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceClock {
    /// Advances at the reference speed from the start of the route, like
    /// the time-indexed reference of the LQR cost.
    #[default]
    TimeIndexed,
    /// Projection of the walker's position, as in the predictor.
    Projected,
}

impl SynthConfig {
    /// `count` trajectories split 29 : 17 between crossing and sidewalk-only.
    pub fn with_count(count: usize, seed: u64) -> Self {
        Self {
            count,
            crossing: (count as f64 * 29.0 / 46.0).round() as usize,
            noise_scale: 1.0,
            seed,
            rate: SENSOR_RATE,
            max_route_edges: 5,
            reference: ReferenceClock::TimeIndexed,
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_count(46, 0)
    }
}

/// Nodes whose only neighbor is a single other node: arm ends.
fn dead_ends(graph: &RoadGraph) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = graph
        .nodes()
        .iter()
        .map(|n| n.id)
        .filter(|&id| {
            let out = graph.outgoing_edges(id).unwrap_or(&[]);
            let mut targets: Vec<NodeId> = out.iter().map(|&e| graph.edge(e).unwrap().to_node).collect();
            targets.dedup();
            targets.len() == 1
        })
        .collect();
    if out.is_empty() {
        out = graph.nodes().iter().map(|n| n.id).collect();
    }
    out
}

/// Random walk along the graph from a dead end, uniform at each node,
/// until no forward successor exists. `None` if it grows too long.
fn random_route(predictor: &Predictor, starts: &[NodeId], max_edges: usize, rng: &mut ChaCha8Rng) -> Option<Vec<EdgeId>> {
    let graph = predictor.graph();
    let start = *starts.choose(rng)?;
    let mut edge = *graph.outgoing_edges(start).ok()?.choose(rng)?;
    let mut route = vec![edge];
    loop {
        let current = graph.edge(edge)?;
        let next: Vec<EdgeId> = predictor
            .successors(current)
            .into_iter()
            .filter(|&e| !graph.edge(e).unwrap().is_reverse_of(current))
            .collect();
        let Some(&e) = next.choose(rng) else {
            return Some(route);
        };
        if route.len() == max_edges {
            return None;
        }
        route.push(e);
        edge = e;
    }
}

fn route_label(graph: &RoadGraph, route: &[EdgeId]) -> Label {
    if route.iter().any(|&e| graph.edge(e).unwrap().kind == EdgeKind::Crosswalk) {
        Label::Crossing
    } else {
        Label::Sidewalk
    }
}

fn rk4(x: &PedestrianState, u: &ControlInput, dt: f64) -> PedestrianState {
    let f = |s: &Vector4<f64>| unicycle_rhs(&PedestrianState::from_vector(s), u);
    let x0 = x.to_vector();
    let k1 = f(&x0);
    let k2 = f(&(x0 + k1 * (dt / 2.0)));
    let k3 = f(&(x0 + k2 * (dt / 2.0)));
    let k4 = f(&(x0 + k3 * dt));
    PedestrianState::from_vector(&(x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

/// Walk `route` with the nonlinear unicycle under each edge's LQR tracking
/// law, the reference placed per `clock`. Process noise with covariance `noise * dt / t_s` is added every
/// frame, so one prediction step accumulates `noise`. Switches happen by
/// the predictor's rule; the walk ends at the last edge's switch point.
fn simulate(
    predictor: &Predictor,
    route: &[EdgeId],
    noise: &Matrix4<f64>,
    rate: f64,
    clock: ReferenceClock,
    rng: &mut ChaCha8Rng,
) -> Vec<Sample> {
    let graph = predictor.graph();
    let t_s = predictor.params().t_s;
    let dt = 1.0 / rate;
    let chol = noise
        .cholesky()
        .map(|c| c.l() * (dt / t_s).sqrt())
        .unwrap_or_else(Matrix4::zeros);
    let first = graph.edge(route[0]).unwrap();
    let mut state = PedestrianState {
        x: first.start[0],
        y: first.start[1],
        v: first.v_ref,
        theta: first.heading,
    };
    let length: f64 = route.iter().map(|&e| graph.edge(e).unwrap().length).sum();
    // Generous cap for walkers slowed down by noise.
    let max_frames = ((10.0 * length / first.v_ref + 60.0) * rate) as usize;
    let mut leg = 0;
    // Route arc length of the reference, and of the current edge's start.
    let mut s_ref = 0.0;
    let mut leg_start = 0.0;
    let mut samples = Vec::new();
    for frame in 0..max_frames {
        samples.push(Sample {
            t: frame as f64 * dt,
            x: state.x,
            y: state.y,
        });
        let mut edge = graph.edge(route[leg]).unwrap();
        while remaining_distance(&state, edge) <= edge.switch_distance {
            leg += 1;
            if leg == route.len() {
                return samples;
            }
            leg_start += edge.length;
            edge = graph.edge(route[leg]).unwrap();
        }
        let dynamics = predictor.edge_dynamics(edge.id).unwrap();
        let progress = match clock {
            // Off the ends of the edge the reference continues along its line.
            ReferenceClock::TimeIndexed => s_ref - leg_start,
            ReferenceClock::Projected => edge.progress(state.position()),
        };
        let reference = edge.reference_unchecked(progress);
        s_ref += edge.v_ref * dt;
        let aligned = PedestrianState {
            theta: reference.rtheta + wrap_angle(state.theta - reference.rtheta),
            ..state
        };
        let u = tracking_input(&dynamics.lqr.k, &aligned, &reference);
        let xi = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        state = PedestrianState::from_vector(&(rk4(&aligned, &u, dt).to_vector() + chol * xi));
    }
    samples
}

/// Synthetic pedestrians on the predictor's graph. Routes start at dead
/// ends and pick uniformly among forward successors at every node; the
/// requested crossing/sidewalk split is met by redrawing routes.
/// Deterministic for a given configuration.
pub fn synth_dataset(predictor: &Predictor, config: &SynthConfig) -> Vec<Trajectory> {
    let graph = predictor.graph();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts = dead_ends(graph);
    let noise = predictor.params().w * config.noise_scale;
    let crossing = config.crossing.min(config.count);
    let mut labels: Vec<Label> = (0..config.count)
        .map(|i| if i < crossing { Label::Crossing } else { Label::Sidewalk })
        .collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);

    let has_crosswalk = graph.edges().iter().any(|e| e.kind == EdgeKind::Crosswalk);
    let mut out = Vec::with_capacity(config.count);
    for (i, &want) in labels.iter().enumerate() {
        let mut route = None;
        for _ in 0..10_000 {
            let Some(r) = random_route(predictor, &starts, config.max_route_edges, &mut rng) else {
                continue;
            };
            let label = route_label(graph, &r);
            // Fall back to whatever exists when the graph cannot provide the label.
            if label == want || (want == Label::Crossing && !has_crosswalk) {
                route = Some((r, label));
                break;
            }
        }
        let Some((route, label)) = route else {
            continue;
        };
        out.push(Trajectory {
            id: format!("synth{i:03}"),
            label,
            samples: simulate(predictor, &route, &noise, config.rate, config.reference, &mut rng),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::PredictorParams;
    use crate::roadgraph::build_graph;
    use crate::scenario::{four_way_intersection, IntersectionLayout};

    fn predictor() -> Predictor {
        let g = build_graph(&four_way_intersection(&IntersectionLayout::default())).unwrap();
        Predictor::new(g, PredictorParams::default()).unwrap()
    }

    #[test]
    fn composition_and_determinism() {
        let p = predictor();
        let cfg = SynthConfig::with_count(46, 3);
        let a = synth_dataset(&p, &cfg);
        assert_eq!(a.len(), 46);
        assert_eq!(a.iter().filter(|t| t.label == Label::Crossing).count(), 29);
        assert_eq!(a.iter().filter(|t| t.label == Label::Sidewalk).count(), 17);
        assert_eq!(a, synth_dataset(&p, &cfg));
        for t in &a {
            assert!(t.samples.windows(2).all(|w| w[1].t > w[0].t));
        }
    }

    #[test]
    fn noiseless_walkers_stay_near_route() {
        let p = predictor();
        let cfg = SynthConfig {
            noise_scale: 0.0,
            ..SynthConfig::with_count(10, 5)
        };
        let g = p.graph();
        for traj in synth_dataset(&p, &cfg) {
            let first = &traj.samples[0];
            let start_edge = g.project([first.x, first.y]).unwrap().edge;
            // Time to reach the first switch point at 1 m/s, less a margin.
            let first_leg = g.edge(start_edge).unwrap().length - 1.0;
            for s in &traj.samples {
                let d = g.project([s.x, s.y]).unwrap().distance;
                if s.t < first_leg {
                    // Before the first turn the reference is tracked exactly.
                    assert!(d < 1e-9, "{} off the first edge by {d}", traj.id);
                } else {
                    // The weak tracking gains swing wide after turns.
                    assert!(d < 2.0, "{} off the graph by {d}", traj.id);
                }
            }
        }
    }
}
