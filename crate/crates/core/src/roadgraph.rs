//! Directed graph of walkable strips.
//!
//! Every edge is a straight segment between two nodes with a constant-speed,
//! constant-heading reference along its center line. Curved walkways are
//! represented by chaining edges through intermediate nodes.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::PedestrianState;
use crate::map::{EdgeKind, MapDocument, DEFAULT_SWITCH_DISTANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u32 },
    #[error("edge {edge} references missing node {node}")]
    DanglingEndpoint { edge: EdgeId, node: NodeId },
    #[error("edge {edge} has non-positive reference speed {v_ref}")]
    NonPositiveReferenceSpeed { edge: EdgeId, v_ref: f64 },
    #[error("edge {edge} has invalid switch distance {d} for length {length}")]
    InvalidSwitchDistance { edge: EdgeId, d: f64, length: f64 },
    #[error("edge {0} is degenerate (identical or coincident endpoints)")]
    DegenerateEdge(EdgeId),
    #[error("non-finite coordinate or parameter in {0}")]
    NonFinite(String),
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("arc length {s} outside [0, {length}] on edge {edge}")]
    OutOfRange { edge: EdgeId, s: f64, length: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("graph has no edges")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub position: [f64; 2],
}

/// A straight walkable strip from `from_node` to `to_node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub kind: EdgeKind,
    pub v_ref: f64,
    pub switch_distance: f64,
    pub width: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub length: f64,
    /// Segment heading in (-pi, pi].
    pub heading: f64,
}

impl Edge {
    pub fn direction(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Reference point `s` meters from the start node; `s` may lie outside
    /// the segment (used when coasting past a dead end).
    pub fn reference_unchecked(&self, s: f64) -> ReferenceState {
        let (sin, cos) = self.heading.sin_cos();
        ReferenceState {
            rx: self.start[0] + s * cos,
            ry: self.start[1] + s * sin,
            rv: self.v_ref,
            rtheta: self.heading,
            ru_a: 0.0,
            ru_omega: 0.0,
        }
    }

    /// Signed arc-length coordinate of the orthogonal projection of `p`.
    pub fn progress(&self, p: [f64; 2]) -> f64 {
        let (sin, cos) = self.heading.sin_cos();
        (p[0] - self.start[0]) * cos + (p[1] - self.start[1]) * sin
    }

    /// Signed perpendicular offset, positive to the left of the direction of travel.
    pub fn lateral_offset(&self, p: [f64; 2]) -> f64 {
        let (sin, cos) = self.heading.sin_cos();
        -(p[0] - self.start[0]) * sin + (p[1] - self.start[1]) * cos
    }

    pub fn is_reverse_of(&self, other: &Edge) -> bool {
        self.from_node == other.to_node && self.to_node == other.from_node
    }
}

/// Center-line reference `r = [r^x r^u]` at one point of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceState {
    pub rx: f64,
    pub ry: f64,
    pub rv: f64,
    pub rtheta: f64,
    pub ru_a: f64,
    pub ru_omega: f64,
}

impl ReferenceState {
    pub fn state(&self) -> PedestrianState {
        PedestrianState::new(self.rx, self.ry, self.rv, self.rtheta)
    }
}

/// Nearest-edge query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub edge: EdgeId,
    /// Arc length of the closest point, clamped to the segment.
    pub s: f64,
    /// Signed offset from the center line (left positive).
    pub lateral: f64,
    /// Euclidean distance to the closest point of the segment.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    /// Reject graphs whose undirected skeleton has more than one component.
    pub reject_disconnected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: BTreeMap<NodeId, usize>,
    edge_index: BTreeMap<EdgeId, usize>,
    adjacency: BTreeMap<NodeId, Vec<EdgeId>>,
    warnings: Vec<String>,
}

impl RoadGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Edges sorted by id.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_index.get(&id).map(|&i| &self.edges[i])
    }

    /// Position of `id` in [`RoadGraph::edges`].
    pub fn edge_slot(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    /// Non-fatal findings from construction (e.g. a disconnected skeleton).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Outgoing edge ids of `node`, ascending.
    pub fn outgoing_edges(&self, node: NodeId) -> Result<&[EdgeId], GraphError> {
        self.adjacency
            .get(&node)
            .map(Vec::as_slice)
            .ok_or(GraphError::UnknownNode(node))
    }

    /// Nearest edge to `position`. Ties resolve to the lowest edge id.
    pub fn project(&self, position: [f64; 2]) -> Result<Projection, GraphError> {
        let mut best: Option<Projection> = None;
        for edge in &self.edges {
            let cand = project_onto(edge, position);
            match best {
                Some(b) if cand.distance >= b.distance - tie_tolerance(b.distance) => {}
                _ => best = Some(cand),
            }
        }
        best.ok_or(GraphError::Empty)
    }

    /// All edges whose distance to `position` ties with the minimum.
    pub fn nearest_candidates(&self, position: [f64; 2]) -> Vec<Projection> {
        let all: Vec<Projection> = self.edges.iter().map(|e| project_onto(e, position)).collect();
        let min = all.iter().map(|p| p.distance).fold(f64::INFINITY, f64::min);
        all.into_iter()
            .filter(|p| p.distance <= min + tie_tolerance(min))
            .collect()
    }

    /// Number of connected components of the undirected skeleton.
    pub fn component_count(&self) -> usize {
        let mut neighbors: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for e in &self.edges {
            neighbors.get_mut(&e.from_node).unwrap().push(e.to_node);
            neighbors.get_mut(&e.to_node).unwrap().push(e.from_node);
        }
        let mut seen = HashSet::new();
        let mut components = 0;
        for n in &self.nodes {
            if !seen.insert(n.id) {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([n.id]);
            while let Some(cur) = queue.pop_front() {
                for &next in &neighbors[&cur] {
                    if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
        }
        components
    }
}

fn tie_tolerance(scale: f64) -> f64 {
    1e-12 * (1.0 + scale.abs())
}

fn project_onto(edge: &Edge, p: [f64; 2]) -> Projection {
    let s_raw = edge.progress(p);
    let s = s_raw.clamp(0.0, edge.length);
    let r = edge.reference_unchecked(s);
    let distance = (p[0] - r.rx).hypot(p[1] - r.ry);
    Projection {
        edge: edge.id,
        s,
        lateral: edge.lateral_offset(p),
        distance,
    }
}

pub fn build_graph(doc: &MapDocument) -> Result<RoadGraph, GraphError> {
    build_graph_with(doc, BuildOptions::default())
}

pub fn build_graph_with(doc: &MapDocument, options: BuildOptions) -> Result<RoadGraph, GraphError> {
    let mut node_index = BTreeMap::new();
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for spec in &doc.nodes {
        if !(spec.x.is_finite() && spec.y.is_finite()) {
            return Err(GraphError::NonFinite(format!("node {}", spec.id)));
        }
        let id = NodeId(spec.id);
        if node_index.insert(id, nodes.len()).is_some() {
            return Err(GraphError::DuplicateId { kind: "node", id: spec.id });
        }
        nodes.push(Node {
            id,
            position: [spec.x, spec.y],
        });
    }

    let mut specs: Vec<_> = doc.edges.iter().collect();
    specs.sort_by_key(|e| e.id);
    let mut edges = Vec::with_capacity(specs.len());
    let mut edge_index = BTreeMap::new();
    let mut adjacency: BTreeMap<NodeId, Vec<EdgeId>> =
        nodes.iter().map(|n| (n.id, Vec::new())).collect();

    for spec in specs {
        let id = EdgeId(spec.id);
        if edge_index.contains_key(&id) {
            return Err(GraphError::DuplicateId { kind: "edge", id: spec.id });
        }
        let from = NodeId(spec.from);
        let to = NodeId(spec.to);
        let start = node_index
            .get(&from)
            .map(|&i| nodes[i].position)
            .ok_or(GraphError::DanglingEndpoint { edge: id, node: from })?;
        let end = node_index
            .get(&to)
            .map(|&i| nodes[i].position)
            .ok_or(GraphError::DanglingEndpoint { edge: id, node: to })?;
        if !spec.v_ref.is_finite() {
            return Err(GraphError::NonFinite(format!("edge {} v_ref", spec.id)));
        }
        if spec.v_ref <= 0.0 {
            return Err(GraphError::NonPositiveReferenceSpeed {
                edge: id,
                v_ref: spec.v_ref,
            });
        }
        let length = (end[0] - start[0]).hypot(end[1] - start[1]);
        if from == to || length <= 0.0 {
            return Err(GraphError::DegenerateEdge(id));
        }
        let d = spec.d.unwrap_or(DEFAULT_SWITCH_DISTANCE);
        if !(d.is_finite() && d >= 0.0 && d < length) {
            return Err(GraphError::InvalidSwitchDistance { edge: id, d, length });
        }
        let width = spec.width.unwrap_or(spec.kind.default_width());
        edge_index.insert(id, edges.len());
        adjacency.get_mut(&from).unwrap().push(id);
        edges.push(Edge {
            id,
            from_node: from,
            to_node: to,
            kind: spec.kind,
            v_ref: spec.v_ref,
            switch_distance: d,
            width,
            start,
            end,
            length,
            heading: (end[1] - start[1]).atan2(end[0] - start[0]),
        });
    }

    let mut graph = RoadGraph {
        nodes,
        edges,
        node_index,
        edge_index,
        adjacency,
        warnings: Vec::new(),
    };
    let components = graph.component_count();
    if components > 1 {
        if options.reject_disconnected {
            return Err(GraphError::DisconnectedGraph { components });
        }
        graph
            .warnings
            .push(format!("graph is disconnected ({components} components)"));
    }
    Ok(graph)
}

/// Reference state `s` meters along `edge`.
pub fn reference_state(edge: &Edge, s: f64) -> Result<ReferenceState, GraphError> {
    if !(0.0..=edge.length).contains(&s) {
        return Err(GraphError::OutOfRange {
            edge: edge.id,
            s,
            length: edge.length,
        });
    }
    Ok(edge.reference_unchecked(s))
}

/// Along-track distance from `state` to the final node of `edge`: positive
/// before the node, zero at it, negative past it.
pub fn remaining_distance(state: &PedestrianState, edge: &Edge) -> f64 {
    let (sin, cos) = edge.heading.sin_cos();
    (edge.end[0] - state.x) * cos + (edge.end[1] - state.y) * sin
}

pub fn outgoing_edges(graph: &RoadGraph, node: NodeId) -> Result<Vec<EdgeId>, GraphError> {
    graph.outgoing_edges(node).map(<[EdgeId]>::to_vec)
}

pub fn project_to_graph(graph: &RoadGraph, position: [f64; 2]) -> Result<Projection, GraphError> {
    graph.project(position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{EdgeSpec, NodeSpec};
    use std::f64::consts::FRAC_PI_2;

    fn doc(nodes: &[(u32, f64, f64)], edges: &[(u32, u32, u32)]) -> MapDocument {
        MapDocument {
            format: 1,
            nodes: nodes
                .iter()
                .map(|&(id, x, y)| NodeSpec { id, x, y })
                .collect(),
            edges: edges
                .iter()
                .map(|&(id, from, to)| EdgeSpec {
                    id,
                    from,
                    to,
                    kind: EdgeKind::Sidewalk,
                    v_ref: 1.2,
                    d: None,
                    width: None,
                })
                .collect(),
            goals: vec![],
            regions: vec![],
            background: None,
            bounds: None,
        }
    }

    #[test]
    fn single_axis_aligned_edge() {
        let g = build_graph(&doc(&[(0, 0.0, 0.0), (1, 10.0, 0.0)], &[(0, 0, 1)])).unwrap();
        assert_eq!(g.edges().len(), 1);
        let e = &g.edges()[0];
        assert_eq!(e.heading, 0.0);
        assert_eq!(e.length, 10.0);
        assert_eq!(e.switch_distance, DEFAULT_SWITCH_DISTANCE);
    }

    #[test]
    fn validation_errors() {
        let dangling = build_graph(&doc(&[(0, 0.0, 0.0)], &[(0, 0, 7)]));
        assert_eq!(
            dangling.unwrap_err(),
            GraphError::DanglingEndpoint {
                edge: EdgeId(0),
                node: NodeId(7)
            }
        );
        let dup = build_graph(&doc(&[(0, 0.0, 0.0), (0, 1.0, 0.0)], &[]));
        assert!(matches!(dup, Err(GraphError::DuplicateId { kind: "node", .. })));

        let mut d = doc(&[(0, 0.0, 0.0), (1, 1.0, 0.0)], &[(0, 0, 1)]);
        d.edges[0].v_ref = 0.0;
        assert!(matches!(
            build_graph(&d),
            Err(GraphError::NonPositiveReferenceSpeed { .. })
        ));
        d.edges[0].v_ref = 1.0;
        d.edges[0].d = Some(1.0);
        assert!(matches!(
            build_graph(&d),
            Err(GraphError::InvalidSwitchDistance { .. })
        ));
        let same = build_graph(&doc(&[(0, 0.0, 0.0)], &[(0, 0, 0)]));
        assert_eq!(same.unwrap_err(), GraphError::DegenerateEdge(EdgeId(0)));
    }

    #[test]
    fn disconnected_graph_is_a_warning_unless_strict() {
        let d = doc(
            &[(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 5.0, 5.0), (3, 6.0, 5.0)],
            &[(0, 0, 1), (1, 2, 3)],
        );
        let g = build_graph(&d).unwrap();
        assert_eq!(g.warnings().len(), 1);
        let strict = build_graph_with(
            &d,
            BuildOptions {
                reject_disconnected: true,
            },
        );
        assert_eq!(
            strict.unwrap_err(),
            GraphError::DisconnectedGraph { components: 2 }
        );
    }

    #[test]
    fn reference_state_examples() {
        let g = build_graph(&doc(
            &[(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 0.0, 10.0)],
            &[(0, 0, 1), (1, 0, 2)],
        ))
        .unwrap();
        let r = reference_state(g.edge(EdgeId(0)).unwrap(), 4.0).unwrap();
        assert_eq!((r.rx, r.ry, r.rv, r.rtheta, r.ru_a, r.ru_omega), (4.0, 0.0, 1.2, 0.0, 0.0, 0.0));
        let r = reference_state(g.edge(EdgeId(1)).unwrap(), 0.0).unwrap();
        assert_eq!((r.rx, r.ry), (0.0, 0.0));
        assert_eq!(r.rtheta, FRAC_PI_2);
        assert!(matches!(
            reference_state(g.edge(EdgeId(0)).unwrap(), 10.5),
            Err(GraphError::OutOfRange { .. })
        ));
    }

    #[test]
    fn remaining_distance_examples() {
        let g = build_graph(&doc(&[(0, 0.0, 0.0), (1, 10.0, 0.0)], &[(0, 0, 1)])).unwrap();
        let e = &g.edges()[0];
        let at = PedestrianState::new(10.0, 0.0, 1.0, 0.0);
        assert_eq!(remaining_distance(&at, e), 0.0);
        let before = PedestrianState::new(7.0, 0.5, 1.0, 0.0);
        assert_eq!(remaining_distance(&before, e), 3.0);
        let past = PedestrianState::new(11.0, 0.0, 1.0, 0.0);
        assert_eq!(remaining_distance(&past, e), -1.0);
    }

    #[test]
    fn outgoing_edges_ordering_and_dead_ends() {
        let g = build_graph(&doc(
            &[(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 0.0, 10.0)],
            &[(5, 0, 2), (3, 0, 1)],
        ))
        .unwrap();
        assert_eq!(outgoing_edges(&g, NodeId(0)).unwrap(), vec![EdgeId(3), EdgeId(5)]);
        assert!(outgoing_edges(&g, NodeId(1)).unwrap().is_empty());
        assert_eq!(
            outgoing_edges(&g, NodeId(9)).unwrap_err(),
            GraphError::UnknownNode(NodeId(9))
        );
    }

    #[test]
    fn projection_midpoint_and_tie() {
        let g = build_graph(&doc(
            &[(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 0.0, 2.0), (3, 10.0, 2.0)],
            &[(4, 2, 3), (2, 0, 1)],
        ))
        .unwrap();
        let p = project_to_graph(&g, [5.0, 0.0]).unwrap();
        assert_eq!(p.edge, EdgeId(2));
        assert_eq!(p.lateral, 0.0);
        assert_eq!(p.s, 5.0);
        // Equidistant from both parallel edges: lowest id wins.
        let p = project_to_graph(&g, [5.0, 1.0]).unwrap();
        assert_eq!(p.edge, EdgeId(2));
        assert_eq!(p.distance, 1.0);
    }
}
