//! Built-in map documents.

use crate::map::{
    Bounds, EdgeKind, EdgeSpec, GoalSpec, MapDocument, NodeSpec, RegionSpec, SemanticClass,
    MAP_FORMAT_VERSION,
};

/// Geometry of a symmetric four-way intersection: two perpendicular roads
/// centered on the axes, a sidewalk strip along each road side, and a
/// crosswalk on each of the four legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionLayout {
    pub road_half_width: f64,
    pub sidewalk_width: f64,
    /// Arms run from the corners out to this coordinate.
    pub extent: f64,
    pub v_ref: f64,
    pub switch_distance: f64,
}

impl Default for IntersectionLayout {
    fn default() -> Self {
        Self {
            road_half_width: 2.5,
            sidewalk_width: 2.0,
            extent: 20.0,
            v_ref: 1.0,
            switch_distance: 0.5,
        }
    }
}

impl IntersectionLayout {
    /// Offset of the sidewalk center lines from the road axes.
    pub fn corner(&self) -> f64 {
        self.road_half_width + self.sidewalk_width / 2.0
    }
}

/// Goal used for the single-goal comparison scenario.
pub const EAST_NORTH_GOAL: [f64; 2] = [10.0, 3.5];

/// Start state of the intersection scenario: south-west sidewalk, walking north.
pub const INTERSECTION_START: [f64; 4] = [-3.5, -10.0, 1.0, std::f64::consts::FRAC_PI_2];

/// Four-way intersection map with nodes at the four corners and eight arm
/// ends. Every walkway is a pair of opposite directed edges. Goals sit at
/// the arm ends plus [`EAST_NORTH_GOAL`].
pub fn four_way_intersection(layout: &IntersectionLayout) -> MapDocument {
    let c = layout.corner();
    let e = layout.extent;
    let h = layout.road_half_width;
    let w = layout.sidewalk_width;
    let corners = [(-c, -c), (c, -c), (c, c), (-c, c)];
    // Two arm ends per corner: along y first, then along x.
    let arm_ends = [
        (-c, -e),
        (-e, -c),
        (c, -e),
        (e, -c),
        (c, e),
        (e, c),
        (-c, e),
        (-e, c),
    ];
    let mut nodes: Vec<NodeSpec> = corners
        .iter()
        .chain(arm_ends.iter())
        .enumerate()
        .map(|(id, &(x, y))| NodeSpec { id: id as u32, x, y })
        .collect();
    nodes.sort_by_key(|n| n.id);

    let mut edges = Vec::new();
    let mut link = |a: u32, b: u32, kind: EdgeKind| {
        for (from, to) in [(a, b), (b, a)] {
            edges.push(EdgeSpec {
                id: edges.len() as u32,
                from,
                to,
                kind,
                v_ref: layout.v_ref,
                d: Some(layout.switch_distance),
                width: Some(w),
            });
        }
    };
    for corner in 0..4u32 {
        link(4 + 2 * corner, corner, EdgeKind::Sidewalk);
        link(corner, 5 + 2 * corner, EdgeKind::Sidewalk);
    }
    for corner in 0..4u32 {
        link(corner, (corner + 1) % 4, EdgeKind::Crosswalk);
    }

    let rect = |class, x0: f64, y0: f64, x1: f64, y1: f64| RegionSpec {
        class,
        polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
    };
    let outer = e + 1.0;
    let mut regions = vec![
        rect(SemanticClass::Road, -h, -outer, h, outer),
        rect(SemanticClass::Road, -outer, -h, outer, h),
    ];
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        // Strip along the vertical road, then along the horizontal road.
        let (xa, xb) = ordered(sx * h, sx * (h + w));
        let (ya, yb) = ordered(sy * h, sy * outer);
        regions.push(rect(SemanticClass::Sidewalk, xa, ya, xb, yb));
        let (xa, xb) = ordered(sx * h, sx * outer);
        let (ya, yb) = ordered(sy * h, sy * (h + w));
        regions.push(rect(SemanticClass::Sidewalk, xa, ya, xb, yb));
    }
    for s in [-1.0, 1.0] {
        let (a, b) = ordered(s * h, s * (h + w));
        regions.push(rect(SemanticClass::Crosswalk, -h, a, h, b));
        regions.push(rect(SemanticClass::Crosswalk, a, -h, b, h));
    }

    let mut goals: Vec<GoalSpec> = arm_ends
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| GoalSpec { id: id as u32, x, y })
        .collect();
    goals.push(GoalSpec {
        id: goals.len() as u32,
        x: EAST_NORTH_GOAL[0],
        y: EAST_NORTH_GOAL[1],
    });

    MapDocument {
        format: MAP_FORMAT_VERSION,
        nodes,
        edges,
        goals,
        regions,
        background: Some(SemanticClass::Obstacle),
        bounds: Some(Bounds {
            min_x: -outer,
            min_y: -outer,
            max_x: outer,
            max_y: outer,
        }),
    }
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Single straight sidewalk from `(0, 0)` to `(length, 0)`.
pub fn straight_corridor(length: f64, v_ref: f64) -> MapDocument {
    MapDocument {
        format: MAP_FORMAT_VERSION,
        nodes: vec![
            NodeSpec { id: 0, x: 0.0, y: 0.0 },
            NodeSpec { id: 1, x: length, y: 0.0 },
        ],
        edges: vec![EdgeSpec {
            id: 0,
            from: 0,
            to: 1,
            kind: EdgeKind::Sidewalk,
            v_ref,
            d: None,
            width: None,
        }],
        goals: vec![GoalSpec { id: 0, x: length, y: 0.0 }],
        regions: vec![],
        background: None,
        bounds: None,
    }
}
