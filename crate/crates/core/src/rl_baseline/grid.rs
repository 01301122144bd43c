use serde::{Deserialize, Serialize};

use super::RlError;
use crate::map::{MapDocument, SemanticClass};

pub const DEFAULT_CELL_SIZE: f64 = 0.2;

/// Neighbor offsets `(dcol, drow)` counter-clockwise from east.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

pub const ACTION_COUNT: usize = 24;

/// Neighbor reached by direction `k * 15 deg`: the octant nearest to it.
/// Every neighbor is the target of exactly three directions.
pub const fn action_offset(action: usize) -> (i32, i32) {
    NEIGHBOR_OFFSETS[((action + 1) / 3) % 8]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGoal {
    pub id: u32,
    pub cell: usize,
}

/// Uniform grid of semantic classes. Row 0 is the bottom (min y) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<SemanticClass>,
    pub goals: Vec<GridGoal>,
}

impl SemanticGrid {
    /// Grid from explicit rows (`rows[0]` is the bottom row), origin at zero.
    pub fn from_rows(rows: &[Vec<SemanticClass>], cell_size: f64) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged grid rows");
        Self {
            origin: [0.0, 0.0],
            cell_size,
            width,
            height,
            cells: rows.iter().flatten().copied().collect(),
            goals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn col_row(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn center(&self, cell: usize) -> [f64; 2] {
        let (c, r) = self.col_row(cell);
        [
            self.origin[0] + (c as f64 + 0.5) * self.cell_size,
            self.origin[1] + (r as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<usize> {
        let c = ((p[0] - self.origin[0]) / self.cell_size).floor();
        let r = ((p[1] - self.origin[1]) / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some(self.index(c as usize, r as usize))
    }

    /// Cell reached from `cell` by `offset`, if it lies on the grid.
    pub fn neighbor(&self, cell: usize, offset: (i32, i32)) -> Option<usize> {
        let (c, r) = self.col_row(cell);
        let nc = c as i64 + offset.0 as i64;
        let nr = r as i64 + offset.1 as i64;
        if nc < 0 || nr < 0 || nc >= self.width as i64 || nr >= self.height as i64 {
            return None;
        }
        Some(self.index(nc as usize, nr as usize))
    }

    pub fn class(&self, cell: usize) -> SemanticClass {
        self.cells[cell]
    }

    pub fn is_passable(&self, cell: usize) -> bool {
        self.cells[cell] != SemanticClass::Obstacle
    }

    pub fn goal(&self, id: u32) -> Option<GridGoal> {
        self.goals.iter().copied().find(|g| g.id == id)
    }

    /// Register a goal at `position`; it must fall on a sidewalk or crosswalk cell.
    pub fn add_goal(&mut self, id: u32, position: [f64; 2]) -> Result<GridGoal, RlError> {
        let cell = self
            .cell_of(position)
            .filter(|&c| self.cells[c].is_pedestrian_area())
            .ok_or(RlError::GoalOffWalkable { goal: id, position })?;
        let goal = GridGoal { id, cell };
        self.goals.retain(|g| g.id != id);
        self.goals.push(goal);
        Ok(goal)
    }

    pub fn count(&self, class: SemanticClass) -> usize {
        self.cells.iter().filter(|&&c| c == class).count()
    }
}

fn point_in_polygon(p: [f64; 2], polygon: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Rasterize a map document. Explicit regions take precedence; without
/// them each edge contributes a strip of its width around the center line.
/// A cell takes the highest-priority class covering its center
/// (crosswalk > sidewalk > road > obstacle), else the document background
/// (road when unspecified).
pub fn rasterize(doc: &MapDocument, cell_size: f64) -> Result<SemanticGrid, RlError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(RlError::InvalidCellSize(cell_size));
    }
    let bounds = doc.bounding_box();
    let width = ((bounds.max_x - bounds.min_x) / cell_size).ceil().max(1.0) as usize;
    let height = ((bounds.max_y - bounds.min_y) / cell_size).ceil().max(1.0) as usize;
    let background = doc.background.unwrap_or(SemanticClass::Road);

    struct Strip {
        class: SemanticClass,
        a: [f64; 2],
        b: [f64; 2],
        half_width: f64,
    }
    let strips: Vec<Strip> = if doc.regions.is_empty() {
        let pos = |id: u32| doc.nodes.iter().find(|n| n.id == id).map(|n| [n.x, n.y]);
        doc.edges
            .iter()
            .filter_map(|e| {
                Some(Strip {
                    class: e.kind.into(),
                    a: pos(e.from)?,
                    b: pos(e.to)?,
                    half_width: e.width.unwrap_or(e.kind.default_width()) / 2.0,
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut grid = SemanticGrid {
        origin: [bounds.min_x, bounds.min_y],
        cell_size,
        width,
        height,
        cells: vec![background; width * height],
        goals: Vec::new(),
    };
    for cell in 0..grid.len() {
        let p = grid.center(cell);
        let from_regions = doc
            .regions
            .iter()
            .filter(|r| point_in_polygon(p, &r.polygon))
            .map(|r| r.class);
        let from_strips = strips
            .iter()
            .filter(|s| distance_to_segment(p, s.a, s.b) <= s.half_width)
            .map(|s| s.class);
        if let Some(best) = from_regions.chain(from_strips).max_by_key(|c| c.priority()) {
            grid.cells[cell] = best;
        }
    }
    for goal in &doc.goals {
        grid.add_goal(goal.id, [goal.x, goal.y])?;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Bounds, GoalSpec};
    use crate::scenario::{four_way_intersection, straight_corridor, IntersectionLayout};

    #[test]
    fn each_neighbor_has_three_directions() {
        let mut counts = [0; 8];
        for a in 0..ACTION_COUNT {
            let off = action_offset(a);
            let i = NEIGHBOR_OFFSETS.iter().position(|&o| o == off).unwrap();
            counts[i] += 1;
            // The mapped neighbor is within 22.5 deg of the direction.
            let dir = (a as f64 * 15.0).to_radians();
            let ang = (off.1 as f64).atan2(off.0 as f64);
            let diff = crate::dynamics::wrap_angle(dir - ang);
            assert!(diff.abs() <= 22.5f64.to_radians() + 1e-12);
        }
        assert_eq!(counts, [3; 8]);
    }

    #[test]
    fn sidewalk_strip_is_ten_cells_wide() {
        let mut doc = straight_corridor(10.0, 1.0);
        doc.bounds = Some(Bounds {
            min_x: -2.0,
            min_y: -2.0,
            max_x: 12.0,
            max_y: 2.0,
        });
        let grid = rasterize(&doc, 0.2).unwrap();
        let col = grid.cell_of([5.0, 0.0]).unwrap() % grid.width;
        let band = (0..grid.height)
            .filter(|&r| grid.class(grid.index(col, r)) == SemanticClass::Sidewalk)
            .count();
        assert_eq!(band, 10);
    }

    #[test]
    fn goal_on_road_rejected() {
        let mut doc = straight_corridor(10.0, 1.0);
        doc.goals = vec![GoalSpec { id: 3, x: 5.0, y: 1.9 }];
        doc.bounds = Some(Bounds {
            min_x: -2.0,
            min_y: -2.0,
            max_x: 12.0,
            max_y: 2.0,
        });
        let err = rasterize(&doc, 0.2).unwrap_err();
        assert!(matches!(err, RlError::GoalOffWalkable { goal: 3, .. }));
    }

    #[test]
    fn intersection_crosswalk_connects_sidewalks() {
        let doc = four_way_intersection(&IntersectionLayout::default());
        let grid = rasterize(&doc, 0.2).unwrap();
        assert_eq!(grid.goals.len(), doc.goals.len());
        // Walk along the south crosswalk center line from one sidewalk to the other.
        let mut x = -4.4;
        let mut seen = Vec::new();
        while x <= 4.4 {
            let c = grid.cell_of([x, -3.5]).unwrap();
            if seen.last() != Some(&grid.class(c)) {
                seen.push(grid.class(c));
            }
            x += 0.1;
        }
        assert_eq!(
            seen,
            vec![SemanticClass::Sidewalk, SemanticClass::Crosswalk, SemanticClass::Sidewalk]
        );
        assert_eq!(grid.class(grid.cell_of([0.0, 0.0]).unwrap()), SemanticClass::Road);
        assert_eq!(grid.class(grid.cell_of([10.0, 10.0]).unwrap()), SemanticClass::Obstacle);
    }
}
