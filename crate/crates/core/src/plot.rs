//! Plot output: columnar data files plus an optional SVG rendering of a
//! prediction over its map (reference lines, goals, mean paths and
//! confidence ellipses).

use std::fmt::Write as _;

use crate::map::{Bounds, MapDocument, SemanticClass};
use crate::predictor::{confidence_ellipse, ellipse_outline, PredictError, PredictionTree};
use crate::rl_baseline::SampledPrediction;

pub const ELLIPSE_PERCENTILE: f64 = 0.99;

/// One row per branch step: `branch,parent,edge,k,t,x,y,v,theta,cov_xx,cov_xy,cov_yy`.
pub fn tree_csv(tree: &PredictionTree) -> String {
    let mut s = String::from("branch,parent,edge,k,t,x,y,v,theta,cov_xx,cov_xy,cov_yy\n");
    for b in &tree.branches {
        let parent = b.parent.map_or(String::new(), |p| p.0.to_string());
        for (i, belief) in b.beliefs.iter().enumerate() {
            let k = b.spawn_step + i;
            let m = belief.mean;
            let c = belief.cov;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                b.id.0,
                parent,
                b.edge.0,
                k,
                k as f64 * tree.t_s,
                m.x,
                m.y,
                m.v,
                m.theta,
                c[(0, 0)],
                c[(0, 1)],
                c[(1, 1)]
            );
        }
    }
    s
}

/// One row per step: `k,x,y,cov_xx,cov_xy,cov_yy` for a sampled prediction.
pub fn samples_csv(pred: &SampledPrediction) -> String {
    let mut s = String::from("k,x,y,cov_xx,cov_xy,cov_yy\n");
    for (k, (m, c)) in pred.mean.iter().zip(&pred.cov).enumerate() {
        let _ = writeln!(s, "{k},{},{},{},{},{}", m[0], m[1], c[0], c[1], c[3]);
    }
    s
}

struct Frame {
    bounds: Bounds,
    scale: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(bounds: Bounds, width: f64) -> Self {
        let scale = width / (bounds.max_x - bounds.min_x).max(1e-9);
        let height = (bounds.max_y - bounds.min_y) * scale;
        Self {
            bounds,
            scale,
            width,
            height,
        }
    }

    fn pt(&self, p: [f64; 2]) -> (f64, f64) {
        (
            (p[0] - self.bounds.min_x) * self.scale,
            (self.bounds.max_y - p[1]) * self.scale,
        )
    }

    fn polyline(&self, points: impl IntoIterator<Item = [f64; 2]>) -> String {
        points
            .into_iter()
            .map(|p| {
                let (x, y) = self.pt(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn class_fill(class: SemanticClass) -> &'static str {
    match class {
        SemanticClass::Road => "#d9d9d9",
        SemanticClass::Sidewalk => "#f2ead3",
        SemanticClass::Crosswalk => "#ffffff",
        SemanticClass::Obstacle => "#8fbf8f",
    }
}

/// SVG of the map with the prediction tree: blue mean paths, red
/// 99 % ellipses every `ellipse_every` steps, purple reference lines and
/// red goal points. `samples`, if given, is drawn as an orange mean path.
pub fn render_svg(
    doc: &MapDocument,
    tree: Option<&PredictionTree>,
    samples: Option<&SampledPrediction>,
    ellipse_every: usize,
) -> Result<String, PredictError> {
    let frame = Frame::new(doc.bounding_box(), 800.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
        frame.width, frame.height, frame.width, frame.height
    );
    let background = doc.background.unwrap_or(SemanticClass::Road);
    let _ = writeln!(
        s,
        r#"<rect width="100%" height="100%" fill="{}"/>"#,
        class_fill(background)
    );
    let mut regions: Vec<_> = doc.regions.iter().collect();
    regions.sort_by_key(|r| r.class.priority());
    for r in regions {
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}"/>"#,
            frame.polyline(r.polygon.iter().copied()),
            class_fill(r.class)
        );
    }
    let pos = |id: u32| doc.nodes.iter().find(|n| n.id == id).map(|n| [n.x, n.y]);
    for e in &doc.edges {
        if let (Some(a), Some(b)) = (pos(e.from), pos(e.to)) {
            let _ = writeln!(
                s,
                r##"<polyline points="{}" stroke="#7b3fa0" stroke-width="1.5" fill="none"/>"##,
                frame.polyline([a, b])
            );
        }
    }
    for g in &doc.goals {
        let (x, y) = frame.pt([g.x, g.y]);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="red"/>"#);
    }
    if let Some(tree) = tree {
        let every = ellipse_every.max(1);
        for b in &tree.branches {
            for (i, belief) in b.beliefs.iter().enumerate() {
                let k = b.spawn_step + i;
                if k % every != 0 || (i == 0 && b.parent.is_some()) {
                    continue;
                }
                let e = confidence_ellipse(&belief.position_cov(), ELLIPSE_PERCENTILE)?;
                if e.semi_major <= 0.0 {
                    continue;
                }
                let outline = ellipse_outline(belief.mean.position(), &e, 48);
                let _ = writeln!(
                    s,
                    r#"<polygon points="{}" stroke="red" stroke-width="0.8" fill="none"/>"#,
                    frame.polyline(outline)
                );
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" stroke="blue" stroke-width="2" fill="none"/>"#,
                frame.polyline(b.beliefs.iter().map(|x| x.mean.position()))
            );
        }
    }
    if let Some(p) = samples {
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="orange" stroke-width="2" fill="none"/>"#,
            frame.polyline(p.mean.iter().copied())
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
