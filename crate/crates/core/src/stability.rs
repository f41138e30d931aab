//! External stability by counting: `|E| + r ≥ d·|V|`, with every support
//! fixed in all directions.

use crate::error::{Error, Result};
use crate::model::{Bar, FunctionalSpec, JointKind, Point, Truss};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StabilityCheck {
    pub stable: bool,
    /// Bars missing from the count; 0 when stable.
    pub deficit: usize,
}

/// The counting condition on raw numbers.
pub fn counting_condition(bars: usize, reactions: usize, joints: usize, dim: usize) -> StabilityCheck {
    let need = dim * joints;
    let have = bars + reactions;
    StabilityCheck { stable: have >= need, deficit: need.saturating_sub(have) }
}

pub fn check_external_stability(truss: &Truss) -> StabilityCheck {
    counting_condition(truss.bars.len(), truss.dim * truss.num_supports(), truss.joints.len(), truss.dim)
}

fn crosses_2d(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let orient = |a: &Point, b: &Point, c: &Point| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let d1 = orient(p1, p2, q1);
    let d2 = orient(p1, p2, q2);
    let d3 = orient(q1, q2, p1);
    let d4 = orient(q1, q2, p2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Adds the shortest admissible missing bars until the count is met. New bars
/// get area and minimum area `a_min` and no force. Candidates never join two
/// supports, never pass through a third joint, stay inside the design region
/// and, in 2D, never cross an existing bar.
pub fn stabilize(truss: &Truss, spec: &FunctionalSpec, a_min: f64) -> Result<Truss> {
    let check = check_external_stability(truss);
    let mut out = truss.clone();
    if check.stable {
        return Ok(out);
    }
    let pts: Vec<Point> = truss.joints.iter().map(|j| j.position).collect();
    let scale = truss.mean_bar_length().max(1e-300);
    let mut candidates = Vec::new();
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let both_supports =
                truss.joints[a].kind == JointKind::Support && truss.joints[b].kind == JointKind::Support;
            if both_supports || truss.find_bar(a, b).is_some() {
                continue;
            }
            if !spec.region.segment_admissible(&pts[a], &pts[b], truss.dim) {
                continue;
            }
            let e = pts[b] - pts[a];
            let through = pts.iter().enumerate().any(|(c, p)| {
                if c == a || c == b {
                    return false;
                }
                let t = (p - pts[a]).dot(&e) / e.norm_squared();
                t > 0.0 && t < 1.0 && (pts[a] + e * t - p).norm() <= 1e-9 * scale
            });
            if !through {
                candidates.push(((pts[b] - pts[a]).norm(), a, b));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut missing = check.deficit;
    for (_, a, b) in candidates {
        if missing == 0 {
            break;
        }
        if truss.dim == 2 {
            let blocked = out.bars.iter().any(|bar| {
                let (c, d) = bar.ends;
                c != a && c != b && d != a && d != b && crosses_2d(&pts[a], &pts[b], &pts[c], &pts[d])
            });
            if blocked {
                continue;
            }
        }
        let mut bar = Bar::new(a, b, truss.load_cases);
        bar.area = a_min;
        bar.min_area = a_min;
        out.bars.push(bar);
        missing -= 1;
    }
    if missing > 0 {
        return Err(Error::NoStabilizingCandidate(missing));
    }
    Ok(out)
}
