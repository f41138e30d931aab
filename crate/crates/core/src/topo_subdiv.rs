//! Global refinement: split the bars of cells whose forces alternate in sign,
//! placing new joints on Bézier curves that follow the principal stress
//! directions.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{Bar, FunctionalSpec, Joint, Point, Truss};
use crate::topo_local::triangles;

/// Force densities at or below this fraction of the largest magnitude count
/// as zero when reading signs.
const ZERO_FORCE: f64 = 1e-9;

/// Axial tension and compression directions per joint.
#[derive(Clone, Debug, PartialEq)]
pub struct TcField {
    pub tension: Vec<Option<Point>>,
    pub compression: Vec<Option<Point>>,
}

fn sign_threshold(truss: &Truss) -> f64 {
    let wmax = truss.bars.iter().map(|b| b.governing_density().abs()).fold(0.0, f64::max);
    ZERO_FORCE * wmax
}

/// Force sign of bar `i` in its governing case: +1 tension, −1 compression,
/// 0 unloaded.
pub fn force_sign(truss: &Truss, i: usize) -> i8 {
    sign_with(truss.bars[i].governing_density(), sign_threshold(truss))
}

fn sign_with(w: f64, tol: f64) -> i8 {
    if w > tol {
        1
    } else if w < -tol {
        -1
    } else {
        0
    }
}

/// Force-weighted average of incident bar directions, separately per sign.
/// Directions are axial, so each is flipped to agree with the first bar of
/// its sign at that joint.
pub fn compute_tc_field(truss: &Truss) -> TcField {
    let n = truss.joints.len();
    let tol = sign_threshold(truss);
    let mut sums = vec![[Point::zeros(); 2]; n];
    let mut reference: Vec<[Option<Point>; 2]> = vec![[None; 2]; n];
    for (i, bar) in truss.bars.iter().enumerate() {
        let s = sign_with(bar.governing_density(), tol);
        if s == 0 {
            continue;
        }
        let slot = usize::from(s < 0);
        let l = truss.bar_length(i);
        let force = bar.governing_density().abs() * l;
        let e = truss.bar_vector(i) / l;
        for (j, dir) in [(bar.ends.0, e), (bar.ends.1, -e)] {
            let r = *reference[j][slot].get_or_insert(dir);
            let d = if dir.dot(&r) < 0.0 { -dir } else { dir };
            sums[j][slot] += d * force;
        }
    }
    let unit = |v: Point| {
        let n = v.norm();
        (n > 0.0).then(|| v / n)
    };
    TcField {
        tension: sums.iter().map(|s| unit(s[0])).collect(),
        compression: sums.iter().map(|s| unit(s[1])).collect(),
    }
}

/// Midpoint of the cubic Bézier from `pi` to `pj` whose end tangents are the
/// axial directions `vi` and `vj`, with handles a third of the chord long.
pub fn bezier_midpoint(pi: &Point, pj: &Point, vi: &Point, vj: &Point) -> Result<Point> {
    let chord = pj - pi;
    let l = chord.norm();
    if l == 0.0 {
        return Err(Error::ZeroLengthBar(usize::MAX));
    }
    let orient = |v: &Point| if v.dot(&chord) < 0.0 { -v } else { *v };
    let ctrl = [*pi, pi + orient(vi) * (l / 3.0), pj - orient(vj) * (l / 3.0), *pj];
    // de Casteljau at t = 1/2.
    let mut pts = ctrl.to_vec();
    while pts.len() > 1 {
        pts = pts.windows(2).map(|w| (w[0] + w[1]) * 0.5).collect();
    }
    Ok(pts[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Triangle,
    Quad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub kind: CellKind,
    /// Joint indices in cyclic order.
    pub joints: Vec<usize>,
    /// Bar index of the edge from `joints[k]` to `joints[k + 1]`.
    pub bars: Vec<usize>,
    /// Force sign of each edge.
    pub signs: Vec<i8>,
}

/// Best-fit plane of a point set as (centroid, unit normal).
fn best_fit_plane(pts: &[Point]) -> (Point, Point) {
    let c = pts.iter().sum::<Point>() / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    (c, eig.eigenvectors.column(k).into_owned())
}

/// The quad projected into its best-fit plane, or `None` when it deviates
/// from that plane by more than a tenth of its mean edge.
fn planar_quad(pts: &[Point; 4]) -> Option<[(f64, f64); 4]> {
    let (c, n) = best_fit_plane(pts);
    let mean_edge = (0..4).map(|k| (pts[(k + 1) % 4] - pts[k]).norm()).sum::<f64>() / 4.0;
    if pts.iter().any(|p| (p - c).dot(&n).abs() > 0.1 * mean_edge) {
        return None;
    }
    let seed = if n.x.abs() < 0.9 { Point::x() } else { Point::y() };
    let e1 = n.cross(&seed).normalize();
    let e2 = n.cross(&e1);
    Some(pts.map(|p| ((p - c).dot(&e1), (p - c).dot(&e2))))
}

fn cross2(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross2(a, b, c);
    let d2 = cross2(a, b, d);
    let d3 = cross2(c, d, a);
    let d4 = cross2(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn is_simple(q: &[(f64, f64); 4]) -> bool {
    !segments_cross(q[0], q[1], q[2], q[3]) && !segments_cross(q[1], q[2], q[3], q[0])
}

fn is_convex(q: &[(f64, f64); 4]) -> bool {
    let turns: Vec<f64> = (0..4).map(|k| cross2(q[k], q[(k + 1) % 4], q[(k + 2) % 4])).collect();
    turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
}

/// All triangles, and all chordless, nearly planar, simple quadrilaterals.
pub fn extract_cells(truss: &Truss) -> Vec<Cell> {
    let tol = sign_threshold(truss);
    let sign = |i: usize| sign_with(truss.bars[i].governing_density(), tol);
    let mut cells = Vec::new();
    for (v, _) in triangles(truss) {
        let joints = v.to_vec();
        let bars: Vec<usize> = (0..3).map(|k| truss.find_bar(v[k], v[(k + 1) % 3]).expect("triangle edge")).collect();
        let signs = bars.iter().map(|&b| sign(b)).collect();
        cells.push(Cell { kind: CellKind::Triangle, joints, bars, signs });
    }

    let mut adj: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); truss.joints.len()];
    for (i, b) in truss.bars.iter().enumerate() {
        adj[b.ends.0].insert(b.ends.1, i);
        adj[b.ends.1].insert(b.ends.0, i);
    }
    let mut seen = BTreeSet::new();
    for a in 0..truss.joints.len() {
        // `a` is the smallest joint of the cycle and `c` its opposite corner.
        for c in a + 1..truss.joints.len() {
            if adj[a].contains_key(&c) {
                continue;
            }
            let common: Vec<usize> = adj[a].keys().copied().filter(|&x| x > a && adj[c].contains_key(&x)).collect();
            for (i, &b) in common.iter().enumerate() {
                for &d in &common[i + 1..] {
                    if adj[b].contains_key(&d) || !seen.insert((a, b, c, d)) {
                        continue;
                    }
                    let joints = vec![a, b, c, d];
                    let pts = [a, b, c, d].map(|k| truss.joints[k].position);
                    let Some(proj) = planar_quad(&pts) else { continue };
                    if !is_simple(&proj) {
                        continue;
                    }
                    let bars = vec![adj[a][&b], adj[b][&c], adj[c][&d], adj[d][&a]];
                    let signs = bars.iter().map(|&b| sign(b)).collect();
                    cells.push(Cell { kind: CellKind::Quad, joints, bars, signs });
                }
            }
        }
    }
    cells
}

fn is_convex_cell(truss: &Truss, cell: &Cell) -> bool {
    let pts = [0, 1, 2, 3].map(|k| truss.joints[cell.joints[k]].position);
    planar_quad(&pts).is_some_and(|q| is_convex(&q))
}

/// A quad qualifies when opposite edges share a sign and adjacent ones differ.
fn alternating(signs: &[i8]) -> bool {
    signs[0] != 0 && signs[1] != 0 && signs[0] == signs[2] && signs[1] == signs[3] && signs[0] != signs[1]
}

/// The edge of a triangle whose sign differs from the other two.
fn odd_edge(signs: &[i8]) -> Option<usize> {
    if signs.contains(&0) {
        return None;
    }
    (0..3).find(|&k| signs[k] != signs[(k + 1) % 3] && signs[(k + 1) % 3] == signs[(k + 2) % 3])
}

/// Direction at joint `j` perpendicular to its opposite-sign field, pointing
/// along the chord as closely as possible.
fn bar_tangent(field: &Option<Point>, chord: &Point) -> Option<Point> {
    let c = (*field)?;
    let v = chord - c * chord.dot(&c);
    let n = v.norm();
    if n > 1e-12 * chord.norm() {
        Some(v / n)
    } else {
        Some(chord.normalize())
    }
}

fn edge_midpoint(truss: &Truss, spec: &FunctionalSpec, tc: &TcField, i: usize, sign: i8) -> Point {
    let (a, b) = truss.bars[i].ends;
    let (pa, pb) = (truss.joints[a].position, truss.joints[b].position);
    let chord_mid = (pa + pb) * 0.5;
    let field = if sign > 0 { &tc.compression } else { &tc.tension };
    let chord = pb - pa;
    let (Some(va), Some(vb)) = (bar_tangent(&field[a], &chord), bar_tangent(&field[b], &chord)) else {
        return chord_mid;
    };
    match bezier_midpoint(&pa, &pb, &va, &vb) {
        Ok(m) if spec.region.admits(&m, truss.dim) => {
            let ok = spec.region.obstacles.is_empty()
                || (spec.region.segment_admissible(&pa, &m, truss.dim)
                    && spec.region.segment_admissible(&m, &pb, truss.dim));
            if ok {
                m
            } else {
                chord_mid
            }
        }
        _ => chord_mid,
    }
}

/// Splits a bar at joint `m`; both halves keep the parent's area and axial
/// force.
fn split_at(truss: &mut Truss, i: usize, m: usize) {
    let parent = truss.bars[i].clone();
    let len = truss.bar_length(i);
    let (a, b) = parent.ends;
    let mut halves = [parent.clone(), parent];
    halves[0].ends = (a, m);
    halves[1].ends = (m, b);
    for h in &mut halves {
        let l = (truss.joints[h.ends.1].position - truss.joints[h.ends.0].position).norm();
        for w in &mut h.force_densities {
            *w *= len / l;
        }
    }
    let [first, second] = halves;
    truss.bars[i] = first;
    truss.bars.push(second);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SubdivisionStats {
    pub quads: usize,
    pub triangles: usize,
    pub split_bars: usize,
}

/// One level of subdivision. With `curved` false, new edge joints sit on the
/// chord midpoints instead of the Bézier midpoints.
pub fn subdivide_with(truss: &Truss, spec: &FunctionalSpec, curved: bool) -> Result<(Truss, SubdivisionStats)> {
    let tc = compute_tc_field(truss);
    let cells = extract_cells(truss);
    let mut marked: BTreeMap<usize, i8> = BTreeMap::new();
    let mut quads = Vec::new();
    let mut tris = Vec::new();
    for cell in &cells {
        match cell.kind {
            CellKind::Quad if alternating(&cell.signs) && is_convex_cell(truss, cell) => {
                for k in 0..4 {
                    marked.insert(cell.bars[k], cell.signs[k]);
                }
                quads.push(cell);
            }
            CellKind::Triangle => {
                if let Some(k) = odd_edge(&cell.signs) {
                    marked.insert(cell.bars[k], cell.signs[k]);
                    tris.push((cell, k));
                }
            }
            _ => {}
        }
    }
    let stats = SubdivisionStats { quads: quads.len(), triangles: tris.len(), split_bars: marked.len() };
    let mut out = truss.clone();
    if marked.is_empty() {
        return Ok((out, stats));
    }

    let mut mid_joint = BTreeMap::new();
    let mut next_id = truss.next_joint_id();
    for (&i, &s) in &marked {
        let p = if curved {
            edge_midpoint(truss, spec, &tc, i, s)
        } else {
            let (a, b) = truss.bars[i].ends;
            (truss.joints[a].position + truss.joints[b].position) * 0.5
        };
        out.joints.push(Joint::intermediate(next_id, p, truss.load_cases));
        next_id += 1;
        mid_joint.insert(i, out.joints.len() - 1);
    }
    for (&i, &m) in &mid_joint {
        split_at(&mut out, i, m);
    }

    let mean_area = |bars: &[usize]| bars.iter().map(|&b| truss.bars[b].area).sum::<f64>() / bars.len() as f64;
    for cell in &quads {
        let mids: Vec<usize> = cell.bars.iter().map(|b| mid_joint[b]).collect();
        let center = mids.iter().map(|&m| out.joints[m].position).sum::<Point>() / 4.0;
        out.joints.push(Joint::intermediate(next_id, center, truss.load_cases));
        next_id += 1;
        let c = out.joints.len() - 1;
        let area = mean_area(&cell.bars);
        for &m in &mids {
            let mut spoke = Bar::new(c, m, truss.load_cases);
            spoke.area = area;
            out.bars.push(spoke);
        }
    }
    for (cell, k) in &tris {
        let m = mid_joint[&cell.bars[*k]];
        let opposite = cell.joints[(k + 2) % 3];
        if out.find_bar(m, opposite).is_some() {
            continue;
        }
        let mut conn = Bar::new(m, opposite, truss.load_cases);
        conn.area = mean_area(&cell.bars);
        out.bars.push(conn);
    }
    Ok((out, stats))
}

pub fn subdivide(truss: &Truss, spec: &FunctionalSpec) -> Result<Truss> {
    subdivide_with(truss, spec, true).map(|(t, _)| t)
}
