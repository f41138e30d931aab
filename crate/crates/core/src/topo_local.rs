//! Local topology repairs run between geometry optimization rounds.
//!
//! Every operation edits the truss in place and returns how many changes it
//! made. Support and loaded joints are never moved or deleted. Bars split by
//! an operation keep their area and axial force, so a truss in equilibrium
//! stays in equilibrium.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::model::{Bar, FunctionalSpec, Joint, JointKind, Point, Truss};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalPassConfig {
    /// Bars thinner than this fraction of the mean area are removed.
    pub prune_factor: f64,
    /// Joints closer than this merge.
    pub merge_distance: f64,
    /// Triangles with `2·area / longest²` below this lose their longest bar.
    pub narrow_aspect: f64,
    /// A joint this close to the interior of a foreign bar forms a T-junction.
    pub t_junction_distance: f64,
    /// Valence-two joints are dissolved when their bars deviate from a
    /// straight line by less than this many degrees.
    pub straight_tolerance_deg: f64,
}

impl LocalPassConfig {
    pub fn for_spec(spec: &FunctionalSpec) -> Self {
        let merge = spec.params.merge_factor * spec.mean_joint_distance();
        LocalPassConfig {
            prune_factor: spec.params.prune_factor,
            merge_distance: merge,
            narrow_aspect: spec.params.narrow_aspect,
            t_junction_distance: merge,
            straight_tolerance_deg: 5.0,
        }
    }
}

/// Scale for relative geometric tolerances.
fn extent(truss: &Truss) -> f64 {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for j in &truss.joints {
        lo = lo.inf(&j.position);
        hi = hi.sup(&j.position);
    }
    if truss.joints.is_empty() {
        1.0
    } else {
        (hi - lo).max().max(1e-300)
    }
}

/// Replaces bar `i` by pieces along the joint chain `path` (from the bar's
/// first end to its second), each keeping the parent's area and axial force.
fn split_bar(truss: &mut Truss, i: usize, path: &[usize]) -> Vec<usize> {
    let parent = truss.bars[i].clone();
    let len = truss.bar_length(i);
    let mut out = Vec::with_capacity(path.len() - 1);
    for win in path.windows(2) {
        let mut child = parent.clone();
        child.ends = (win[0], win[1]);
        let l = (truss.joints[win[1]].position - truss.joints[win[0]].position).norm();
        for w in &mut child.force_densities {
            *w *= len / l;
        }
        truss.bars.push(child);
        out.push(truss.bars.len() - 1);
    }
    truss.bars.swap_remove(i);
    // Indices of the pieces may have moved by the swap.
    let last = truss.bars.len();
    out.iter().map(|&k| if k == last { i } else { k }).collect()
}

fn add_intermediate(truss: &mut Truss, p: Point) -> usize {
    let id = truss.next_joint_id();
    truss.joints.push(Joint::intermediate(id, p, truss.load_cases));
    truss.joints.len() - 1
}

pub fn prune_thin_bars(truss: &mut Truss, threshold: f64) -> usize {
    let before = truss.bars.len();
    truss.bars.retain(|b| b.area >= threshold);
    before - truss.bars.len()
}

/// Removes intermediate joints without bars.
pub fn remove_orphans(truss: &mut Truss) -> usize {
    let mut deg = vec![0usize; truss.joints.len()];
    for b in &truss.bars {
        deg[b.ends.0] += 1;
        deg[b.ends.1] += 1;
    }
    let keep: Vec<bool> = truss
        .joints
        .iter()
        .zip(&deg)
        .map(|(j, &d)| d > 0 || j.kind.is_fixed())
        .collect();
    let removed = keep.iter().filter(|k| !**k).count();
    if removed > 0 {
        truss.retain_joints(&keep);
    }
    removed
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Collapses duplicate bars (keeping the larger area) and drops self-loops.
fn dedup_bars(truss: &mut Truss) {
    let mut best: HashMap<(usize, usize), usize> = HashMap::new();
    let mut keep = vec![true; truss.bars.len()];
    for (i, b) in truss.bars.iter().enumerate() {
        if b.ends.0 == b.ends.1 {
            keep[i] = false;
            continue;
        }
        match best.get(&b.key()) {
            Some(&k) => {
                if b.area > truss.bars[k].area {
                    keep[k] = false;
                    best.insert(b.key(), i);
                } else {
                    keep[i] = false;
                }
            }
            None => {
                best.insert(b.key(), i);
            }
        }
    }
    let mut idx = 0;
    truss.bars.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
}

/// Merges clusters of joints closer than `distance` (transitively). A cluster
/// holding a spec joint collapses onto it; otherwise onto its centroid.
pub fn merge_close_joints(truss: &mut Truss, distance: f64) -> Result<usize> {
    let n = truss.joints.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in a + 1..n {
            if (truss.joints[a].position - truss.joints[b].position).norm() < distance {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        let r = find(&mut parent, j);
        clusters.entry(r).or_default().push(j);
    }
    if clusters.len() == n {
        return Ok(0);
    }
    let mut target = vec![0usize; n];
    let mut keep = vec![false; n];
    let mut merged = 0;
    for members in clusters.values() {
        let fixed: Vec<usize> = members.iter().copied().filter(|&j| truss.joints[j].kind.is_fixed()).collect();
        if fixed.len() > 1 {
            return Err(Error::SpecJointsWouldMerge(truss.joints[fixed[0]].id, truss.joints[fixed[1]].id));
        }
        let rep = fixed.first().copied().unwrap_or(members[0]);
        if fixed.is_empty() && members.len() > 1 {
            let c = members.iter().map(|&j| truss.joints[j].position).sum::<Point>() / members.len() as f64;
            truss.joints[rep].position = c;
        }
        for &j in members {
            target[j] = rep;
        }
        keep[rep] = true;
        merged += members.len() - 1;
    }
    for b in &mut truss.bars {
        b.ends = (target[b.ends.0], target[b.ends.1]);
    }
    dedup_bars(truss);
    truss.retain_joints(&keep);
    Ok(merged)
}

/// Proper crossing of two planar segments, as parameters along each.
fn crossing(p1: &Point, p2: &Point, q1: &Point, q2: &Point, tol: f64) -> Option<(f64, f64)> {
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = r.x * s.y - r.y * s.x;
    let scale = r.norm() * s.norm();
    if denom.abs() <= 1e-12 * scale {
        return None;
    }
    let qp = q1 - p1;
    let t = (qp.x * s.y - qp.y * s.x) / denom;
    let u = (qp.x * r.y - qp.y * r.x) / denom;
    if t > tol && t < 1.0 - tol && u > tol && u < 1.0 - tol {
        Some((t, u))
    } else {
        None
    }
}

/// Inserts a joint at every crossing of two planar bars that do not share an
/// endpoint. No-op in 3D.
pub fn split_intersections(truss: &mut Truss) -> usize {
    if truss.dim != 2 {
        return 0;
    }
    let mut count = 0;
    loop {
        let mut found = None;
        'outer: for i in 0..truss.bars.len() {
            let (a, b) = truss.bars[i].ends;
            for j in i + 1..truss.bars.len() {
                let (c, d) = truss.bars[j].ends;
                if a == c || a == d || b == c || b == d {
                    continue;
                }
                let p = |k: usize| truss.joints[k].position;
                if let Some((t, _)) = crossing(&p(a), &p(b), &p(c), &p(d), 1e-9) {
                    found = Some((i, j, p(a) + (p(b) - p(a)) * t));
                    break 'outer;
                }
            }
        }
        let Some((i, j, x)) = found else { break };
        let m = add_intermediate(truss, x);
        let (a, b) = truss.bars[i].ends;
        let (c, d) = truss.bars[j].ends;
        // Split the higher index first so the lower stays valid.
        split_bar(truss, j, &[c, m, d]);
        split_bar(truss, i, &[a, m, b]);
        count += 1;
    }
    count
}

/// Where joint `p` projects onto the open segment `a..b`, with its distance.
fn foot_on_segment(p: &Point, a: &Point, b: &Point) -> Option<(f64, Point, f64)> {
    let e = b - a;
    let len2 = e.norm_squared();
    if len2 == 0.0 {
        return None;
    }
    let t = (p - a).dot(&e) / len2;
    if t <= 1e-9 || t >= 1.0 - 1e-9 {
        return None;
    }
    let f = a + e * t;
    Some((t, f, (p - f).norm()))
}

/// For a joint lying within `distance` of a foreign bar's interior, splits the
/// bar at the perpendicular foot and connects the joint to it. A joint exactly
/// on the bar just becomes the split point. One sweep over the current
/// layout, closest pairs first, each joint and bar edited at most once.
pub fn fix_t_junctions(truss: &mut Truss, distance: f64) -> usize {
    let on_bar = 1e-12 * extent(truss);
    let mut candidates = Vec::new();
    for j in 0..truss.joints.len() {
        for (i, bar) in truss.bars.iter().enumerate() {
            let (a, b) = bar.ends;
            if a == j || b == j {
                continue;
            }
            let p = &truss.joints[j].position;
            if let Some((_, f, dist)) = foot_on_segment(p, &truss.joints[a].position, &truss.joints[b].position) {
                if dist < distance {
                    candidates.push((dist, j, i, f));
                }
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut joint_used = vec![false; truss.joints.len()];
    let mut bar_used = vec![false; truss.bars.len()];
    let keys: Vec<(usize, usize)> = truss.bars.iter().map(|b| b.ends).collect();
    let mut count = 0;
    for (dist, j, i, f) in candidates {
        let (a, b) = keys[i];
        if joint_used[j] || bar_used[i] {
            continue;
        }
        let Some(cur) = truss.find_bar(a, b) else { continue };
        joint_used[j] = true;
        bar_used[i] = true;
        if dist <= on_bar {
            split_bar(truss, cur, &[a, j, b]);
        } else {
            let area = truss.bars[cur].area;
            let m = add_intermediate(truss, f);
            split_bar(truss, cur, &[a, m, b]);
            if truss.find_bar(j, m).is_none() {
                let mut conn = Bar::new(j, m, truss.load_cases);
                conn.area = area;
                truss.bars.push(conn);
            }
        }
        count += 1;
    }
    count
}

/// Triangles as sorted joint triples, each with its three bar indices.
pub(crate) fn triangles(truss: &Truss) -> Vec<([usize; 3], [usize; 3])> {
    let mut adj: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); truss.joints.len()];
    for (i, b) in truss.bars.iter().enumerate() {
        adj[b.ends.0].insert(b.ends.1, i);
        adj[b.ends.1].insert(b.ends.0, i);
    }
    let mut out = Vec::new();
    for a in 0..truss.joints.len() {
        for (&b, &ab) in adj[a].range(a + 1..) {
            for (&c, &bc) in adj[b].range(b + 1..) {
                if let Some(&ac) = adj[a].get(&c) {
                    out.push(([a, b, c], [ab, bc, ac]));
                }
            }
        }
    }
    out
}

/// Deletes the longest bar of every triangle whose `2·area / longest²` is
/// below `aspect`; a bar shared by several such triangles goes once.
pub fn fix_narrow_triangles(truss: &mut Truss, aspect: f64) -> usize {
    let mut doomed = BTreeSet::new();
    for (v, bars) in triangles(truss) {
        let p = |k: usize| truss.joints[v[k]].position;
        let area = 0.5 * (p(1) - p(0)).cross(&(p(2) - p(0))).norm();
        let (longest, lmax) = bars
            .iter()
            .map(|&i| (i, truss.bar_length(i)))
            .fold((usize::MAX, 0.0f64), |best, cur| if cur.1 > best.1 { cur } else { best });
        if 2.0 * area / (lmax * lmax) < aspect {
            doomed.insert(longest);
        }
    }
    for &i in doomed.iter().rev() {
        truss.bars.remove(i);
    }
    doomed.len()
}

/// Dissolves intermediate joints with two nearly collinear bars into one bar
/// (area = the larger of the two), repeating until none is left.
pub fn remove_valence_two(truss: &mut Truss, tolerance_deg: f64) -> usize {
    let cos_tol = (tolerance_deg.to_radians()).cos();
    let mut count = 0;
    loop {
        let inc = truss.incidence();
        let mut found = None;
        for (j, bars) in inc.iter().enumerate() {
            if truss.joints[j].kind != JointKind::Intermediate || bars.len() != 2 {
                continue;
            }
            let other = |i: usize| {
                let b = &truss.bars[i];
                if b.ends.0 == j {
                    b.ends.1
                } else {
                    b.ends.0
                }
            };
            let (a, c) = (other(bars[0]), other(bars[1]));
            if a == c {
                continue;
            }
            let p = truss.joints[j].position;
            let u = (truss.joints[a].position - p).normalize();
            let v = (truss.joints[c].position - p).normalize();
            // Straight means the two directions are opposite.
            if -u.dot(&v) >= cos_tol {
                found = Some((j, bars[0], bars[1], a, c));
                break;
            }
        }
        let Some((j, b1, b2, a, c)) = found else { break };
        let (l1, l2) = (truss.bar_length(b1), truss.bar_length(b2));
        let (w1, w2) = (&truss.bars[b1], &truss.bars[b2]);
        let mut merged = Bar::new(a, c, truss.load_cases);
        merged.area = w1.area.max(w2.area);
        merged.min_area = w1.min_area.max(w2.min_area);
        merged.governing_case = if w1.area >= w2.area { w1.governing_case } else { w2.governing_case };
        let lnew = (truss.joints[c].position - truss.joints[a].position).norm();
        for k in 0..truss.load_cases {
            // Average axial force of the two pieces.
            let s = 0.5 * (w1.force_densities[k] * l1 + w2.force_densities[k] * l2);
            merged.force_densities[k] = s / lnew;
        }
        let existing = truss.find_bar(a, c);
        let (hi, lo) = (b1.max(b2), b1.min(b2));
        truss.bars.remove(hi);
        truss.bars.remove(lo);
        match existing {
            Some(_) => {
                let e = truss.find_bar(a, c).expect("bar still present");
                if merged.area > truss.bars[e].area {
                    truss.bars[e] = merged;
                }
            }
            None => truss.bars.push(merged),
        }
        let mut keep = vec![true; truss.joints.len()];
        keep[j] = false;
        truss.retain_joints(&keep);
        count += 1;
    }
    count
}

/// Per-operation change counts of [`apply_local_pass`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalPassStats {
    pub passes: usize,
    pub counts: BTreeMap<&'static str, usize>,
}

impl LocalPassStats {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub const MAX_LOCAL_PASSES: usize = 10;

/// Runs prune, orphan removal, merging, crossing splits, T-junction repair,
/// narrow-triangle removal and valence-two removal in that order, repeating
/// until a pass changes nothing or ten passes have run.
pub fn apply_local_pass(truss: &Truss, cfg: &LocalPassConfig) -> Result<(Truss, LocalPassStats)> {
    let mut t = truss.clone();
    let mut stats = LocalPassStats::default();
    for _ in 0..MAX_LOCAL_PASSES {
        stats.passes += 1;
        let mut changed = 0;
        let mut note = |name: &'static str, n: usize, stats: &mut LocalPassStats| {
            if n > 0 {
                *stats.counts.entry(name).or_insert(0) += n;
                changed += n;
            }
        };
        let threshold = cfg.prune_factor * t.mean_area();
        note("prune_thin_bars", prune_thin_bars(&mut t, threshold), &mut stats);
        note("remove_orphans", remove_orphans(&mut t), &mut stats);
        note("merge_close_joints", merge_close_joints(&mut t, cfg.merge_distance)?, &mut stats);
        note("split_intersections", split_intersections(&mut t), &mut stats);
        note("fix_t_junctions", fix_t_junctions(&mut t, cfg.t_junction_distance), &mut stats);
        note("fix_narrow_triangles", fix_narrow_triangles(&mut t, cfg.narrow_aspect), &mut stats);
        note("remove_valence_two", remove_valence_two(&mut t, cfg.straight_tolerance_deg), &mut stats);
        if changed == 0 {
            break;
        }
    }
    Ok((t, stats))
}

/// The reduced pass used between subdivision levels: prune, orphan removal
/// and merging only.
pub fn apply_light_pass(truss: &Truss, cfg: &LocalPassConfig) -> Result<(Truss, LocalPassStats)> {
    let mut t = truss.clone();
    let mut stats = LocalPassStats { passes: 1, ..Default::default() };
    let threshold = cfg.prune_factor * t.mean_area();
    for (name, n) in [
        ("prune_thin_bars", prune_thin_bars(&mut t, threshold)),
        ("remove_orphans", remove_orphans(&mut t)),
        ("merge_close_joints", merge_close_joints(&mut t, cfg.merge_distance)?),
    ] {
        if n > 0 {
            stats.counts.insert(name, n);
        }
    }
    Ok((t, stats))
}
