//! End-to-end driver: dense initialization, coarse optimization interleaved
//! with local repairs, subdivision refinement, optional stabilization.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geomopt::{alternating_lp, AlpOptions};
use crate::gsm::{apply_alg_a, solve_alg_a};
use crate::model::{validate_spec, Bar, FunctionalSpec, Joint, OptimizationReport, PhaseRecord, Point, Truss};
use crate::stability::stabilize;
use crate::topo_local::{apply_light_pass, apply_local_pass, prune_thin_bars, remove_orphans, LocalPassConfig};
use crate::topo_subdiv::subdivide_with;

/// Relative tolerance for "a joint lies on this bar" during initialization.
const ON_SEGMENT_TOL: f64 = 1e-9;

/// Every grid axis spans at least this fraction of the longest one.
const MIN_GRID_ASPECT: f64 = 0.5;

/// Spec joints plus an `n`-per-axis grid over their bounding box (thin axes
/// widened), densely connected. Bars passing through a third joint or through an obstacle are
/// left out. `n ≤ 1` connects the spec joints alone.
pub fn init_truss(spec: &FunctionalSpec, n: usize) -> Result<Truss> {
    let d = spec.dim;
    let mut truss = Truss::from_spec(spec);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for j in &spec.joints {
        for a in 0..d {
            lo[a] = lo[a].min(j.position[a]);
            hi[a] = hi[a].max(j.position[a]);
        }
    }
    let scale = (0..d).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max).max(1e-300);
    // A thin box would squash the grid; widen such axes about their middle.
    for a in 0..d {
        let short = MIN_GRID_ASPECT * scale - (hi[a] - lo[a]);
        if short > 0.0 {
            lo[a] -= short / 2.0;
            hi[a] += short / 2.0;
        }
    }

    if n > 1 && !spec.joints.is_empty() {
        let counts: Vec<usize> = (0..3).map(|a| if a < d { n } else { 1 }).collect();
        let coord = |a: usize, i: usize| {
            if counts[a] == 1 {
                0.0
            } else {
                lo[a] + (hi[a] - lo[a]) * i as f64 / (counts[a] - 1) as f64
            }
        };
        let mut id = truss.next_joint_id();
        let mut added = 0;
        let mut candidates = 0;
        for iz in 0..counts[2] {
            for iy in 0..counts[1] {
                for ix in 0..counts[0] {
                    let p = Point::new(coord(0, ix), coord(1, iy), coord(2, iz));
                    if truss.joints.iter().any(|j| (j.position - p).norm() <= ON_SEGMENT_TOL * scale) {
                        continue;
                    }
                    candidates += 1;
                    if !spec.region.admits(&p, d) {
                        continue;
                    }
                    truss.joints.push(Joint::intermediate(id, p, spec.load_cases));
                    id += 1;
                    added += 1;
                }
            }
        }
        if candidates > 0 && added == 0 {
            return Err(Error::GridSwallowed);
        }
    }

    connect_all(&mut truss, spec);
    Ok(truss)
}

/// Adds every missing bar between two joints that stays in the design region
/// and does not pass through a third joint. Returns how many were added.
pub fn connect_all(truss: &mut Truss, spec: &FunctionalSpec) -> usize {
    let pts: Vec<Point> = truss.joints.iter().map(|j| j.position).collect();
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let scale = if pts.is_empty() { 1.0 } else { (hi - lo).max().max(1e-300) };
    let existing: std::collections::HashSet<(usize, usize)> = truss.bars.iter().map(|b| b.key()).collect();
    let before = truss.bars.len();
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            if existing.contains(&(a, b)) || !spec.region.segment_admissible(&pts[a], &pts[b], spec.dim) {
                continue;
            }
            if passes_through_joint(&pts, a, b, ON_SEGMENT_TOL * scale) {
                continue;
            }
            truss.bars.push(Bar::new(a, b, spec.load_cases));
        }
    }
    truss.bars.len() - before
}

/// Adds missing bars from every joint to its `k` nearest joints, subject to
/// the same admissibility rules as [`connect_all`].
pub fn connect_neighbors(truss: &mut Truss, spec: &FunctionalSpec, k: usize) -> usize {
    let pts: Vec<Point> = truss.joints.iter().map(|j| j.position).collect();
    let scale = truss.mean_bar_length().max(1e-300);
    let mut existing: std::collections::HashSet<(usize, usize)> = truss.bars.iter().map(|b| b.key()).collect();
    let before = truss.bars.len();
    for a in 0..pts.len() {
        let mut near: Vec<(f64, usize)> =
            (0..pts.len()).filter(|&b| b != a).map(|b| ((pts[b] - pts[a]).norm(), b)).collect();
        near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, b) in near.iter().take(k) {
            let key = (a.min(b), a.max(b));
            if existing.contains(&key) || !spec.region.segment_admissible(&pts[a], &pts[b], spec.dim) {
                continue;
            }
            if passes_through_joint(&pts, key.0, key.1, ON_SEGMENT_TOL * scale) {
                continue;
            }
            existing.insert(key);
            truss.bars.push(Bar::new(key.0, key.1, spec.load_cases));
        }
    }
    truss.bars.len() - before
}

fn passes_through_joint(pts: &[Point], a: usize, b: usize, tol: f64) -> bool {
    let e = pts[b] - pts[a];
    let len2 = e.norm_squared();
    pts.iter().enumerate().any(|(c, p)| {
        if c == a || c == b {
            return false;
        }
        let t = (p - pts[a]).dot(&e) / len2;
        if t <= 0.0 || t >= 1.0 {
            return false;
        }
        (pts[a] + e * t - p).norm() <= tol
    })
}

/// Phase rows are labelled with these.
pub const PHASE_GSM: &str = "gsm";
pub const PHASE_COARSE: &str = "coarse";
pub const PHASE_STABILIZE: &str = "stabilize";
pub const PHASE_FINAL: &str = "final";

pub fn level_label(level: usize) -> String {
    format!("level {level}")
}

/// Neighbors each joint is connected to before a refinement level's
/// alternating LP.
const NEIGHBORS: usize = 6;

/// Volume slack allowed when a topology edit is followed by a force re-solve.
const EDIT_SLACK: f64 = 1e-6;

fn phase(label: &str, truss: &Truss, started: Instant) -> PhaseRecord {
    log::info!("{label}: {} bars, volume {:.6}", truss.bars.len(), truss.total_volume());
    PhaseRecord {
        label: label.to_string(),
        bars: truss.bars.len(),
        joints: truss.joints.len(),
        volume: truss.total_volume(),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Re-solves forces after a topology edit. `None` when the edited truss can
/// no longer carry the loads or got materially heavier than `reference`.
fn resolve_after_edit(edited: Truss, sigma: f64, reference: f64) -> Result<Option<Truss>> {
    let mut t = edited;
    match solve_alg_a(&t, sigma) {
        Ok(r) if r.volume <= reference + EDIT_SLACK => {
            apply_alg_a(&mut t, &r);
            Ok(Some(t))
        }
        Ok(_) | Err(Error::Unsupportable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Drops the bars the force solution left unused (and the joints they
/// orphan). The remaining bars still carry the same forces.
pub fn drop_unused_bars(truss: &Truss) -> Truss {
    let mut t = truss.clone();
    let amax = t.bars.iter().map(|b| b.area).fold(0.0, f64::max);
    prune_thin_bars(&mut t, 1e-9 * amax);
    remove_orphans(&mut t);
    t
}

/// Rounds of the alternating LP, each followed by the full local pass. Stops
/// after `coarse_rounds` rounds, when a pass changes nothing, or when a pass
/// leaves a truss that is unsupportable or materially heavier. Returns the
/// lightest cleaned truss reached.
pub fn optimize_coarse(truss: &Truss, spec: &FunctionalSpec) -> Result<(Truss, OptimizationReport)> {
    let params = &spec.params;
    let opts = AlpOptions::from(params);
    let cfg = LocalPassConfig::for_spec(spec);
    let mut report = OptimizationReport::default();
    let mut cur = truss.clone();
    let mut best = truss.clone();
    for round in 0..params.coarse_rounds {
        // A pruned layout is often a mechanism that only carries the loads at
        // its exact geometry; the extra bars let the force LP follow a move.
        connect_all(&mut cur, spec);
        let (opt, rep) = alternating_lp(&cur, spec, &opts)?;
        report.merge(rep);
        let vol = opt.total_volume();
        log::debug!("coarse round {round}: {} bars, volume {vol:.6}", opt.bars.len());
        let (edited, stats) = apply_local_pass(&opt, &cfg)?;
        let next = match resolve_after_edit(edited, spec.sigma, vol)? {
            Some(t) => {
                for (op, n) in &stats.counts {
                    report.count(op, *n);
                }
                Some(t)
            }
            None => {
                log::debug!("coarse round {round}: local pass rejected");
                None
            }
        };
        let changed = next.is_some() && stats.total() > 0;
        let cleaned = next.unwrap_or_else(|| drop_unused_bars(&opt));
        if cleaned.total_volume() < best.total_volume() {
            best = cleaned.clone();
        }
        if !changed {
            break;
        }
        cur = cleaned;
    }
    Ok((best, report))
}

/// One refinement level: subdivide, run the alternating LP, then the light
/// local pass. Falls back to straight (chord-midpoint) subdivision when the
/// curved one ends heavier than the input, and to the input itself when
/// that fails as well.
pub fn refine_level(truss: &Truss, spec: &FunctionalSpec) -> Result<(Truss, OptimizationReport)> {
    let opts = AlpOptions::from(&spec.params);
    let cfg = LocalPassConfig::for_spec(spec);
    let start = truss.total_volume();
    let mut report = OptimizationReport::default();
    let mut refined = None;
    for curved in [true, false] {
        let (mut sub, stats) = subdivide_with(truss, spec, curved)?;
        if stats.split_bars == 0 {
            return Ok((truss.clone(), report));
        }
        connect_neighbors(&mut sub, spec, NEIGHBORS);
        log::debug!("subdivided (curved={curved}): {} joints, {} bars", sub.joints.len(), sub.bars.len());
        match alternating_lp(&sub, spec, &opts) {
            Ok((t, rep)) if t.total_volume() <= start => {
                report.merge(rep);
                report.count("subdivide_quads", stats.quads);
                report.count("subdivide_triangles", stats.triangles);
                report.count("subdivide_bars", stats.split_bars);
                refined = Some(t);
                break;
            }
            Ok(_) | Err(Error::Unsupportable(_)) => {
                log::debug!("refinement with curved={curved} did not improve the volume");
            }
            Err(e) => return Err(e),
        }
    }
    let Some(t) = refined else {
        return Ok((truss.clone(), report));
    };
    let vol = t.total_volume();
    let (light, stats) = apply_light_pass(&t, &cfg)?;
    if stats.total() > 0 {
        if let Some(l) = resolve_after_edit(light, spec.sigma, vol)? {
            if l.total_volume() <= start {
                for (op, n) in &stats.counts {
                    report.count(op, *n);
                }
                return Ok((l, report));
            }
        }
    }
    // Thin bars are sometimes still needed for exact equilibrium; drop only
    // the unused ones then.
    let used = drop_unused_bars(&t);
    let removed = t.bars.len() - used.bars.len();
    if removed > 0 {
        if let Some(u) = resolve_after_edit(used, spec.sigma, vol)? {
            if u.total_volume() <= start {
                report.count("drop_unused_bars", removed);
                return Ok((u, report));
            }
        }
    }
    Ok((t, report))
}

/// `levels` refinement levels, one phase row per level.
pub fn refine(truss: &Truss, spec: &FunctionalSpec, levels: usize) -> Result<(Truss, OptimizationReport)> {
    let mut report = OptimizationReport::default();
    let mut cur = truss.clone();
    for level in 1..=levels {
        let started = Instant::now();
        let (t, rep) = refine_level(&cur, spec)?;
        report.merge(rep);
        cur = t;
        report.phases.push(phase(&level_label(level), &cur, started));
    }
    Ok((cur, report))
}

/// Validation, dense initialization and force solve, coarse optimization,
/// refinement, optional stabilization and a final force solve.
pub fn run_pipeline(spec: &FunctionalSpec) -> Result<(Truss, OptimizationReport)> {
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    let params = &spec.params;
    let mut report = OptimizationReport::default();

    let started = Instant::now();
    let n = params.grid_n.unwrap_or(spec.joints.len());
    let mut t = init_truss(spec, n)?;
    let ground_bars = t.bars.len();
    let r = solve_alg_a(&t, spec.sigma)?;
    apply_alg_a(&mut t, &r);
    let mut row = phase(PHASE_GSM, &t, started);
    row.bars = ground_bars;
    report.phases.push(row);

    let started = Instant::now();
    let used = drop_unused_bars(&t);
    let removed = t.bars.len() - used.bars.len();
    if let Some(u) = resolve_after_edit(used, spec.sigma, t.total_volume())? {
        report.count("drop_unused_bars", removed);
        t = u;
    }
    let (coarse, rep) = optimize_coarse(&t, spec)?;
    report.merge(rep);
    t = coarse;
    report.phases.push(phase(PHASE_COARSE, &t, started));

    let (refined, rep) = refine(&t, spec, params.levels)?;
    report.merge(rep);
    t = refined;

    if params.stabilize {
        let started = Instant::now();
        let a_min = params.prune_factor * t.mean_area();
        let before = t.bars.len();
        t = stabilize(&t, spec, a_min)?;
        report.count("stabilize", t.bars.len() - before);
        report.phases.push(phase(PHASE_STABILIZE, &t, started));
    }

    let started = Instant::now();
    let r = solve_alg_a(&t, spec.sigma)?;
    apply_alg_a(&mut t, &r);
    report.phases.push(phase(PHASE_FINAL, &t, started));
    Ok((t, report))
}
