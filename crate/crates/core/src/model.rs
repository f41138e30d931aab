//! Domain types: joints, bars, design regions, functional specifications and
//! trusses, with validation and the basic measures everything else relies on.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::equilibrium::assemble_c;
use crate::error::{Error, Result};

/// Positions and forces. Planar problems keep `z = 0`.
pub type Point = nalgebra::Vector3<f64>;

pub type JointId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Support,
    Loaded,
    Intermediate,
}

impl JointKind {
    /// Joints whose position belongs to the specification.
    pub fn is_fixed(self) -> bool {
        !matches!(self, JointKind::Intermediate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub id: JointId,
    pub position: Point,
    pub kind: JointKind,
    /// One force per load case.
    pub loads: Vec<Point>,
}

impl Joint {
    pub fn intermediate(id: JointId, position: Point, load_cases: usize) -> Self {
        Joint { id, position, kind: JointKind::Intermediate, loads: vec![Point::zeros(); load_cases] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    /// Indices into [`Truss::joints`].
    pub ends: (usize, usize),
    pub area: f64,
    /// Axial force divided by length, one entry per load case. Positive is
    /// tension.
    pub force_densities: Vec<f64>,
    pub governing_case: usize,
    /// Lower bound on `area` regardless of force (auxiliary stabilizing bars).
    pub min_area: f64,
}

impl Bar {
    pub fn new(a: usize, b: usize, load_cases: usize) -> Self {
        Bar { ends: (a, b), area: 0.0, force_densities: vec![0.0; load_cases], governing_case: 0, min_area: 0.0 }
    }

    pub fn key(&self) -> (usize, usize) {
        let (a, b) = self.ends;
        (a.min(b), a.max(b))
    }

    pub fn governing_density(&self) -> f64 {
        self.force_densities.get(self.governing_case).copied().unwrap_or(0.0)
    }
}

/// Axis-aligned box. Unused axes of planar problems are ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn unbounded() -> Self {
        Aabb { min: [f64::NEG_INFINITY; 3], max: [f64::INFINITY; 3] }
    }

    pub fn contains(&self, p: &Point, dim: usize, tol: f64) -> bool {
        (0..dim).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// Strict interior test, shrunk by `tol` on every face.
    pub fn interior_contains(&self, p: &Point, dim: usize, tol: f64) -> bool {
        (0..dim).all(|a| p[a] > self.min[a] + tol && p[a] < self.max[a] - tol)
    }

    /// Whether the segment `p..q` passes through the open interior.
    pub fn segment_hits_interior(&self, p: &Point, q: &Point, dim: usize, tol: f64) -> bool {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for a in 0..dim {
            let (lo, hi) = (self.min[a] + tol, self.max[a] - tol);
            if lo >= hi {
                return false;
            }
            let d = q[a] - p[a];
            if d.abs() < 1e-300 {
                if p[a] <= lo || p[a] >= hi {
                    return false;
                }
                continue;
            }
            let (mut ta, mut tb) = ((lo - p[a]) / d, (hi - p[a]) / d);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 >= t1 {
                return false;
            }
        }
        true
    }

    pub fn clamp(&self, p: &Point, dim: usize) -> Point {
        let mut q = *p;
        for a in 0..dim {
            q[a] = q[a].clamp(self.min[a], self.max[a]);
        }
        q
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignRegion {
    pub bounds: Aabb,
    pub obstacles: Vec<Aabb>,
}

impl Default for DesignRegion {
    fn default() -> Self {
        DesignRegion { bounds: Aabb::unbounded(), obstacles: Vec::new() }
    }
}

impl DesignRegion {
    /// Inside the bounds and outside every obstacle interior.
    pub fn admits(&self, p: &Point, dim: usize) -> bool {
        self.bounds.contains(p, dim, 1e-12)
            && !self.obstacles.iter().any(|o| o.interior_contains(p, dim, 1e-12))
    }

    pub fn segment_admissible(&self, p: &Point, q: &Point, dim: usize) -> bool {
        !self.obstacles.iter().any(|o| o.segment_hits_interior(p, q, dim, 1e-12))
    }
}

/// Knobs of the whole optimization pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Grid points per axis for the initial truss; `None` uses the number of
    /// specified joints.
    pub grid_n: Option<usize>,
    /// Rounds of geometry optimization interleaved with local operations.
    pub coarse_rounds: usize,
    /// Subdivision levels.
    pub levels: usize,
    /// Outer iterations of the alternating LP.
    pub max_iterations: usize,
    /// Halvings tried by the line search.
    pub max_line_search: usize,
    /// Bars thinner than this fraction of the mean area are pruned.
    pub prune_factor: f64,
    /// Joints closer than this fraction of the mean spec-joint distance merge.
    pub merge_factor: f64,
    /// Triangles with `2·area / longest²` below this lose their longest bar.
    pub narrow_aspect: f64,
    /// Trust-region fraction for density changes and joint moves.
    pub step_fraction: f64,
    /// Stop the alternating LP when an accepted step improves less than this
    /// fraction of the volume.
    pub min_relative_improvement: f64,
    /// Add auxiliary bars when the result is externally unstable.
    pub stabilize: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            grid_n: None,
            coarse_rounds: 5,
            levels: 3,
            max_iterations: 500,
            max_line_search: 10,
            prune_factor: 0.002,
            merge_factor: 0.01,
            narrow_aspect: 0.1,
            step_fraction: 0.1,
            min_relative_improvement: 1e-7,
            stabilize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalSpec {
    pub dim: usize,
    /// Support and Loaded joints only.
    pub joints: Vec<Joint>,
    pub load_cases: usize,
    pub region: DesignRegion,
    /// Admissible stress.
    pub sigma: f64,
    pub params: PipelineParams,
}

impl FunctionalSpec {
    pub fn has_supports(&self) -> bool {
        self.joints.iter().any(|j| j.kind == JointKind::Support)
    }

    /// Largest load magnitude over all joints and cases.
    pub fn max_load(&self) -> f64 {
        self.joints
            .iter()
            .flat_map(|j| j.loads.iter())
            .fold(0.0, |m, f| m.max(f.norm()))
    }

    /// Mean distance over all pairs of specified joints.
    pub fn mean_joint_distance(&self) -> f64 {
        let n = self.joints.len();
        if n < 2 {
            return 1.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += (self.joints[i].position - self.joints[j].position).norm();
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub entity: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.invariant, self.entity)
    }
}

fn violation(invariant: &'static str, entity: impl Into<String>) -> Violation {
    Violation { invariant, entity: entity.into() }
}

/// Checks every specification invariant; an empty list means valid.
pub fn validate_spec(spec: &FunctionalSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = spec.dim;
    if d != 2 && d != 3 {
        out.push(violation("dimension must be 2 or 3", format!("dimension {d}")));
        return out;
    }
    if spec.load_cases == 0 {
        out.push(violation("at least one load case", "load_cases 0"));
    }
    if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
        out.push(violation("admissible stress must be positive", format!("sigma {}", spec.sigma)));
    }
    let mut ids = HashMap::new();
    for (k, j) in spec.joints.iter().enumerate() {
        let name = format!("joint {}", j.id);
        if let Some(prev) = ids.insert(j.id, k) {
            out.push(violation("joint ids are unique", format!("{name} at entries {prev} and {k}")));
        }
        if j.kind == JointKind::Intermediate {
            out.push(violation("specified joints are supports or loaded", name.clone()));
        }
        if !j.position.iter().all(|v| v.is_finite()) || (d == 2 && j.position.z != 0.0) {
            out.push(violation("position has finite coordinates", name.clone()));
            continue;
        }
        if j.loads.len() != spec.load_cases {
            out.push(violation(
                "one load vector per load case",
                format!("{name} has {} for {} cases", j.loads.len(), spec.load_cases),
            ));
        }
        if j.loads.iter().any(|f| !f.iter().all(|v| v.is_finite()) || (d == 2 && f.z != 0.0)) {
            out.push(violation("loads are finite vectors of the problem dimension", name.clone()));
        }
        if j.kind == JointKind::Loaded && j.loads.iter().all(|f| f.norm() == 0.0) {
            out.push(violation("loaded joint carries a nonzero force", name.clone()));
        }
        if !spec.region.bounds.contains(&j.position, d, 1e-12) {
            out.push(violation("joint lies inside the design region", name.clone()));
        }
        if spec.region.obstacles.iter().any(|o| o.interior_contains(&j.position, d, 1e-12)) {
            out.push(violation("joint lies outside every obstacle", name.clone()));
        }
    }
    for a in 0..spec.joints.len() {
        for b in a + 1..spec.joints.len() {
            if spec.joints[a].position == spec.joints[b].position {
                out.push(violation(
                    "specified joints have distinct positions",
                    format!("joints {} and {}", spec.joints[a].id, spec.joints[b].id),
                ));
            }
        }
    }
    if !out.is_empty() || spec.has_supports() {
        return out;
    }
    let fmax = spec.max_load();
    let tol = 1e-9 * fmax;
    let n = spec.joints.len().max(1) as f64;
    let centroid = spec.joints.iter().map(|j| j.position).sum::<Point>() / n;
    let extent = spec.joints.iter().fold(1.0f64, |m, j| m.max((j.position - centroid).norm()));
    for k in 0..spec.load_cases {
        let force: Point = spec.joints.iter().map(|j| j.loads[k]).sum();
        let torque: Point =
            spec.joints.iter().map(|j| (j.position - centroid).cross(&j.loads[k])).sum();
        if force.norm() > tol {
            out.push(violation("unbalanced forces", format!("load case {k}: net force {:.3e}", force.norm())));
        }
        if torque.norm() > tol * extent {
            out.push(violation("unbalanced torques", format!("load case {k}: net torque {:.3e}", torque.norm())));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truss {
    pub dim: usize,
    pub load_cases: usize,
    pub joints: Vec<Joint>,
    pub bars: Vec<Bar>,
}

impl Truss {
    /// The specified joints with no bars.
    pub fn from_spec(spec: &FunctionalSpec) -> Self {
        Truss { dim: spec.dim, load_cases: spec.load_cases, joints: spec.joints.clone(), bars: Vec::new() }
    }

    /// `p_end − p_start` of bar `i`.
    pub fn bar_vector(&self, i: usize) -> Point {
        let (a, b) = self.bars[i].ends;
        self.joints[b].position - self.joints[a].position
    }

    pub fn bar_length(&self, i: usize) -> f64 {
        self.bar_vector(i).norm()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.bars.len()).map(|i| self.bar_length(i) * self.bars[i].area).sum()
    }

    pub fn mean_area(&self) -> f64 {
        if self.bars.is_empty() {
            return 0.0;
        }
        self.bars.iter().map(|b| b.area).sum::<f64>() / self.bars.len() as f64
    }

    pub fn mean_bar_length(&self) -> f64 {
        if self.bars.is_empty() {
            return 0.0;
        }
        (0..self.bars.len()).map(|i| self.bar_length(i)).sum::<f64>() / self.bars.len() as f64
    }

    pub fn next_joint_id(&self) -> JointId {
        self.joints.iter().map(|j| j.id + 1).max().unwrap_or(0)
    }

    pub fn joint_index(&self, id: JointId) -> Option<usize> {
        self.joints.iter().position(|j| j.id == id)
    }

    pub fn find_bar(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.bars.iter().position(|bar| bar.key() == key)
    }

    /// Incident bar indices per joint.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.joints.len()];
        for (i, b) in self.bars.iter().enumerate() {
            inc[b.ends.0].push(i);
            inc[b.ends.1].push(i);
        }
        inc
    }

    pub fn num_supports(&self) -> usize {
        self.joints.iter().filter(|j| j.kind == JointKind::Support).count()
    }

    /// Structural checks: endpoints exist and differ, no duplicate bars,
    /// nonzero lengths.
    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, b) in self.bars.iter().enumerate() {
            let (p, q) = b.ends;
            if p >= self.joints.len() || q >= self.joints.len() || p == q {
                return Err(Error::Schema(format!("bar {i} has invalid endpoints ({p}, {q})")));
            }
            if !seen.insert(b.key()) {
                return Err(Error::Schema(format!("bar {i} duplicates another bar")));
            }
            if self.bar_length(i) == 0.0 {
                return Err(Error::ZeroLengthBar(i));
            }
        }
        Ok(())
    }

    /// Drops joints for which `keep` is false together with their bars and
    /// renumbers the remaining bar endpoints.
    pub fn retain_joints(&mut self, keep: &[bool]) {
        let mut map = vec![usize::MAX; self.joints.len()];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = next;
                next += 1;
            }
        }
        let mut idx = 0;
        self.joints.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        self.bars.retain(|b| keep[b.ends.0] && keep[b.ends.1]);
        for b in &mut self.bars {
            b.ends = (map[b.ends.0], map[b.ends.1]);
        }
    }
}

/// `‖Cᵀw + f‖∞` over the free degrees of freedom of load case `case`.
pub fn equilibrium_residual(truss: &Truss, case: usize) -> Result<f64> {
    if case >= truss.load_cases {
        return Err(Error::CaseOutOfRange { case, count: truss.load_cases });
    }
    let sys = assemble_c(truss)?;
    let w: Vec<f64> = truss.bars.iter().map(|b| b.force_densities[case]).collect();
    let ctw = sys.apply(&w);
    Ok(ctw
        .iter()
        .zip(&sys.loads[case])
        .fold(0.0f64, |m, (a, f)| m.max((a + f).abs())))
}

/// Per-phase summary row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub label: String,
    pub bars: usize,
    pub joints: usize,
    pub volume: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub phases: Vec<PhaseRecord>,
    /// Volume after every accepted alternating-LP step, starting with the
    /// volume the run began from.
    pub alp_volumes: Vec<Vec<f64>>,
    /// Largest equilibrium residual over all load cases at the same iterates.
    #[serde(default)]
    pub alp_residuals: Vec<Vec<f64>>,
    pub operations: std::collections::BTreeMap<String, usize>,
}

impl OptimizationReport {
    pub fn count(&mut self, op: &str, n: usize) {
        if n > 0 {
            *self.operations.entry(op.to_string()).or_insert(0) += n;
        }
    }

    pub fn merge(&mut self, other: OptimizationReport) {
        self.phases.extend(other.phases);
        self.alp_volumes.extend(other.alp_volumes);
        self.alp_residuals.extend(other.alp_residuals);
        for (k, v) in other.operations {
            *self.operations.entry(k).or_insert(0) += v;
        }
    }

    /// The same report without wall-clock times, for reproducibility checks.
    pub fn without_timings(&self) -> OptimizationReport {
        let mut r = self.clone();
        for p in &mut r.phases {
            p.seconds = 0.0;
        }
        r
    }
}
