//! Geometry optimization: the linearized joint-relocation LP, the alternating
//! driver that couples it with the force LP, and a gradient-descent penalty
//! method kept as an independent reference on small instances.

use trussforge_lp::{Basis, LpBackend, LpProblem, LpStatus, RevisedSimplex, SolveOptions};

use crate::equilibrium::assemble_c;
use crate::error::{Error, Result};
use crate::gsm::{apply_alg_a, solve_alg_a, solve_alg_a_with, AlgAResult};
use crate::model::{equilibrium_residual, DesignRegion, FunctionalSpec, JointKind, OptimizationReport, PipelineParams, Point, Truss};

/// Force densities below this fraction of the largest one count as zero.
const ZERO_DENSITY: f64 = 1e-12;

/// Trust region of one relocation step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBounds {
    /// Per bar bound on every density change.
    pub density: Vec<f64>,
    /// Per axis bound on joint moves.
    pub displacement: f64,
}

impl StepBounds {
    /// `fraction · |w|` of the governing case per bar (zero-force bars get
    /// `fraction` times the median nonzero magnitude) and `fraction` times the
    /// mean bar length for joints.
    pub fn from_truss(truss: &Truss, fraction: f64) -> Self {
        let mags: Vec<f64> = truss.bars.iter().map(|b| b.governing_density().abs()).collect();
        let wmax = mags.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut nonzero: Vec<f64> = mags.iter().copied().filter(|&v| v > ZERO_DENSITY * wmax).collect();
        nonzero.sort_by(f64::total_cmp);
        let median = if nonzero.is_empty() {
            0.0
        } else if nonzero.len() % 2 == 1 {
            nonzero[nonzero.len() / 2]
        } else {
            0.5 * (nonzero[nonzero.len() / 2 - 1] + nonzero[nonzero.len() / 2])
        };
        let density = mags
            .iter()
            .map(|&v| fraction * if v > ZERO_DENSITY * wmax { v } else { median })
            .collect();
        StepBounds { density, displacement: fraction * truss.mean_bar_length() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgBResult {
    /// Move per joint; zero for supports and loaded joints.
    pub displacements: Vec<Point>,
    /// `[bar][case]`.
    pub density_changes: Vec<Vec<f64>>,
    /// First-order volume change of the step (negative is a decrease).
    pub predicted_change: f64,
    pub lp_iterations: usize,
    /// Final basis, a warm start for the next relocation LP with the same
    /// layout.
    pub basis: Basis,
}

/// Linearized relocation LP around the current geometry and forces.
///
/// Only intermediate joints move. Densities must satisfy equilibrium already
/// (the force LP just ran) and their governing-case signs fix the sign of each
/// bar's volume term. Joint moves are also limited so that positions stay in
/// `region.bounds`.
pub fn solve_alg_b(truss: &Truss, region: &DesignRegion, sigma: f64, bounds: &StepBounds) -> Result<AlgBResult> {
    solve_alg_b_with(truss, region, sigma, bounds, &RevisedSimplex, None)
}

pub fn solve_alg_b_with(
    truss: &Truss,
    region: &DesignRegion,
    sigma: f64,
    bounds: &StepBounds,
    backend: &dyn LpBackend,
    hint: Option<&Basis>,
) -> Result<AlgBResult> {
    let d = truss.dim;
    let kc = truss.load_cases;
    let sys = assemble_c(truss)?;
    let nrows = sys.num_rows;
    let mut lp = LpProblem::new(nrows * kc);
    let wmax = truss
        .bars
        .iter()
        .flat_map(|b| b.force_densities.iter())
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let inc = truss.incidence();

    // Joint moves.
    let mut u_col = vec![None; truss.joints.len()];
    for (j, joint) in truss.joints.iter().enumerate() {
        if joint.kind != JointKind::Intermediate {
            continue;
        }
        let row_j = sys.joint_row[j].expect("intermediate joints have rows");
        let mut first = None;
        for a in 0..d {
            let p = joint.position[a];
            let lo = (-bounds.displacement).max(region.bounds.min[a] - p).min(0.0);
            let hi = bounds.displacement.min(region.bounds.max[a] - p).max(0.0);
            let mut cost = 0.0;
            let mut entries = Vec::new();
            for &i in &inc[j] {
                let bar = &truss.bars[i];
                let w_gov = bar.governing_density();
                // d(l²)/dp_end = 2e, d(l²)/dp_start = −2e.
                let e = truss.bar_vector(i)[a];
                let sign = if bar.ends.1 == j { 1.0 } else { -1.0 };
                cost += 2.0 * w_gov.abs() * e * sign / sigma;
                let other = if bar.ends.0 == j { bar.ends.1 } else { bar.ends.0 };
                for k in 0..kc {
                    let w = bar.force_densities[k];
                    if w == 0.0 {
                        continue;
                    }
                    entries.push((k * nrows + row_j + a, -w));
                    if let Some(ro) = sys.joint_row[other] {
                        entries.push((k * nrows + ro + a, w));
                    }
                }
            }
            let c = lp.add_column(cost, lo, hi, entries);
            first.get_or_insert(c);
        }
        u_col[j] = first;
    }

    // Density changes.
    enum DwCols {
        Single(usize),
        Split(usize),
    }
    let mut dw_cols: Vec<Vec<DwCols>> = Vec::with_capacity(truss.bars.len());
    for (i, bar) in truss.bars.iter().enumerate() {
        let l2 = truss.bar_vector(i).norm_squared();
        let delta = bounds.density[i];
        let mut cols = Vec::with_capacity(kc);
        for k in 0..kc {
            let shifted = |s: f64| sys.columns[i].iter().map(move |&(r, v)| (k * nrows + r, s * v));
            let w = bar.force_densities[k];
            if k == bar.governing_case && w.abs() <= ZERO_DENSITY * wmax {
                // |Δw| enters the volume directly for a bar without force.
                let c = lp.add_column(l2 / sigma, 0.0, delta, shifted(1.0));
                lp.add_column(l2 / sigma, 0.0, delta, shifted(-1.0));
                cols.push(DwCols::Split(c));
            } else {
                let cost = if k == bar.governing_case { w.signum() * l2 / sigma } else { 0.0 };
                cols.push(DwCols::Single(lp.add_column(cost, -delta, delta, shifted(1.0))));
            }
        }
        dw_cols.push(cols);
    }

    // A hint only makes sense for the same column layout.
    let hint = hint.filter(|h| h.status.len() == lp.num_vars() && h.rows.len() == lp.num_rows());
    let sol = backend.solve(&lp, &SolveOptions::default(), hint);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("relocation LP ended {:?}; zero step is always feasible", sol.status)));
    }
    let displacements = (0..truss.joints.len())
        .map(|j| match u_col[j] {
            Some(c) => {
                let mut u = Point::zeros();
                for a in 0..d {
                    u[a] = sol.x[c + a];
                }
                u
            }
            None => Point::zeros(),
        })
        .collect();
    let density_changes = dw_cols
        .iter()
        .map(|cols| {
            cols.iter()
                .map(|c| match *c {
                    DwCols::Single(j) => sol.x[j],
                    DwCols::Split(j) => sol.x[j] - sol.x[j + 1],
                })
                .collect()
        })
        .collect();
    Ok(AlgBResult { displacements, density_changes, predicted_change: sol.objective_value, lp_iterations: sol.iterations, basis: sol.basis })
}

/// Options of the alternating driver.
#[derive(Clone, Debug, PartialEq)]
pub struct AlpOptions {
    pub max_iterations: usize,
    pub max_line_search: usize,
    pub step_fraction: f64,
    pub min_relative_improvement: f64,
}

impl From<&PipelineParams> for AlpOptions {
    fn from(p: &PipelineParams) -> Self {
        AlpOptions {
            max_iterations: p.max_iterations,
            max_line_search: p.max_line_search,
            step_fraction: p.step_fraction,
            min_relative_improvement: p.min_relative_improvement,
        }
    }
}

impl Default for AlpOptions {
    fn default() -> Self {
        AlpOptions::from(&PipelineParams::default())
    }
}

/// Places every intermediate joint at `p + s·u`, clamped into the region
/// bounds. Returns `None` when a joint lands in an obstacle, a bar would
/// cross one, or a bar collapses.
fn trial_geometry(truss: &Truss, region: &DesignRegion, u: &[Point], s: f64) -> Option<Truss> {
    let d = truss.dim;
    let mut t = truss.clone();
    for (j, joint) in t.joints.iter_mut().enumerate() {
        if joint.kind == JointKind::Intermediate && u[j] != Point::zeros() {
            joint.position = region.bounds.clamp(&(joint.position + u[j] * s), d);
            if !region.admits(&joint.position, d) {
                return None;
            }
        }
    }
    for (i, bar) in t.bars.iter().enumerate() {
        let (a, b) = bar.ends;
        if t.bar_length(i) == 0.0 {
            return None;
        }
        if !region.obstacles.is_empty()
            && (u[a] != Point::zeros() || u[b] != Point::zeros())
            && !region.segment_admissible(&t.joints[a].position, &t.joints[b].position, d)
        {
            return None;
        }
    }
    Some(t)
}

fn max_residual(truss: &Truss) -> Result<f64> {
    (0..truss.load_cases).try_fold(0.0f64, |m, k| Ok(m.max(equilibrium_residual(truss, k)?)))
}

/// Alternates the relocation LP with a backtracking line search that
/// re-solves the force LP at every trial geometry. Accepted volumes strictly
/// decrease.
pub fn alternating_lp(truss: &Truss, spec: &FunctionalSpec, opts: &AlpOptions) -> Result<(Truss, OptimizationReport)> {
    let sigma = spec.sigma;
    let backend = RevisedSimplex;
    let mut cur = truss.clone();
    let mut forces: AlgAResult = solve_alg_a(&cur, sigma)?;
    apply_alg_a(&mut cur, &forces);
    let mut volumes = vec![forces.volume];
    let mut residuals = vec![max_residual(&cur)?];
    let movable = cur.joints.iter().any(|j| j.kind == JointKind::Intermediate);
    let mut relocation_basis: Option<Basis> = None;

    for it in 0..opts.max_iterations {
        if !movable || cur.bars.is_empty() {
            break;
        }
        let bounds = StepBounds::from_truss(&cur, opts.step_fraction);
        let step = solve_alg_b_with(&cur, &spec.region, sigma, &bounds, &backend, relocation_basis.as_ref())?;
        relocation_basis = Some(step.basis.clone());
        if step.displacements.iter().all(|u| *u == Point::zeros()) {
            break;
        }
        let vol = forces.volume;
        let mut accepted = None;
        for j in 0..=opts.max_line_search {
            let s = 0.5f64.powi(j as i32);
            let Some(mut trial) = trial_geometry(&cur, &spec.region, &step.displacements, s) else {
                continue;
            };
            let res = match solve_alg_a_with(&trial, sigma, &backend, Some(&forces.basis)) {
                Ok(r) => r,
                Err(Error::Unsupportable(_)) => continue,
                Err(e) => return Err(e),
            };
            if res.volume < vol {
                apply_alg_a(&mut trial, &res);
                accepted = Some((trial, res));
                break;
            }
        }
        let Some((next, res)) = accepted else {
            log::debug!("alternating LP: line search failed at iteration {it}");
            break;
        };
        let rel = (vol - res.volume) / vol.max(f64::MIN_POSITIVE);
        cur = next;
        forces = res;
        volumes.push(forces.volume);
        residuals.push(max_residual(&cur)?);
        log::trace!("alternating LP iteration {it}: volume {:.9}, {} bars", forces.volume, cur.bars.len());
        if rel < opts.min_relative_improvement {
            break;
        }
    }
    let mut report = OptimizationReport::default();
    report.alp_volumes.push(volumes);
    report.alp_residuals.push(residuals);
    Ok((cur, report))
}

/// Options of the gradient-descent reference method.
#[derive(Clone, Debug, PartialEq)]
pub struct GdOptions {
    /// Weight of the volume term.
    pub volume_weight: f64,
    /// Weight of the squared equilibrium residual.
    pub penalty_weight: f64,
    pub max_iterations: usize,
    /// Converged once the energy drops by less than this fraction over
    /// `window` iterations.
    pub tolerance: f64,
    pub window: usize,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions { volume_weight: 1.0, penalty_weight: 1e3, max_iterations: 200_000, tolerance: 1e-7, window: 200 }
    }
}

struct Penalty<'a> {
    truss: &'a Truss,
    movable: Vec<usize>,
    opts: &'a GdOptions,
}

impl Penalty<'_> {
    /// Energy and gradient. `x` holds the movable joint coordinates followed
    /// by the tension and compression square roots per bar.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = self.truss;
        let d = t.dim;
        let nb = t.bars.len();
        let mut pos: Vec<Point> = t.joints.iter().map(|j| j.position).collect();
        for (m, &j) in self.movable.iter().enumerate() {
            for a in 0..d {
                pos[j][a] = x[m * d + a];
            }
        }
        let off = self.movable.len() * d;
        let rho_t = &x[off..off + nb];
        let rho_c = &x[off + nb..off + 2 * nb];

        // Equilibrium residual at every non-support joint.
        let mut resid = vec![Point::zeros(); t.joints.len()];
        for (j, joint) in t.joints.iter().enumerate() {
            resid[j] = joint.loads[0];
        }
        for (i, bar) in t.bars.iter().enumerate() {
            let (s, e) = bar.ends;
            let w = rho_t[i] * rho_t[i] - rho_c[i] * rho_c[i];
            let v = pos[e] - pos[s];
            resid[s] += v * w;
            resid[e] -= v * w;
        }
        for (j, joint) in t.joints.iter().enumerate() {
            if joint.kind == JointKind::Support {
                resid[j] = Point::zeros();
            }
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gpos = vec![Point::zeros(); t.joints.len()];
        let (l1, l2) = (self.opts.volume_weight, self.opts.penalty_weight);
        let mut energy = 0.0;
        for (i, bar) in t.bars.iter().enumerate() {
            let (s, e) = bar.ends;
            let v = pos[e] - pos[s];
            let len2 = v.norm_squared();
            let mass = rho_t[i] * rho_t[i] + rho_c[i] * rho_c[i];
            let w = rho_t[i] * rho_t[i] - rho_c[i] * rho_c[i];
            energy += l1 * len2 * mass;
            gpos[e] += v * (2.0 * l1 * mass);
            gpos[s] -= v * (2.0 * l1 * mass);
            // ∂‖r‖²/∂w = 2 r·column.
            let dw = 2.0 * l2 * (resid[s] - resid[e]).dot(&v);
            grad[off + i] = 2.0 * l1 * len2 * rho_t[i] + 2.0 * rho_t[i] * dw;
            grad[off + nb + i] = 2.0 * l1 * len2 * rho_c[i] - 2.0 * rho_c[i] * dw;
            // ∂‖r‖²/∂p through the column entries.
            let dr = (resid[s] - resid[e]) * (2.0 * l2 * w);
            gpos[e] += dr;
            gpos[s] -= dr;
        }
        energy += l2 * resid.iter().map(|r| r.norm_squared()).sum::<f64>();
        for (m, &j) in self.movable.iter().enumerate() {
            for a in 0..d {
                grad[m * d + a] = gpos[j][a];
            }
        }
        energy
    }
}

/// Gradient descent with backtracking on the penalty energy over joint
/// positions and force square roots, then an exact force LP at the final
/// geometry. Returns `None` when the descent does not converge or the final
/// geometry cannot be equilibrated. Single load case only.
pub fn gd_volume_oracle(truss: &Truss, spec: &FunctionalSpec, opts: &GdOptions) -> Result<Option<f64>> {
    if truss.load_cases != 1 {
        return Ok(None);
    }
    let d = truss.dim;
    let mut start = truss.clone();
    let init = solve_alg_a(&start, spec.sigma)?;
    apply_alg_a(&mut start, &init);
    let movable: Vec<usize> = (0..start.joints.len())
        .filter(|&j| start.joints[j].kind == JointKind::Intermediate)
        .collect();
    let nb = start.bars.len();
    let wmax = start.bars.iter().fold(0.0f64, |m, b| m.max(b.force_densities[0].abs()));
    let seed = 1e-4 * wmax.max(1e-12);
    let mut x = Vec::with_capacity(movable.len() * d + 2 * nb);
    for &j in &movable {
        for a in 0..d {
            x.push(start.joints[j].position[a]);
        }
    }
    x.extend(start.bars.iter().map(|b| (b.force_densities[0].max(0.0) + seed).sqrt()));
    x.extend(start.bars.iter().map(|b| ((-b.force_densities[0]).max(0.0) + seed).sqrt()));

    let pen = Penalty { truss: &start, movable: movable.clone(), opts };
    let mut grad = vec![0.0; x.len()];
    let mut energy = pen.eval(&x, &mut grad);
    let mut step = 1e-3;
    let mut history = Vec::with_capacity(opts.max_iterations);
    let mut trial = x.clone();
    let mut trial_grad = grad.clone();
    let mut converged = false;
    for it in 0..opts.max_iterations {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 {
            converged = true;
            break;
        }
        // Armijo backtracking.
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, xi), g) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = xi - step * g;
            }
            for m in 0..movable.len() {
                let p = Point::from_fn(|a, _| if a < d { trial[m * d + a] } else { 0.0 });
                let q = spec.region.bounds.clamp(&p, d);
                for a in 0..d {
                    trial[m * d + a] = q[a];
                }
            }
            let e = pen.eval(&trial, &mut trial_grad);
            if e.is_finite() && e <= energy - 1e-4 * step * gnorm2 {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                energy = e;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        history.push(energy);
        if it >= opts.window {
            let old = history[it - opts.window];
            if old - energy <= opts.tolerance * energy.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        log::debug!("gradient-descent oracle did not converge");
        return Ok(None);
    }
    let mut fin = start.clone();
    for (m, &j) in movable.iter().enumerate() {
        for a in 0..d {
            fin.joints[j].position[a] = x[m * d + a];
        }
    }
    if fin.check().is_err() {
        return Ok(None);
    }
    match solve_alg_a(&fin, spec.sigma) {
        Ok(r) => Ok(Some(r.volume)),
        Err(Error::Unsupportable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
