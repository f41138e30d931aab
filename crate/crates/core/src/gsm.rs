//! Minimum-volume member forces on a fixed geometry.
//!
//! Every force density is split as `w = p − q` with `p, q ≥ 0`. A bar that
//! carries a single load case and no minimum area pays `l²(p + q)/σ` directly.
//! Otherwise it gets an explicit area variable `α ≥ l(p^k + q^k)/σ` for every
//! case (and `α ≥ min_area`), priced at `l`.

use trussforge_lp::{Basis, LpBackend, LpProblem, LpStatus, RevisedSimplex, SolveOptions};

use crate::equilibrium::assemble_c;
use crate::error::{Error, Result};
use crate::model::Truss;

#[derive(Clone, Debug, PartialEq)]
pub struct AlgAResult {
    /// `[bar][case]`, positive is tension.
    pub force_densities: Vec<Vec<f64>>,
    pub areas: Vec<f64>,
    pub volume: f64,
    pub governing_case: Vec<usize>,
    /// Final basis, reusable as a warm start on the same topology.
    pub basis: Basis,
    pub lp_iterations: usize,
}

/// Column layout of the force LP for one bar.
#[derive(Clone, Copy)]
enum BarColumns {
    Direct { p: usize },
    WithArea { alpha: usize, p: usize },
}

pub fn solve_alg_a(truss: &Truss, sigma: f64) -> Result<AlgAResult> {
    solve_alg_a_with(truss, sigma, &RevisedSimplex, None)
}

pub fn solve_alg_a_with(
    truss: &Truss,
    sigma: f64,
    backend: &dyn LpBackend,
    hint: Option<&Basis>,
) -> Result<AlgAResult> {
    let sys = assemble_c(truss)?;
    let k_count = truss.load_cases;
    let nbars = truss.bars.len();
    let lengths: Vec<f64> = (0..nbars).map(|i| truss.bar_length(i)).collect();
    let needs_area = |i: usize| k_count > 1 || truss.bars[i].min_area > 0.0;
    let area_rows: usize = (0..nbars).filter(|&i| needs_area(i)).count() * k_count;
    let eq_rows = sys.num_rows * k_count;
    let mut lp = LpProblem::new(eq_rows + area_rows);
    for k in 0..k_count {
        for (r, f) in sys.loads[k].iter().enumerate() {
            lp.set_rhs(k * sys.num_rows + r, -f);
        }
    }

    let inf = f64::INFINITY;
    let mut layout = Vec::with_capacity(nbars);
    let mut next_area_row = eq_rows;
    for i in 0..nbars {
        let l = lengths[i];
        let col = &sys.columns[i];
        let shifted = |k: usize, sign: f64| col.iter().map(move |&(r, v)| (k * sys.num_rows + r, sign * v));
        if !needs_area(i) {
            let c = l * l / sigma;
            let p = lp.add_column(c, 0.0, inf, shifted(0, 1.0));
            lp.add_column(c, 0.0, inf, shifted(0, -1.0));
            layout.push(BarColumns::Direct { p });
            continue;
        }
        let first_row = next_area_row;
        next_area_row += k_count;
        let alpha = lp.add_column(
            l,
            truss.bars[i].min_area,
            inf,
            (0..k_count).map(|k| (first_row + k, sigma)),
        );
        let mut p = 0;
        for k in 0..k_count {
            let row = first_row + k;
            let pk = lp.add_column(0.0, 0.0, inf, shifted(k, 1.0).chain([(row, -l)]));
            lp.add_column(0.0, 0.0, inf, shifted(k, -1.0).chain([(row, -l)]));
            lp.add_column(0.0, 0.0, inf, [(row, -1.0)]);
            if k == 0 {
                p = pk;
            }
        }
        layout.push(BarColumns::WithArea { alpha, p });
    }

    let opts = SolveOptions::default();
    let sol = backend.solve(&lp, &opts, hint);
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Unsupportable(format!(
                "no bar forces equilibrate the loads on this topology ({} bars, {} free DOFs)",
                nbars, sys.num_rows
            )))
        }
        LpStatus::Unbounded => return Err(Error::Internal("force LP reported unbounded".into())),
        LpStatus::IterationLimit => {
            return Err(Error::Internal(format!("force LP hit its iteration limit ({})", sol.iterations)))
        }
    }

    let mut force_densities = Vec::with_capacity(nbars);
    let mut areas = Vec::with_capacity(nbars);
    let mut governing_case = Vec::with_capacity(nbars);
    for i in 0..nbars {
        let w: Vec<f64> = match layout[i] {
            BarColumns::Direct { p } => vec![sol.x[p] - sol.x[p + 1]],
            BarColumns::WithArea { p, .. } => {
                (0..k_count).map(|k| sol.x[p + 3 * k] - sol.x[p + 3 * k + 1]).collect()
            }
        };
        let mut m = 0;
        for k in 1..k_count {
            if w[k].abs() > w[m].abs() {
                m = k;
            }
        }
        let force_area = w[m].abs() * lengths[i] / sigma;
        areas.push(force_area.max(truss.bars[i].min_area));
        governing_case.push(m);
        force_densities.push(w);
        if let BarColumns::WithArea { alpha, .. } = layout[i] {
            debug_assert!(sol.x[alpha] + 1e-9 >= force_area);
        }
    }
    let volume = areas.iter().zip(&lengths).map(|(a, l)| a * l).sum();
    for k in 0..k_count {
        let wk: Vec<f64> = force_densities.iter().map(|w| w[k]).collect();
        let res = sys.residual(&wk, k);
        if res > 1e-8 {
            log::warn!("load case {k}: equilibrium residual {res:.3e} after force LP");
        }
    }
    Ok(AlgAResult { force_densities, areas, volume, governing_case, basis: sol.basis, lp_iterations: sol.iterations })
}

/// Writes forces and areas back onto the bars.
pub fn apply_alg_a(truss: &mut Truss, res: &AlgAResult) {
    for (i, bar) in truss.bars.iter_mut().enumerate() {
        bar.force_densities = res.force_densities[i].clone();
        bar.area = res.areas[i];
        bar.governing_case = res.governing_case[i];
    }
}
