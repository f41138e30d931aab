//! Primal revised simplex over `[A | I] (x, r) = b` where the `r` block are
//! artificial variables fixed to zero. Phase 1 minimizes the sum of bound
//! infeasibilities of the basic variables (the artificials start basic and
//! infeasible); phase 2 minimizes the true objective from a feasible basis.

use crate::basis::BasisFactor;
use crate::{Basis, LpProblem, LpSolution, LpStatus, SolveOptions, VarStatus};

const PIVOT_TOL: f64 = 1e-9;
/// Pivots smaller than this fraction of the largest entry are refused.
const REL_PIVOT_TOL: f64 = 1e-7;
const NONE: usize = usize::MAX;
/// Relative size of the bound shifts applied when the method stalls.
const PERTURBATION: f64 = 1e-7;
/// A stall under perturbation perturbs again, ten times stronger, up to this
/// many times per solve before falling back to Bland's rule.
const MAX_PERTURBATIONS: usize = 6;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    One,
    Two,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
    Limit,
}

struct Simplex<'a> {
    p: &'a LpProblem,
    opts: &'a SolveOptions,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarStatus>,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    factor: BasisFactor,
    iterations: usize,
    degenerate_run: usize,
    bland: bool,
    /// Exact bounds while the working bounds are perturbed.
    saved_bounds: Option<(Vec<f64>, Vec<f64>)>,
    perturbations: usize,
    /// Devex reference weights approximating each column's steepest-edge norm.
    weights: Vec<f64>,
    /// Reduced costs, kept current through pivots while `priced` names the
    /// phase they belong to.
    d: Vec<f64>,
    priced: Option<Phase>,
}

pub(crate) fn solve(p: &LpProblem, opts: &SolveOptions, hint: Option<&Basis>) -> LpSolution {
    let mut s = Simplex::new(p, opts, hint);
    let max_iters = opts.max_iters.unwrap_or(50 * (s.m + s.n));
    let status = s.run(max_iters);
    s.solution(status)
}

impl<'a> Simplex<'a> {
    fn new(p: &'a LpProblem, opts: &'a SolveOptions, hint: Option<&Basis>) -> Self {
        let (n, m) = (p.num_vars(), p.num_rows());
        let mut lo = p.lower().to_vec();
        let mut hi = p.upper().to_vec();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(0.0, m));
        let mut cost = p.objective().to_vec();
        cost.extend(std::iter::repeat_n(0.0, m));

        let mut x = vec![0.0; n + m];
        let mut state = vec![VarStatus::Basic; n + m];
        for j in 0..n {
            let wanted = hint.and_then(|h| h.status.get(j).copied());
            let st = match wanted {
                Some(VarStatus::AtUpper) if hi[j].is_finite() => VarStatus::AtUpper,
                Some(VarStatus::AtLower) if lo[j].is_finite() => VarStatus::AtLower,
                // Nonbasic at zero, between its bounds.
                _ if lo[j] < 0.0 && hi[j] > 0.0 => VarStatus::Free,
                _ if lo[j].is_finite() => VarStatus::AtLower,
                _ if hi[j].is_finite() => VarStatus::AtUpper,
                _ => VarStatus::Free,
            };
            state[j] = st;
            x[j] = match st {
                VarStatus::AtLower => lo[j],
                VarStatus::AtUpper => hi[j],
                _ => 0.0,
            };
        }
        let head: Vec<usize> = (n..n + m).collect();
        let mut pos_of = vec![NONE; n + m];
        for (i, &h) in head.iter().enumerate() {
            pos_of[h] = i;
        }
        let identity: Vec<Vec<(usize, f64)>> = (0..m).map(|i| vec![(i, 1.0)]).collect();
        let factor = BasisFactor::new(m, &identity).expect("identity is nonsingular");

        let mut s = Simplex {
            p,
            opts,
            n,
            m,
            lo,
            hi,
            cost,
            x,
            state,
            head,
            pos_of,
            factor,
            iterations: 0,
            degenerate_run: 0,
            bland: false,
            saved_bounds: None,
            perturbations: 0,
            weights: vec![1.0; n + m],
            d: vec![0.0; n + m],
            priced: None,
        };
        if let Some(h) = hint {
            s.crash(h);
        }
        s.refactor();
        s
    }

    /// Installs the hinted basis directly. A basis that turns out singular is
    /// patched with artificials by the following refactorization.
    fn crash(&mut self, hint: &Basis) {
        let structural = (0..self.n.min(hint.status.len())).filter(|&j| hint.status[j] == VarStatus::Basic);
        let artificial = (0..self.m.min(hint.rows.len())).filter(|&r| hint.rows[r] == VarStatus::Basic).map(|r| self.n + r);
        let basics: Vec<usize> = structural.chain(artificial).collect();
        if basics.len() != self.m {
            return;
        }
        for &h in &self.head {
            self.pos_of[h] = NONE;
            self.state[h] = VarStatus::AtLower;
            self.x[h] = 0.0;
        }
        for (r, &j) in basics.iter().enumerate() {
            self.head[r] = j;
            self.pos_of[j] = r;
            self.state[j] = VarStatus::Basic;
        }
    }

    fn load_column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for (r, v) in self.p.column(j) {
                out[r] = v;
            }
        } else {
            out[j - self.n] = 1.0;
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.p.column(j).map(|(r, v)| v * y[r]).sum()
        } else {
            y[j - self.n]
        }
    }

    fn basis_columns(&self) -> Vec<Vec<(usize, f64)>> {
        self.head
            .iter()
            .map(|&j| {
                if j < self.n {
                    self.p.column(j).collect()
                } else {
                    vec![(j - self.n, 1.0)]
                }
            })
            .collect()
    }

    /// Fresh factorization of the current basis. Columns that turn out to be
    /// dependent are swapped for artificials on the uncovered rows.
    fn refactor(&mut self) {
        loop {
            match BasisFactor::new(self.m, &self.basis_columns()) {
                Ok(f) => {
                    self.factor = f;
                    self.priced = None;
                    break;
                }
                Err(sing) => {
                    log::debug!("basis singular, replacing {} columns", sing.cols.len());
                    for (&c, &r) in sing.cols.iter().zip(&sing.rows) {
                        let out = self.head[c];
                        self.pos_of[out] = NONE;
                        self.make_nonbasic_nearest(out);
                        let art = self.n + r;
                        self.head[c] = art;
                        self.pos_of[art] = c;
                        self.state[art] = VarStatus::Basic;
                    }
                }
            }
        }
        self.compute_basic_values();
    }

    fn make_nonbasic_nearest(&mut self, j: usize) {
        let (l, h, v) = (self.lo[j], self.hi[j], self.x[j]);
        let st = if l.is_finite() && (!h.is_finite() || (v - l).abs() <= (h - v).abs()) {
            VarStatus::AtLower
        } else if h.is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        };
        self.state[j] = st;
        self.x[j] = match st {
            VarStatus::AtLower => l,
            VarStatus::AtUpper => h,
            _ => v,
        };
    }

    fn compute_basic_values(&mut self) {
        let mut rhs = self.p.rhs().to_vec();
        for j in 0..self.n + self.m {
            if self.pos_of[j] == NONE && self.x[j] != 0.0 {
                let xj = self.x[j];
                if j < self.n {
                    for (r, v) in self.p.column(j) {
                        rhs[r] -= v * xj;
                    }
                } else {
                    rhs[j - self.n] -= xj;
                }
            }
        }
        self.factor.ftran(&mut rhs);
        for (i, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[i];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let tol = self.opts.feas_tol;
        let v = self.x[j];
        if v < self.lo[j] - tol {
            -1.0
        } else if v > self.hi[j] + tol {
            1.0
        } else {
            0.0
        }
    }

    fn primal_feasible(&self) -> bool {
        self.head.iter().all(|&j| self.infeasibility(j) == 0.0)
    }

    fn run(&mut self, max_iters: usize) -> LpStatus {
        let mut phase = if self.primal_feasible() { Phase::Two } else { Phase::One };
        loop {
            match self.iterate(phase, max_iters) {
                Step::Limit => return LpStatus::IterationLimit,
                Step::Pivoted => {
                    if self.degenerate_run >= self.opts.stall_limit {
                        self.degenerate_run = 0;
                        if self.perturbations < MAX_PERTURBATIONS {
                            log::debug!("stalled at iteration {}, perturbing bounds", self.iterations);
                            self.perturb_bounds();
                        } else if !self.bland {
                            log::debug!("stalled at iteration {}, using Bland's rule", self.iterations);
                            self.bland = true;
                        }
                    }
                    if self.factor.num_updates() >= self.opts.refactor_interval {
                        self.refactor();
                    }
                    match phase {
                        Phase::One if self.primal_feasible() => {
                            self.refactor();
                            if self.primal_feasible() {
                                log::trace!("phase 1 done after {} iterations", self.iterations);
                                phase = Phase::Two;
                            }
                        }
                        Phase::Two if !self.primal_feasible() => phase = Phase::One,
                        _ => {}
                    }
                }
                Step::Optimal => {
                    // Confirm on a fresh factorization before trusting the verdict.
                    if self.factor.num_updates() > 0 {
                        self.refactor();
                        phase = if self.primal_feasible() { Phase::Two } else { Phase::One };
                        continue;
                    }
                    match phase {
                        Phase::One if self.primal_feasible() => phase = Phase::Two,
                        // The perturbed problem is a relaxation, so this is final.
                        Phase::One => return LpStatus::Infeasible,
                        Phase::Two if self.saved_bounds.is_some() => {
                            self.restore_bounds();
                            phase = if self.primal_feasible() { Phase::Two } else { Phase::One };
                        }
                        Phase::Two => return LpStatus::Optimal,
                    }
                }
                Step::Unbounded => {
                    if self.factor.num_updates() > 0 {
                        // Re-derive the ray on a fresh factorization first.
                        self.refactor();
                        phase = if self.primal_feasible() { Phase::Two } else { Phase::One };
                        continue;
                    }
                    if phase == Phase::Two {
                        return LpStatus::Unbounded;
                    }
                    return LpStatus::Infeasible;
                }
            }
        }
    }

    /// Widens every finite bound by a small deterministic pseudo-random
    /// amount so degenerate vertices become nondegenerate. The exact bounds
    /// are kept aside once, however often this runs.
    fn perturb_bounds(&mut self) {
        self.perturbations += 1;
        if self.saved_bounds.is_none() {
            self.saved_bounds = Some((self.lo.clone(), self.hi.clone()));
        }
        let strength = PERTURBATION * 10f64.powi(self.perturbations as i32 - 1);
        let mut state: u64 = 0x9e37_79b9_7f4a_7c15 ^ self.perturbations as u64;
        for j in 0..self.n + self.m {
            // xorshift64*
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            let u = (state.wrapping_mul(0x2545_f491_4f6c_dd1d) >> 11) as f64 / (1u64 << 53) as f64;
            let scale = strength * (1.0 + u);
            if self.lo[j].is_finite() {
                self.lo[j] -= scale * (1.0 + self.lo[j].abs());
            }
            if self.hi[j].is_finite() {
                self.hi[j] += scale * (1.0 + self.hi[j].abs());
            }
            self.snap_nonbasic(j);
        }
        self.compute_basic_values();
    }

    fn restore_bounds(&mut self) {
        if let Some((lo, hi)) = self.saved_bounds.take() {
            self.lo = lo;
            self.hi = hi;
            for j in 0..self.n + self.m {
                self.snap_nonbasic(j);
            }
            self.bland = false;
            self.degenerate_run = 0;
            self.refactor();
        }
    }

    fn snap_nonbasic(&mut self, j: usize) {
        match self.state[j] {
            VarStatus::AtLower => self.x[j] = self.lo[j],
            VarStatus::AtUpper => self.x[j] = self.hi[j],
            _ => {}
        }
    }

    fn basic_costs(&self, phase: Phase) -> Vec<f64> {
        self.head
            .iter()
            .map(|&j| match phase {
                Phase::One => self.infeasibility(j),
                Phase::Two => self.cost[j],
            })
            .collect()
    }

    fn prices(&self, phase: Phase) -> Vec<f64> {
        let mut y = self.basic_costs(phase);
        self.factor.btran(&mut y);
        y
    }

    /// One pricing, ratio test and update.
    fn reprice(&mut self, phase: Phase) {
        let y = self.prices(phase);
        for j in 0..self.n + self.m {
            self.d[j] = if self.pos_of[j] != NONE {
                0.0
            } else {
                let c = if phase == Phase::Two { self.cost[j] } else { 0.0 };
                c - self.column_dot(j, &y)
            };
        }
        self.priced = Some(phase);
    }

    fn iterate(&mut self, phase: Phase, max_iters: usize) -> Step {
        // Phase 1 costs follow the infeasibility pattern, so they are rebuilt.
        if phase == Phase::One || self.priced != Some(phase) {
            self.reprice(phase);
        }
        let tol = self.opts.opt_tol;

        // Pricing.
        let mut entering: Option<(usize, f64, f64, f64)> = None; // (var, d, dir, score)
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NONE || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.d[j];
            let dir = match self.state[j] {
                VarStatus::AtLower if d < -tol => 1.0,
                VarStatus::AtUpper if d > tol => -1.0,
                VarStatus::Free if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                entering = Some((j, d, dir, 0.0));
                break;
            }
            let score = d * d / self.weights[j];
            if entering.is_none_or(|(_, _, _, best)| score > best) {
                entering = Some((j, d, dir, score));
            }
        }
        let Some((q, dq, dir, _)) = entering else {
            return Step::Optimal;
        };
        if self.iterations >= max_iters {
            return Step::Limit;
        }

        let mut alpha = vec![0.0; self.m];
        self.load_column(q, &mut alpha);
        self.factor.ftran(&mut alpha);

        let range = if dir > 0.0 { self.hi[q] - self.x[q] } else { self.x[q] - self.lo[q] };
        let choice = match phase {
            Phase::Two if !self.bland => self.ratio_harris(&alpha, dir),
            _ => self.ratio_textbook(&alpha, dir, phase),
        };
        let (theta, leave) = match choice {
            Some((t, r, upper)) if t < range => (t, Some((r, upper))),
            _ if range.is_finite() => (range, None),
            _ => {
                return Step::Unbounded;
            }
        };

        self.iterations += 1;
        if theta * dq.abs() <= 1e-12 {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }

        self.x[q] += dir * theta;
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                self.x[self.head[i]] -= dir * theta * a;
            }
        }
        match leave {
            None => {
                let (st, v) = if dir > 0.0 {
                    (VarStatus::AtUpper, self.hi[q])
                } else {
                    (VarStatus::AtLower, self.lo[q])
                };
                self.state[q] = st;
                self.x[q] = v;
            }
            Some((r, upper)) => {
                self.update_pricing(phase, q, r, alpha[r]);
                let out = self.head[r];
                let (st, v) = if upper {
                    (VarStatus::AtUpper, self.hi[out])
                } else {
                    (VarStatus::AtLower, self.lo[out])
                };
                self.state[out] = st;
                self.x[out] = v;
                self.pos_of[out] = NONE;
                self.head[r] = q;
                self.pos_of[q] = r;
                self.state[q] = VarStatus::Basic;
                self.factor.update(r, &alpha);
            }
        }
        Step::Pivoted
    }

    /// Updates reduced costs (phase 2) and Devex weights from the pivot row
    /// for entering `q` replacing the basic variable of row `r`.
    fn update_pricing(&mut self, phase: Phase, q: usize, r: usize, pivot: f64) {
        let track_d = phase == Phase::Two && self.priced == Some(phase);
        if !track_d && self.bland {
            return;
        }
        let mut rho = vec![0.0; self.m];
        rho[r] = 1.0;
        self.factor.btran(&mut rho);
        let (wq, dq) = (self.weights[q], self.d[q]);
        let out = self.head[r];
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NONE || j == q {
                continue;
            }
            let ratio = self.column_dot(j, &rho) / pivot;
            if ratio != 0.0 {
                if track_d {
                    self.d[j] -= dq * ratio;
                }
                if self.lo[j] != self.hi[j] {
                    self.weights[j] = self.weights[j].max(ratio * ratio * wq);
                }
            }
        }
        if track_d {
            self.d[q] = 0.0;
            self.d[out] = -dq / pivot;
        }
        self.weights[out] = (wq / (pivot * pivot)).max(1.0);
        if self.weights[out] > 1e6 || wq > 1e6 {
            // The reference framework has drifted too far; start a new one.
            self.weights.iter_mut().for_each(|w| *w = 1.0);
        }
    }

    /// Exact minimum-ratio test. In phase 1 a basic variable outside its
    /// bounds may move freely away from feasibility and stops when it reaches
    /// the violated bound.
    fn ratio_textbook(&self, alpha: &[f64], dir: f64, phase: Phase) -> Option<(f64, usize, bool)> {
        let tol = self.opts.feas_tol;
        let piv_tol = pivot_tolerance(alpha);
        let mut best: Option<(f64, usize, f64, bool)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= piv_tol {
                continue;
            }
            let j = self.head[i];
            let rate = -dir * a;
            let v = self.x[j];
            let (l, h) = (self.lo[j], self.hi[j]);
            let (t, up) = if phase == Phase::One && v < l - tol {
                if rate > 0.0 {
                    ((l - v) / rate, false)
                } else {
                    continue;
                }
            } else if phase == Phase::One && v > h + tol {
                if rate < 0.0 {
                    ((v - h) / -rate, true)
                } else {
                    continue;
                }
            } else if rate < 0.0 && l.is_finite() {
                ((v - l) / -rate, false)
            } else if rate > 0.0 && h.is_finite() {
                ((h - v) / rate, true)
            } else {
                continue;
            };
            let t = t.max(0.0);
            let better = match best {
                None => true,
                Some((bt, bi, ba, _)) => {
                    if self.bland {
                        t < bt || (t == bt && j < self.head[bi])
                    } else {
                        t < bt || (t == bt && a.abs() > ba)
                    }
                }
            };
            if better {
                best = Some((t, i, a.abs(), up));
            }
        }
        // Rows skipped for their small pivot must still not be driven past
        // their bounds.
        let cap = best.map_or(f64::INFINITY, |b| b.0);
        let mut small: Option<(f64, usize, bool)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL || a.abs() > piv_tol {
                continue;
            }
            let j = self.head[i];
            let rate = -dir * a;
            let v = self.x[j];
            if v < self.lo[j] - tol || v > self.hi[j] + tol {
                continue;
            }
            let (relaxed, up) = if rate < 0.0 && self.lo[j].is_finite() {
                ((v - self.lo[j] + tol) / -rate, false)
            } else if rate > 0.0 && self.hi[j].is_finite() {
                ((self.hi[j] - v + tol) / rate, true)
            } else {
                continue;
            };
            if relaxed < cap && small.is_none_or(|s| relaxed < s.0) {
                small = Some((relaxed, i, up));
            }
        }
        if let Some((_, i, up)) = small {
            let j = self.head[i];
            let rate = (-dir * alpha[i]).abs();
            let t = if up { self.hi[j] - self.x[j] } else { self.x[j] - self.lo[j] } / rate;
            return Some((t.max(0.0), i, up));
        }
        best.map(|(t, i, _, up)| (t, i, up))
    }

    /// Harris two-pass ratio test: bounds are relaxed by the feasibility
    /// tolerance to find the step limit, then the largest pivot among the
    /// rows blocking within that limit is taken.
    fn ratio_harris(&self, alpha: &[f64], dir: f64) -> Option<(f64, usize, bool)> {
        let tol = self.opts.feas_tol;
        // Every row bounds the step; the largest pivot among the blocking
        // rows is taken, so tiny pivots only leave when nothing else blocks.
        let piv_tol = PIVOT_TOL;
        let mut limit = f64::INFINITY;
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= piv_tol {
                continue;
            }
            let j = self.head[i];
            let rate = -dir * a;
            if rate < 0.0 && self.lo[j].is_finite() {
                limit = limit.min((self.x[j] - self.lo[j] + tol) / -rate);
            } else if rate > 0.0 && self.hi[j].is_finite() {
                limit = limit.min((self.hi[j] - self.x[j] + tol) / rate);
            }
        }
        if !limit.is_finite() {
            return None;
        }
        let limit = limit.max(0.0);
        let mut best: Option<(f64, usize, f64, bool)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= piv_tol {
                continue;
            }
            let j = self.head[i];
            let rate = -dir * a;
            let (t, up) = if rate < 0.0 && self.lo[j].is_finite() {
                ((self.x[j] - self.lo[j]) / -rate, false)
            } else if rate > 0.0 && self.hi[j].is_finite() {
                ((self.hi[j] - self.x[j]) / rate, true)
            } else {
                continue;
            };
            if t > limit {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bi, ba, _)) => a.abs() > ba || (a.abs() == ba && j < self.head[bi]),
            };
            if better {
                best = Some((t.max(0.0), i, a.abs(), up));
            }
        }
        best.map(|(t, i, _, up)| (t, i, up))
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let y = self.prices(Phase::Two);
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let reduced_costs = (0..self.n)
            .map(|j| if self.pos_of[j] != NONE { 0.0 } else { self.cost[j] - self.column_dot(j, &y) })
            .collect();
        LpSolution {
            status,
            objective_value: self.p.objective_value(&x),
            x,
            iterations: self.iterations,
            duals: y,
            reduced_costs,
            basis: Basis { status: self.state[..self.n].to_vec(), rows: self.state[self.n..].to_vec() },
        }
    }
}

fn pivot_tolerance(alpha: &[f64]) -> f64 {
    let amax = alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    PIVOT_TOL.max(REL_PIVOT_TOL * amax)
}
