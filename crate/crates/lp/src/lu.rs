//! Sparse LU factorization of a square basis matrix.
//!
//! Right-looking Gaussian elimination with Markowitz pivot selection and
//! threshold partial pivoting. The factors are kept in "elimination order":
//! step `k` pivots on `(row_k, col_k)`, records the row multipliers applied
//! below the pivot (the `L` part) and the remaining pivot row (the `U` part).

/// Entries below this magnitude are dropped during elimination.
const DROP_TOL: f64 = 1e-14;
/// A pivot candidate must be at least this large in absolute value.
const ABS_PIVOT_TOL: f64 = 1e-11;
/// Threshold partial pivoting factor relative to the column maximum.
const REL_PIVOT_TOL: f64 = 0.1;
/// How many minimum-count columns the Markowitz search inspects.
const SEARCH_COLS: usize = 4;

#[derive(Clone, Debug)]
struct Step {
    row: usize,
    col: usize,
    pivot: f64,
    /// `(row, multiplier)`: row ← row − multiplier · pivot_row.
    lower: Vec<(usize, f64)>,
    /// Off-pivot entries of the pivot row, `(col, value)`.
    upper: Vec<(usize, f64)>,
}

/// Result of a factorization that ran out of acceptable pivots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Singular {
    /// Columns (basis positions) that received no pivot.
    pub cols: Vec<usize>,
    /// Rows that received no pivot, same length as `cols`.
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LuFactors {
    dim: usize,
    steps: Vec<Step>,
}

impl LuFactors {
    /// Factorizes the `dim × dim` matrix given column by column as
    /// `(row, value)` lists.
    pub fn factorize(dim: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        assert_eq!(columns.len(), dim, "basis must be square");

        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for (c, col) in columns.iter().enumerate() {
            for &(r, v) in col {
                if v.abs() > DROP_TOL {
                    rows[r].push((c, v));
                    col_rows[c].push(r);
                }
            }
        }
        // Merge duplicate entries within a row.
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        for cr in col_rows.iter_mut() {
            cr.sort_unstable();
            cr.dedup();
        }

        let mut col_count: Vec<usize> = col_rows.iter().map(|c| c.len()).collect();
        let mut row_done = vec![false; dim];
        let mut col_done = vec![false; dim];
        let mut work = vec![0.0f64; dim];
        let mut in_work = vec![false; dim];
        let mut steps = Vec::with_capacity(dim);

        for _ in 0..dim {
            let Some((pr, pc)) = select_pivot(&rows, &col_rows, &col_count, &row_done, &col_done)
            else {
                break;
            };
            let pivot = row_entry(&rows[pr], pc).expect("pivot entry exists");

            // Pivot row becomes a row of U.
            let pivot_row = std::mem::take(&mut rows[pr]);
            row_done[pr] = true;
            col_done[pc] = true;
            for &(c, _) in &pivot_row {
                col_count[c] = col_count[c].saturating_sub(1);
            }
            let upper: Vec<(usize, f64)> =
                pivot_row.iter().copied().filter(|&(c, _)| c != pc).collect();

            let mut lower = Vec::new();
            let candidates = std::mem::take(&mut col_rows[pc]);
            for &i in &candidates {
                if row_done[i] {
                    continue;
                }
                let Some(a_ic) = row_entry(&rows[i], pc) else {
                    continue;
                };
                let mult = a_ic / pivot;
                lower.push((i, mult));

                // row_i ← row_i − mult · pivot_row, dropping column pc.
                let row_i = std::mem::take(&mut rows[i]);
                let mut touched = Vec::with_capacity(row_i.len() + upper.len());
                for &(c, v) in &row_i {
                    if c == pc {
                        col_count[c] = col_count[c].saturating_sub(1);
                        continue;
                    }
                    work[c] = v;
                    in_work[c] = true;
                    touched.push(c);
                }
                for &(c, v) in &upper {
                    if !in_work[c] {
                        in_work[c] = true;
                        work[c] = 0.0;
                        touched.push(c);
                        col_rows[c].push(i);
                        col_count[c] += 1;
                    }
                    work[c] -= mult * v;
                }
                let mut new_row = Vec::with_capacity(touched.len());
                for c in touched {
                    in_work[c] = false;
                    let v = work[c];
                    if v.abs() > DROP_TOL {
                        new_row.push((c, v));
                    } else {
                        col_count[c] = col_count[c].saturating_sub(1);
                    }
                }
                new_row.sort_by_key(|e| e.0);
                rows[i] = new_row;
            }

            steps.push(Step { row: pr, col: pc, pivot, lower, upper });
        }

        if steps.len() < dim {
            let cols = (0..dim).filter(|&c| !col_done[c]).collect();
            let rows = (0..dim).filter(|&r| !row_done[r]).collect();
            return Err(Singular { cols, rows });
        }
        Ok(LuFactors { dim, steps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored nonzeros in both factors (pivots included).
    pub fn nnz(&self) -> usize {
        self.steps.iter().map(|s| 1 + s.lower.len() + s.upper.len()).sum()
    }

    /// Solves `B x = rhs` in place. On input `rhs` is indexed by row, on
    /// output by column (basis position).
    pub fn solve(&self, rhs: &mut [f64]) {
        for s in &self.steps {
            let b = rhs[s.row];
            if b != 0.0 {
                for &(i, l) in &s.lower {
                    rhs[i] -= l * b;
                }
            }
        }
        let mut x = vec![0.0; self.dim];
        for s in self.steps.iter().rev() {
            let mut v = rhs[s.row];
            for &(c, u) in &s.upper {
                v -= u * x[c];
            }
            x[s.col] = v / s.pivot;
        }
        rhs.copy_from_slice(&x);
    }

    /// Solves `Bᵀ y = rhs` in place. On input `rhs` is indexed by column,
    /// on output by row.
    pub fn solve_transpose(&self, rhs: &mut [f64]) {
        let mut z = vec![0.0; self.dim];
        for s in &self.steps {
            let v = rhs[s.col] / s.pivot;
            z[s.row] = v;
            if v != 0.0 {
                for &(c, u) in &s.upper {
                    rhs[c] -= u * v;
                }
            }
        }
        for s in self.steps.iter().rev() {
            let mut acc = 0.0;
            for &(i, l) in &s.lower {
                acc += l * z[i];
            }
            z[s.row] -= acc;
        }
        rhs.copy_from_slice(&z);
    }
}

fn row_entry(row: &[(usize, f64)], col: usize) -> Option<f64> {
    row.binary_search_by_key(&col, |e| e.0).ok().map(|k| row[k].1)
}

fn column_max(rows: &[Vec<(usize, f64)>], col_rows: &[usize], row_done: &[bool], col: usize) -> f64 {
    col_rows
        .iter()
        .filter(|&&r| !row_done[r])
        .filter_map(|&r| row_entry(&rows[r], col))
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

fn select_pivot(
    rows: &[Vec<(usize, f64)>],
    col_rows: &[Vec<usize>],
    col_count: &[usize],
    row_done: &[bool],
    col_done: &[bool],
) -> Option<(usize, usize)> {
    // Candidate columns ordered by active count, smallest first.
    let mut cands: Vec<(usize, usize)> = col_count
        .iter()
        .enumerate()
        .filter(|&(c, &n)| !col_done[c] && n > 0)
        .map(|(c, &n)| (n, c))
        .collect();
    if cands.is_empty() {
        return None;
    }
    let take = SEARCH_COLS.min(cands.len());
    cands.select_nth_unstable(take - 1);
    cands.truncate(take);
    cands.sort_unstable();

    let mut best: Option<(usize, usize, usize, f64)> = None; // (cost, row, col, |v|)
    let scan = |c: usize, best: &mut Option<(usize, usize, usize, f64)>| {
        let cmax = column_max(rows, &col_rows[c], row_done, c);
        if cmax < ABS_PIVOT_TOL {
            return;
        }
        for &r in &col_rows[c] {
            if row_done[r] {
                continue;
            }
            let Some(v) = row_entry(&rows[r], c) else {
                continue;
            };
            if v.abs() < ABS_PIVOT_TOL || v.abs() < REL_PIVOT_TOL * cmax {
                continue;
            }
            let cost = (rows[r].len() - 1) * (col_count[c] - 1);
            let better = match *best {
                None => true,
                Some((bc, br, bcol, bv)) => {
                    cost < bc
                        || (cost == bc && v.abs() > bv)
                        || (cost == bc && v.abs() == bv && (c, r) < (bcol, br))
                }
            };
            if better {
                *best = Some((cost, r, c, v.abs()));
            }
        }
    };
    for &(_, c) in &cands {
        scan(c, &mut best);
    }
    if best.is_none() {
        // Fall back to a full scan before declaring singularity.
        for c in 0..col_count.len() {
            if !col_done[c] && col_count[c] > 0 {
                scan(c, &mut best);
            }
        }
    }
    best.map(|(_, r, c, _)| (r, c))
}
