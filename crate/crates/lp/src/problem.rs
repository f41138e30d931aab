use crate::LpError;

/// A linear program in bounded equality form:
///
/// ```text
/// minimize    cᵀx
/// subject to  A x = b
///             lo ≤ x ≤ hi        (infinite bounds allowed)
/// ```
///
/// The constraint matrix is stored column-wise, which is the access pattern
/// the simplex pricing and FTRAN steps need.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    num_rows: usize,
    obj: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
}

impl LpProblem {
    /// An empty problem with `num_rows` equality rows (all right-hand sides
    /// zero) and no variables.
    pub fn new(num_rows: usize) -> Self {
        LpProblem {
            num_rows,
            col_start: vec![0],
            rhs: vec![0.0; num_rows],
            ..Default::default()
        }
    }

    /// Builds a problem from dense vectors and `(row, col, value)` triplets.
    /// Duplicate triplets are summed.
    pub fn from_triplets(
        obj: Vec<f64>,
        triplets: &[(usize, usize, f64)],
        rhs: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self, LpError> {
        let n = obj.len();
        if lo.len() != n || hi.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "{} objective coefficients but {} lower / {} upper bounds",
                n,
                lo.len(),
                hi.len()
            )));
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= rhs.len() || c >= n {
                return Err(LpError::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside a {} x {} matrix",
                    rhs.len(),
                    n
                )));
            }
            cols[c].push((r, v));
        }
        let mut p = LpProblem::new(rhs.len());
        p.rhs = rhs;
        for (j, col) in cols.into_iter().enumerate() {
            p.try_add_column(obj[j], lo[j], hi[j], col)?;
        }
        Ok(p)
    }

    /// Appends a variable and returns its index.
    ///
    /// Panics on malformed input (row out of range, `lo > hi`, NaN); use
    /// [`LpProblem::try_add_column`] to get an error instead.
    pub fn add_column(
        &mut self,
        cost: f64,
        lo: f64,
        hi: f64,
        entries: impl IntoIterator<Item = (usize, f64)>,
    ) -> usize {
        self.try_add_column(cost, lo, hi, entries).expect("malformed LP column")
    }

    pub fn try_add_column(
        &mut self,
        cost: f64,
        lo: f64,
        hi: f64,
        entries: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<usize, LpError> {
        let j = self.obj.len();
        if cost.is_nan() || !cost.is_finite() {
            return Err(LpError::NonFinite(format!("objective coefficient of variable {j}")));
        }
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
        {
            return Err(LpError::InvalidBounds { var: j, lo, hi });
        }
        let mut col: Vec<(usize, f64)> = entries.into_iter().collect();
        for &(r, v) in &col {
            if r >= self.num_rows {
                return Err(LpError::DimensionMismatch(format!(
                    "row {r} out of range for {} rows",
                    self.num_rows
                )));
            }
            if !v.is_finite() {
                return Err(LpError::NonFinite(format!("matrix entry ({r}, {j})")));
            }
        }
        col.sort_by_key(|e| e.0);
        col.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        for (r, v) in col {
            if v != 0.0 {
                self.row_idx.push(r);
                self.vals.push(v);
            }
        }
        self.col_start.push(self.row_idx.len());
        self.obj.push(cost);
        self.lo.push(lo);
        self.hi.push(hi);
        Ok(j)
    }

    pub fn set_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] = value;
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.obj
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    /// Nonzeros of column `j` as `(row, value)` pairs, rows ascending.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.col_start[j], self.col_start[j + 1]);
        self.row_idx[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `cᵀx`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// `A x` as a dense vector.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; self.num_rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (r, v) in self.column(j) {
                    ax[r] += v * xj;
                }
            }
        }
        ax
    }

    /// `‖A x − b‖∞`.
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        self.row_activity(x)
            .iter()
            .zip(&self.rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest violation of `lo ≤ x ≤ hi`.
    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .fold(0.0f64, |m, (&v, (&l, &h))| m.max(l - v).max(v - h))
    }
}
