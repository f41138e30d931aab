//! Nodal equilibrium of a pin-jointed truss over its free degrees of freedom.
//!
//! For a bar `(j, k)` the force-density column carries `p_k − p_j` at joint
//! `j`'s rows and `p_j − p_k` at joint `k`'s rows; supports have no rows.
//! With that rule `Cᵀw = −f` is equilibrium and positive `w` is tension.

use crate::error::{Error, Result};
use crate::model::{JointKind, Truss};

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSystem {
    pub dim: usize,
    pub num_rows: usize,
    /// First row of each joint's block of `dim` rows; `None` for supports.
    pub joint_row: Vec<Option<usize>>,
    /// Column of the transposed matrix per bar, as `(row, value)` pairs.
    pub columns: Vec<Vec<(usize, f64)>>,
    /// External forces restricted to the free rows, one vector per case.
    pub loads: Vec<Vec<f64>>,
}

impl EquilibriumSystem {
    /// `Mᵀ v` for a per-bar vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_rows];
        for (col, &x) in self.columns.iter().zip(v) {
            for &(r, a) in col {
                out[r] += a * x;
            }
        }
        out
    }

    /// `‖Mᵀv + f‖∞` for load case `case`.
    pub fn residual(&self, v: &[f64], case: usize) -> f64 {
        self.apply(v)
            .iter()
            .zip(&self.loads[case])
            .fold(0.0f64, |m, (a, f)| m.max((a + f).abs()))
    }
}

fn free_rows(truss: &Truss) -> (Vec<Option<usize>>, usize) {
    let mut next = 0;
    let rows = truss
        .joints
        .iter()
        .map(|j| {
            if j.kind == JointKind::Support {
                None
            } else {
                next += truss.dim;
                Some(next - truss.dim)
            }
        })
        .collect();
    (rows, next)
}

fn assemble(truss: &Truss, normalize: bool) -> Result<EquilibriumSystem> {
    let d = truss.dim;
    let (joint_row, num_rows) = free_rows(truss);
    let mut columns = Vec::with_capacity(truss.bars.len());
    for (i, bar) in truss.bars.iter().enumerate() {
        let (j, k) = bar.ends;
        let e = truss.bar_vector(i);
        let len = e.norm();
        if len == 0.0 {
            return Err(Error::ZeroLengthBar(i));
        }
        let e = if normalize { e / len } else { e };
        let mut col = Vec::with_capacity(2 * d);
        if let Some(r) = joint_row[j] {
            for a in 0..d {
                col.push((r + a, e[a]));
            }
        }
        if let Some(r) = joint_row[k] {
            for a in 0..d {
                col.push((r + a, -e[a]));
            }
        }
        columns.push(col);
    }
    let loads = (0..truss.load_cases)
        .map(|case| {
            let mut f = vec![0.0; num_rows];
            for (j, joint) in truss.joints.iter().enumerate() {
                if let Some(r) = joint_row[j] {
                    for a in 0..d {
                        f[r + a] = joint.loads[case][a];
                    }
                }
            }
            f
        })
        .collect();
    Ok(EquilibriumSystem { dim: d, num_rows, joint_row, columns, loads })
}

/// Force-density form: columns are coordinate differences.
pub fn assemble_c(truss: &Truss) -> Result<EquilibriumSystem> {
    assemble(truss, false)
}

/// Direction-cosine form: columns are unit bar directions, so `Bᵀs` with
/// axial forces `s = w·l` equals `Cᵀw`.
pub fn assemble_b(truss: &Truss) -> Result<EquilibriumSystem> {
    assemble(truss, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bar, Joint, Point};

    fn one_bar(scale: f64) -> Truss {
        Truss {
            dim: 2,
            load_cases: 1,
            joints: vec![
                Joint { id: 0, position: Point::zeros(), kind: JointKind::Support, loads: vec![Point::zeros()] },
                Joint {
                    id: 1,
                    position: Point::new(scale, 0.0, 0.0),
                    kind: JointKind::Loaded,
                    loads: vec![Point::new(1.0, 0.0, 0.0)],
                },
            ],
            bars: vec![Bar::new(0, 1, 1)],
        }
    }

    #[test]
    fn single_bar_column() {
        let c = assemble_c(&one_bar(1.0)).unwrap();
        assert_eq!(c.num_rows, 2);
        assert_eq!(c.columns[0], vec![(0, -1.0), (1, 0.0)]);
        let b = assemble_b(&one_bar(1.0)).unwrap();
        assert_eq!(b.columns, c.columns);
    }

    #[test]
    fn scaled_bar_keeps_unit_direction() {
        let t = one_bar(2.0);
        assert_eq!(assemble_b(&t).unwrap().columns[0], vec![(0, -1.0), (1, 0.0)]);
        assert_eq!(assemble_c(&t).unwrap().columns[0], vec![(0, -2.0), (1, 0.0)]);
    }

    #[test]
    fn all_supports_give_empty_system() {
        let mut t = one_bar(1.0);
        t.joints[1].kind = JointKind::Support;
        let c = assemble_c(&t).unwrap();
        assert_eq!(c.num_rows, 0);
        assert!(c.loads[0].is_empty());
    }

    #[test]
    fn reversed_orientation_same_residual() {
        let t = one_bar(1.0);
        let mut r = t.clone();
        r.bars[0].ends = (1, 0);
        let (c, cr) = (assemble_c(&t).unwrap(), assemble_c(&r).unwrap());
        // Force densities are orientation independent with this column rule.
        assert_eq!(c.residual(&[1.0], 0), 0.0);
        assert_eq!(cr.residual(&[1.0], 0), 0.0);
        assert_eq!(c.residual(&[0.3], 0), cr.residual(&[0.3], 0));
    }

    #[test]
    fn zero_length_rejected() {
        let mut t = one_bar(1.0);
        t.joints[1].position = Point::zeros();
        assert!(matches!(assemble_c(&t), Err(Error::ZeroLengthBar(0))));
    }
}
