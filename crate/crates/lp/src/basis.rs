//! Basis inverse representation: an LU factorization plus a product-form
//! eta file accumulated since the last refactorization.

use crate::lu::{LuFactors, Singular};

#[derive(Clone, Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    /// Off-pivot entries of the entering column in basis coordinates.
    entries: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub(crate) struct BasisFactor {
    lu: LuFactors,
    etas: Vec<Eta>,
}

impl BasisFactor {
    pub(crate) fn new(dim: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        Ok(BasisFactor { lu: LuFactors::factorize(dim, columns)?, etas: Vec::new() })
    }

    pub(crate) fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// `B⁻¹ v`, input indexed by row, output by basis position.
    pub(crate) fn ftran(&self, v: &mut [f64]) {
        self.lu.solve(v);
        for eta in &self.etas {
            let xp = v[eta.pos] / eta.pivot;
            v[eta.pos] = xp;
            if xp != 0.0 {
                for &(i, a) in &eta.entries {
                    v[i] -= a * xp;
                }
            }
        }
    }

    /// `B⁻ᵀ v`, input indexed by basis position, output by row.
    pub(crate) fn btran(&self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut acc = v[eta.pos];
            for &(i, a) in &eta.entries {
                acc -= a * v[i];
            }
            v[eta.pos] = acc / eta.pivot;
        }
        self.lu.solve_transpose(v);
    }

    /// Records the replacement of basis position `pos` by a column whose
    /// representation in the current basis is `alpha`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], entries });
    }
}
