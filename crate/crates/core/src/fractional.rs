//! Fractional diffusion operator.
//!
//! Each stored entry of a normalized adjacency row is raised to the power
//! `gamma` and the row is renormalized to sum to one:
//!
//! ```text
//! w_ij = a_ij^gamma / sum_k a_ik^gamma      (k over the row's support)
//! ```
//!
//! `gamma < 1` flattens a row toward the uniform neighbor average, `gamma > 1`
//! concentrates it on the heaviest neighbor, and `gamma = 1` is plain row
//! normalization. Rows are evaluated as `(a_ij / max_k a_ik)^gamma`, so the
//! largest term is exactly one and no row underflows as a whole at large
//! `gamma`; tied maxima share the mass equally.

use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::ViewAdjacency;

#[derive(Debug, Clone, PartialEq)]
pub struct FracOperator {
    gamma: f64,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Param(format!("gamma must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// Builds the operator over `adj`'s support. Empty rows stay empty.
pub fn build_fractional(adj: &ViewAdjacency, gamma: f64) -> Result<FracOperator> {
    check_gamma(gamma)?;
    let mut weights = Vec::with_capacity(adj.nnz());
    for i in 0..adj.len() {
        let (_, row) = adj.row(i);
        weights.extend(fractional_row(row, gamma));
    }
    Ok(FracOperator {
        gamma,
        offsets: adj.offsets().to_vec(),
        cols: adj.cols().to_vec(),
        weights,
    })
}

/// Fractional reweighting of a single row of positive weights.
pub fn fractional_row(row: &[f64], gamma: f64) -> Vec<f64> {
    let Some(max) = row.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let scaled: Vec<f64> = row.iter().map(|&a| (a / max).powf(gamma)).collect();
    let total: f64 = scaled.iter().sum();
    scaled.into_iter().map(|s| s / total).collect()
}

impl FracOperator {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.weights[r])
    }

    /// Rows with no stored entries; [`FracOperator::apply`] yields zero there.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.offsets[i] == self.offsets[i + 1])
            .collect()
    }

    #[inline]
    pub(crate) fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, w) = self.row(i);
        cols.iter().zip(w).map(|(&j, &w)| w * x[j as usize]).sum()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len() {
            return Err(Error::shape(self.len(), x.len()));
        }
        Ok((0..self.len()).map(|i| self.row_dot(i, x)).collect())
    }

    /// Writes `i,j,weight` lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,weight")?;
        for i in 0..self.len() {
            let (cols, w) = self.row(i);
            for (&j, &w) in cols.iter().zip(w) {
                writeln!(out, "{i},{j},{w:e}")?;
            }
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sym_normalize, Graph};
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_gamma() {
        for g in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(check_gamma(g).is_err());
        }
    }

    #[test]
    fn weighted_row_at_gamma_two() {
        // independent evaluation: 0.36 / 0.44 and 0.04 / 0.44
        let w = fractional_row(&[0.6, 0.2, 0.2], 2.0);
        let expect = [0.36 / 0.44, 0.04 / 0.44, 0.04 / 0.44];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w[0] - 0.8182).abs() < 5e-5);
        assert!((w[1] - 0.0909).abs() < 5e-5);
    }

    #[test]
    fn weighted_row_at_gamma_hundred() {
        let w = fractional_row(&[0.6, 0.2, 0.2], 100.0);
        // (1/3)^100 is about 1.9e-48
        assert!((w[0] - 1.0).abs() < 1e-6);
        assert!(w[1] < 1e-6 && w[2] < 1e-6);
    }

    #[test]
    fn ties_split_evenly() {
        let w = fractional_row(&[0.5, 0.5, 0.1], 1e4);
        assert_eq!(w, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn gamma_one_is_row_normalization() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let adj = sym_normalize(&g, false).unwrap().to_view_adjacency(&g);
        let op = build_fractional(&adj, 1.0).unwrap();
        for i in 0..4 {
            let (_, a) = adj.row(i);
            let s: f64 = a.iter().sum();
            for (w, a) in op.row(i).1.iter().zip(a) {
                assert!((w - a / s).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn apply_checks_length_and_zeroes_empty_rows() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let view = crate::graph::SubgraphView::from_members(&g, vec![0, 1, 2]).unwrap();
        let adj = ViewAdjacency::renormalized(&view, false);
        let op = build_fractional(&adj, 1.0).unwrap();
        assert_eq!(op.empty_rows(), vec![2]);
        assert_eq!(op.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![2.0, 1.0, 0.0]);
        assert!(op.apply(&[1.0]).is_err());
    }

    fn distinct_row() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, 2..10).prop_filter("distinct", |r| {
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[1] - w[0] > 1e-6)
        })
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(row in prop::collection::vec(1e-4f64..1.0, 1..12)) {
            for gamma in [0.2, 0.6, 1.0, 1.4, 2.8, 5.6, 100.0] {
                let s: f64 = fractional_row(&row, gamma).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn argmax_weight_grows_with_gamma(row in distinct_row(), g1 in 0.05f64..8.0, dg in 0.01f64..4.0) {
            let arg = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let lo = fractional_row(&row, g1)[arg];
            let hi = fractional_row(&row, g1 + dg)[arg];
            if lo < 1.0 - 1e-9 {
                prop_assert!(hi > lo);
            } else {
                prop_assert!(hi >= lo);
            }
        }

        #[test]
        fn constant_vector_is_preserved(row in prop::collection::vec(1e-3f64..1.0, 1..10), gamma in 0.1f64..6.0, c in -5.0f64..5.0) {
            let w = fractional_row(&row, gamma);
            let y: f64 = w.iter().map(|w| w * c).sum();
            prop_assert!((y - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }
}
