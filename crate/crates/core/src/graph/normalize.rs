use super::{Graph, SubgraphView};
use crate::error::{Error, Result};

/// Symmetric normalization `D^{-1/2} A D^{-1/2}` of a [`Graph`], stored as
/// per-edge weights aligned with the graph's neighbor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    values: Vec<f64>,
    /// Diagonal weights `1/d_i` when self-loops were added.
    self_values: Option<Vec<f64>>,
    degrees: Vec<f64>,
}

/// Computes `(d_i d_j)^{-1/2}` for every edge. With `add_self_loops` every
/// node gains a unit self-loop first and degrees count it.
pub fn sym_normalize(g: &Graph, add_self_loops: bool) -> Result<NormalizedAdjacency> {
    let n = g.node_count();
    let extra = usize::from(add_self_loops);
    let deg: Vec<usize> = (0..n).map(|v| g.degree(v) + extra).collect();
    if let Some(v) = deg.iter().position(|&d| d == 0) {
        return Err(Error::Validation(format!(
            "node {v} is isolated; normalization needs self-loops or a connected graph"
        )));
    }
    let mut values = Vec::with_capacity(2 * g.edge_count());
    for i in 0..n {
        for &j in g.neighbors(i) {
            // integer product is commutative, so paired weights are bitwise equal
            values.push(pair_weight(deg[i], deg[j as usize]));
        }
    }
    let self_values = add_self_loops.then(|| deg.iter().map(|&d| pair_weight(d, d)).collect());
    Ok(NormalizedAdjacency {
        values,
        self_values,
        degrees: deg.iter().map(|&d| d as f64).collect(),
    })
}

#[inline]
fn pair_weight(di: usize, dj: usize) -> f64 {
    1.0 / ((di as u128 * dj as u128) as f64).sqrt()
}

impl NormalizedAdjacency {
    pub fn has_self_loops(&self) -> bool {
        self.self_values.is_some()
    }

    /// Degrees used in the normalization, self-loops included.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Weights of `i`'s edges in the order of `g.neighbors(i)`.
    pub fn row<'a>(&'a self, g: &Graph, i: usize) -> &'a [f64] {
        &self.values[g.edge_range(i)]
    }

    pub fn self_weight(&self, i: usize) -> Option<f64> {
        self.self_values.as_ref().map(|s| s[i])
    }

    pub fn value(&self, g: &Graph, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return self.self_weight(i);
        }
        let pos = g.neighbors(i).binary_search(&(j as u32)).ok()?;
        Some(self.row(g, i)[pos])
    }

    /// Restricts the global weights to the view's induced edges without
    /// renormalizing.
    pub fn restrict(&self, view: &SubgraphView<'_>) -> ViewAdjacency {
        let g = view.parent();
        ViewAdjacency::build(view, self.has_self_loops(), |_, global_i, global_j| {
            if global_i == global_j {
                self.self_values.as_ref().unwrap()[global_i]
            } else {
                let pos = g.neighbors(global_i).binary_search(&(global_j as u32)).unwrap();
                self.row(g, global_i)[pos]
            }
        })
    }

    /// The whole graph as a [`ViewAdjacency`] with node indices unchanged.
    pub fn to_view_adjacency(&self, g: &Graph) -> ViewAdjacency {
        let n = g.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(self.values.len() + n);
        let mut values = Vec::with_capacity(self.values.len() + n);
        offsets.push(0);
        for i in 0..n {
            let row = self.row(g, i);
            let mut self_done = !self.has_self_loops();
            for (&j, &w) in g.neighbors(i).iter().zip(row) {
                if !self_done && j as usize > i {
                    cols.push(i as u32);
                    values.push(self.self_values.as_ref().unwrap()[i]);
                    self_done = true;
                }
                cols.push(j);
                values.push(w);
            }
            if !self_done {
                cols.push(i as u32);
                values.push(self.self_values.as_ref().unwrap()[i]);
            }
            offsets.push(cols.len());
        }
        ViewAdjacency {
            offsets,
            cols,
            values,
        }
    }
}

/// Sparse symmetric weights over a view's local indices, rows sorted by
/// column. Rows of nodes with no in-view neighbor (and no self-loop) are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewAdjacency {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<f64>,
}

impl ViewAdjacency {
    /// Normalizes the view's induced subgraph with its own degrees, i.e.
    /// `D_v^{-1/2} A_v D_v^{-1/2}` where `A_v` is the induced adjacency.
    pub fn renormalized(view: &SubgraphView<'_>, add_self_loops: bool) -> ViewAdjacency {
        let extra = usize::from(add_self_loops);
        let deg: Vec<usize> = (0..view.len())
            .map(|k| view.local_neighbors(k).count() + extra)
            .collect();
        ViewAdjacency::build(view, add_self_loops, |local_i, _, global_j| {
            let local_j = view.local_index(global_j).unwrap();
            pair_weight(deg[local_i], deg[local_j])
        })
    }

    fn build<F>(view: &SubgraphView<'_>, self_loops: bool, mut weight: F) -> ViewAdjacency
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let mut offsets = Vec::with_capacity(view.len() + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for (local_i, &global_i) in view.members().iter().enumerate() {
            let mut self_done = !self_loops;
            for local_j in view.local_neighbors(local_i) {
                if !self_done && local_j > local_i {
                    cols.push(local_i as u32);
                    values.push(weight(local_i, global_i, global_i));
                    self_done = true;
                }
                cols.push(local_j as u32);
                values.push(weight(local_i, global_i, view.members()[local_j]));
            }
            if !self_done {
                cols.push(local_i as u32);
                values.push(weight(local_i, global_i, global_i));
            }
            offsets.push(cols.len());
        }
        ViewAdjacency {
            offsets,
            cols,
            values,
        }
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
        (&self.cols[r.clone()], &self.values[r])
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub(crate) fn cols(&self) -> &[u32] {
        &self.cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::k_hop_subgraph;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    #[test]
    fn path_weights() {
        let g = path(3);
        let a = sym_normalize(&g, false).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(a.value(&g, 0, 1), Some(h));
        assert_eq!(a.value(&g, 1, 2), Some(h));
        assert_eq!(a.value(&g, 0, 2), None);
    }

    #[test]
    fn single_edge_weight_is_one() {
        let g = path(2);
        let a = sym_normalize(&g, false).unwrap();
        assert_eq!(a.value(&g, 0, 1), Some(1.0));
    }

    #[test]
    fn triangle_weights_are_half() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let a = sym_normalize(&g, false).unwrap();
        for (i, j) in g.edges() {
            assert_eq!(a.value(&g, i, j), Some(0.5));
        }
    }

    #[test]
    fn isolated_node_rejected_without_self_loops() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let err = sym_normalize(&g, false).unwrap_err();
        assert!(err.to_string().contains("node 2"));
        let a = sym_normalize(&g, true).unwrap();
        assert_eq!(a.self_weight(2), Some(1.0));
        assert_eq!(a.value(&g, 0, 1), Some(0.5));
    }

    #[test]
    fn whole_graph_view_matches_restriction() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        for loops in [false, true] {
            let a = sym_normalize(&g, loops).unwrap();
            let view = k_hop_subgraph(&g, &[0], 2).unwrap();
            assert_eq!(view.len(), 4);
            assert_eq!(a.restrict(&view), a.to_view_adjacency(&g));
            assert_eq!(ViewAdjacency::renormalized(&view, loops), a.to_view_adjacency(&g));
        }
    }

    #[test]
    fn renormalized_view_uses_view_degrees() {
        // path 0-1-2-3, view {0,1,2}: node 2 has one in-view neighbor
        let g = path(4);
        let view = k_hop_subgraph(&g, &[0], 2).unwrap();
        let va = ViewAdjacency::renormalized(&view, false);
        let (cols, vals) = va.row(2);
        assert_eq!(cols, &[1]);
        assert_eq!(vals[0], 1.0 / 2f64.sqrt());
        let global = sym_normalize(&g, false).unwrap().restrict(&view);
        assert_eq!(global.row(2).1[0], 0.5);
    }
}
