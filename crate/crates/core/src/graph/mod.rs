//! Undirected graphs in compressed sparse row form.
//!
//! Node indices are dense and 0-based. Each undirected edge `{i, j}` is stored
//! twice, once in each endpoint's neighbor list; neighbor lists are sorted and
//! free of duplicates and self-loops.

mod normalize;
mod subgraph;

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub use normalize::{sym_normalize, NormalizedAdjacency, ViewAdjacency};
pub use subgraph::{bfs_distance_to_set, k_hop_subgraph, Distances, SubgraphView};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized and
    /// deduplicated; self-loops are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n > u32::MAX as usize {
            return Err(Error::Validation(format!("node count {n} exceeds u32 range")));
        }
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v as u32);
            adj[v].push(u as u32);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|v| self.degree(v)).collect()
    }

    /// Range of `v`'s entries in the flat neighbor storage. Per-edge arrays
    /// aligned with the graph use the same positions.
    #[inline]
    pub(crate) fn edge_range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Iterates each undirected edge once as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| i < j)
                .map(move |j| (i, j))
        })
    }

    /// Connected component label per node. Labels are assigned in order of
    /// each component's smallest node index.
    pub fn connected_components(&self) -> (Vec<u32>, usize) {
        let n = self.node_count();
        let mut label = vec![u32::MAX; n];
        let mut count = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != u32::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    let w = w as usize;
                    if label[w] == u32::MAX {
                        label[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (label, count as usize)
    }

    /// Induced subgraph on `members` (sorted, distinct), reindexed densely in
    /// the order given.
    pub fn induced(&self, members: &[usize]) -> Graph {
        let mut local = vec![u32::MAX; self.node_count()];
        for (k, &v) in members.iter().enumerate() {
            local[v] = k as u32;
        }
        let mut offsets = Vec::with_capacity(members.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for &v in members {
            neighbors.extend(
                self.neighbors(v)
                    .iter()
                    .map(|&w| local[w as usize])
                    .filter(|&l| l != u32::MAX),
            );
            offsets.push(neighbors.len());
        }
        Graph { offsets, neighbors }
    }
}

/// Old/new index correspondence produced by [`largest_connected_component`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMapping {
    /// `new_to_old[k]` is the original index of new node `k`.
    pub new_to_old: Vec<usize>,
    /// `old_to_new[v]` is `Some(k)` for retained nodes.
    pub old_to_new: Vec<Option<usize>>,
}

impl NodeMapping {
    pub fn identity(n: usize) -> Self {
        Self {
            new_to_old: (0..n).collect(),
            old_to_new: (0..n).map(Some).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.new_to_old.len() == self.old_to_new.len()
            && self.new_to_old.iter().enumerate().all(|(k, &v)| k == v)
    }

    /// Two-column text file, `old new` per retained node.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for (new, old) in self.new_to_old.iter().enumerate() {
            writeln!(out, "{old} {new}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Restricts `g` to its largest connected component. Among equally large
/// components the one holding the smallest original index wins.
pub fn largest_connected_component(g: &Graph) -> Result<(Graph, NodeMapping)> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::Validation("graph has no nodes".into()));
    }
    let (labels, count) = g.connected_components();
    let mut sizes = vec![0usize; count];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    // labels are ordered by smallest member, so the first maximum is the tie winner
    let mut best = 0;
    for (c, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = c;
        }
    }
    let members: Vec<usize> = (0..n).filter(|&v| labels[v] as usize == best).collect();
    let mut old_to_new = vec![None; n];
    for (k, &v) in members.iter().enumerate() {
        old_to_new[v] = Some(k);
    }
    let sub = if members.len() == n {
        g.clone()
    } else {
        g.induced(&members)
    };
    Ok((
        sub,
        NodeMapping {
            new_to_old: members,
            old_to_new,
        },
    ))
}

/// Reads a whitespace-separated edge list. Blank lines and lines starting with
/// `#` are skipped. The node count is one past the largest index, or `n_hint`
/// when that is larger.
pub fn load_edge_list(path: &Path, n_hint: Option<usize>) -> Result<Graph> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(file), &path.display().to_string(), n_hint)
}

pub fn parse_edge_list<R: BufRead>(reader: R, source: &str, n_hint: Option<usize>) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_index: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_string(),
            line: lineno + 1,
            message,
        };
        let mut fields = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected two node indices, got {trimmed:?}")));
        };
        let parse = |s: &str| -> Result<usize> {
            let value: i64 = s
                .parse()
                .map_err(|_| parse_err(format!("not an integer: {s:?}")))?;
            if value < 0 {
                return Err(Error::Validation(format!(
                    "{source}:{}: negative node index {value}",
                    lineno + 1
                )));
            }
            Ok(value as usize)
        };
        let (u, v) = (parse(a)?, parse(b)?);
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_index.map_or(0, |m| m + 1).max(n_hint.unwrap_or(0));
    Graph::from_edges(n, edges)
}
