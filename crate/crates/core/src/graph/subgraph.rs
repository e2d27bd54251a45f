use std::collections::VecDeque;

use super::Graph;
use crate::error::{Error, Result};

const UNSET: u32 = u32::MAX;

/// Induced subgraph over a sorted node subset. Borrows the parent's edges;
/// only the index maps and component labels are owned.
#[derive(Debug, Clone)]
pub struct SubgraphView<'g> {
    parent: &'g Graph,
    members: Vec<usize>,
    local: Vec<u32>,
    component: Vec<u32>,
    component_count: usize,
}

impl<'g> SubgraphView<'g> {
    /// `members` must be sorted and free of duplicates.
    pub fn from_members(parent: &'g Graph, members: Vec<usize>) -> Result<Self> {
        let n = parent.node_count();
        let mut local = vec![UNSET; n];
        for (k, &v) in members.iter().enumerate() {
            if v >= n {
                return Err(Error::Validation(format!("node {v} out of range for {n} nodes")));
            }
            if k > 0 && members[k - 1] >= v {
                return Err(Error::Validation("view members must be sorted and distinct".into()));
            }
            local[v] = k as u32;
        }
        let mut view = Self {
            parent,
            members,
            local,
            component: Vec::new(),
            component_count: 0,
        };
        view.label_components();
        Ok(view)
    }

    fn label_components(&mut self) {
        let size = self.members.len();
        let mut component = vec![UNSET; size];
        let mut count = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..size {
            if component[start] != UNSET {
                continue;
            }
            component[start] = count;
            queue.push_back(start);
            while let Some(k) = queue.pop_front() {
                for w in self.local_neighbors(k) {
                    if component[w] == UNSET {
                        component[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        self.component = component;
        self.component_count = count as usize;
    }

    pub fn parent(&self) -> &'g Graph {
        self.parent
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.local[v] != UNSET
    }

    pub fn local_index(&self, v: usize) -> Option<usize> {
        match self.local[v] {
            UNSET => None,
            k => Some(k as usize),
        }
    }

    /// In-view neighbors of local node `k`, as local indices in ascending
    /// order.
    pub fn local_neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent
            .neighbors(self.members[k])
            .iter()
            .map(|&w| self.local[w as usize])
            .filter(|&l| l != UNSET)
            .map(|l| l as usize)
    }

    pub fn component_id(&self, k: usize) -> usize {
        self.component[k] as usize
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// Local indices of each component, ascending within each component.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.component_count];
        for (k, &c) in self.component.iter().enumerate() {
            out[c as usize].push(k);
        }
        out
    }

    /// Number of induced undirected edges.
    pub fn edge_count(&self) -> usize {
        (0..self.len()).map(|k| self.local_neighbors(k).count()).sum::<usize>() / 2
    }
}

/// Multi-source BFS distances. Unreachable nodes have no distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distances(Vec<u32>);

impl Distances {
    pub fn get(&self, v: usize) -> Option<usize> {
        match self.0[v] {
            UNSET => None,
            d => Some(d as usize),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        (0..self.0.len()).map(|v| self.get(v))
    }

    /// Largest finite distance, i.e. the eccentricity of the seed set.
    pub fn max_finite(&self) -> Option<usize> {
        self.iter().flatten().max()
    }

    pub fn unreachable_count(&self) -> usize {
        self.0.iter().filter(|&&d| d == UNSET).count()
    }

    /// Sorted nodes with distance at most `m`.
    pub fn within(&self, m: usize) -> Vec<usize> {
        (0..self.0.len())
            .filter(|&v| self.0[v] != UNSET && self.0[v] as usize <= m)
            .collect()
    }
}

fn check_seeds(g: &Graph, seeds: &[usize]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Validation("seed set is empty".into()));
    }
    let n = g.node_count();
    if let Some(&v) = seeds.iter().find(|&&v| v >= n) {
        return Err(Error::Validation(format!("seed {v} out of range for {n} nodes")));
    }
    Ok(())
}

fn bfs(g: &Graph, seeds: &[usize], limit: Option<usize>) -> Vec<u32> {
    let mut dist = vec![UNSET; g.node_count()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if dist[s] == UNSET {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let next = dist[v] + 1;
        if limit.is_some_and(|m| next as usize > m) {
            continue;
        }
        for &w in g.neighbors(v) {
            let w = w as usize;
            if dist[w] == UNSET {
                dist[w] = next;
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn bfs_distance_to_set(g: &Graph, seeds: &[usize]) -> Result<Distances> {
    check_seeds(g, seeds)?;
    Ok(Distances(bfs(g, seeds, None)))
}

/// View induced on every node within `m` hops of some seed.
pub fn k_hop_subgraph<'g>(g: &'g Graph, seeds: &[usize], m: usize) -> Result<SubgraphView<'g>> {
    check_seeds(g, seeds)?;
    let dist = bfs(g, seeds, Some(m));
    let members = (0..g.node_count()).filter(|&v| dist[v] != UNSET).collect();
    SubgraphView::from_members(g, members)
}
