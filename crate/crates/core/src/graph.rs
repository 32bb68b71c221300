//! Undirected graphs given by a dense binary adjacency mask.

use std::collections::VecDeque;

/// Symmetric binary adjacency matrix with an empty diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMask {
    n: usize,
    bits: Vec<bool>,
}

impl AdjacencyMask {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    /// Builds a mask from an edge predicate evaluated on `i < j`.
    pub fn from_upper(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                if edge(i, j) {
                    mask.set(i, j);
                }
            }
        }
        mask
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut mask = Self::empty(n);
        for &(i, j) in edges {
            if i != j {
                mask.set(i, j);
            }
        }
        mask
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.n + j] = true;
        self.bits[j * self.n + i] = true;
    }

    /// Drops every edge touching `i`.
    pub fn isolate(&mut self, i: usize) {
        for j in 0..self.n {
            self.bits[i * self.n + j] = false;
            self.bits[j * self.n + i] = false;
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.bits[i * self.n..(i + 1) * self.n]
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
    }

    /// Row sums of the mask.
    pub fn degrees(&self) -> Vec<usize> {
        self.bits
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }

    /// Induced subgraph on `nodes`, renumbered in the given order.
    pub fn restrict(&self, nodes: &[usize]) -> Self {
        Self::from_upper(nodes.len(), |a, b| self.has_edge(nodes[a], nodes[b]))
    }
}

/// Breadth-first spanning tree of the component containing `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    /// Nodes of the tree, ascending.
    pub nodes: Vec<usize>,
    /// `parent[v]` for tree nodes other than the root; `None` elsewhere.
    pub parent: Vec<Option<usize>>,
}

pub fn bfs_tree(mask: &AdjacencyMask, root: usize) -> SpanningTree {
    let n = mask.order();
    let mut visited = vec![false; n];
    let mut parent = vec![None; n];
    let mut queue = VecDeque::from([root]);
    visited[root] = true;
    while let Some(u) = queue.pop_front() {
        for v in mask.neighbors(u) {
            if !visited[v] {
                visited[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    let nodes = (0..n).filter(|&v| visited[v]).collect();
    SpanningTree {
        root,
        nodes,
        parent,
    }
}
