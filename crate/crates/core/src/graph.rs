//! Directed communication topology with ordered neighborhoods and the
//! Round-Robin shift permutation.
//!
//! Nodes are indexed from zero inside the library. Edge lists coming from
//! configuration files use one-based numbering and go through
//! [`DirectedGraph::from_one_based`]; error messages report one-based ids.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One rotation `{j_1, …, j_{p-1}, j_p} ↦ {j_p, j_1, …, j_{p-1}}`.
pub fn shift_permutation<T: Clone>(s: &[T]) -> Result<Vec<T>> {
    if s.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut out = s.to_vec();
    out.rotate_right(1);
    Ok(out)
}

/// True iff the symmetrized edge set connects all `node_count` nodes.
pub fn is_weakly_connected(node_count: usize, edges: &[(usize, usize)]) -> bool {
    if node_count == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..node_count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = node_count;
    for &(a, b) in edges {
        if a >= node_count || b >= node_count {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Accept graphs that are not weakly connected. Only meant for
    /// protocol-level simulation; synthesis assumes connectivity.
    pub allow_disconnected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    node_count: usize,
    /// `(source, target)`, sorted.
    edges: Vec<(usize, usize)>,
    /// `V_i`, ascending.
    in_neighbors: Vec<Vec<usize>>,
    /// `{j : i ∈ V_j}`, ascending.
    out_neighbors: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Zero-based edges `(source, target)`.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_options(node_count, edges, GraphOptions::default())
    }

    /// One-based edges, as written in configuration files.
    pub fn from_one_based(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_one_based_with_options(node_count, edges, GraphOptions::default())
    }

    pub fn from_one_based_with_options(
        node_count: usize,
        edges: &[(usize, usize)],
        options: GraphOptions,
    ) -> Result<Self> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(s, t) in edges {
            for v in [s, t] {
                if v == 0 || v > node_count {
                    return Err(Error::NodeOutOfRange {
                        index: v,
                        count: node_count,
                    });
                }
            }
            zero.push((s - 1, t - 1));
        }
        Self::with_options(node_count, &zero, options)
    }

    pub fn with_options(
        node_count: usize,
        edges: &[(usize, usize)],
        options: GraphOptions,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument(
                "graph needs at least one node".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for &(s, t) in edges {
            for v in [s, t] {
                if v >= node_count {
                    return Err(Error::NodeOutOfRange {
                        index: v + 1,
                        count: node_count,
                    });
                }
            }
            if s == t {
                return Err(Error::SelfLoop(s + 1));
            }
            if !set.insert((s, t)) {
                return Err(Error::DuplicateEdge(s + 1, t + 1));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        if !options.allow_disconnected && !is_weakly_connected(node_count, &edges) {
            return Err(Error::NotWeaklyConnected);
        }
        let mut in_neighbors = vec![Vec::new(); node_count];
        let mut out_neighbors = vec![Vec::new(); node_count];
        for &(s, t) in &edges {
            in_neighbors[t].push(s);
            out_neighbors[s].push(t);
        }
        for list in in_neighbors.iter_mut().chain(out_neighbors.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            in_neighbors,
            out_neighbors,
        })
    }

    /// Directed ring `0 → 1 → … → N-1 → 0`.
    pub fn ring(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..node_count).map(|i| (i, (i + 1) % node_count)).collect();
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `V_i`: sources feeding node `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    /// Nodes `j` with `i ∈ V_j`.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    /// `p_i`.
    pub fn in_degree(&self, i: usize) -> usize {
        self.in_neighbors[i].len()
    }

    /// `q_i`.
    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    /// `p̄ = max_i p_i`.
    pub fn max_in_degree(&self) -> usize {
        (0..self.node_count)
            .map(|i| self.in_degree(i))
            .max()
            .unwrap_or(0)
    }

    pub fn is_weakly_connected(&self) -> bool {
        is_weakly_connected(self.node_count, &self.edges)
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.node_count {
            return Err(Error::NodeOutOfRange {
                index: i + 1,
                count: self.node_count,
            });
        }
        Ok(())
    }

    /// `Π^k(V_i)`, computed as a right rotation by `k mod p_i`.
    pub fn permutation_power(&self, i: usize, k: usize) -> Result<Vec<usize>> {
        self.check_node(i)?;
        let p = self.in_degree(i);
        if p == 0 {
            return Err(Error::NoNeighbors(i + 1));
        }
        let mut out = self.in_neighbors[i].clone();
        out.rotate_right(k % p);
        Ok(out)
    }

    /// `ν_j^{k,i}`: one-based position of `j` within `Π^k(V_i)`.
    pub fn index_in_permutation(&self, i: usize, k: usize, j: usize) -> Result<usize> {
        self.check_node(i)?;
        let p = self.in_degree(i);
        if p == 0 {
            return Err(Error::NoNeighbors(i + 1));
        }
        let pos = self.in_neighbors[i]
            .binary_search(&j)
            .map_err(|_| Error::NotANeighbor {
                node: i + 1,
                neighbor: j + 1,
            })?;
        Ok((pos + k % p) % p + 1)
    }

    /// The neighbor node `i` polls at instant `t_k`: the front of `Π^k(V_i)`.
    pub fn polled_neighbor(&self, i: usize, k: usize) -> Option<usize> {
        let list = &self.in_neighbors[i];
        let p = list.len();
        if p == 0 {
            return None;
        }
        // front of a right rotation by r is the element at p - r (mod p)
        Some(list[(p - k % p) % p])
    }
}
