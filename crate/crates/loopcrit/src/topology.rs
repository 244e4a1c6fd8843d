//! Finite graphs the loop model lives on: rooted regular trees, paths,
//! and arbitrary edge lists.

use crate::error::{LoopError, Result};

/// A finite graph with a distinguished root and per-vertex generation
/// (graph distance from the root).
///
/// Vertices are dense integer ids. Tree builders assign ids breadth-first
/// from the root so the children of any vertex are contiguous.
#[derive(Debug, Clone)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    root: usize,
    generation: Vec<usize>,
    /// incident edge ids per vertex
    incidence: Vec<Vec<usize>>,
}

impl Graph {
    /// Rooted regular tree with outdegree `d` and `m` generations.
    pub fn build_tree(d: usize, m: usize) -> Result<Self> {
        if d == 0 {
            return Err(LoopError::InvalidParameter("tree outdegree must be >= 1".into()));
        }
        // vertex_count = sum_{k=0..m} d^k
        let mut count: usize = 0;
        let mut level: usize = 1;
        let mut level_sizes = Vec::with_capacity(m + 1);
        for _ in 0..=m {
            count = count
                .checked_add(level)
                .ok_or_else(|| LoopError::SizeOverflow(format!("tree d={d} m={m}")))?;
            level_sizes.push(level);
            level = level
                .checked_mul(d)
                .ok_or_else(|| LoopError::SizeOverflow(format!("tree d={d} m={m}")))?;
        }
        let mut edges = Vec::with_capacity(count.saturating_sub(1));
        let mut generation = Vec::with_capacity(count);
        // BFS ids: level k starts at offset_k; children of the i-th vertex of
        // level k are the (d*i .. d*i+d)-th vertices of level k+1.
        let mut offset = 0usize;
        for (k, &size) in level_sizes.iter().enumerate() {
            for i in 0..size {
                generation.push(k);
                if k < m {
                    let child_base = offset + size + d * i;
                    for c in 0..d {
                        edges.push((offset + i, child_base + c));
                    }
                }
            }
            offset += size;
        }
        Ok(Self::from_parts(count, edges, 0, generation))
    }

    /// Path with `n` vertices rooted at one end; generation = index.
    pub fn build_path(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LoopError::InvalidParameter("path needs >= 1 vertex".into()));
        }
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let generation = (0..n).collect();
        Ok(Self::from_parts(n, edges, 0, generation))
    }

    /// General graph from an edge list; generations via BFS from `root`.
    pub fn from_edge_list(vertex_count: usize, edges: Vec<(usize, usize)>, root: usize) -> Result<Self> {
        for &(a, b) in &edges {
            if a == b {
                return Err(LoopError::InvalidParameter(format!("self-loop at vertex {a}")));
            }
            if a >= vertex_count || b >= vertex_count {
                return Err(LoopError::InvalidParameter(format!("edge ({a},{b}) out of range")));
            }
        }
        let mut sorted: Vec<_> = edges
            .iter()
            .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(LoopError::InvalidParameter("duplicate edge".into()));
        }
        // BFS for generations; unreachable vertices get usize::MAX.
        let mut incidence = vec![Vec::new(); vertex_count];
        for (e, &(a, b)) in edges.iter().enumerate() {
            incidence[a].push(e);
            incidence[b].push(e);
        }
        let mut generation = vec![usize::MAX; vertex_count];
        generation[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &e in &incidence[v] {
                let (a, b) = edges[e];
                let w = if a == v { b } else { a };
                if generation[w] == usize::MAX {
                    generation[w] = generation[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        let mut g = Self::from_parts(vertex_count, edges, root, generation);
        g.incidence = incidence;
        Ok(g)
    }

    fn from_parts(
        vertex_count: usize,
        edges: Vec<(usize, usize)>,
        root: usize,
        generation: Vec<usize>,
    ) -> Self {
        let mut incidence = vec![Vec::new(); vertex_count];
        for (e, &(a, b)) in edges.iter().enumerate() {
            incidence[a].push(e);
            incidence[b].push(e);
        }
        Graph { vertex_count, edges, root, generation, incidence }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn generation(&self, v: usize) -> usize {
        self.generation[v]
    }

    pub fn max_generation(&self) -> usize {
        self.generation.iter().copied().filter(|&g| g != usize::MAX).max().unwrap_or(0)
    }

    /// Edge ids incident to `v`.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incidence[v]
    }

    /// The endpoint of edge `e` that is not `v`.
    pub fn other_endpoint(&self, e: usize, v: usize) -> usize {
        let (a, b) = self.edges[e];
        if a == v {
            b
        } else {
            a
        }
    }

    /// All vertices with generation `k` (empty when out of range).
    pub fn vertices_at_generation(&self, k: usize) -> Vec<usize> {
        (0..self.vertex_count).filter(|&v| self.generation[v] == k).collect()
    }

    /// Edge ids from the root to its children.
    pub fn root_edges(&self) -> &[usize] {
        &self.incidence[self.root]
    }
}
