//! The marked Poisson link process: each edge independently carries links
//! at rate `beta` on `[0,1)`, each link a cross with probability `u`,
//! otherwise a double-bar.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{LoopError, Result};
use crate::topology::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Cross,
    DoubleBar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// strictly in [0,1)
    pub time: f64,
    pub kind: LinkKind,
}

/// A realization of the link process: per-edge time-sorted link lists,
/// plus per-vertex sorted endpoint lists for loop tracing.
///
/// Endpoint times at any single vertex are pairwise distinct; exact
/// floating-point collisions are resolved by resampling at generation time
/// and by rejection in [`LinkConfiguration::insert_link`].
#[derive(Debug, Clone)]
pub struct LinkConfiguration {
    per_edge: Vec<Vec<Link>>,
    /// (time, edge id) per vertex, sorted by time
    endpoints: Vec<Vec<(f64, usize)>>,
    total_links: usize,
}

impl LinkConfiguration {
    pub fn empty(g: &Graph) -> Self {
        LinkConfiguration {
            per_edge: vec![Vec::new(); g.edge_count()],
            endpoints: vec![Vec::new(); g.vertex_count()],
            total_links: 0,
        }
    }

    /// Sample the full link process: per edge the link count is
    /// Poisson(`beta`), times i.i.d. uniform on [0,1), kinds i.i.d.
    /// Cross with probability `u`. Colliding times are resampled.
    pub fn sample<R: Rng>(g: &Graph, beta: f64, u: f64, rng: &mut R) -> Self {
        let mut c = Self::empty(g);
        for e in 0..g.edge_count() {
            let n = sample_poisson(beta, rng);
            for _ in 0..n {
                loop {
                    let time: f64 = rng.random();
                    let kind = if rng.random::<f64>() < u { LinkKind::Cross } else { LinkKind::DoubleBar };
                    if c.insert_link(g, e, Link { time, kind }).is_ok() {
                        break;
                    }
                }
            }
        }
        c
    }

    /// Insert a link in sorted position. Rejects if the time already occurs
    /// at either endpoint vertex.
    pub fn insert_link(&mut self, g: &Graph, edge: usize, link: Link) -> Result<()> {
        let (x, y) = g.edge(edge);
        if self.has_endpoint_at(x, link.time) || self.has_endpoint_at(y, link.time) {
            return Err(LoopError::TimeCollision);
        }
        let pos = self.per_edge[edge].partition_point(|l| l.time < link.time);
        self.per_edge[edge].insert(pos, link);
        for v in [x, y] {
            let p = self.endpoints[v].partition_point(|&(t, _)| t < link.time);
            self.endpoints[v].insert(p, (link.time, edge));
        }
        self.total_links += 1;
        Ok(())
    }

    /// Remove the `index`-th link (in time order) of `edge`.
    pub fn remove_link(&mut self, g: &Graph, edge: usize, index: usize) -> Result<Link> {
        if edge >= self.per_edge.len() || index >= self.per_edge[edge].len() {
            return Err(LoopError::InvalidLink { edge, index });
        }
        let link = self.per_edge[edge].remove(index);
        let (x, y) = g.edge(edge);
        for v in [x, y] {
            let p = self.endpoints[v].partition_point(|&(t, _)| t < link.time);
            debug_assert_eq!(self.endpoints[v][p].0, link.time);
            self.endpoints[v].remove(p);
        }
        self.total_links -= 1;
        Ok(link)
    }

    pub fn has_endpoint_at(&self, v: usize, time: f64) -> bool {
        let ep = &self.endpoints[v];
        let p = ep.partition_point(|&(t, _)| t < time);
        p < ep.len() && ep[p].0 == time
    }

    pub fn links_on_edge(&self, edge: usize) -> &[Link] {
        &self.per_edge[edge]
    }

    pub fn link_count_on_edge(&self, edge: usize) -> usize {
        self.per_edge[edge].len()
    }

    /// Sorted (time, edge id) endpoints at vertex `v`.
    pub fn endpoints_at(&self, v: usize) -> &[(f64, usize)] {
        &self.endpoints[v]
    }

    pub fn total_links(&self) -> usize {
        self.total_links
    }

    /// Locate the global `i`-th link (by edge id, then time order).
    /// Used for the uniform death move.
    pub fn nth_link(&self, mut i: usize) -> Option<(usize, usize)> {
        for (e, links) in self.per_edge.iter().enumerate() {
            if i < links.len() {
                return Some((e, i));
            }
            i -= links.len();
        }
        None
    }

    pub fn kind_at(&self, edge: usize, time: f64) -> Option<LinkKind> {
        let links = &self.per_edge[edge];
        let p = links.partition_point(|l| l.time < time);
        (p < links.len() && links[p].time == time).then(|| links[p].kind)
    }

    /// Line-oriented text format `edge_u edge_v time kind`, kind in {X, B}.
    pub fn to_text(&self, g: &Graph) -> String {
        let mut out = String::new();
        for (e, links) in self.per_edge.iter().enumerate() {
            let (x, y) = g.edge(e);
            for l in links {
                let k = match l.kind {
                    LinkKind::Cross => 'X',
                    LinkKind::DoubleBar => 'B',
                };
                writeln!(out, "{x} {y} {:.17} {k}", l.time).unwrap();
            }
        }
        out
    }

    pub fn from_text(g: &Graph, text: &str) -> Result<Self> {
        let mut edge_of = std::collections::HashMap::new();
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            edge_of.insert((a.min(b), a.max(b)), e);
        }
        let mut c = Self::empty(g);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut field = || {
                it.next().ok_or_else(|| LoopError::Parse(format!("line {}: missing field", lineno + 1)))
            };
            let x: usize = field()?.parse().map_err(|e| LoopError::Parse(format!("line {}: {e}", lineno + 1)))?;
            let y: usize = field()?.parse().map_err(|e| LoopError::Parse(format!("line {}: {e}", lineno + 1)))?;
            let time: f64 = field()?.parse().map_err(|e| LoopError::Parse(format!("line {}: {e}", lineno + 1)))?;
            let kind = match field()? {
                "X" => LinkKind::Cross,
                "B" => LinkKind::DoubleBar,
                k => return Err(LoopError::Parse(format!("line {}: bad kind {k:?}", lineno + 1))),
            };
            let e = *edge_of
                .get(&(x.min(y), x.max(y)))
                .ok_or_else(|| LoopError::Parse(format!("line {}: no edge ({x},{y})", lineno + 1)))?;
            c.insert_link(g, e, Link { time, kind })?;
        }
        Ok(c)
    }
}

/// Exact Poisson sampling by inversion of exponential interarrivals.
pub fn sample_poisson<R: Rng>(mean: f64, rng: &mut R) -> usize {
    debug_assert!(mean >= 0.0);
    // split large means so the product of uniforms does not underflow
    let mut n = 0usize;
    let mut remaining = mean;
    while remaining > 0.0 {
        let chunk = remaining.min(500.0);
        remaining -= chunk;
        let limit = (-chunk).exp();
        let mut prod: f64 = rng.random();
        while prod > limit {
            n += 1;
            prod *= rng.random::<f64>();
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_edge() -> Graph {
        Graph::build_path(2).unwrap()
    }

    #[test]
    fn poisson_mean_and_u_extremes() {
        let g = single_edge();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000usize;
        let mut total = 0usize;
        for _ in 0..n {
            let c = LinkConfiguration::sample(&g, 2.0, 1.0, &mut rng);
            total += c.total_links();
            assert!(c.links_on_edge(0).iter().all(|l| l.kind == LinkKind::Cross));
        }
        let mean = total as f64 / n as f64;
        // Poisson(2): sd of the mean is sqrt(2)/1000
        assert!((mean - 2.0).abs() < 3.0 * (2.0f64).sqrt() / 1e3, "mean {mean}");
    }

    #[test]
    fn beta_small_is_mostly_empty() {
        let g = single_edge();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let empties = (0..10_000)
            .filter(|_| LinkConfiguration::sample(&g, 1e-4, 0.5, &mut rng).total_links() == 0)
            .count();
        assert!(empties >= 9990);
    }

    #[test]
    fn insert_remove_roundtrip() {
        let g = single_edge();
        let mut c = LinkConfiguration::empty(&g);
        c.insert_link(&g, 0, Link { time: 0.5, kind: LinkKind::Cross }).unwrap();
        assert_eq!(c.total_links(), 1);
        assert!(matches!(
            c.insert_link(&g, 0, Link { time: 0.5, kind: LinkKind::DoubleBar }),
            Err(LoopError::TimeCollision)
        ));
        c.insert_link(&g, 0, Link { time: 0.25, kind: LinkKind::DoubleBar }).unwrap();
        let l = c.remove_link(&g, 0, 0).unwrap();
        assert_eq!(l.time, 0.25);
        assert_eq!(c.total_links(), 1);
        assert_eq!(c.links_on_edge(0)[0].time, 0.5);
        assert!(matches!(c.remove_link(&g, 0, 7), Err(LoopError::InvalidLink { .. })));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let g = Graph::build_tree(3, 2).unwrap();
        let a = LinkConfiguration::sample(&g, 0.7, 0.3, &mut ChaCha8Rng::seed_from_u64(42));
        let b = LinkConfiguration::sample(&g, 0.7, 0.3, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.to_text(&g), b.to_text(&g));
    }

    #[test]
    fn text_roundtrip() {
        let g = Graph::build_path(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = LinkConfiguration::sample(&g, 1.5, 0.5, &mut rng);
        let d = LinkConfiguration::from_text(&g, &c.to_text(&g)).unwrap();
        assert_eq!(c.to_text(&g), d.to_text(&g));
    }

    proptest! {
        // sorted order and collision-freedom survive random op sequences
        #[test]
        fn random_ops_keep_invariants(ops in proptest::collection::vec((0..3u8, 0..5usize, 0.0f64..1.0), 0..60)) {
            let g = Graph::build_path(4).unwrap();
            let mut c = LinkConfiguration::empty(&g);
            for (op, e, t) in ops {
                let e = e % g.edge_count();
                match op {
                    0 | 1 => {
                        let _ = c.insert_link(&g, e, Link { time: t, kind: LinkKind::Cross });
                    }
                    _ => {
                        if c.link_count_on_edge(e) > 0 {
                            let idx = (t * c.link_count_on_edge(e) as f64) as usize;
                            c.remove_link(&g, e, idx.min(c.link_count_on_edge(e) - 1)).unwrap();
                        }
                    }
                }
                let mut count = 0;
                for e in 0..g.edge_count() {
                    let links = c.links_on_edge(e);
                    count += links.len();
                    prop_assert!(links.windows(2).all(|w| w[0].time < w[1].time));
                }
                prop_assert_eq!(count, c.total_links());
                for v in 0..g.vertex_count() {
                    let ep = c.endpoints_at(v);
                    prop_assert!(ep.windows(2).all(|w| w[0].0 < w[1].0));
                }
            }
        }
    }
}
