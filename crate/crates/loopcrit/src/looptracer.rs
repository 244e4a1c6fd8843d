//! Loop decomposition of (graph, link configuration).
//!
//! Each vertex carries a circle [0,1) split into arcs by its link
//! endpoints. A trajectory proceeds periodically in the vertical direction,
//! maintains direction through a cross and reverses through a double-bar.
//! Loop identity is computed by disjoint-set union over arcs: a link at
//! time t on edge {x,y} merges, for a cross, the arc of x with top endpoint
//! t with the arc of y with bottom endpoint t (and vice versa); for a
//! double-bar, top with top and bottom with bottom.
//!
//! [`walk_loop_from`] is an independent trajectory-walking implementation
//! of the same rules. It backs the local delta-loop-count updates of the
//! MCMC sampler and the exhaustive cross-checks in the oracle module.

use std::collections::HashSet;

use crate::error::Result;
use crate::linkproc::{Link, LinkConfiguration, LinkKind};
use crate::topology::Graph;

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            // path halving
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra as usize] = rb;
        true
    }
}

/// Arc partition of the vertex circles plus disjoint-set loop labels.
#[derive(Debug, Clone)]
pub struct LoopDecomposition {
    /// (first global arc id, arc count) per vertex; count is 1 for a
    /// link-free vertex (the whole circle)
    vertex_arcs: Vec<(usize, usize)>,
    /// sorted endpoint times per vertex
    times: Vec<Vec<f64>>,
    /// global arc id -> compact loop id
    component: Vec<usize>,
    loop_count: usize,
    loop_length: Vec<f64>,
    loops_visiting: Vec<Vec<usize>>,
    /// generation span per loop (loop supports are connected, so the
    /// generations visited form a contiguous range)
    gen_range: Vec<(usize, usize)>,
}

fn arc_layout(g: &Graph, c: &LinkConfiguration) -> (Vec<(usize, usize)>, usize) {
    let mut vertex_arcs = Vec::with_capacity(g.vertex_count());
    let mut total = 0usize;
    for v in 0..g.vertex_count() {
        let k = c.endpoints_at(v).len().max(1);
        vertex_arcs.push((total, k));
        total += k;
    }
    (vertex_arcs, total)
}

/// Runs the two DSU merges per link and returns the union-find structure.
fn merge_links(g: &Graph, c: &LinkConfiguration, vertex_arcs: &[(usize, usize)], total: usize) -> Dsu {
    let mut dsu = Dsu::new(total);
    let arc_above = |v: usize, t: f64| -> u32 {
        let (off, _) = vertex_arcs[v];
        let i = c.endpoints_at(v).partition_point(|&(s, _)| s < t);
        (off + i) as u32
    };
    let arc_below = |v: usize, t: f64| -> u32 {
        let (off, k) = vertex_arcs[v];
        let i = c.endpoints_at(v).partition_point(|&(s, _)| s < t);
        (off + (i + k - 1) % k) as u32
    };
    for e in 0..g.edge_count() {
        let (x, y) = g.edge(e);
        for l in c.links_on_edge(e) {
            match l.kind {
                LinkKind::Cross => {
                    dsu.union(arc_below(x, l.time), arc_above(y, l.time));
                    dsu.union(arc_below(y, l.time), arc_above(x, l.time));
                }
                LinkKind::DoubleBar => {
                    dsu.union(arc_below(x, l.time), arc_below(y, l.time));
                    dsu.union(arc_above(x, l.time), arc_above(y, l.time));
                }
            }
        }
    }
    dsu
}

/// Full loop decomposition: loop ids, vertical lengths, visit sets.
pub fn trace_loops(g: &Graph, c: &LinkConfiguration) -> LoopDecomposition {
    let (vertex_arcs, total) = arc_layout(g, c);
    let mut dsu = merge_links(g, c, &vertex_arcs, total);

    // compact loop ids
    let mut label = vec![usize::MAX; total];
    let mut loop_count = 0usize;
    let mut component = vec![0usize; total];
    for a in 0..total {
        let r = dsu.find(a as u32) as usize;
        if label[r] == usize::MAX {
            label[r] = loop_count;
            loop_count += 1;
        }
        component[a] = label[r];
    }

    let mut loop_length = vec![0.0f64; loop_count];
    let mut loops_visiting: Vec<Vec<usize>> = vec![Vec::new(); loop_count];
    let mut gen_range = vec![(usize::MAX, 0usize); loop_count];
    let mut times = Vec::with_capacity(g.vertex_count());
    for v in 0..g.vertex_count() {
        let ep = c.endpoints_at(v);
        let ts: Vec<f64> = ep.iter().map(|&(t, _)| t).collect();
        let (off, k) = vertex_arcs[v];
        for i in 0..k {
            let id = component[off + i];
            let len = if ts.is_empty() {
                1.0
            } else {
                let lo = ts[i];
                let hi = ts[(i + 1) % k];
                if k == 1 { 1.0 } else { (hi - lo).rem_euclid(1.0) }
            };
            loop_length[id] += len;
            if loops_visiting[id].last() != Some(&v) {
                loops_visiting[id].push(v);
            }
            let gen = g.generation(v);
            let (lo, hi) = gen_range[id];
            gen_range[id] = (lo.min(gen), hi.max(gen));
        }
        times.push(ts);
    }

    LoopDecomposition {
        vertex_arcs,
        times,
        component,
        loop_count,
        loop_length,
        loops_visiting,
        gen_range,
    }
}

/// Loop count only; skips lengths and visit sets.
pub fn count_loops(g: &Graph, c: &LinkConfiguration) -> usize {
    let (vertex_arcs, total) = arc_layout(g, c);
    let mut dsu = merge_links(g, c, &vertex_arcs, total);
    let mut n = 0usize;
    for a in 0..total as u32 {
        if dsu.find(a) == a {
            n += 1;
        }
    }
    n
}

impl LoopDecomposition {
    pub fn loop_count(&self) -> usize {
        self.loop_count
    }

    pub fn loop_length(&self, loop_id: usize) -> f64 {
        self.loop_length[loop_id]
    }

    pub fn loops_visiting(&self, loop_id: usize) -> &[usize] {
        &self.loops_visiting[loop_id]
    }

    /// Index of the arc of `x` containing time `t` (cyclically, half-open
    /// arcs [lo, hi)).
    pub fn arc_of_point(&self, x: usize, t: f64) -> usize {
        let ts = &self.times[x];
        if ts.is_empty() {
            return 0;
        }
        let p = ts.partition_point(|&s| s <= t);
        if p == 0 {
            ts.len() - 1
        } else {
            p - 1
        }
    }

    /// Loop id of the point (x, t).
    pub fn loop_of_point(&self, x: usize, t: f64) -> usize {
        let (off, _) = self.vertex_arcs[x];
        self.component[off + self.arc_of_point(x, t)]
    }

    /// True iff the loop visits a vertex in generation `k`.
    pub fn reaches_generation(&self, loop_id: usize, k: usize) -> bool {
        let (lo, hi) = self.gen_range[loop_id];
        lo <= k && k <= hi
    }
}

/// Loop count difference from inserting `link`, by full retrace.
pub fn delta_ell_of_insert(g: &Graph, c: &LinkConfiguration, edge: usize, link: Link) -> Result<isize> {
    let before = count_loops(g, c);
    let mut c2 = c.clone();
    c2.insert_link(g, edge, link)?;
    let after = count_loops(g, &c2);
    Ok(after as isize - before as isize)
}

/// One step of a trajectory: the (vertex, arc index) pair plus the
/// direction it is traversed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArcRef {
    pub vertex: usize,
    pub arc: usize,
}

/// A loop recovered by explicit trajectory walking.
#[derive(Debug, Clone)]
pub struct WalkedLoop {
    pub arcs: Vec<ArcRef>,
}

impl WalkedLoop {
    pub fn arc_set(&self) -> HashSet<ArcRef> {
        self.arcs.iter().copied().collect()
    }

    pub fn contains_point(&self, c: &LinkConfiguration, x: usize, t: f64) -> bool {
        let arc = arc_index_of_point(c, x, t);
        self.arcs.iter().any(|a| a.vertex == x && a.arc == arc)
    }

    pub fn max_generation(&self, g: &Graph) -> usize {
        self.arcs.iter().map(|a| g.generation(a.vertex)).max().unwrap_or(0)
    }

    pub fn vertical_length(&self, c: &LinkConfiguration) -> f64 {
        self.arcs
            .iter()
            .map(|a| {
                let ep = c.endpoints_at(a.vertex);
                let k = ep.len();
                if k <= 1 {
                    1.0
                } else {
                    (ep[(a.arc + 1) % k].0 - ep[a.arc].0).rem_euclid(1.0)
                }
            })
            .sum()
    }
}

pub fn arc_index_of_point(c: &LinkConfiguration, x: usize, t: f64) -> usize {
    let ep = c.endpoints_at(x);
    if ep.is_empty() {
        return 0;
    }
    let p = ep.partition_point(|&(s, _)| s <= t);
    if p == 0 {
        ep.len() - 1
    } else {
        p - 1
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

/// Follows the trajectory through (vertex, arc, direction) states until it
/// closes. Independent of the disjoint-set tracer.
pub fn walk_loop_from(g: &Graph, c: &LinkConfiguration, v0: usize, arc0: usize) -> WalkedLoop {
    let mut arcs = Vec::new();
    let start = (v0, arc0, Dir::Up);
    let (mut v, mut a, mut dir) = start;
    loop {
        arcs.push(ArcRef { vertex: v, arc: a });
        let ep = c.endpoints_at(v);
        if ep.is_empty() {
            break; // singleton loop, whole circle
        }
        let k = ep.len();
        // exit endpoint of the current arc in the current direction
        let (t, edge) = match dir {
            Dir::Up => ep[(a + 1) % k],
            Dir::Down => ep[a],
        };
        let w = g.other_endpoint(edge, v);
        let kind = c.kind_at(edge, t).expect("link endpoint must exist on its edge");
        let kw = c.endpoints_at(w).len();
        let j = c.endpoints_at(w).partition_point(|&(s, _)| s < t);
        debug_assert!(j < kw && c.endpoints_at(w)[j].0 == t);
        let new_dir = match kind {
            LinkKind::Cross => dir,
            LinkKind::DoubleBar => match dir {
                Dir::Up => Dir::Down,
                Dir::Down => Dir::Up,
            },
        };
        // entering arc at w: moving up we start on the arc with bottom
        // endpoint t, moving down on the arc with top endpoint t
        let new_arc = match new_dir {
            Dir::Up => j,
            Dir::Down => (j + kw - 1) % kw,
        };
        v = w;
        a = new_arc;
        dir = new_dir;
        if (v, a, dir) == start {
            break;
        }
    }
    WalkedLoop { arcs }
}

/// Walk variant that stops as soon as the trajectory touches generation
/// `target`; used for order-parameter sampling where only the indicator is
/// needed.
pub fn walk_reaches_generation(
    g: &Graph,
    c: &LinkConfiguration,
    v0: usize,
    t0: f64,
    target: usize,
) -> bool {
    if g.generation(v0) == target {
        return true;
    }
    let arc0 = arc_index_of_point(c, v0, t0);
    let start = (v0, arc0, Dir::Up);
    let (mut v, mut a, mut dir) = start;
    loop {
        if g.generation(v) == target {
            return true;
        }
        let ep = c.endpoints_at(v);
        if ep.is_empty() {
            return false;
        }
        let k = ep.len();
        let (t, edge) = match dir {
            Dir::Up => ep[(a + 1) % k],
            Dir::Down => ep[a],
        };
        let w = g.other_endpoint(edge, v);
        let kind = c.kind_at(edge, t).expect("link endpoint must exist on its edge");
        let kw = c.endpoints_at(w).len();
        let j = c.endpoints_at(w).partition_point(|&(s, _)| s < t);
        let new_dir = match kind {
            LinkKind::Cross => dir,
            LinkKind::DoubleBar => match dir {
                Dir::Up => Dir::Down,
                Dir::Down => Dir::Up,
            },
        };
        let new_arc = match new_dir {
            Dir::Up => j,
            Dir::Down => (j + kw - 1) % kw,
        };
        v = w;
        a = new_arc;
        dir = new_dir;
        if (v, a, dir) == start {
            return false;
        }
    }
}

/// Number of distinct loops covering the given arcs (by walking).
fn loops_through(g: &Graph, c: &LinkConfiguration, arcs: &[ArcRef]) -> usize {
    let mut seen: HashSet<ArcRef> = HashSet::new();
    let mut n = 0;
    for &a in arcs {
        if seen.contains(&a) {
            continue;
        }
        n += 1;
        seen.extend(walk_loop_from(g, c, a.vertex, a.arc).arc_set());
    }
    n
}

fn boundary_arcs_at_time(c: &LinkConfiguration, v: usize, t: f64) -> [ArcRef; 2] {
    let ep = c.endpoints_at(v);
    let k = ep.len();
    let j = ep.partition_point(|&(s, _)| s < t);
    debug_assert!(j < k && ep[j].0 == t);
    [ArcRef { vertex: v, arc: j }, ArcRef { vertex: v, arc: (j + k - 1) % k }]
}

/// Inserts `link` and returns the loop count change, computed locally by
/// walking only the affected loops. The caller can revert with
/// `remove_link` at the same time.
pub fn apply_insert_with_delta(
    g: &Graph,
    c: &mut LinkConfiguration,
    edge: usize,
    link: Link,
) -> Result<isize> {
    let (x, y) = g.edge(edge);
    let before = [
        ArcRef { vertex: x, arc: arc_index_of_point(c, x, link.time) },
        ArcRef { vertex: y, arc: arc_index_of_point(c, y, link.time) },
    ];
    let time = link.time;
    let o = loops_through(g, c, &before);
    c.insert_link(g, edge, link)?;
    let bx = boundary_arcs_at_time(c, x, time);
    let by = boundary_arcs_at_time(c, y, time);
    let n = loops_through(g, c, &[bx[0], bx[1], by[0], by[1]]);
    Ok(n as isize - o as isize)
}

/// Removes the link and returns it with the loop count change, computed
/// locally by walking only the affected loops.
pub fn apply_remove_with_delta(
    g: &Graph,
    c: &mut LinkConfiguration,
    edge: usize,
    index: usize,
) -> Result<(Link, isize)> {
    let time = c.links_on_edge(edge)[index].time;
    let (x, y) = g.edge(edge);
    let bx = boundary_arcs_at_time(c, x, time);
    let by = boundary_arcs_at_time(c, y, time);
    let o = loops_through(g, c, &[bx[0], bx[1], by[0], by[1]]);
    let link = c.remove_link(g, edge, index)?;
    let after = [
        ArcRef { vertex: x, arc: arc_index_of_point(c, x, time) },
        ArcRef { vertex: y, arc: arc_index_of_point(c, y, time) },
    ];
    let n = loops_through(g, c, &after);
    Ok((link, n as isize - o as isize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Graph;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn edge_config(g: &Graph, links: &[(usize, f64, LinkKind)]) -> LinkConfiguration {
        let mut c = LinkConfiguration::empty(g);
        for &(e, t, kind) in links {
            c.insert_link(g, e, Link { time: t, kind }).unwrap();
        }
        c
    }

    #[test]
    fn empty_configuration_gives_singletons() {
        let g = Graph::build_tree(2, 2).unwrap();
        let c = LinkConfiguration::empty(&g);
        let dec = trace_loops(&g, &c);
        assert_eq!(dec.loop_count(), 7);
        for id in 0..7 {
            assert!((dec.loop_length(id) - 1.0).abs() < 1e-15);
        }
        let root_loop = dec.loop_of_point(0, 0.0);
        assert!(dec.reaches_generation(root_loop, 0));
        assert!(!dec.reaches_generation(root_loop, 1));
    }

    #[test]
    fn single_edge_cases() {
        let g = Graph::build_path(2).unwrap();
        // one cross: a single loop through both circles
        let c = edge_config(&g, &[(0, 0.3, LinkKind::Cross)]);
        let dec = trace_loops(&g, &c);
        assert_eq!(dec.loop_count(), 1);
        assert_eq!(dec.loop_of_point(0, 0.0), dec.loop_of_point(1, 0.0));
        // two links of the same kind: two loops
        for kind in [LinkKind::Cross, LinkKind::DoubleBar] {
            let c = edge_config(&g, &[(0, 0.2, kind), (0, 0.5, kind)]);
            assert_eq!(trace_loops(&g, &c).loop_count(), 2);
        }
        // one cross plus one double-bar: a single loop
        let c = edge_config(&g, &[(0, 0.2, LinkKind::Cross), (0, 0.5, LinkKind::DoubleBar)]);
        assert_eq!(trace_loops(&g, &c).loop_count(), 1);
    }

    #[test]
    fn two_same_kind_links_split_lengths() {
        let g = Graph::build_path(2).unwrap();
        let (t1, t2) = (0.2, 0.5);
        for kind in [LinkKind::Cross, LinkKind::DoubleBar] {
            let c = edge_config(&g, &[(0, t1, kind), (0, t2, kind)]);
            let dec = trace_loops(&g, &c);
            let root_loop = dec.loop_of_point(0, 0.0);
            // the wrap arc containing time 0 has length 1 - (t2 - t1)
            let x = 1.0 - (t2 - t1);
            let expected = match kind {
                LinkKind::Cross => x + (1.0 - x), // lengths X and 1-X
                LinkKind::DoubleBar => 2.0 * x,   // lengths X and X
            };
            assert!((dec.loop_length(root_loop) - expected).abs() < 1e-12);
        }
    }

    /// Configuration mirroring the seven-vertex line figure: two merging
    /// single links plus a doubly-linked edge of mixed kinds, four loops.
    pub fn seven_path_fixture(g: &Graph) -> LinkConfiguration {
        edge_config(
            g,
            &[
                (0, 0.35, LinkKind::Cross),    // edge (0,1)
                (2, 0.6, LinkKind::DoubleBar), // edge (2,3)
                (5, 0.25, LinkKind::Cross),    // edge (5,6)
                (5, 0.75, LinkKind::DoubleBar),
            ],
        )
    }

    #[test]
    fn seven_path_fixture_has_four_loops() {
        let g = Graph::build_path(7).unwrap();
        let c = seven_path_fixture(&g);
        let dec = trace_loops(&g, &c);
        assert_eq!(dec.loop_count(), 4);
        // loops: {0,1}, {2,3}, {4}, {5,6}
        let mut supports: Vec<Vec<usize>> =
            (0..4).map(|i| dec.loops_visiting(i).to_vec()).collect();
        supports.sort();
        assert_eq!(supports, vec![vec![0, 1], vec![2, 3], vec![4], vec![5, 6]]);
    }

    #[test]
    fn walker_agrees_on_fixture() {
        let g = Graph::build_path(7).unwrap();
        let c = seven_path_fixture(&g);
        let lp = walk_loop_from(&g, &c, 0, arc_index_of_point(&c, 0, 0.0));
        assert!(lp.contains_point(&c, 1, 0.0));
        assert!(!lp.contains_point(&c, 2, 0.0));
    }

    #[test]
    fn reach_queries() {
        let g = Graph::build_tree(1, 1).unwrap();
        let c = edge_config(&g, &[(0, 0.4, LinkKind::Cross)]);
        let dec = trace_loops(&g, &c);
        let root_loop = dec.loop_of_point(0, 0.0);
        assert!(dec.reaches_generation(root_loop, 1));
        assert!(walk_reaches_generation(&g, &c, 0, 0.0, 1));
        let c = LinkConfiguration::empty(&g);
        let dec = trace_loops(&g, &c);
        assert!(!dec.reaches_generation(dec.loop_of_point(0, 0.0), 1));
    }

    #[test]
    fn delta_ell_examples() {
        let g = Graph::build_path(2).unwrap();
        let c = LinkConfiguration::empty(&g);
        // link between two singleton loops merges them
        assert_eq!(delta_ell_of_insert(&g, &c, 0, Link { time: 0.5, kind: LinkKind::Cross }).unwrap(), -1);
        // second same-kind link on a 1-cross edge splits
        let c = edge_config(&g, &[(0, 0.2, LinkKind::Cross)]);
        assert_eq!(delta_ell_of_insert(&g, &c, 0, Link { time: 0.6, kind: LinkKind::Cross }).unwrap(), 1);
        // second opposite-kind link keeps the count
        assert_eq!(delta_ell_of_insert(&g, &c, 0, Link { time: 0.6, kind: LinkKind::DoubleBar }).unwrap(), 0);
        // collision rejects
        assert!(delta_ell_of_insert(&g, &c, 0, Link { time: 0.2, kind: LinkKind::Cross }).is_err());
    }

    #[test]
    fn local_delta_matches_full_retrace() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let g = Graph::build_tree(2, 2).unwrap();
        for _ in 0..500 {
            let mut c = LinkConfiguration::sample(&g, 0.8, 0.5, &mut rng);
            let e = rng.random_range(0..g.edge_count());
            let link = Link {
                time: rng.random(),
                kind: if rng.random::<bool>() { LinkKind::Cross } else { LinkKind::DoubleBar },
            };
            let by_retrace = delta_ell_of_insert(&g, &c, e, link).unwrap();
            let by_walk = apply_insert_with_delta(&g, &mut c, e, link).unwrap();
            assert_eq!(by_walk, by_retrace);
            // and the reverse removal undoes it
            let idx = c.links_on_edge(e).iter().position(|l| l.time == link.time).unwrap();
            let (_, back) = apply_remove_with_delta(&g, &mut c, e, idx).unwrap();
            assert_eq!(back, -by_walk);
        }
    }

    #[test]
    fn conservation_of_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = Graph::build_tree(2, 2).unwrap();
            let c = LinkConfiguration::sample(&g, 1.0, 0.5, &mut rng);
            let dec = trace_loops(&g, &c);
            let total: f64 = (0..dec.loop_count()).map(|i| dec.loop_length(i)).sum();
            assert!((total - g.vertex_count() as f64).abs() < 1e-9);
        }
    }

    proptest! {
        // the loop count depends only on the interleaving order of times
        #[test]
        fn order_preserving_time_maps_preserve_loops(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Graph::build_path(4).unwrap();
            let c = LinkConfiguration::sample(&g, 1.2, 0.5, &mut rng);
            // order-preserving map t -> t^2 scaled into (0,1)
            let mut c2 = LinkConfiguration::empty(&g);
            for e in 0..g.edge_count() {
                for l in c.links_on_edge(e) {
                    let t = l.time * l.time * 0.999 + 5e-4;
                    c2.insert_link(&g, e, Link { time: t, kind: l.kind }).unwrap();
                }
            }
            let d1 = trace_loops(&g, &c);
            let d2 = trace_loops(&g, &c2);
            prop_assert_eq!(d1.loop_count(), d2.loop_count());
            for x in 0..g.vertex_count() {
                for y in 0..g.vertex_count() {
                    prop_assert_eq!(
                        d1.loop_of_point(x, 0.0) == d1.loop_of_point(y, 0.0),
                        d2.loop_of_point(x, 0.0) == d2.loop_of_point(y, 0.0)
                    );
                }
            }
        }

        // with k single links attached to otherwise link-free subtrees,
        // ell = sum ell_i - k + 1
        #[test]
        fn single_link_decomposition(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3usize;
            let g = Graph::build_tree(d, 2).unwrap();
            // root edges carry at most one link (A1-type); subtrees arbitrary
            let mut c = LinkConfiguration::empty(&g);
            let mut k = 0usize;
            for &e in g.root_edges() {
                if rng.random::<f64>() < 0.6 {
                    k += 1;
                    let kind = if rng.random::<bool>() { LinkKind::Cross } else { LinkKind::DoubleBar };
                    c.insert_link(&g, e, Link { time: rng.random(), kind }).unwrap();
                }
            }
            // links inside the subtrees (edges not incident to root)
            for e in 0..g.edge_count() {
                let (a, b) = g.edge(e);
                if a == g.root() || b == g.root() { continue; }
                for _ in 0..crate::linkproc::sample_poisson(0.8, &mut rng) {
                    let kind = if rng.random::<bool>() { LinkKind::Cross } else { LinkKind::DoubleBar };
                    let _ = c.insert_link(&g, e, Link { time: rng.random(), kind });
                }
            }
            let ell = count_loops(&g, &c) as isize;
            // per-subtree loop counts: trace each child's subtree separately
            let mut sum_ell_i = 0isize;
            for &e in g.root_edges() {
                let child = g.other_endpoint(e, g.root());
                // subtree of `child`: vertices with ids in its BFS range;
                // rebuild as an edge-list graph
                let mut verts = vec![child];
                let mut idx = 0;
                while idx < verts.len() {
                    let v = verts[idx];
                    for &ie in g.incident_edges(v) {
                        let w = g.other_endpoint(ie, v);
                        if g.generation(w) == g.generation(v) + 1 {
                            verts.push(w);
                        }
                    }
                    idx += 1;
                }
                let id_of: std::collections::HashMap<usize, usize> =
                    verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                let mut sub_edges = Vec::new();
                let mut links = Vec::new();
                for e2 in 0..g.edge_count() {
                    let (a, b) = g.edge(e2);
                    if let (Some(&ia), Some(&ib)) = (id_of.get(&a), id_of.get(&b)) {
                        sub_edges.push((ia, ib));
                        links.push(e2);
                    }
                }
                let sg = Graph::from_edge_list(verts.len(), sub_edges, 0).unwrap();
                let mut sc = LinkConfiguration::empty(&sg);
                for (se, &ge) in links.iter().enumerate() {
                    for l in c.links_on_edge(ge) {
                        sc.insert_link(&sg, se, *l).unwrap();
                    }
                }
                sum_ell_i += count_loops(&sg, &sc) as isize;
            }
            prop_assert_eq!(ell, sum_ell_i - k as isize + 1);
        }
    }
}
