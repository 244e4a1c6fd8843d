//! Brute-force oracles.
//!
//! [`enumerate_edge`] computes single-edge quantities of the weighted
//! measure exactly, by summing over the link count and every cross/bar
//! kind sequence. Only the time order of links matters, so representative
//! times stand in for the Poisson times and the sum over configurations
//! collapses to Poisson weights times kind counts.
//!
//! [`exhaustive_tracer_check`] cross-validates the disjoint-set loop
//! tracer against the independent trajectory walker on every small
//! configuration of a family of small graphs.

use std::sync::Mutex;
use std::sync::OnceLock;

use crate::error::{LoopError, Result};
use crate::linkproc::{Link, LinkConfiguration, LinkKind};
use crate::looptracer::{trace_loops, walk_loop_from, ArcRef};
use crate::topology::Graph;

/// Hard cap on the enumeration order; past this the tail bound has failed.
pub const MAX_ENUM_LINKS: usize = 24;
const TAIL_TOLERANCE: f64 = 1e-12;

/// Exact single-edge quantities under the theta-weighted measure,
/// truncated once the Poisson tail is below 1e-12 of the running total.
#[derive(Debug, Clone)]
pub struct EdgeOracle {
    /// Zhat = E[theta^(ell - 2)]
    pub zhat: f64,
    /// prob_ell[k] = P_theta(ell = k); index 0 unused
    pub prob_ell: Vec<f64>,
    /// P_theta((x, 0) and (y, 0) lie on the same loop)
    pub prob_connect: f64,
    /// prob_links[j] = P_theta(exactly j links)
    pub prob_links: Vec<f64>,
    /// enumeration order actually used
    pub max_links: usize,
}

/// Per-n outcome counts over all 2^n kind sequences, grouped by
/// (cross count, loop count, connectivity). Independent of theta, u, beta,
/// so computed once per n and cached for the process lifetime.
struct MaskTable {
    /// counts[c][ell][conn] over masks with c crosses
    counts: Vec<Vec<[u64; 2]>>,
}

fn build_mask_table(n: usize) -> MaskTable {
    let max_ell = n.max(2);
    let mut counts = vec![vec![[0u64; 2]; max_ell + 1]; n + 1];
    if n == 0 {
        counts[0][2][0] = 1;
        return MaskTable { counts };
    }
    // arcs: x_i = i, y_i = n + i for i in 0..n; arc i spans (t_i, t_{i+1})
    // cyclically, so below link i is arc (i + n - 1) % n and above is arc i
    let mut parent = vec![0u32; 2 * n];
    for mask in 0u32..(1u32 << n) {
        for (i, p) in parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        let find = |p: &mut Vec<u32>, mut a: u32| {
            while p[a as usize] != a {
                p[a as usize] = p[p[a as usize] as usize];
                a = p[a as usize];
            }
            a
        };
        let mut ell = 2 * n;
        for i in 0..n {
            let below = (i + n - 1) % n;
            let pairs = if mask & (1 << i) != 0 {
                // cross: below(x) ~ above(y), below(y) ~ above(x)
                [(below, n + i), (n + below, i)]
            } else {
                // double-bar: below ~ below, above ~ above
                [(below, n + below), (i, n + i)]
            };
            for (a, b) in pairs {
                let (ra, rb) = (find(&mut parent, a as u32), find(&mut parent, b as u32));
                if ra != rb {
                    parent[ra as usize] = rb;
                    ell -= 1;
                }
            }
        }
        // connectivity of the points (x, 0) and (y, 0): both lie on the
        // wrap arcs with index n - 1
        let conn = find(&mut parent, (n - 1) as u32) == find(&mut parent, (2 * n - 1) as u32);
        counts[mask.count_ones() as usize][ell][conn as usize] += 1;
    }
    MaskTable { counts }
}

fn mask_tables() -> &'static Mutex<Vec<Option<&'static MaskTable>>> {
    static TABLES: OnceLock<Mutex<Vec<Option<&'static MaskTable>>>> = OnceLock::new();
    TABLES.get_or_init(|| Mutex::new(Vec::new()))
}

fn mask_table(n: usize) -> &'static MaskTable {
    let mut guard = mask_tables().lock().unwrap();
    if guard.len() <= n {
        guard.resize(n + 1, None);
    }
    if guard[n].is_none() {
        guard[n] = Some(Box::leak(Box::new(build_mask_table(n))));
    }
    guard[n].unwrap()
}

pub fn enumerate_edge(theta: f64, u: f64, beta: f64) -> Result<EdgeOracle> {
    if theta <= 0.0 || beta < 0.0 || !(0.0..=1.0).contains(&u) {
        return Err(LoopError::InvalidParameter(format!(
            "enumerate_edge needs theta > 0, beta >= 0, u in [0,1]; got theta={theta} u={u} beta={beta}"
        )));
    }
    let mut zhat = 0.0f64;
    let mut by_ell: Vec<f64> = Vec::new();
    let mut by_links: Vec<f64> = Vec::new();
    let mut connected = 0.0f64;
    // worst-case per-configuration weight factor for the tail bound:
    // theta^(ell-2) <= max(theta, 1/theta)^n once n >= 1
    let big = theta.max(1.0 / theta);
    let mut pois = (-beta).exp(); // e^{-beta} beta^n / n!
    let mut used = 0usize;
    for n in 0..=MAX_ENUM_LINKS {
        if n > 0 {
            pois *= beta / n as f64;
        }
        let table = mask_table(n);
        let mut mass = 0.0f64;
        for c in 0..=n {
            let kind_prob = u.powi(c as i32) * (1.0 - u).powi((n - c) as i32);
            if kind_prob == 0.0 {
                continue;
            }
            for ell in 1..table.counts[c].len() {
                for conn in 0..2 {
                    let count = table.counts[c][ell][conn];
                    if count == 0 {
                        continue;
                    }
                    let w = pois * kind_prob * count as f64 * theta.powi(ell as i32 - 2);
                    mass += w;
                    if by_ell.len() <= ell {
                        by_ell.resize(ell + 1, 0.0);
                    }
                    by_ell[ell] += w;
                    if conn == 1 {
                        connected += w;
                    }
                }
            }
        }
        zhat += mass;
        by_links.push(mass);
        used = n;
        // geometric tail bound on sum_{j>n} e^{-beta} (beta big)^j / j!
        let q = beta * big / (n + 2) as f64;
        if q < 1.0 {
            let next = pois * beta / (n + 1) as f64 * big.powi(n as i32 + 1);
            if next / (1.0 - q) < TAIL_TOLERANCE * zhat {
                break;
            }
        }
        if n == MAX_ENUM_LINKS {
            return Err(LoopError::OracleTruncation(format!(
                "single-edge tail not below {TAIL_TOLERANCE:.0e} after {MAX_ENUM_LINKS} links (theta={theta} beta={beta})"
            )));
        }
    }
    for w in by_ell.iter_mut() {
        *w /= zhat;
    }
    for w in by_links.iter_mut() {
        *w /= zhat;
    }
    Ok(EdgeOracle {
        zhat,
        prob_ell: by_ell,
        prob_connect: connected / zhat,
        prob_links: by_links,
        max_links: used,
    })
}

impl EdgeOracle {
    pub fn prob_ell(&self, k: usize) -> f64 {
        self.prob_ell.get(k).copied().unwrap_or(0.0)
    }

    pub fn prob_links(&self, j: usize) -> f64 {
        self.prob_links.get(j).copied().unwrap_or(0.0)
    }
}

/// E[X | two same-kind links]: the wrap-arc length X has density 2l on
/// [0,1], integrated numerically by Simpson's rule.
pub fn mean_x_given_a2same() -> f64 {
    simpson(|l| l * 2.0 * l, 0.0, 1.0, 1000)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let coef = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += coef * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn check_graphs() -> Vec<(&'static str, Graph)> {
    vec![
        ("path2", Graph::build_path(2).unwrap()),
        ("path3", Graph::build_path(3).unwrap()),
        ("path4", Graph::build_path(4).unwrap()),
        ("star3", Graph::build_tree(3, 1).unwrap()),
        ("cycle4", Graph::from_edge_list(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], 0).unwrap()),
    ]
}

/// Compares the disjoint-set tracer with the trajectory walker on every
/// configuration of up to `max_links` links (all edge assignments, all
/// kind sequences, representative times) on a family of small graphs.
/// Returns the number of configurations checked.
pub fn exhaustive_tracer_check(max_links: usize) -> Result<u64> {
    let mut checked = 0u64;
    for (name, g) in check_graphs() {
        let edges = g.edge_count();
        for k in 0..=max_links {
            // link i gets time (i + 0.5) / k and an edge from a mixed-radix
            // counter, covering every interleaving order
            let assignments = (edges as u64).pow(k as u32);
            for assign in 0..assignments {
                for mask in 0u32..(1u32 << k) {
                    let mut c = LinkConfiguration::empty(&g);
                    let mut a = assign;
                    for i in 0..k {
                        let e = (a % edges as u64) as usize;
                        a /= edges as u64;
                        let kind = if mask & (1 << i) != 0 { LinkKind::Cross } else { LinkKind::DoubleBar };
                        c.insert_link(&g, e, Link { time: (i as f64 + 0.5) / k as f64, kind })?;
                    }
                    compare_tracers(name, &g, &c)?;
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

/// Compares the tracers on random configurations: a random graph from
/// the check family, random beta in [0.2, 2], random u, and a sampled
/// link process thinned to at most `max_links` links. Returns the number
/// of configurations checked.
pub fn random_tracer_check(n_configs: usize, max_links: usize, seed: u64) -> Result<u64> {
    use rand::Rng;
    use rand::SeedableRng;
    let graphs = check_graphs();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0u64;
    for _ in 0..n_configs {
        let (name, g) = &graphs[rng.random_range(0..graphs.len())];
        let beta = rng.random_range(0.2..2.0);
        let u = rng.random_range(0.0..=1.0);
        let mut c = LinkConfiguration::sample(g, beta, u, &mut rng);
        while c.total_links() > max_links {
            let (edge, index) = c.nth_link(rng.random_range(0..c.total_links())).unwrap();
            c.remove_link(g, edge, index)?;
        }
        compare_tracers(name, g, &c)?;
        checked += 1;
    }
    Ok(checked)
}

/// Walks every arc and checks the walked partition matches the
/// disjoint-set components, including loop count and vertical lengths.
pub fn compare_tracers(name: &str, g: &Graph, c: &LinkConfiguration) -> Result<()> {
    let dec = trace_loops(g, c);
    let mut seen: std::collections::HashSet<ArcRef> = std::collections::HashSet::new();
    let mut walked_loops = 0usize;
    for v in 0..g.vertex_count() {
        let arcs = c.endpoints_at(v).len().max(1);
        for arc in 0..arcs {
            let a = ArcRef { vertex: v, arc };
            if seen.contains(&a) {
                continue;
            }
            walked_loops += 1;
            let lp = walk_loop_from(g, c, v, arc);
            let id = dec.loop_of_point(v, midpoint_of_arc(c, v, arc));
            for b in &lp.arcs {
                let bid = dec.loop_of_point(b.vertex, midpoint_of_arc(c, b.vertex, b.arc));
                if bid != id {
                    return Err(LoopError::InvalidParameter(format!(
                        "tracer mismatch on {name}: walk from ({v},{arc}) spans components {id} and {bid}\n{}",
                        c.to_text(g)
                    )));
                }
                seen.insert(*b);
            }
            let (wl, dl) = (lp.vertical_length(c), dec.loop_length(id));
            if (wl - dl).abs() > 1e-9 {
                return Err(LoopError::InvalidParameter(format!(
                    "tracer mismatch on {name}: lengths {wl} vs {dl}\n{}",
                    c.to_text(g)
                )));
            }
        }
    }
    if walked_loops != dec.loop_count() {
        return Err(LoopError::InvalidParameter(format!(
            "tracer mismatch on {name}: {walked_loops} walked loops vs {} components\n{}",
            dec.loop_count(),
            c.to_text(g)
        )));
    }
    Ok(())
}

fn midpoint_of_arc(c: &LinkConfiguration, v: usize, arc: usize) -> f64 {
    let ep = c.endpoints_at(v);
    let k = ep.len();
    if k == 0 {
        return 0.5;
    }
    let lo = ep[arc].0;
    let hi = ep[(arc + 1) % k].0;
    let mid = lo + (hi - lo).rem_euclid(1.0).max(f64::EPSILON) / 2.0;
    mid.rem_euclid(1.0)
}
