//! End-to-end studies: sigma_m curves, the recursion inequalities,
//! stochastic domination, z_m asymptotics, and the beta_c bisection scan.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::analytics::{
    alpha_star, beta_plus, build_exploration_subtree, classify_root_event, q_coeff, ModelParams,
};
use crate::error::{LoopError, Result};
use crate::linkproc::{sample_poisson, LinkConfiguration, LinkKind};
use crate::looptracer::walk_reaches_generation;
use crate::parallel::{replicate_rng, run_replicates};
use crate::topology::Graph;
use crate::weighting::{
    estimate_expectation, estimate_partition_ratio, mcmc_expectation, reweighted_expectation,
    Estimate, McmcSettings, REPLICATES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// direct sampling at theta = 1, reweighting on small graphs,
    /// MCMC otherwise
    Auto,
    Reweight,
    Mcmc,
    /// implicit-tree direct sampling; valid only at theta = 1
    Direct,
}

impl std::str::FromStr for Method {
    type Err = LoopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Method::Auto),
            "reweight" => Ok(Method::Reweight),
            "mcmc" => Ok(Method::Mcmc),
            "direct" => Ok(Method::Direct),
            _ => Err(LoopError::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// Per-m estimates of sigma_m, the probability that the loop of (root, 0)
/// visits generation m of the depth-m tree.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaCurve {
    pub params: ModelParams,
    pub sigma: Vec<Estimate>,
}

impl SigmaCurve {
    pub fn sigma(&self, m: usize) -> &Estimate {
        &self.sigma[m]
    }

    pub fn m_max(&self) -> usize {
        self.sigma.len() - 1
    }
}

/// sigma_m for m = 0..m_max, each m on its own depth-m tree.
pub fn estimate_sigma(
    params: &ModelParams,
    m_max: usize,
    n_samples: usize,
    method: Method,
    seed: u64,
) -> Result<SigmaCurve> {
    let mut sigma = vec![Estimate::exact(1.0)];
    for m in 1..=m_max {
        sigma.push(estimate_sigma_single(params, m, n_samples, method, seed.wrapping_add(m as u64))?);
    }
    Ok(SigmaCurve { params: *params, sigma })
}

fn estimate_sigma_single(
    params: &ModelParams,
    m: usize,
    n_samples: usize,
    method: Method,
    seed: u64,
) -> Result<Estimate> {
    let method = match method {
        Method::Auto if params.theta == 1.0 => Method::Direct,
        other => other,
    };
    if method == Method::Direct {
        if params.theta != 1.0 {
            return Err(LoopError::InvalidParameter(
                "direct sampling is only unbiased at theta = 1".into(),
            ));
        }
        return Ok(sigma_direct_theta1(params.d, params.u, params.beta, m, n_samples, seed));
    }
    let g = Graph::build_tree(params.d, m)?;
    let f = move |g: &Graph, c: &LinkConfiguration, _ell: usize| {
        walk_reaches_generation(g, c, g.root(), 0.0, m) as u8 as f64
    };
    match method {
        Method::Reweight => {
            Ok(reweighted_expectation(&g, params.theta, params.u, params.beta, n_samples, seed, &f))
        }
        Method::Mcmc => {
            let settings = McmcSettings::with_steps(n_samples);
            mcmc_expectation(&g, params.theta, params.u, params.beta, settings, 8, seed, &f)
        }
        _ => estimate_expectation(&g, params.theta, params.u, params.beta, n_samples, seed, &f),
    }
}

/// Direct sampler for theta = 1 on the implicit d-ary tree: vertices are
/// BFS ids (children of v are d v + 1 .. d v + d), edges are sampled on
/// first visit, and the trajectory walk stops at generation `target`.
/// Memory scales with the loop of the root, not with the tree.
pub fn sigma_direct_theta1(
    d: usize,
    u: f64,
    beta: f64,
    target: usize,
    n_samples: usize,
    seed: u64,
) -> Estimate {
    let per_rep = n_samples.div_ceil(REPLICATES);
    let hits = run_replicates(REPLICATES, |rep| {
        let mut rng = replicate_rng(seed, rep as u64);
        (0..per_rep)
            .filter(|_| {
                let mut tree = LazyTree::new(d as u64, u, beta, target);
                tree.root_loop_reaches_target(&mut rng)
            })
            .count() as u64
    });
    let n = (per_rep * REPLICATES) as u64;
    let k: u64 = hits.iter().sum();
    let p = k as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Estimate {
        mean: p,
        std_error: se,
        n_samples: n,
        ess: n as f64,
        low_ess: false,
    }
}

/// (time, other endpoint, kind) endpoint entries of one implicit vertex.
type LazyEndpoints = Vec<(f64, u64, LinkKind)>;

struct LazyTree {
    d: u64,
    u: f64,
    beta: f64,
    target: usize,
    endpoints: HashMap<u64, LazyEndpoints>,
    sampled: std::collections::HashSet<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

impl LazyTree {
    fn new(d: u64, u: f64, beta: f64, target: usize) -> Self {
        LazyTree {
            d,
            u,
            beta,
            target,
            endpoints: HashMap::new(),
            sampled: std::collections::HashSet::new(),
        }
    }

    fn generation(&self, mut v: u64) -> usize {
        let mut g = 0;
        while v > 0 {
            v = (v - 1) / self.d;
            g += 1;
        }
        g
    }

    /// Samples the child edges of `v` (the parent edge was sampled when
    /// the parent was ensured). After this the endpoint list of `v` is
    /// final, because the walk only reaches `v` through its parent side
    /// first.
    fn ensure<R: Rng>(&mut self, v: u64, rng: &mut R) {
        if !self.sampled.insert(v) {
            return;
        }
        if self.generation(v) >= self.target {
            return; // the walk stops here; children are never needed
        }
        for i in 0..self.d {
            let child = self.d * v + 1 + i;
            for _ in 0..sample_poisson(self.beta, rng) {
                let time: f64 = rng.random();
                let kind = if rng.random::<f64>() < self.u { LinkKind::Cross } else { LinkKind::DoubleBar };
                self.endpoints.entry(v).or_default().push((time, child, kind));
                self.endpoints.entry(child).or_default().push((time, v, kind));
            }
        }
        if let Some(ep) = self.endpoints.get_mut(&v) {
            ep.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }

    /// Walks the loop of (root, 0); true as soon as it touches generation
    /// `target`.
    fn root_loop_reaches_target<R: Rng>(&mut self, rng: &mut R) -> bool {
        if self.target == 0 {
            return true;
        }
        self.ensure(0, rng);
        let k0 = self.endpoints.get(&0).map_or(0, |e| e.len());
        if k0 == 0 {
            return false;
        }
        // the arc containing time 0 is the wrap arc, index k - 1
        let start = (0u64, k0 - 1, Dir::Up);
        let (mut v, mut a, mut dir) = start;
        loop {
            let ep = &self.endpoints[&v];
            let k = ep.len();
            let (t, w, kind) = match dir {
                Dir::Up => ep[(a + 1) % k],
                Dir::Down => ep[a],
            };
            self.ensure(w, rng);
            if self.generation(w) >= self.target {
                return true;
            }
            let epw = &self.endpoints[&w];
            let kw = epw.len();
            let j = epw.partition_point(|&(s, _, _)| s < t);
            debug_assert!(j < kw && epw[j].0 == t);
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
}

/// One row of the recursion-inequality report.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionCheck {
    pub m: usize,
    pub sigma_m: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub tolerance: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecursionReport {
    pub curve: SigmaCurve,
    pub epsilon: f64,
    pub slack_lower: f64,
    pub slack_upper: f64,
    pub checks: Vec<RecursionCheck>,
    pub all_ok: bool,
}

/// Checks, for each m, the two-sided recursion
/// sigma_m >= sigmatilde_{m-1} + (sigmatilde_{m-1}/d)(alpha - alpha*)
///            - sigmatilde_{m-1}^2 / 2 - C / d^3
/// sigma_m <= (sigma_{m-1} v sigma_{m-2}) (1 + (alpha - alpha*)/d + C'/d^2)
/// with sigmatilde_{m-1} = sigma_{m-1} ^ sigma_{m-2} ^ (epsilon/d) and the
/// convention sigma_{-1} = 1, within 3 combined standard errors.
pub fn verify_recursion(
    params: &ModelParams,
    m_max: usize,
    n_samples: usize,
    slack_lower: f64,
    slack_upper: f64,
    epsilon: f64,
    seed: u64,
) -> Result<RecursionReport> {
    let curve = estimate_sigma(params, m_max, n_samples, Method::Auto, seed)?;
    let d = params.d as f64;
    let da = params.alpha() - alpha_star(params.theta, params.u);
    let at = |m: isize| -> (f64, f64) {
        if m < 0 {
            (1.0, 0.0)
        } else {
            let e = curve.sigma(m as usize);
            (e.mean, e.std_error)
        }
    };
    let mut checks = Vec::new();
    for m in 1..=m_max {
        let (s_m, e_m) = at(m as isize);
        let (s_1, e_1) = at(m as isize - 1);
        let (s_2, e_2) = at(m as isize - 2);
        let st = s_1.min(s_2).min(epsilon / d);
        let lower = st + st / d * da - st * st / 2.0 - slack_lower / d.powi(3);
        let upper = s_1.max(s_2) * (1.0 + da / d + slack_upper / (d * d));
        let tol = 3.0 * (e_m + e_1 + e_2);
        checks.push(RecursionCheck {
            m,
            sigma_m: s_m,
            lower_bound: lower,
            upper_bound: upper,
            tolerance: tol,
            lower_ok: s_m >= lower - tol,
            upper_ok: s_m <= upper + tol,
        });
    }
    let all_ok = checks.iter().all(|c| c.lower_ok && c.upper_ok);
    Ok(RecursionReport {
        curve,
        epsilon,
        slack_lower,
        slack_upper,
        checks,
        all_ok,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationCheck {
    pub d: usize,
    pub event: &'static str,
    pub p_theta: Estimate,
    pub p_plus: Estimate,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub theta: f64,
    pub u: f64,
    pub alpha: f64,
    pub checks: Vec<DominationCheck>,
    /// P_theta(not A1, not A2) d^2 per d of the sweep
    pub sweep: Vec<(usize, f64)>,
    pub sweep_bounded: bool,
    pub all_ok: bool,
}

fn event_indicator(event: &str) -> impl Fn(&Graph, &LinkConfiguration, usize) -> f64 + Sync + '_ {
    move |g, c, _| {
        let class = classify_root_event(g, c);
        let hit = match event {
            "not_a1" => !class.is_a1(),
            _ => !class.is_a1() && !class.is_a2(),
        };
        hit as u8 as f64
    }
}

/// Plain Poisson probability of the event at rate `beta` on `g`.
fn direct_event_probability(
    g: &Graph,
    beta: f64,
    u: f64,
    event: &'static str,
    n_samples: usize,
    seed: u64,
) -> Estimate {
    let per_rep = n_samples.div_ceil(REPLICATES);
    let f = event_indicator(event);
    let hits = run_replicates(REPLICATES, |rep| {
        let mut rng = replicate_rng(seed, rep as u64);
        (0..per_rep)
            .filter(|_| {
                let c = LinkConfiguration::sample(g, beta, u, &mut rng);
                f(g, &c, 0) > 0.5
            })
            .count() as u64
    });
    let n = (per_rep * REPLICATES) as u64;
    let p = hits.iter().sum::<u64>() as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Estimate { mean: p, std_error: se, n_samples: n, ess: n as f64, low_ess: false }
}

/// Verifies P_theta(A) <= P+(A) + 3 sigma for the increasing events "not
/// A1" and "not A1 and not A2" over d in {4, 8, 16, 32} at fixed alpha,
/// and checks the d^2-scaling band of the latter event.
pub fn check_domination(
    theta: f64,
    u: f64,
    alpha: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<DominationReport> {
    let mut checks = Vec::new();
    let mut sweep = Vec::new();
    for (i, &d) in [4usize, 8, 16, 32].iter().enumerate() {
        let params = ModelParams::from_alpha(d, theta, u, alpha)?;
        let g = Graph::build_tree(d, m)?;
        let bp = beta_plus(&params);
        for (j, event) in ["not_a1", "not_a1_a2"].iter().enumerate() {
            let f = event_indicator(event);
            let p_theta = estimate_expectation(
                &g,
                theta,
                u,
                params.beta,
                n_samples,
                seed.wrapping_add((4 * i + 2 * j) as u64),
                &f,
            )?;
            let p_plus = direct_event_probability(
                &g,
                bp,
                u,
                if *event == "not_a1" { "not_a1" } else { "not_a1_a2" },
                n_samples,
                seed.wrapping_add((4 * i + 2 * j + 1) as u64),
            );
            let tol = 3.0 * (p_theta.std_error + p_plus.std_error);
            let ok = p_theta.mean <= p_plus.mean + tol;
            if *event != "not_a1" {
                sweep.push((d, p_theta.mean * (d * d) as f64));
            }
            checks.push(DominationCheck {
                d,
                event: if *event == "not_a1" { "not_a1" } else { "not_a1_a2" },
                p_theta,
                p_plus,
                ok,
            });
        }
    }
    // boundedness band: every scaled value within a factor 3 of the mean
    let mean = sweep.iter().map(|&(_, v)| v).sum::<f64>() / sweep.len() as f64;
    let sweep_bounded = sweep.iter().all(|&(_, v)| v >= mean / 3.0 && v <= 3.0 * mean);
    let all_ok = checks.iter().all(|c| c.ok);
    Ok(DominationReport { theta, u, alpha, checks, sweep, sweep_bounded, all_ok })
}

#[derive(Debug, Clone, Serialize)]
pub struct ZmCheck {
    pub d: usize,
    pub m: usize,
    pub z_m: Estimate,
    /// (z_m - 1 + (q - 1/2)/d) d^2
    pub residual: f64,
    pub low_ess: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZmReport {
    pub theta: f64,
    pub u: f64,
    pub checks: Vec<ZmCheck>,
    /// z_m z_{m-1} - 1 scaled by d, per d (using the largest two m)
    pub product_residuals: Vec<(usize, f64)>,
    pub bounded: bool,
}

/// Checks z_m = 1 - (q - 1/2)/d + O(d^-2) by scaling residuals with d^2
/// across `d_list` at beta = theta/d, and the product z_m z_{m-1} =
/// 1 + O(1/d).
pub fn check_zm_asymptotics(
    theta: f64,
    u: f64,
    d_list: &[usize],
    m_list: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<ZmReport> {
    let q = q_coeff(theta, u);
    let mut checks = Vec::new();
    let mut product_residuals = Vec::new();
    for (i, &d) in d_list.iter().enumerate() {
        let beta = theta / d as f64;
        let dd = d as f64;
        let mut by_m: HashMap<usize, f64> = HashMap::new();
        for (j, &m) in m_list.iter().enumerate() {
            let z = estimate_partition_ratio(
                d,
                theta,
                u,
                beta,
                m,
                n_samples,
                seed.wrapping_add((i * m_list.len() + j) as u64),
            )?;
            let residual = (z.mean - 1.0 + (q - 0.5) / dd) * dd * dd;
            by_m.insert(m, z.mean);
            checks.push(ZmCheck { d, m, residual, low_ess: z.low_ess, z_m: z });
        }
        let mut ms: Vec<usize> = m_list.to_vec();
        ms.sort_unstable();
        if let [.., a, b] = ms[..] {
            if let (Some(&za), Some(&zb)) = (by_m.get(&a), by_m.get(&b)) {
                product_residuals.push((d, (za * zb - 1.0) * dd));
            }
        }
    }
    // bounded: residuals at the largest d do not exceed a constant fitted
    // from the smallest d (plus MC noise)
    let d_min = *d_list.iter().min().unwrap();
    let fit = checks
        .iter()
        .filter(|c| c.d == d_min)
        .map(|c| c.residual.abs() + 3.0 * c.z_m.std_error * (d_min * d_min) as f64)
        .fold(0.5f64, f64::max);
    let bounded = checks
        .iter()
        .all(|c| c.residual.abs() <= 3.0 * fit + 3.0 * c.z_m.std_error * (c.d * c.d) as f64);
    Ok(ZmReport { theta, u, checks, product_residuals, bounded })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanStep {
    pub beta: f64,
    pub supercritical: bool,
    pub sigma_tail: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub params_at_beta_c: ModelParams,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_c: f64,
    pub tolerance: f64,
    pub trace: Vec<ScanStep>,
    /// (beta_c/theta - 1/d) d^2 - alpha*
    pub delta_alpha: f64,
}

pub struct ScanSettings {
    pub m_max: usize,
    pub n_samples: usize,
    pub tolerance: f64,
    /// plateau threshold epsilon/d on sigma_{m_max}
    pub epsilon: f64,
    /// bracket stretch alpha_0
    pub alpha0: f64,
    /// tail-ratio floor offset: ratio at m must exceed 1 - 1/(m + offset)
    pub ratio_offset: f64,
    pub seed: u64,
}

impl ScanSettings {
    pub fn new(m_max: usize, n_samples: usize, tolerance: f64, seed: u64) -> Self {
        ScanSettings {
            m_max,
            n_samples,
            tolerance,
            epsilon: 0.5,
            alpha0: 2.0,
            ratio_offset: 1.0,
            seed,
        }
    }
}

/// Bisects beta for the sub/super-critical transition of the sigma_m
/// decay. Supercritical means sigma_{m_max} >= epsilon/d and the last
/// three ratios sigma_m / sigma_{m-1} stay above the critical decay
/// envelope 1 - 1/(m + ratio_offset): at criticality sigma_m falls like
/// 2/m, so ratios sitting above that envelope indicate a plateau.
pub fn scan_beta_c(d: usize, theta: f64, u: f64, settings: &ScanSettings) -> Result<ScanResult> {
    if d < 2 {
        return Err(LoopError::BracketFailure(
            "scan needs d >= 2; the d = 1 chain has no transition of this form".into(),
        ));
    }
    if settings.tolerance <= 0.0 || settings.m_max < 4 {
        return Err(LoopError::InvalidParameter(
            "scan needs tolerance > 0 and m_max >= 4".into(),
        ));
    }
    let dd = d as f64;
    let mut lo = theta / (2.0 * dd);
    let mut hi = 2.0 * theta / dd * (1.0 + 2.0 * settings.alpha0 / dd);
    let mut trace = Vec::new();
    let classify = |beta: f64, trace: &mut Vec<ScanStep>| -> Result<bool> {
        let params = ModelParams::from_beta(d, theta, u, beta)?;
        let curve = estimate_sigma(
            &params,
            settings.m_max,
            settings.n_samples,
            Method::Auto,
            settings.seed.wrapping_add(trace.len() as u64),
        )?;
        let m = settings.m_max;
        let plateau = curve.sigma(m).mean >= settings.epsilon / dd;
        let tail: Vec<f64> = (m - 2..=m)
            .map(|k| {
                let prev = curve.sigma(k - 1).mean;
                if prev > 0.0 { curve.sigma(k).mean / prev } else { 0.0 }
            })
            .collect();
        let sup = plateau
            && tail.iter().enumerate().all(|(i, &r)| {
                let k = (m - 2 + i) as f64;
                r >= 1.0 - 1.0 / (k + settings.ratio_offset)
            });
        trace.push(ScanStep { beta, supercritical: sup, sigma_tail: tail });
        Ok(sup)
    };
    let lo_sup = classify(lo, &mut trace)?;
    let hi_sup = classify(hi, &mut trace)?;
    if lo_sup || !hi_sup {
        return Err(LoopError::BracketFailure(format!(
            "bracket [{lo:.6}, {hi:.6}] does not straddle the transition \
             (lo supercritical: {lo_sup}, hi supercritical: {hi_sup}); trace: {}",
            serde_json::to_string(&trace).unwrap_or_default()
        )));
    }
    let (beta_lo0, beta_hi0) = (lo, hi);
    while hi - lo > settings.tolerance {
        let mid = 0.5 * (lo + hi);
        if classify(mid, &mut trace)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let beta_c = 0.5 * (lo + hi);
    let delta_alpha = (beta_c / theta - 1.0 / dd) * dd * dd - alpha_star(theta, u);
    Ok(ScanResult {
        params_at_beta_c: ModelParams::from_beta(d, theta, u, beta_c)?,
        beta_lo: beta_lo0,
        beta_hi: beta_hi0,
        beta_c,
        tolerance: settings.tolerance,
        trace,
        delta_alpha,
    })
}

/// Monte Carlo mean of |V_k(exploration subtree)| under plain rate-`beta`
/// sampling on the depth-m tree.
pub fn mc_subtree_generation_size(
    d: usize,
    beta: f64,
    u: f64,
    k: usize,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let g = Graph::build_tree(d, m)?;
    let per_rep = n_samples.div_ceil(REPLICATES);
    let sums = run_replicates(REPLICATES, |rep| {
        let mut rng = replicate_rng(seed, rep as u64);
        let (mut s, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..per_rep {
            let c = LinkConfiguration::sample(&g, beta, u, &mut rng);
            let t = build_exploration_subtree(&g, &c);
            let v = t.generation_size(k) as f64;
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let n = (per_rep * REPLICATES) as f64;
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok(Estimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples: n as u64,
        ess: n,
        low_ess: false,
    })
}
