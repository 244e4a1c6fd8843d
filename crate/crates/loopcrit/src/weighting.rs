//! Estimators for theta-weighted expectations E_theta[X] =
//! E[X theta^ell] / E[theta^ell].
//!
//! Two strategies are provided. Importance reweighting samples the plain
//! link process and reweights by theta^(ell - V); the offset by the vertex
//! count keeps the weights O(1) since ell = V for the empty configuration.
//! The birth-death Metropolis chain targets the weighted measure directly
//! and scales to large graphs where the reweighting weights degenerate.

use rand::Rng;

use crate::error::{LoopError, Result};
use crate::linkproc::{Link, LinkConfiguration, LinkKind};
use crate::looptracer::{apply_insert_with_delta, apply_remove_with_delta, count_loops};
use crate::parallel::{replicate_rng, run_replicates};
use crate::topology::Graph;

/// Point estimate with uncertainty and effective sample size.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// raw samples (or kept MCMC samples) behind the estimate
    pub n_samples: u64,
    pub ess: f64,
    /// set when the effective sample size fell below the floor of 50
    pub low_ess: bool,
}

const ESS_FLOOR: f64 = 50.0;

impl Estimate {
    fn new(mean: f64, std_error: f64, n_samples: u64, ess: f64) -> Self {
        Estimate { mean, std_error, n_samples, ess, low_ess: ess < ESS_FLOOR }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, std_error: 0.0, n_samples: 1, ess: 1.0, low_ess: false }
    }
}

/// An estimand evaluated on a sampled configuration with its loop count.
pub trait Estimand: Sync {
    fn eval(&self, g: &Graph, c: &LinkConfiguration, ell: usize) -> f64;
}

impl<F: Fn(&Graph, &LinkConfiguration, usize) -> f64 + Sync> Estimand for F {
    fn eval(&self, g: &Graph, c: &LinkConfiguration, ell: usize) -> f64 {
        self(g, c, ell)
    }
}

/// Number of fixed replicate streams for the direct samplers. Fixed so the
/// result does not depend on the worker count.
pub const REPLICATES: usize = 64;

#[derive(Debug, Clone, Copy, Default)]
struct WeightedSums {
    sw: f64,
    swf: f64,
    sw2: f64,
    sw2f: f64,
    sw2f2: f64,
    n: u64,
}

impl WeightedSums {
    fn push(&mut self, w: f64, f: f64) {
        self.sw += w;
        self.swf += w * f;
        self.sw2 += w * w;
        self.sw2f += w * w * f;
        self.sw2f2 += w * w * f * f;
        self.n += 1;
    }

    fn merge(mut self, other: &WeightedSums) -> Self {
        self.sw += other.sw;
        self.swf += other.swf;
        self.sw2 += other.sw2;
        self.sw2f += other.sw2f;
        self.sw2f2 += other.sw2f2;
        self.n += other.n;
        self
    }
}

fn offset_weight(theta: f64, ell: usize, vertices: usize) -> f64 {
    theta.powi(ell as i32 - vertices as i32)
}

/// Self-normalized importance estimate of E_theta[f] using `n_samples`
/// draws of the plain link process, split over [`REPLICATES`] fixed RNG
/// streams. The standard error is the delta-method error of the ratio
/// estimator; ESS is (sum w)^2 / sum w^2.
pub fn reweighted_expectation<E: Estimand>(
    g: &Graph,
    theta: f64,
    u: f64,
    beta: f64,
    n_samples: usize,
    seed: u64,
    f: &E,
) -> Estimate {
    let per_rep = n_samples.div_ceil(REPLICATES);
    let partials = run_replicates(REPLICATES, |rep| {
        let mut rng = replicate_rng(seed, rep as u64);
        let mut sums = WeightedSums::default();
        for _ in 0..per_rep {
            let c = LinkConfiguration::sample(g, beta, u, &mut rng);
            let ell = count_loops(g, &c);
            let w = offset_weight(theta, ell, g.vertex_count());
            sums.push(w, f.eval(g, &c, ell));
        }
        sums
    });
    let s = partials.iter().fold(WeightedSums::default(), |acc, p| acc.merge(p));
    let mean = s.swf / s.sw;
    // delta method: var(R) = sum (w_i (f_i - R))^2 / (sum w)^2
    let resid2 = s.sw2f2 - 2.0 * mean * s.sw2f + mean * mean * s.sw2;
    let std_error = (resid2.max(0.0)).sqrt() / s.sw;
    let ess = if s.sw2 > 0.0 { s.sw * s.sw / s.sw2 } else { 0.0 };
    Estimate::new(mean, std_error, s.n, ess)
}

/// Plain Monte Carlo estimate of the weighted mass Zhat = E[theta^(ell-V)].
pub fn estimate_weighted_mass(
    g: &Graph,
    theta: f64,
    u: f64,
    beta: f64,
    n_samples: usize,
    seed: u64,
) -> Estimate {
    let per_rep = n_samples.div_ceil(REPLICATES);
    let partials = run_replicates(REPLICATES, |rep| {
        let mut rng = replicate_rng(seed, rep as u64);
        let (mut s, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..per_rep {
            let c = LinkConfiguration::sample(g, beta, u, &mut rng);
            let w = offset_weight(theta, count_loops(g, &c), g.vertex_count());
            s += w;
            s2 += w * w;
        }
        (s, s2, per_rep as u64)
    });
    let (s, s2, n) = partials
        .iter()
        .fold((0.0, 0.0, 0u64), |(a, b, c), &(x, y, z)| (a + x, b + y, c + z));
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    let std_error = (var / n as f64).sqrt();
    Estimate::new(mean, std_error, n, n as f64)
}

/// Ratio z_m = e^{-d beta (1 - 1/theta)} Zhat_{m-1}^d / Zhat_m of partition
/// functions on trees of depth m-1 and m. The exponential prefactor is the
/// theta^V bookkeeping left over from the offset weights, using
/// V_m = 1 + d V_{m-1}.
pub fn estimate_partition_ratio(
    d: usize,
    theta: f64,
    u: f64,
    beta: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if m == 0 {
        return Err(LoopError::InvalidParameter("partition ratio needs m >= 1".into()));
    }
    let g_m = Graph::build_tree(d, m)?;
    let g_m1 = Graph::build_tree(d, m - 1)?;
    debug_assert_eq!(g_m.vertex_count(), 1 + d * g_m1.vertex_count());
    let zh_m = estimate_weighted_mass(&g_m, theta, u, beta, n_samples, seed);
    let zh_m1 = estimate_weighted_mass(&g_m1, theta, u, beta, n_samples, seed ^ 0x9e3779b97f4a7c15);
    let dd = d as f64;
    let prefactor = (-dd * beta * (1.0 - 1.0 / theta)).exp();
    let mean = prefactor * zh_m1.mean.powi(d as i32) / zh_m.mean;
    let rel_m1 = zh_m1.std_error / zh_m1.mean;
    let rel_m = zh_m.std_error / zh_m.mean;
    let relvar = dd * dd * rel_m1 * rel_m1 + rel_m * rel_m;
    let ess = zh_m.ess.min(zh_m1.ess);
    Ok(Estimate::new(mean, mean.abs() * relvar.sqrt(), zh_m.n_samples + zh_m1.n_samples, ess))
}

/// Birth-death chain settings. `burn_in` samples are discarded, then every
/// `thinning`-th step is kept.
#[derive(Debug, Clone, Copy)]
pub struct McmcSettings {
    pub steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl McmcSettings {
    /// Default shape: 20% burn-in, no thinning.
    pub fn with_steps(steps: usize) -> Self {
        McmcSettings { steps, burn_in: steps / 5, thinning: 1 }
    }
}

const BATCHES: usize = 32;

/// One birth-death Metropolis chain targeting the theta-weighted measure.
/// Birth proposes a uniform (edge, time, kind ~ u) link and accepts with
/// min(1, theta^dl beta |E| / (n+1)); death removes a uniform link and
/// accepts with min(1, theta^dl n / (beta |E|)). Errors come from batch
/// means over 32 batches.
pub fn mcmc_chain<E: Estimand, R: Rng>(
    g: &Graph,
    theta: f64,
    u: f64,
    beta: f64,
    settings: McmcSettings,
    rng: &mut R,
    f: &E,
) -> Result<Estimate> {
    let edges = g.edge_count();
    if edges == 0 {
        let c = LinkConfiguration::empty(g);
        return Ok(Estimate::exact(f.eval(g, &c, g.vertex_count())));
    }
    let rate = beta * edges as f64;
    let mut c = LinkConfiguration::empty(g);
    let mut ell = g.vertex_count(); // every circle is its own loop
    let mut samples: Vec<f64> = Vec::with_capacity((settings.steps - settings.burn_in) / settings.thinning + 1);
    for step in 0..settings.steps {
        if rng.random::<bool>() {
            // birth
            let e = rng.random_range(0..edges);
            let kind = if rng.random::<f64>() < u { LinkKind::Cross } else { LinkKind::DoubleBar };
            let link = Link { time: rng.random(), kind };
            let n = c.total_links();
            if let Ok(dl) = apply_insert_with_delta(g, &mut c, e, link) {
                let accept = theta.powi(dl as i32) * rate / (n + 1) as f64;
                if accept >= 1.0 || rng.random::<f64>() < accept {
                    ell = (ell as isize + dl) as usize;
                } else {
                    let idx = c
                        .links_on_edge(e)
                        .iter()
                        .position(|l| l.time == link.time)
                        .expect("inserted link present");
                    c.remove_link(g, e, idx)?;
                }
            }
        } else {
            // death
            let n = c.total_links();
            if n > 0 {
                let (e, idx) = c.nth_link(rng.random_range(0..n)).expect("index in range");
                let (link, dl) = apply_remove_with_delta(g, &mut c, e, idx)?;
                let accept = theta.powi(dl as i32) * n as f64 / rate;
                if accept >= 1.0 || rng.random::<f64>() < accept {
                    ell = (ell as isize + dl) as usize;
                } else {
                    c.insert_link(g, e, link)?;
                }
            }
        }
        if step >= settings.burn_in && (step - settings.burn_in) % settings.thinning == 0 {
            let val = f.eval(g, &c, ell);
            if !val.is_finite() {
                return Err(LoopError::NonFiniteEstimand(step as u64));
            }
            samples.push(val);
        }
    }
    Ok(batch_means(&samples))
}

/// Batch-means summary: the mean with its error from 32 batch averages,
/// and ESS = sample variance / squared standard error.
fn batch_means(samples: &[f64]) -> Estimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 * BATCHES {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        let se = (var / n as f64).sqrt();
        return Estimate::new(mean, se, n as u64, n as f64);
    }
    let per = n / BATCHES;
    let used = per * BATCHES;
    let offset = n - used; // drop the oldest remainder
    let batch_mean: Vec<f64> = (0..BATCHES)
        .map(|b| samples[offset + b * per..offset + (b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let grand = batch_mean.iter().sum::<f64>() / BATCHES as f64;
    let bvar = batch_mean.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let se = (bvar / BATCHES as f64).sqrt();
    let svar = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let ess = if se > 0.0 { (svar / (se * se)).clamp(1.0, n as f64) } else { n as f64 };
    Estimate::new(mean, se, n as u64, ess)
}

/// Multi-chain MCMC estimate: `chains` independent chains on fixed RNG
/// streams, combined by the scatter of chain means.
pub fn mcmc_expectation<E: Estimand>(
    g: &Graph,
    theta: f64,
    u: f64,
    beta: f64,
    settings: McmcSettings,
    chains: usize,
    seed: u64,
    f: &E,
) -> Result<Estimate> {
    let results = run_replicates(chains, |rep| {
        let mut rng = replicate_rng(seed, rep as u64);
        mcmc_chain(g, theta, u, beta, settings, &mut rng, f)
    });
    let mut means = Vec::with_capacity(chains);
    let mut within = 0.0;
    let mut ess = 0.0;
    let mut n = 0u64;
    for r in results {
        let e = r?;
        means.push(e.mean);
        within += e.std_error * e.std_error;
        ess += e.ess;
        n += e.n_samples;
    }
    let k = means.len() as f64;
    let grand = means.iter().sum::<f64>() / k;
    // between-chain scatter is a noisy variance estimate for few chains;
    // take the larger of it and the pooled within-chain batch-means variance
    let scatter = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (k * (k - 1.0));
    let pooled = within / (k * k);
    Ok(Estimate::new(grand, scatter.max(pooled).sqrt(), n, ess))
}

/// Picks the estimator for E_theta[f]: reweighting when the graph is small
/// enough that the weights stay informative (beta |E| <= 8 and V <= 64),
/// otherwise the birth-death chain.
pub fn estimate_expectation<E: Estimand>(
    g: &Graph,
    theta: f64,
    u: f64,
    beta: f64,
    n_samples: usize,
    seed: u64,
    f: &E,
) -> Result<Estimate> {
    if beta * g.edge_count() as f64 <= 8.0 && g.vertex_count() <= 64 {
        Ok(reweighted_expectation(g, theta, u, beta, n_samples, seed, f))
    } else {
        let settings = McmcSettings::with_steps(n_samples);
        mcmc_expectation(g, theta, u, beta, settings, 8, seed, f)
    }
}
