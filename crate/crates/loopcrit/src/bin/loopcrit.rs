//! Command-line front end: subcommands over the library, CSV rows plus a
//! JSON summary per run. Output is deterministic for a fixed (config,
//! seed) regardless of worker count.

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use loopcrit::analytics::{
    alpha_star, beta_c_asymptotic, q_coeff, r_coeff, ModelParams,
};
use loopcrit::error::{LoopError, Result};
use loopcrit::experiments::{
    check_domination, check_zm_asymptotics, estimate_sigma, scan_beta_c, Method, ScanSettings,
};
use loopcrit::looptracer::trace_loops;
use loopcrit::oracle::{enumerate_edge, exhaustive_tracer_check, random_tracer_check};
use loopcrit::quantum_oracle::{
    hamiltonian_nematic_2site, hamiltonian_xxz_2site, nematic_observable, thermal_expectation,
    xxz_observable,
};
use loopcrit::weighting::{estimate_weighted_mass, reweighted_expectation, Estimate};
use loopcrit::{Graph, LinkConfiguration};

#[derive(Parser)]
#[command(name = "loopcrit", version, about = "Random-loop model on regular trees")]
struct Cli {
    /// worker threads for the replicate pool (default: all cores);
    /// the LOOPCRIT_THREADS environment variable takes precedence
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,

    /// write CSV rows here instead of stdout
    #[arg(long, global = true)]
    csv: Option<std::path::PathBuf>,

    /// write the JSON summary here instead of stdout
    #[arg(long, global = true)]
    json: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    u: f64,
    /// inverse temperature (exclusive with --alpha)
    #[arg(long, conflicts_with = "alpha")]
    beta: Option<f64>,
    /// alpha in beta/theta = 1/d + alpha/d^2 (exclusive with --beta)
    #[arg(long)]
    alpha: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<ModelParams> {
        match (self.beta, self.alpha) {
            (Some(beta), None) => ModelParams::from_beta(self.d, self.theta, self.u, beta),
            (None, Some(alpha)) => ModelParams::from_alpha(self.d, self.theta, self.u, alpha),
            _ => Err(LoopError::InvalidParameter(
                "exactly one of --beta / --alpha is required".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the sigma_m curve on depth-m trees
    Sigma {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 6)]
        m_max: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// auto | reweight | mcmc | direct
        #[arg(long, default_value = "auto")]
        method: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Bisect beta_c from the sigma_m decay classifier
    Scan {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        u: f64,
        #[arg(long, default_value_t = 8)]
        m_max: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0.002)]
        tol: f64,
        /// plateau threshold epsilon/d on sigma_{m_max}
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// tail-ratio floor offset: ratios must exceed 1 - 1/(m + offset)
        #[arg(long, default_value_t = 1.0)]
        ratio_offset: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check the two-sided sigma_m recursion inequalities
    Recursion {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 6)]
        m_max: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        slack_lower: f64,
        #[arg(long, default_value_t = 2.0)]
        slack_upper: f64,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check stochastic domination by the rate-beta+ Poisson process
    Dominate {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check z_m = 1 - (q - 1/2)/d + O(1/d^2) across d
    Zm {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        u: f64,
        #[arg(long = "d", default_values_t = [4usize, 8, 16])]
        d_list: Vec<usize>,
        #[arg(long = "m", default_values_t = [1usize, 2])]
        m_list: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the closed-form coefficients and beta_c
    Formulas {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        u: f64,
    },
    /// Compare the single-edge oracle with reweighted Monte Carlo
    OracleCheck {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Compare loop connectivity with two-site quantum thermal averages
    QuantumCheck {
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Cross-validate the two loop tracers on random and exhaustive configs
    TracerFuzz {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

const CSV_HEADER: &str = "subcommand,d,theta,u,beta,alpha,m,estimate,std_error,ess,n,seed";

struct Output {
    csv: String,
    estimates: Vec<serde_json::Value>,
    report: serde_json::Value,
    /// a failed numeric check (exit 1) even though the run completed
    failed: Option<String>,
}

impl Output {
    fn new() -> Self {
        Output {
            csv: format!("{CSV_HEADER}\n"),
            estimates: Vec::new(),
            report: serde_json::Value::Null,
            failed: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        sub: &str,
        d: usize,
        theta: f64,
        u: f64,
        beta: f64,
        alpha: f64,
        m: usize,
        est: f64,
        se: f64,
        ess: f64,
        n: u64,
        seed: u64,
    ) {
        writeln!(
            self.csv,
            "{sub},{d},{theta},{u},{beta},{alpha},{m},{est},{se},{ess},{n},{seed}"
        )
        .unwrap();
    }

    fn estimate(&mut self, label: &str, e: &Estimate) {
        self.estimates.push(json!({
            "label": label,
            "mean": e.mean,
            "std_error": e.std_error,
            "ess": e.ess,
            "n_samples": e.n_samples,
            "low_ess": e.low_ess,
        }));
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn worker_count(cli: &Cli) -> Result<Option<usize>> {
    if let Ok(v) = std::env::var("LOOPCRIT_THREADS") {
        let w: usize = v
            .parse()
            .map_err(|_| LoopError::InvalidParameter(format!("bad LOOPCRIT_THREADS {v:?}")))?;
        if w == 0 {
            return Err(LoopError::InvalidParameter("workers must be >= 1".into()));
        }
        return Ok(Some(w));
    }
    Ok(cli.workers.map(|w| w as usize))
}

#[cfg(feature = "parallel")]
fn configure_pool(workers: Option<usize>) {
    if let Some(w) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(_workers: Option<usize>) {}

fn run_sigma(
    out: &mut Output,
    params: &ParamArgs,
    m_max: usize,
    n: usize,
    method: &str,
    seed: u64,
) -> Result<()> {
    let p = params.resolve()?;
    let method: Method = method.parse()?;
    let curve = estimate_sigma(&p, m_max, n, method, seed)?;
    for m in 0..=m_max {
        let e = curve.sigma(m);
        out.row(
            "sigma", p.d, p.theta, p.u, p.beta, p.alpha(), m, e.mean, e.std_error, e.ess,
            e.n_samples, seed,
        );
        out.estimate(&format!("sigma_{m}"), e);
    }
    out.report = serde_json::to_value(&curve).unwrap();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_scan(
    out: &mut Output,
    d: usize,
    theta: f64,
    u: f64,
    m_max: usize,
    n: usize,
    tol: f64,
    epsilon: f64,
    ratio_offset: f64,
    seed: u64,
) -> Result<()> {
    let mut settings = ScanSettings::new(m_max, n, tol, seed);
    settings.epsilon = epsilon;
    settings.ratio_offset = ratio_offset;
    let result = scan_beta_c(d, theta, u, &settings)?;
    for (i, step) in result.trace.iter().enumerate() {
        let alpha = (step.beta / theta - 1.0 / d as f64) * (d * d) as f64;
        out.row(
            "scan", d, theta, u, step.beta, alpha, i,
            step.supercritical as u8 as f64,
            *step.sigma_tail.last().unwrap_or(&0.0),
            0.0, n as u64, seed,
        );
    }
    out.estimate(
        "beta_c",
        &Estimate {
            mean: result.beta_c,
            std_error: tol / 2.0,
            n_samples: result.trace.len() as u64,
            ess: result.trace.len() as f64,
            low_ess: false,
        },
    );
    out.report = serde_json::to_value(&result).unwrap();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_recursion(
    out: &mut Output,
    params: &ParamArgs,
    m_max: usize,
    n: usize,
    slack_lower: f64,
    slack_upper: f64,
    epsilon: f64,
    seed: u64,
) -> Result<()> {
    let p = params.resolve()?;
    let report =
        loopcrit::experiments::verify_recursion(&p, m_max, n, slack_lower, slack_upper, epsilon, seed)?;
    for m in 0..=m_max {
        let e = report.curve.sigma(m);
        out.row(
            "recursion", p.d, p.theta, p.u, p.beta, p.alpha(), m, e.mean, e.std_error, e.ess,
            e.n_samples, seed,
        );
        out.estimate(&format!("sigma_{m}"), e);
    }
    if !report.all_ok {
        out.failed = Some("recursion inequalities violated".into());
    }
    out.report = serde_json::to_value(&report).unwrap();
    Ok(())
}

fn run_dominate(
    out: &mut Output,
    theta: f64,
    u: f64,
    alpha: f64,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<()> {
    let report = check_domination(theta, u, alpha, m, n, seed)?;
    for (i, c) in report.checks.iter().enumerate() {
        let p = ModelParams::from_alpha(c.d, theta, u, alpha)?;
        out.row(
            "dominate", c.d, theta, u, p.beta, alpha, i, c.p_theta.mean, c.p_theta.std_error,
            c.p_theta.ess, c.p_theta.n_samples, seed,
        );
        out.estimate(&format!("p_theta_{}_{}", c.event, c.d), &c.p_theta);
        out.estimate(&format!("p_plus_{}_{}", c.event, c.d), &c.p_plus);
    }
    if !(report.all_ok && report.sweep_bounded) {
        out.failed = Some("domination check failed".into());
    }
    out.report = serde_json::to_value(&report).unwrap();
    Ok(())
}

fn run_zm(
    out: &mut Output,
    theta: f64,
    u: f64,
    d_list: &[usize],
    m_list: &[usize],
    n: usize,
    seed: u64,
) -> Result<()> {
    let report = check_zm_asymptotics(theta, u, d_list, m_list, n, seed)?;
    for c in &report.checks {
        let beta = theta / c.d as f64;
        out.row(
            "zm", c.d, theta, u, beta, 0.0, c.m, c.z_m.mean, c.z_m.std_error, c.z_m.ess,
            c.z_m.n_samples, seed,
        );
        out.estimate(&format!("z_{}_d{}", c.m, c.d), &c.z_m);
    }
    if !report.bounded {
        out.failed = Some("z_m residuals exceed the fitted d^-2 band".into());
    }
    out.report = serde_json::to_value(&report).unwrap();
    Ok(())
}

fn run_formulas(out: &mut Output, d: usize, theta: f64, u: f64) -> Result<()> {
    let a = alpha_star(theta, u);
    let bc = beta_c_asymptotic(d, theta, u);
    let values = [
        ("alpha_star", a),
        ("q", q_coeff(theta, u)),
        ("r", r_coeff(theta, u)),
        ("beta_c_asymptotic", bc),
    ];
    for (i, (label, v)) in values.iter().enumerate() {
        out.row("formulas", d, theta, u, bc, a, i, *v, 0.0, 1.0, 1, 0);
        out.estimate(label, &Estimate::exact(*v));
    }
    out.report = json!({
        "alpha_star": a,
        "q": q_coeff(theta, u),
        "r": r_coeff(theta, u),
        "beta_c_asymptotic": bc,
    });
    Ok(())
}

fn run_oracle_check(
    out: &mut Output,
    theta: f64,
    u: f64,
    beta: f64,
    n: usize,
    seed: u64,
) -> Result<()> {
    let oracle = enumerate_edge(theta, u, beta)?;
    let g = Graph::build_path(2)?;
    let mass = estimate_weighted_mass(&g, theta, u, beta, n, seed);
    let p_ell2 = reweighted_expectation(&g, theta, u, beta, n, seed.wrapping_add(1), &|_: &Graph,
        _: &LinkConfiguration,
        ell: usize| {
        (ell == 2) as u8 as f64
    });
    let p_conn = reweighted_expectation(&g, theta, u, beta, n, seed.wrapping_add(2), &|g: &Graph,
        c: &LinkConfiguration,
        _: usize| {
        let dec = trace_loops(g, c);
        (dec.loop_of_point(0, 0.0) == dec.loop_of_point(1, 0.0)) as u8 as f64
    });
    let checks = [
        ("zhat", oracle.zhat, &mass),
        ("p_ell2", oracle.prob_ell(2), &p_ell2),
        ("p_connect", oracle.prob_connect, &p_conn),
    ];
    let mut all_ok = true;
    for (i, (label, exact, mc)) in checks.iter().enumerate() {
        let ok = (mc.mean - exact).abs() <= 3.0 * mc.std_error;
        all_ok &= ok;
        out.row(
            "oracle-check", 1, theta, u, beta, 0.0, i, mc.mean, mc.std_error, mc.ess,
            mc.n_samples, seed,
        );
        out.estimate(label, mc);
    }
    if !all_ok {
        out.failed = Some("oracle and Monte Carlo disagree beyond 3 sigma".into());
    }
    out.report = json!({
        "zhat": oracle.zhat,
        "p_ell2": oracle.prob_ell(2),
        "p_connect": oracle.prob_connect,
        "max_links": oracle.max_links,
        "all_ok": all_ok,
    });
    Ok(())
}

fn run_quantum_check(out: &mut Output, tol: f64) -> Result<()> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let xxz_obs = xxz_observable();
    for delta in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        for beta in [0.2, 0.6, 1.0] {
            let q = thermal_expectation(&hamiltonian_xxz_2site(delta), &xxz_obs, beta)?;
            let o = enumerate_edge(2.0, (1.0 + delta) / 2.0, beta)?;
            let diff = (q - o.prob_connect / 4.0).abs();
            worst = worst.max(diff);
            rows.push(("xxz", 2.0, (1.0 + delta) / 2.0, beta, q, diff));
        }
    }
    let nem_obs = nematic_observable();
    for u in [0.0, 0.5, 1.0] {
        for beta in [0.3, 0.8] {
            let q = thermal_expectation(&hamiltonian_nematic_2site(u), &nem_obs, beta)?;
            let o = enumerate_edge(3.0, u, beta)?;
            let diff = (q - 2.0 * o.prob_connect / 9.0).abs();
            worst = worst.max(diff);
            rows.push(("nematic", 3.0, u, beta, q, diff));
        }
    }
    for (i, (model, theta, u, beta, q, diff)) in rows.iter().enumerate() {
        out.row("quantum-check", 1, *theta, *u, *beta, 0.0, i, *q, *diff, 1.0, 1, 0);
        out.estimates.push(json!({
            "label": format!("{model}_{i}"),
            "mean": q,
            "std_error": diff,
            "ess": 1.0,
            "n_samples": 1,
            "low_ess": false,
        }));
    }
    if worst > tol {
        out.failed = Some(format!("worst quantum/loop mismatch {worst:e} exceeds {tol:e}"));
    }
    out.report = json!({ "worst_abs_diff": worst, "tolerance": tol, "ok": worst <= tol });
    Ok(())
}

fn run_tracer_fuzz(out: &mut Output, n: usize, seed: u64) -> Result<()> {
    let exhaustive = exhaustive_tracer_check(4)?;
    let random = random_tracer_check(n, 14, seed)?;
    out.row(
        "tracer-fuzz", 0, 0.0, 0.0, 0.0, 0.0, 0, exhaustive as f64, 0.0, 1.0, exhaustive, seed,
    );
    out.row("tracer-fuzz", 0, 0.0, 0.0, 0.0, 0.0, 1, random as f64, 0.0, 1.0, random, seed);
    out.report = json!({ "exhaustive_configs": exhaustive, "random_configs": random });
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut Output) -> Result<()> {
    match &cli.command {
        Command::Sigma { params, m_max, n, method, seed } => {
            run_sigma(out, params, *m_max, *n, method, *seed)
        }
        Command::Scan { d, theta, u, m_max, n, tol, epsilon, ratio_offset, seed } => run_scan(
            out, *d, *theta, *u, *m_max, *n, *tol, *epsilon, *ratio_offset, *seed,
        ),
        Command::Recursion { params, m_max, n, slack_lower, slack_upper, epsilon, seed } => {
            run_recursion(out, params, *m_max, *n, *slack_lower, *slack_upper, *epsilon, *seed)
        }
        Command::Dominate { theta, u, alpha, m, n, seed } => {
            run_dominate(out, *theta, *u, *alpha, *m, *n, *seed)
        }
        Command::Zm { theta, u, d_list, m_list, n, seed } => {
            run_zm(out, *theta, *u, d_list, m_list, *n, *seed)
        }
        Command::Formulas { d, theta, u } => run_formulas(out, *d, *theta, *u),
        Command::OracleCheck { theta, u, beta, n, seed } => {
            run_oracle_check(out, *theta, *u, *beta, *n, *seed)
        }
        Command::QuantumCheck { tol } => run_quantum_check(out, *tol),
        Command::TracerFuzz { n, seed } => run_tracer_fuzz(out, *n, *seed),
    }
}

fn subcommand_name(cli: &Cli) -> &'static str {
    match cli.command {
        Command::Sigma { .. } => "sigma",
        Command::Scan { .. } => "scan",
        Command::Recursion { .. } => "recursion",
        Command::Dominate { .. } => "dominate",
        Command::Zm { .. } => "zm",
        Command::Formulas { .. } => "formulas",
        Command::OracleCheck { .. } => "oracle-check",
        Command::QuantumCheck { .. } => "quantum-check",
        Command::TracerFuzz { .. } => "tracer-fuzz",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = match worker_count(&cli) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("loopcrit: {e}");
            return ExitCode::from(2);
        }
    };
    configure_pool(workers);
    let start = Instant::now();
    let mut out = Output::new();
    if let Err(e) = dispatch(&cli, &mut out) {
        if matches!(e, LoopError::InvalidParameter(_)) {
            eprintln!("loopcrit: usage error: {e}");
            return ExitCode::from(2);
        }
        eprintln!("loopcrit: {e}");
        return ExitCode::from(1);
    }
    let summary = json!({
        "subcommand": subcommand_name(&cli),
        "seed": seed_of(&cli),
        "git_describe": git_describe(),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "estimates": out.estimates,
        "report": out.report,
        "failed": out.failed,
    });
    let json_text = serde_json::to_string_pretty(&summary).unwrap();
    if let Err(e) = write_artifacts(&cli, &out.csv, &json_text) {
        eprintln!("loopcrit: {e}");
        return ExitCode::from(1);
    }
    match &out.failed {
        Some(msg) => {
            eprintln!("loopcrit: check failed: {msg}");
            ExitCode::from(1)
        }
        None => ExitCode::SUCCESS,
    }
}

fn seed_of(cli: &Cli) -> u64 {
    match &cli.command {
        Command::Sigma { seed, .. }
        | Command::Scan { seed, .. }
        | Command::Recursion { seed, .. }
        | Command::Dominate { seed, .. }
        | Command::Zm { seed, .. }
        | Command::OracleCheck { seed, .. }
        | Command::TracerFuzz { seed, .. } => *seed,
        Command::Formulas { .. } | Command::QuantumCheck { .. } => 0,
    }
}

fn write_artifacts(cli: &Cli, csv: &str, json_text: &str) -> std::io::Result<()> {
    match &cli.csv {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    match &cli.json {
        Some(path) => std::fs::write(path, json_text)?,
        None => println!("{json_text}"),
    }
    Ok(())
}
