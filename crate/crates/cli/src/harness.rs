//! Each subcommand as a function from a model and flags to records. The
//! numbers all come straight from `pg_lab_core`.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pg_lab_core::analysis::{appendix_a_scenario, bias_variance_sweep, spectral_report, theorem3_check};
use pg_lab_core::estimators::{hessian_run, multi_agent_run, truncated_trace_run};
use pg_lab_core::gradcheck::{angle_deg, central_jacobian, FD_STEP};
use pg_lab_core::{
    grad_beta_eta, stationary_distribution, Error, GradientEstimate, MultiAgentModel, Problem, Rewards, RunSpec,
    SoftmaxPolicy,
};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{CliError, CliResult};
use crate::model_file::ModelSpec;
use crate::records::{relative_error, ResultRecord, SweepRow};

pub const THREADS_ENV: &str = "PG_LAB_THREADS";

/// A pool capped by `PG_LAB_THREADS` when it is set.
pub fn thread_pool() -> CliResult<ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub beta: f64,
    pub window: Option<usize>,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub baseline: Option<f64>,
    pub timing: bool,
}

impl EstimateConfig {
    pub fn new(beta: f64, steps: usize, seeds: Vec<u64>) -> Self {
        Self { beta, window: None, steps, seeds, baseline: None, timing: false }
    }

    fn check(&self) -> CliResult<()> {
        if self.steps == 0 {
            return Err(CliError::Usage("--steps must be at least 1".into()));
        }
        check_seeds(&self.seeds)
    }

    fn run(&self, spec: &ModelSpec, seed: u64) -> RunSpec {
        let run = RunSpec::new(self.steps, seed);
        match spec.initial_state() {
            Some(s) => run.with_initial_state(s),
            None => run,
        }
    }
}

fn check_seeds(seeds: &[u64]) -> CliResult<()> {
    if seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
        return Err(CliError::Usage("seeds must be distinct".into()));
    }
    Ok(())
}

fn check_betas(betas: &[f64]) -> CliResult<()> {
    if betas.is_empty() {
        return Err(CliError::Usage("at least one discount factor is required".into()));
    }
    Ok(())
}

/// `eta`, the exact gradient and `|lambda_2|`, then per `beta` the
/// discounted gradient, the angle between the two and both sides of the
/// bias bound. Quantities that are undefined for the model (a zero
/// gradient, repeated eigenvalues) are written without a value.
pub fn run_exact(spec: &ModelSpec, betas: &[f64]) -> CliResult<Vec<ResultRecord>> {
    check_betas(betas)?;
    let problem = &spec.problem;
    let chain = problem.chain()?;
    let mut out = vec![ResultRecord::exact("eta", None, 0, Some(problem.average_reward()?))];
    let grad = problem.exact_gradient()?.values;
    out.extend(grad.iter().enumerate().map(|(k, &g)| ResultRecord::exact("grad_eta", None, k, Some(g))));
    let pi = stationary_distribution(chain.transition())?;
    let spectral = spectral_report(chain.transition(), &pi)?;
    out.push(ResultRecord::exact("lambda2_mag", None, 0, Some(spectral.lambda2_mag)));
    for &beta in betas {
        let approx = problem.exact_target(beta)?.values;
        out.extend(
            approx.iter().enumerate().map(|(k, &g)| ResultRecord::exact("grad_beta_eta", Some(beta), k, Some(g))),
        );
        let angle = angle_deg(grad.as_slice(), approx.as_slice());
        out.push(ResultRecord::exact("bias_angle_deg", Some(beta), 0, angle));
        let (lhs, rhs) = bound_sides(problem, beta)?;
        out.push(ResultRecord::exact("bound_lhs", Some(beta), 0, lhs));
        out.push(ResultRecord::exact("bound_rhs", Some(beta), 0, rhs));
    }
    Ok(out)
}

fn bound_sides(problem: &Problem, beta: f64) -> CliResult<(Option<f64>, Option<f64>)> {
    if let Problem::Pomdp { model, .. } = problem {
        if matches!(model.rewards(), Rewards::Control(_)) {
            return Ok((None, None));
        }
    }
    match theorem3_check(&problem.chain()?, beta) {
        Ok(r) => Ok((Some(r.lhs), Some(r.rhs))),
        Err(Error::DegenerateGradient { .. } | Error::NotDistinct { .. }) => Ok((None, None)),
        Err(e) => Err(e.into()),
    }
}

/// Both sides of the bias bound at each `beta`, plus `kappa_2` and
/// `|lambda_2|`. Unlike `exact`, a model the bound does not cover is an
/// error.
pub fn run_check_bound(spec: &ModelSpec, betas: &[f64]) -> CliResult<Vec<ResultRecord>> {
    check_betas(betas)?;
    let chain = spec.problem.chain()?;
    let mut out = Vec::new();
    for &beta in betas {
        let r = theorem3_check(&chain, beta)?;
        out.push(ResultRecord::exact("bound_lhs", Some(beta), 0, Some(r.lhs)));
        out.push(ResultRecord::exact("bound_rhs", Some(beta), 0, Some(r.rhs)));
        out.push(ResultRecord::exact("kappa2", Some(beta), 0, Some(r.kappa2)));
        out.push(ResultRecord::exact("lambda2_mag", Some(beta), 0, Some(r.lambda2_mag)));
    }
    Ok(out)
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let v = f();
    (v, timing.then(|| start.elapsed().as_secs_f64()))
}

fn estimate_records(
    est: &GradientEstimate,
    exact: &[f64],
    beta: Option<f64>,
    window: Option<usize>,
    wall_s: Option<f64>,
) -> Vec<ResultRecord> {
    est.delta
        .iter()
        .zip(exact)
        .enumerate()
        .map(|(k, (&e, &x))| ResultRecord {
            algorithm: est.algorithm.tag().to_owned(),
            beta,
            window,
            steps: Some(est.steps),
            seed: Some(est.seed),
            k,
            estimate: Some(e),
            exact: Some(x),
            rel_err: Some(relative_error(e, x)),
            wall_s,
        })
        .collect()
}

fn sorted(mut records: Vec<ResultRecord>) -> Vec<ResultRecord> {
    records.sort_by_key(|r| (r.seed, r.k));
    records
}

/// One run per seed. MCG on chains and GPOMDP on POMDPs, or the truncated
/// trace when a window is set; the exact column holds what the estimator
/// converges to.
pub fn run_estimate(spec: &ModelSpec, cfg: &EstimateConfig, pool: &ThreadPool) -> CliResult<Vec<ResultRecord>> {
    cfg.check()?;
    let problem = &spec.problem;
    if let Some(window) = cfg.window {
        if matches!(problem, Problem::Pomdp { .. }) {
            return Err(CliError::Usage("--window applies to chain models".into()));
        }
        if cfg.baseline.is_some() {
            return Err(CliError::Usage("--baseline applies to POMDP models".into()));
        }
        let chain = problem.chain()?;
        let exact = problem.exact_gradient()?.values;
        let runs = pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let (est, wall) = timed(cfg.timing, || truncated_trace_run(&chain, window, &cfg.run(spec, seed)));
                    Ok(estimate_records(&est?, exact.as_slice(), None, Some(window), wall))
                })
                .collect::<CliResult<Vec<_>>>()
        })?;
        return Ok(sorted(runs.concat()));
    }
    let exact = problem.exact_target(cfg.beta)?.values;
    let runs = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let (est, wall) = timed(cfg.timing, || problem.estimate(cfg.beta, &cfg.run(spec, seed), cfg.baseline));
                Ok(estimate_records(&est?, exact.as_slice(), Some(cfg.beta), None, wall))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok(sorted(runs.concat()))
}

pub fn run_sweep(
    spec: &ModelSpec,
    betas: &[f64],
    steps: usize,
    seeds: &[u64],
    pool: &ThreadPool,
) -> CliResult<Vec<SweepRow>> {
    check_betas(betas)?;
    check_seeds(seeds)?;
    if steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    if seeds.len() < 2 {
        return Err(CliError::Usage("a sweep needs at least two seeds".into()));
    }
    let records = pool.install(|| bias_variance_sweep(&spec.problem, betas, steps, seeds))?;
    Ok(records
        .into_iter()
        .map(|r| SweepRow {
            beta: r.beta,
            steps: r.steps,
            seeds_used: r.seeds_used,
            bias_angle_deg: r.bias_angle_deg,
            degenerate: r.degenerate,
            variance: r.variance,
        })
        .collect())
}

/// The TD(1) scenario for each discount `alpha`: `pi`, `J_alpha`, the
/// fitted weight in both forms, and whether greedy action on it is
/// suboptimal (1) or not (0).
pub fn run_appendix_a(alphas: &[f64]) -> CliResult<Vec<ResultRecord>> {
    check_betas(alphas)?;
    let mut out = Vec::new();
    for &alpha in alphas {
        let r = appendix_a_scenario(alpha)?;
        let a = Some(alpha);
        for i in 0..2 {
            out.push(ResultRecord::exact("pi", a, i, Some(r.pi[i])));
        }
        for i in 0..2 {
            out.push(ResultRecord::exact("j_alpha", a, i, Some(r.j_alpha[i])));
        }
        out.push(ResultRecord::exact("w_star", a, 0, Some(r.w_star)));
        out.push(ResultRecord::exact("w_star_closed_form", a, 0, Some(r.w_star_closed_form)));
        out.push(ResultRecord::exact("suboptimal", a, 0, Some(if r.suboptimal { 1.0 } else { 0.0 })));
    }
    Ok(out)
}

/// Second-order estimates, one record per `(k, l)` entry at index
/// `k * K + l`. The exact column is a central-difference Jacobian of the
/// exact discounted gradient.
pub fn run_hessian(spec: &ModelSpec, cfg: &EstimateConfig, pool: &ThreadPool) -> CliResult<Vec<ResultRecord>> {
    cfg.check()?;
    if cfg.window.is_some() || cfg.baseline.is_some() {
        return Err(CliError::Usage("hessian takes neither --window nor --baseline".into()));
    }
    let problem = &spec.problem;
    let chain = problem.chain()?;
    if chain.hess_transition().is_none() {
        return Err(Error::MissingSecondDerivatives.into());
    }
    let jac = central_jacobian(problem.theta(), FD_STEP, |t| {
        Ok(problem.with_theta(t.clone())?.exact_target(cfg.beta)?.values)
    })?;
    let k_dim = problem.k();
    let exact: Vec<f64> = (0..k_dim * k_dim).map(|idx| jac[(idx / k_dim, idx % k_dim)]).collect();
    let runs = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let (est, wall) = timed(cfg.timing, || hessian_run(&chain, cfg.beta, &cfg.run(spec, seed)));
                let est = est?;
                let flat = GradientEstimate {
                    delta: DVector::from_iterator(
                        k_dim * k_dim,
                        (0..k_dim * k_dim).map(|idx| est.delta[(idx / k_dim, idx % k_dim)]),
                    ),
                    steps: est.steps,
                    seed: est.seed,
                    algorithm: est.algorithm,
                    trace: est.trace,
                };
                Ok(estimate_records(&flat, &exact, Some(cfg.beta), None, wall))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok(sorted(runs.concat()))
}

/// Independent agents sharing one POMDP. The model's `k_controls` joint
/// controls are split as `agent_controls` (row-major, first agent
/// slowest); every agent sees its own draw from the model's observation
/// matrix. `theta` is the concatenation of the agents' tables and defaults
/// to zero.
pub fn run_multi_agent(
    spec: &ModelSpec,
    agent_controls: &[usize],
    theta: Option<&[f64]>,
    cfg: &EstimateConfig,
    pool: &ThreadPool,
) -> CliResult<Vec<ResultRecord>> {
    cfg.check()?;
    if cfg.window.is_some() || cfg.baseline.is_some() {
        return Err(CliError::Usage("multi-agent takes neither --window nor --baseline".into()));
    }
    let Problem::Pomdp { model, .. } = &spec.problem else {
        return Err(CliError::Usage("multi-agent needs a pomdp model".into()));
    };
    let Rewards::State(rewards) = model.rewards() else {
        return Err(Error::RewardKindMismatch("multi-agent runs use shared state rewards").into());
    };
    if agent_controls.is_empty() || agent_controls.contains(&0) {
        return Err(CliError::Usage("--agent-controls needs at least one positive count".into()));
    }
    let m = model.n_observations();
    let trans: Vec<DMatrix<f64>> = model.transitions().iter().map(|p| p.as_matrix().clone()).collect();
    let joint = MultiAgentModel::new(
        trans,
        vec![model.observations().clone(); agent_controls.len()],
        agent_controls.to_vec(),
        rewards.clone(),
    )?;
    let k_total: usize = agent_controls.iter().map(|c| c * m).sum();
    let theta = match theta {
        Some(t) if t.len() == k_total => t.to_vec(),
        Some(t) => return Err(CliError::Usage(format!("--theta has {} entries, expected {k_total}", t.len()))),
        None => vec![0.0; k_total],
    };
    let mut policies = Vec::with_capacity(agent_controls.len());
    let mut offset = 0;
    for &c in agent_controls {
        policies.push(SoftmaxPolicy::new(m, c, &theta[offset..offset + m * c])?);
        offset += m * c;
    }
    let exact = grad_beta_eta(&joint.induced_chain(&policies)?, cfg.beta)?.values;
    let runs = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let (est, wall) =
                    timed(cfg.timing, || multi_agent_run(&joint, &policies, cfg.beta, &cfg.run(spec, seed)));
                Ok(estimate_records(&est?, exact.as_slice(), Some(cfg.beta), None, wall))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok(sorted(runs.concat()))
}
