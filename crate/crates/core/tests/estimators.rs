mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use pg_lab_core::estimators::*;
use pg_lab_core::gradcheck::{angle_deg, central_gradient, central_jacobian, rel_err, FD_STEP};
use pg_lab_core::pomdp::{expected_reward_bar, induced_chain, sample_step, simulate};
use pg_lab_core::*;

fn fixed_chain() -> ParamChain {
    let p = StochasticMatrix::from_rows(&[vec![0.2, 0.8, 0.0], vec![0.5, 0.1, 0.4], vec![0.3, 0.3, 0.4]]).unwrap();
    ParamChain::constant(p, DVector::from_vec(vec![1.0, -2.0, 0.5]), 4).unwrap()
}

fn two_observation_model(rewards: Rewards) -> PomdpModel {
    PomdpModel::new(
        vec![
            DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.2, 0.7]),
            DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.7, 0.7, 0.2, 0.1, 0.3, 0.6, 0.1]),
        ],
        DMatrix::from_row_slice(3, 2, &[0.8, 0.2, 0.3, 0.7, 0.5, 0.5]),
        rewards,
    )
    .unwrap()
}

fn seed_mean(runs: impl Iterator<Item = DVector<f64>>) -> DVector<f64> {
    let all: Vec<DVector<f64>> = runs.collect();
    let n = all.len() as f64;
    all.into_iter().fold(None::<DVector<f64>>, |acc, v| Some(acc.map_or(v.clone(), |a| a + v))).unwrap() / n
}

#[test]
fn parameter_free_chain_gives_exact_zeros() {
    let chain = fixed_chain();
    let run = RunSpec::new(5_000, 3);
    assert!(mcg_run(&chain, 0.9, &run).unwrap().delta.iter().all(|&d| d == 0.0));
    assert!(truncated_trace_run(&chain, 10, &run).unwrap().delta.iter().all(|&d| d == 0.0));
    let regen = reinforce_regenerative_run(&chain, &RegenerativeSpec::new(0, 500, 3)).unwrap();
    assert!(regen.delta.iter().all(|&d| d == 0.0));
    let n = chain.n();
    let chain = chain.with_hessian(vec![DMatrix::zeros(n, n); 16]).unwrap();
    assert!(hessian_run(&chain, 0.9, &run).unwrap().delta.iter().all(|&d| d == 0.0));
}

#[test]
fn mcg_replay_identity() {
    let chain = three_state_chain();
    let beta = 0.8;
    let run = RunSpec::new(2_000, 9);
    let est = mcg_run(&chain, beta, &run).unwrap();
    let states = simulate_chain(&chain, &run).unwrap();
    let k = chain.k();
    let mut z = vec![0.0; k];
    let mut sum = vec![0.0; k];
    let mut ratio = vec![0.0; k];
    for w in states.windows(2) {
        chain.likelihood_ratio(w[0], w[1], &mut ratio).unwrap();
        for kk in 0..k {
            z[kk] = beta * z[kk] + ratio[kk];
            sum[kk] += z[kk] * chain.rewards()[w[1]];
        }
    }
    let batch: Vec<f64> = sum.iter().map(|s| s / run.steps as f64).collect();
    assert_close(est.delta.as_slice(), &batch, 1e-12);
    assert_eq!(est.algorithm, Algorithm::Mcg);
    assert_eq!(est.steps, 2_000);
}

#[test]
fn runs_are_deterministic() {
    let chain = three_state_chain();
    let run = RunSpec::new(10_000, 77);
    assert_eq!(mcg_run(&chain, 0.9, &run).unwrap(), mcg_run(&chain, 0.9, &run).unwrap());
    let other = mcg_run(&chain, 0.9, &RunSpec::new(10_000, 78)).unwrap();
    assert_ne!(other.delta, mcg_run(&chain, 0.9, &run).unwrap().delta);
}

#[test]
fn burn_in_shifts_the_trajectory() {
    let chain = three_state_chain();
    let full = simulate_chain(&chain, &RunSpec::new(30, 4)).unwrap();
    let burned = simulate_chain(&chain, &RunSpec::new(20, 4).with_burn_in(10)).unwrap();
    assert_eq!(&full[10..], &burned[..]);
}

#[test]
fn pinned_initial_state() {
    let chain = three_state_chain();
    let states = simulate_chain(&chain, &RunSpec::new(5, 1).with_initial_state(2)).unwrap();
    assert_eq!(states[0], 2);
    assert!(simulate_chain(&chain, &RunSpec::new(5, 1).with_initial_state(3)).is_err());
}

#[test]
fn gpomdp_on_deterministic_control_matches_mcg_bitwise() {
    let rewards = [1.0, -0.5, 0.25];
    let model = PomdpModel::deterministic_control(&rewards).unwrap();
    let policy = SoftmaxPolicy::new(3, 3, &[0.4, -0.3, 0.1, -0.6, 0.2, 0.5, 0.3, 0.0, -0.4]).unwrap();
    let chain = induced_chain(&model, &policy).unwrap();
    for seed in [1, 2, 3] {
        let run = RunSpec::new(20_000, seed);
        let g = gpomdp_run(&model, &policy, 0.9, &run, None).unwrap();
        let m = mcg_run(&chain, 0.9, &run).unwrap();
        assert_eq!(g.delta, m.delta);
    }
}

#[test]
fn gpomdp_single_control_is_zero() {
    let model = PomdpModel::new(
        vec![DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.9, 0.1])],
        DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.1, 0.9]),
        Rewards::State(DVector::from_vec(vec![1.0, 0.0])),
    )
    .unwrap();
    let policy = SoftmaxPolicy::new(2, 1, &[0.3, -1.0]).unwrap();
    let est = gpomdp_run(&model, &policy, 0.9, &RunSpec::new(1_000, 1), None).unwrap();
    assert!(est.delta.iter().all(|&d| d == 0.0));
}

#[test]
fn gpomdp_replay_matches_online_run() {
    let model = two_observation_model(Rewards::State(DVector::from_vec(vec![1.0, 0.0, -1.0])));
    let policy = SoftmaxPolicy::new(2, 2, &[0.2, -0.1, 0.5, 0.0]).unwrap();
    let run = RunSpec::new(3_000, 8);
    let steps = simulate(&model, &policy, run.steps, run.seed, None).unwrap();
    let online = gpomdp_run(&model, &policy, 0.7, &run, Some(0.3)).unwrap();
    let replay = gpomdp_replay(&policy, 0.7, &steps, run.seed, Some(0.3)).unwrap();
    assert_eq!(online.delta, replay.delta);
}

#[test]
fn baseline_shifts_by_mean_trace() {
    let model = two_observation_model(Rewards::State(DVector::from_vec(vec![1.0, 0.0, -1.0])));
    let policy = SoftmaxPolicy::new(2, 2, &[0.2, -0.1, 0.5, 0.0]).unwrap();
    let beta = 0.9;
    let run = RunSpec::new(10_000, 5);
    let steps = simulate(&model, &policy, run.steps, run.seed, None).unwrap();
    let mut trace = DiscountedTrace::new(4, beta).unwrap();
    let mut zbar = RunningMean::new(4);
    for s in &steps {
        trace.push(policy.ratio(s.observation, s.control));
        zbar.push(trace.z());
    }
    let base = gpomdp_run(&model, &policy, beta, &run, None).unwrap();
    for b in [-1.0, 0.5, 10.0] {
        let shifted = gpomdp_run(&model, &policy, beta, &run, Some(b)).unwrap();
        for k in 0..4 {
            assert!((shifted.delta[k] - (base.delta[k] - b * zbar.mean()[k])).abs() < 1e-12);
        }
    }
}

#[test]
fn gpomdp_rejects_control_rewards() {
    let model = two_observation_model(Rewards::Control(DMatrix::zeros(3, 2)));
    let policy = SoftmaxPolicy::zeros(2, 2);
    let err = gpomdp_run(&model, &policy, 0.9, &RunSpec::new(10, 1), None).unwrap_err();
    assert!(matches!(err, Error::RewardKindMismatch(_)));
    let state_model = two_observation_model(Rewards::State(DVector::zeros(3)));
    let err = control_reward_run(&state_model, &policy, 0.9, &RunSpec::new(10, 1)).unwrap_err();
    assert!(matches!(err, Error::RewardKindMismatch(_)));
}

#[test]
fn sampled_transitions_follow_induced_chain() {
    let model = two_observation_model(Rewards::State(DVector::from_vec(vec![1.0, 0.0, -1.0])));
    let policy = SoftmaxPolicy::new(2, 2, &[0.2, -0.1, 0.5, 0.0]).unwrap();
    let chain = induced_chain(&model, &policy).unwrap();
    let steps = 100_000;
    let trajectory = simulate(&model, &policy, steps, 12, Some(0)).unwrap();
    let mut counts = DMatrix::<f64>::zeros(3, 3);
    for s in &trajectory {
        counts[(s.state, s.next_state)] += 1.0;
    }
    for i in 0..3 {
        let visits = counts.row(i).sum();
        for j in 0..3 {
            let p = chain.transition().get(i, j);
            let se = (p * (1.0 - p) / visits).sqrt();
            assert!((counts[(i, j)] / visits - p).abs() < 3.0 * se + 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn sample_step_uses_one_draw_per_stream() {
    let model = two_observation_model(Rewards::State(DVector::from_vec(vec![1.0, 0.0, -1.0])));
    let policy = SoftmaxPolicy::zeros(2, 2);
    let mut a = RunRng::new(3);
    let mut b = RunRng::new(3);
    sample_step(&model, &policy, 0, &mut a);
    for s in [Stream::Observation, Stream::Decision, Stream::Transition] {
        b.uniform(s);
    }
    for s in [Stream::Initial, Stream::Observation, Stream::Decision, Stream::Transition] {
        assert_eq!(a.uniform(s), b.uniform(s));
    }
}

#[test]
fn near_deterministic_policy_follows_the_forced_path() {
    // Control 0 stays, control 1 flips; the policy always flips.
    let model = PomdpModel::new(
        vec![DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])],
        DMatrix::identity(2, 2),
        Rewards::State(DVector::from_vec(vec![0.0, 1.0])),
    )
    .unwrap();
    let policy = SoftmaxPolicy::new(2, 2, &[-20.0, 20.0, -20.0, 20.0]).unwrap();
    let steps = simulate(&model, &policy, 50, 1, Some(0)).unwrap();
    for (t, s) in steps.iter().enumerate() {
        assert_eq!(s.state, t % 2);
        assert_eq!(s.control, 1);
    }
}

#[test]
fn param_reward_without_gradient_matches_mcg() {
    let chain = three_state_chain();
    let reward = StateReward::constant(chain.rewards().clone(), chain.k());
    let run = RunSpec::new(20_000, 6);
    let a = param_reward_run(&chain, &reward, 0.9, &run).unwrap();
    let b = mcg_run(&chain, 0.9, &run).unwrap();
    assert_eq!(a.delta, b.delta);
}

#[test]
fn param_reward_on_fixed_chain_estimates_mean_reward_gradient() {
    let chain = fixed_chain();
    let pi = stationary_distribution(chain.transition()).unwrap().pi;
    let grads = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, -0.5, 0.2, 0.0, 1.0, 0.3, -0.4, 0.5, 0.5, 0.0, 1.0]);
    let reward = StateReward::new(DVector::from_vec(vec![1.0, -2.0, 0.5]), grads.clone()).unwrap();
    let exact = grads.tr_mul(&pi);
    let mean =
        seed_mean((1..=10).map(|s| param_reward_run(&chain, &reward, 0.9, &RunSpec::new(1_000_000, s)).unwrap().delta));
    assert!(rel_err(mean.as_slice(), exact.as_slice()) < 0.02, "{mean} vs {exact}");
}

#[test]
fn param_reward_gradient_bound_is_enforced() {
    let chain = fixed_chain();
    let grads = DMatrix::from_element(3, 4, 2.0);
    let reward = StateReward::new(DVector::zeros(3), grads).unwrap().with_bound(1.0);
    let err = param_reward_run(&chain, &reward, 0.9, &RunSpec::new(10, 1)).unwrap_err();
    assert!(matches!(err, Error::UnboundedRewardGradient { .. }));
}

/// Two states, both rows moving to state 1 with probability
/// `sigmoid(ln 2 + theta_0)`. `theta_1` is the value-function weight and
/// leaves the chain alone.
fn two_state_family() -> SoftmaxChainFamily {
    let map = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let offset = DVector::from_vec(vec![0.0, 2f64.ln(), 0.0, 2f64.ln()]);
    SoftmaxChainFamily::new(2, map, offset, DVector::from_vec(vec![0.0, 1.0])).unwrap()
}

fn expected_bellman_error(family: &SoftmaxChainFamily, theta: &DVector<f64>, alpha: f64, phi: &[f64]) -> Result<f64> {
    let chain = family.at(theta)?;
    let pi = stationary_distribution(chain.transition())?.pi;
    let w = theta[1];
    let p = chain.transition().as_matrix();
    let mut total = 0.0;
    for i in 0..2 {
        let next: f64 = (0..2).map(|j| p[(i, j)] * w * phi[j]).sum();
        let d = chain.rewards()[i] + alpha * next - w * phi[i];
        total += pi[i] * d * d;
    }
    Ok(-0.5 * total)
}

/// `-1/2 sum_i pi_i sum_j p_ij [r_i + alpha w phi_j - w phi_i]^2`, the
/// stationary mean of the sampled reward.
fn expected_sampled_error(family: &SoftmaxChainFamily, theta: &DVector<f64>, alpha: f64, phi: &[f64]) -> Result<f64> {
    let chain = family.at(theta)?;
    let pi = stationary_distribution(chain.transition())?.pi;
    let w = theta[1];
    let p = chain.transition().as_matrix();
    let mut total = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let d = chain.rewards()[i] + alpha * w * phi[j] - w * phi[i];
            total += pi[i] * p[(i, j)] * d * d;
        }
    }
    Ok(-0.5 * total)
}

#[test]
fn vaps_estimates_bellman_error_gradient() {
    let family = two_state_family();
    let alpha = 0.6;
    let phi = [2.0, 1.0];
    // At w = 0 the sampled and expected squared errors share a gradient.
    let theta = DVector::from_vec(vec![0.0, 0.0]);
    let chain = family.at(&theta).unwrap();
    let reward = VapsReward::new(
        chain.rewards().clone(),
        alpha,
        DMatrix::from_column_slice(2, 1, &phi),
        DVector::from_vec(vec![theta[1]]),
        1,
        2,
    )
    .unwrap();
    let fd = central_gradient(&theta, FD_STEP, |t| expected_bellman_error(&family, t, alpha, &phi)).unwrap();
    let mean = seed_mean(
        (1..=10).map(|s| param_reward_run(&chain, &reward, 0.99, &RunSpec::new(1_000_000, s)).unwrap().delta),
    );
    assert!(rel_err(mean.as_slice(), fd.as_slice()) < 0.1, "{mean} vs {fd}");
}

#[test]
fn vaps_estimates_gradient_of_its_sampled_objective() {
    let family = two_state_family();
    let alpha = 0.6;
    let phi = [2.0, 1.0];
    let theta = DVector::from_vec(vec![0.3, -0.4]);
    let chain = family.at(&theta).unwrap();
    let reward = VapsReward::new(
        chain.rewards().clone(),
        alpha,
        DMatrix::from_column_slice(2, 1, &phi),
        DVector::from_vec(vec![theta[1]]),
        1,
        2,
    )
    .unwrap();
    let fd = central_gradient(&theta, FD_STEP, |t| expected_sampled_error(&family, t, alpha, &phi)).unwrap();
    let mean = seed_mean(
        (1..=10).map(|s| param_reward_run(&chain, &reward, 0.99, &RunSpec::new(1_000_000, s)).unwrap().delta),
    );
    assert!(rel_err(mean.as_slice(), fd.as_slice()) < 0.1, "{mean} vs {fd}");
}

#[test]
fn control_reward_run_hits_closed_form_target() {
    let r = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.0, 0.5, -0.5, 2.0]);
    let model = two_observation_model(Rewards::Control(r));
    let policy = SoftmaxPolicy::new(2, 2, &[0.2, -0.1, 0.5, 0.0]).unwrap();
    let beta = 0.9;
    let target = control_reward_target(&model, &policy, beta).unwrap().values;
    let mean = seed_mean(
        (1..=10).map(|s| control_reward_run(&model, &policy, beta, &RunSpec::new(1_000_000, s)).unwrap().delta),
    );
    assert!(rel_err(mean.as_slice(), target.as_slice()) < 0.05, "{mean} vs {target}");
}

#[test]
fn control_independent_rewards_reduce_to_discounted_gradient() {
    let r = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, -1.0, -1.0]);
    let model = two_observation_model(Rewards::Control(r));
    let policy = SoftmaxPolicy::new(2, 2, &[0.2, -0.1, 0.5, 0.0]).unwrap();
    let beta = 0.9;
    let chain = induced_chain(&model, &policy).unwrap();
    assert_close(expected_reward_bar(&model, &policy).unwrap().as_slice(), &[1.0, 0.0, -1.0], 1e-15);
    let exact = grad_beta_eta(&chain, beta).unwrap().values;
    let target = control_reward_target(&model, &policy, beta).unwrap().values;
    assert_close(target.as_slice(), exact.as_slice(), 1e-12);
    let mean = seed_mean(
        (1..=10).map(|s| control_reward_run(&model, &policy, beta, &RunSpec::new(1_000_000, s)).unwrap().delta),
    );
    assert!(rel_err(mean.as_slice(), exact.as_slice()) < 0.05);
}

#[test]
fn truncated_window_validation() {
    let chain = three_state_chain();
    assert!(matches!(
        truncated_trace_run(&chain, 100, &RunSpec::new(100, 1)),
        Err(Error::WindowTooLarge { window: 100, steps: 100 })
    ));
    assert!(truncated_trace_run(&chain, 0, &RunSpec::new(100, 1)).is_err());
}

#[test]
fn truncated_run_points_along_true_gradient() {
    let chain = three_state_chain();
    let exact = exact_grad_eta(&chain).unwrap().values;
    let mean =
        seed_mean((1..=10).map(|s| truncated_trace_run(&chain, 100, &RunSpec::new(1_000_000, s)).unwrap().delta));
    let angle = angle_deg(mean.as_slice(), exact.as_slice()).unwrap();
    assert!(angle < 10.0, "angle {angle}");
}

#[test]
fn regenerative_run_matches_first_passage_gradient() {
    let family = SoftmaxChainFamily::table(2, DVector::from_vec(vec![1.0, -0.5])).unwrap();
    let theta = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
    let chain = family.at(&theta).unwrap();
    for kind in [CycleReward::CycleSum, CycleReward::NegLength, CycleReward::Discounted(0.8)] {
        let fd = central_gradient(&theta, FD_STEP, |t| expected_cycle_reward(&family.at(t)?, 0, kind)).unwrap();
        let mean = seed_mean((1..=10).map(|s| {
            reinforce_regenerative_run(&chain, &RegenerativeSpec::new(0, 10_000, s).with_reward(kind)).unwrap().delta
        }));
        assert!(rel_err(mean.as_slice(), fd.as_slice()) < 0.05, "{kind:?}: {mean} vs {fd}");
    }
}

#[test]
fn cycle_reward_oracle_matches_closed_forms() {
    // Two states: from 0 the cycle is 0 -> 0 w.p. a, or 0 -> 1 -> ... -> 0.
    let (a, b) = (0.3, 0.6);
    let p = StochasticMatrix::from_rows(&[vec![a, 1.0 - a], vec![1.0 - b, b]]).unwrap();
    let chain = ParamChain::constant(p, DVector::from_vec(vec![2.0, 1.0]), 1).unwrap();
    // Expected return time is 1 / pi_0.
    let pi0 = (1.0 - b) / (2.0 - a - b);
    let len = expected_cycle_reward(&chain, 0, CycleReward::NegLength).unwrap();
    assert!((len + 1.0 + 1.0 / pi0).abs() < 1e-12);
    // Visits to state 1 per cycle: (1 - a) / (1 - b).
    let sum = expected_cycle_reward(&chain, 0, CycleReward::CycleSum).unwrap();
    assert!((sum - (4.0 + (1.0 - a) / (1.0 - b))).abs() < 1e-12);
}

#[test]
fn regenerative_timeout() {
    let p = StochasticMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.999, 0.001], vec![1.0, 0.0, 0.0]]).unwrap();
    let chain = ParamChain::constant(p, DVector::zeros(3), 1).unwrap();
    let spec = RegenerativeSpec::new(0, 10, 1).with_max_cycle_len(20);
    assert!(matches!(reinforce_regenerative_run(&chain, &spec), Err(Error::CycleTimeout { state: 0, max_len: 20 })));
}

#[test]
fn hessian_is_symmetric_and_requires_second_derivatives() {
    let chain = three_state_chain();
    let est = hessian_run(&chain, 0.9, &RunSpec::new(20_000, 4)).unwrap();
    assert_eq!(est.delta, est.delta.transpose());
    let plain = fixed_chain();
    assert!(matches!(hessian_run(&plain, 0.9, &RunSpec::new(10, 1)), Err(Error::MissingSecondDerivatives)));
}

#[test]
fn hessian_estimate_is_not_invariant_to_reward_shift() {
    // Adding a constant to every reward leaves the discounted gradient (and
    // its Jacobian) alone but moves the second-order estimate.
    let base = three_state_chain();
    let shifted = base.clone().with_rewards(base.rewards().add_scalar(1.0)).unwrap();
    let beta = 0.9;
    let g0 = grad_beta_eta(&base, beta).unwrap().values;
    let g1 = grad_beta_eta(&shifted, beta).unwrap().values;
    assert_close(g0.as_slice(), g1.as_slice(), 1e-12);
    let run = RunSpec::new(200_000, 2);
    let h0 = hessian_run(&base, beta, &run).unwrap().delta;
    let h1 = hessian_run(&shifted, beta, &run).unwrap().delta;
    assert!((h1 - h0).norm() > 0.1);
}

#[test]
fn hessian_with_centered_rewards_tracks_jacobian() {
    let map = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let theta = DVector::from_vec(vec![0.5, -0.5]);
    let raw = SoftmaxChainFamily::new(2, map.clone(), DVector::zeros(4), DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let eta = average_reward(&raw.at(&theta).unwrap()).unwrap();
    let family = SoftmaxChainFamily::new(2, map, DVector::zeros(4), DVector::from_vec(vec![1.0 - eta, -eta])).unwrap();
    let beta = 0.95;
    let fd = central_jacobian(&theta, FD_STEP, |t| Ok(grad_beta_eta(&family.at(t)?, beta)?.values)).unwrap();
    let chain = family.at(&theta).unwrap();
    let mut mean = DMatrix::zeros(2, 2);
    for s in 1..=10 {
        mean += hessian_run(&chain, beta, &RunSpec::new(300_000, s)).unwrap().delta / 10.0;
    }
    assert!((&mean - &fd).norm() / fd.norm() < 0.15, "{mean} vs {fd}");
}

fn two_agent_model() -> MultiAgentModel {
    // Joint controls (u0, u1) in {0,1}^2 on three states.
    let trans = vec![
        DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4]),
        DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.6, 0.2, 0.2, 0.1, 0.1, 0.8]),
        DMatrix::from_row_slice(3, 3, &[0.1, 0.1, 0.8, 0.3, 0.3, 0.4, 0.5, 0.4, 0.1]),
        DMatrix::from_row_slice(3, 3, &[0.4, 0.4, 0.2, 0.2, 0.2, 0.6, 0.9, 0.05, 0.05]),
    ];
    let obs = vec![
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.2, 0.8, 0.5, 0.5]),
        DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.2, 0.0, 1.0, 0.0, 0.1, 0.1, 0.8]),
    ];
    MultiAgentModel::new(trans, obs, vec![2, 2], DVector::from_vec(vec![1.0, 0.0, -0.5])).unwrap()
}

#[test]
fn multi_agent_matches_per_agent_replay() {
    let model = two_agent_model();
    let policies = vec![
        SoftmaxPolicy::new(2, 2, &[0.3, -0.3, 0.1, 0.6]).unwrap(),
        SoftmaxPolicy::new(3, 2, &[0.2, 0.0, -0.4, 0.9, 0.1, -0.1]).unwrap(),
    ];
    let run = RunSpec::new(20_000, 31);
    let joint = multi_agent_run(&model, &policies, 0.9, &run).unwrap();
    let trajectory = simulate_multi_agent(&model, &policies, &run).unwrap();
    let mut concatenated = Vec::new();
    for (a, pol) in policies.iter().enumerate() {
        let view: Vec<PomdpStep> = trajectory.iter().map(|s| s.agent_view(a)).collect();
        concatenated.extend(gpomdp_replay(pol, 0.9, &view, run.seed, None).unwrap().delta.iter().copied());
    }
    assert_eq!(joint.delta.as_slice(), &concatenated[..]);
}

#[test]
fn frozen_agent_block_is_zero() {
    let model = two_agent_model();
    // A single control for the second agent means its policy has no effect.
    let trans = (0..2).map(|u| model.joint_transition(u * 2).as_matrix().clone()).collect();
    let obs = vec![model.agent_observations(0).clone(), model.agent_observations(1).clone()];
    let frozen = MultiAgentModel::new(trans, obs, vec![2, 1], model.rewards().clone()).unwrap();
    let policies = vec![
        SoftmaxPolicy::new(2, 2, &[0.3, -0.3, 0.1, 0.6]).unwrap(),
        SoftmaxPolicy::new(3, 1, &[0.5, 0.1, -2.0]).unwrap(),
    ];
    let est = multi_agent_run(&frozen, &policies, 0.9, &RunSpec::new(5_000, 2)).unwrap();
    assert!(est.delta.as_slice()[4..].iter().all(|&d| d == 0.0));
    assert!(est.delta.as_slice()[..4].iter().any(|&d| d != 0.0));
}

#[test]
fn single_agent_multi_run_matches_gpomdp() {
    let model = two_observation_model(Rewards::State(DVector::from_vec(vec![1.0, 0.0, -1.0])));
    let policy = SoftmaxPolicy::new(2, 2, &[0.2, -0.1, 0.5, 0.0]).unwrap();
    let single = MultiAgentModel::single(&model).unwrap();
    let run = RunSpec::new(20_000, 13);
    let a = multi_agent_run(&single, std::slice::from_ref(&policy), 0.9, &run).unwrap();
    let b = gpomdp_run(&model, &policy, 0.9, &run, None).unwrap();
    assert_eq!(a.delta, b.delta);
}

#[test]
fn multi_agent_shape_errors() {
    let model = two_agent_model();
    let err = multi_agent_run(&model, &[SoftmaxPolicy::zeros(2, 2)], 0.9, &RunSpec::new(10, 1)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch(_)));
}

#[test]
fn mcg_converges_to_discounted_gradient() {
    let chain = three_state_chain();
    let exact = grad_beta_eta(&chain, 0.9).unwrap().values;
    let mean = seed_mean((1..=10).map(|s| mcg_run(&chain, 0.9, &RunSpec::new(1_000_000, s)).unwrap().delta));
    assert!(rel_err(mean.as_slice(), exact.as_slice()) < 0.03);
}

#[test]
fn longer_runs_move_closer() {
    let chain = three_state_chain();
    let exact = grad_beta_eta(&chain, 0.9).unwrap().values;
    let err = |t: usize| {
        let mean = seed_mean((1..=10).map(|s| mcg_run(&chain, 0.9, &RunSpec::new(t, s)).unwrap().delta));
        rel_err(mean.as_slice(), exact.as_slice())
    };
    assert!(err(400_000) < err(25_000));
}
