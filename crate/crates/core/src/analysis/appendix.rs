use nalgebra::{DMatrix, DVector};

use crate::chain::{discounted_value, stationary_distribution, ParamChain};
use crate::error::{check_discount, Error, Result};
use crate::pomdp::{PomdpModel, Rewards};

/// `argmin_w sum_i pi_i [w phi(i) - J(i)]^2`, the TD(1) fixed point for a
/// single linear feature.
pub fn td1_fixed_point(alpha: f64, features: &[f64], pi: &[f64], j_alpha: &[f64]) -> Result<f64> {
    check_discount(alpha)?;
    if features.len() != pi.len() || j_alpha.len() != pi.len() {
        return Err(Error::DimensionMismatch("features, pi and values must have one entry per state".into()));
    }
    let den: f64 = pi.iter().zip(features).map(|(p, f)| p * f * f).sum();
    if den <= 1e-12 {
        return Err(Error::DegenerateFeatures(den));
    }
    let num: f64 = pi.iter().zip(features).zip(j_alpha).map(|((p, f), j)| p * f * j).sum();
    Ok(num / den)
}

/// The two-state, two-control MDP: `u1` moves to state 2 with probability
/// 2/3 from anywhere, `u2` to state 1. Rewards are `[0, 1]` and the single
/// observation carries no information.
pub fn appendix_a_model() -> PomdpModel {
    let third = 1.0 / 3.0;
    PomdpModel::new(
        vec![
            DMatrix::from_row_slice(2, 2, &[third, 2.0 * third, third, 2.0 * third]),
            DMatrix::from_row_slice(2, 2, &[2.0 * third, third, 2.0 * third, third]),
        ],
        DMatrix::from_element(2, 1, 1.0),
        Rewards::State(DVector::from_vec(vec![0.0, 1.0])),
    )
    .expect("valid model")
}

/// The state ranked higher by `J(i) = w phi(i)`; a greedy policy steers
/// toward it. Ties go to the lower index.
pub fn greedy_preferred_state(w: f64, features: &[f64]) -> usize {
    let mut best = 0;
    for (i, f) in features.iter().enumerate() {
        if w * f > w * features[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixAReport {
    pub alpha: f64,
    /// Under the optimal policy (always `u1`).
    pub pi: [f64; 2],
    pub j_alpha: [f64; 2],
    pub features: [f64; 2],
    pub w_star: f64,
    /// `w*` in closed form, `(3 + alpha) / (9 (1 - alpha))`.
    pub w_star_closed_form: f64,
    /// Zero-based state that the greedy policy from `w* phi` heads for.
    pub greedy_state: usize,
    /// True when that greedy policy is the suboptimal one (`u2`).
    pub suboptimal: bool,
}

/// Runs the TD(1) scenario: evaluate the optimal policy exactly, fit
/// `w phi` with `phi = [2, 1]`, and check which control the fitted values
/// would pick.
pub fn appendix_a_scenario(alpha: f64) -> Result<AppendixAReport> {
    check_discount(alpha)?;
    let model = appendix_a_model();
    let Rewards::State(r) = model.rewards() else { unreachable!("state rewards") };
    let chain = ParamChain::constant(model.transition(0).clone(), r.clone(), 0)?;
    let pi = stationary_distribution(chain.transition())?.pi;
    let j = discounted_value(&chain, alpha)?.values;
    let features = [2.0, 1.0];
    let w_star = td1_fixed_point(alpha, &features, pi.as_slice(), j.as_slice())?;
    let greedy_state = greedy_preferred_state(w_star, &features);
    // State 2 (index 1) is the rewarding one, reached by u1.
    let suboptimal = greedy_state != 1;
    Ok(AppendixAReport {
        alpha,
        pi: [pi[0], pi[1]],
        j_alpha: [j[0], j[1]],
        features,
        w_star,
        w_star_closed_form: (3.0 + alpha) / (9.0 * (1.0 - alpha)),
        greedy_state,
        suboptimal,
    })
}
