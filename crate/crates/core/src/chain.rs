//! Exact linear algebra on finite parameterized Markov chains.
//!
//! Everything here works on a chain evaluated at one parameter value: the
//! transition matrix `P`, its first derivatives `dP/dtheta_k` (one `n x n`
//! slice per parameter), optional second derivatives, and a reward vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_discount, Error, Result};

/// Row-sum tolerance for stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Row-sum tolerance for derivative slices, whose rows must sum to zero.
pub const GRAD_ROW_SUM_TOL: f64 = 1e-10;
/// Smallest singular value of the augmented balance system below which the
/// stationary distribution is declared non-unique.
pub const STATIONARY_RANK_TOL: f64 = 1e-9;
/// Probabilities below this are never divided by.
pub const PROB_FLOOR: f64 = 1e-300;

/// A square, row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(DMatrix<f64>);

impl StochasticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(m, ROW_SUM_TOL)
    }

    /// Validates with a custom row-sum tolerance (model files use a looser one).
    pub fn with_tolerance(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidStochastic(format!(
                "matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_rows_stochastic(&m, tol)?;
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidStochastic("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n()).map(move |j| self.0[(i, j)])
    }
}

/// Checks that every entry of `m` is a finite non-negative number and every
/// row sums to one within `tol`. `m` need not be square.
pub fn check_rows_stochastic(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    for i in 0..m.nrows() {
        let mut sum = 0.0;
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidStochastic(format!("entry ({i}, {j}) = {v} is not a probability")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// A parameterized chain `P(theta)` evaluated at one `theta`, together with
/// its derivatives and the state rewards.
#[derive(Debug, Clone)]
pub struct ParamChain {
    theta: DVector<f64>,
    transition: StochasticMatrix,
    grad: Vec<DMatrix<f64>>,
    /// Second derivatives, `hess[k * K + l] = d^2 P / dtheta_k dtheta_l`.
    hess: Option<Vec<DMatrix<f64>>>,
    rewards: DVector<f64>,
    reward_bound: f64,
    ratio_bound: f64,
}

impl ParamChain {
    /// Builds a chain and checks the derivative invariants: one slice per
    /// parameter, zero derivative wherever the probability is zero, and slice
    /// rows summing to zero. The reward bound `R` and ratio bound `B` are
    /// computed from the data; see [`ParamChain::with_bounds`] to declare them.
    pub fn new(
        theta: DVector<f64>,
        transition: StochasticMatrix,
        grad: Vec<DMatrix<f64>>,
        rewards: DVector<f64>,
    ) -> Result<Self> {
        let n = transition.n();
        let k = theta.len();
        if grad.len() != k {
            return Err(Error::DimensionMismatch(format!("{} derivative slices for {k} parameters", grad.len())));
        }
        if rewards.len() != n {
            return Err(Error::DimensionMismatch(format!("{} rewards for {n} states", rewards.len())));
        }
        if rewards.iter().any(|r| !r.is_finite()) || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidChain("non-finite reward or parameter".into()));
        }
        let p = transition.as_matrix();
        let mut ratio_bound: f64 = 0.0;
        for (kk, g) in grad.iter().enumerate() {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::DimensionMismatch(format!("derivative slice {kk} is {}x{}", g.nrows(), g.ncols())));
            }
            for i in 0..n {
                let mut row_sum = 0.0;
                for j in 0..n {
                    let d = g[(i, j)];
                    if !d.is_finite() {
                        return Err(Error::InvalidChain(format!("non-finite derivative at ({i}, {j}, {kk})")));
                    }
                    row_sum += d;
                    if p[(i, j)] == 0.0 {
                        if d != 0.0 {
                            return Err(Error::InvalidChain(format!(
                                "zero-probability transition ({i}, {j}) has derivative {d} along parameter {kk}"
                            )));
                        }
                    } else {
                        ratio_bound = ratio_bound.max(d.abs() / p[(i, j)]);
                    }
                }
                if row_sum.abs() > GRAD_ROW_SUM_TOL {
                    return Err(Error::InvalidChain(format!("derivative slice {kk} row {i} sums to {row_sum}")));
                }
            }
        }
        let reward_bound = rewards.amax();
        Ok(Self { theta, transition, grad, hess: None, rewards, reward_bound, ratio_bound })
    }

    /// A chain whose transitions do not depend on the `k` parameters.
    pub fn constant(transition: StochasticMatrix, rewards: DVector<f64>, k: usize) -> Result<Self> {
        let n = transition.n();
        Self::new(DVector::zeros(k), transition, vec![DMatrix::zeros(n, n); k], rewards)
    }

    /// Attaches second derivatives (`K * K` slices, row-major in `(k, l)`).
    pub fn with_hessian(mut self, hess: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = self.n();
        let k = self.k();
        if hess.len() != k * k || hess.iter().any(|h| h.nrows() != n || h.ncols() != n) {
            return Err(Error::DimensionMismatch(format!("expected {} second-derivative slices of {n}x{n}", k * k)));
        }
        self.hess = Some(hess);
        Ok(self)
    }

    /// Declares the reward bound `R` and likelihood-ratio bound `B`. Fails if
    /// the chain's actual values exceed them.
    pub fn with_bounds(mut self, reward_bound: f64, ratio_bound: f64) -> Result<Self> {
        if self.reward_bound > reward_bound {
            return Err(Error::InvalidChain(format!(
                "reward magnitude {} exceeds declared bound {reward_bound}",
                self.reward_bound
            )));
        }
        if self.ratio_bound > ratio_bound * (1.0 + 1e-12) {
            return Err(Error::InvalidChain(format!(
                "likelihood ratio {} exceeds declared bound {ratio_bound}",
                self.ratio_bound
            )));
        }
        self.reward_bound = reward_bound;
        self.ratio_bound = ratio_bound;
        Ok(self)
    }

    /// Replaces the reward vector, keeping the transition model.
    pub fn with_rewards(mut self, rewards: DVector<f64>) -> Result<Self> {
        if rewards.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("{} rewards for {} states", rewards.len(), self.n())));
        }
        self.reward_bound = rewards.amax();
        self.rewards = rewards;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.transition.n()
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn transition(&self) -> &StochasticMatrix {
        &self.transition
    }

    pub fn grad_transition(&self) -> &[DMatrix<f64>] {
        &self.grad
    }

    pub fn hess_transition(&self) -> Option<&[DMatrix<f64>]> {
        self.hess.as_deref()
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }

    /// True when every derivative slice is identically zero.
    pub fn is_parameter_free(&self) -> bool {
        self.grad.iter().all(|g| g.iter().all(|&d| d == 0.0))
    }

    /// Writes `dp_ij/dtheta / p_ij` into `out`, with `0/0 = 0`.
    ///
    /// Fails for a positive-derivative transition whose probability is below
    /// [`PROB_FLOOR`].
    pub fn likelihood_ratio(&self, i: usize, j: usize, out: &mut [f64]) -> Result<()> {
        let p = self.transition.get(i, j);
        if p < PROB_FLOOR {
            if self.grad.iter().all(|g| g[(i, j)] == 0.0) {
                out.fill(0.0);
                return Ok(());
            }
            return Err(Error::ZeroProbabilityTransition { from: i, to: j, prob: p });
        }
        for (o, g) in out.iter_mut().zip(&self.grad) {
            *o = g[(i, j)] / p;
        }
        Ok(())
    }
}

/// Stationary distribution `pi` of a unichain `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: DVector<f64>,
}

impl StationaryDistribution {
    /// `max_j |(pi' P - pi')_j|`.
    pub fn residual(&self, p: &StochasticMatrix) -> f64 {
        (p.as_matrix().tr_mul(&self.pi) - &self.pi).amax()
    }
}

/// Expected discounted reward from each state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedValueVector {
    pub beta: f64,
    pub values: DVector<f64>,
}

impl DiscountedValueVector {
    /// `max_i |J - r - beta P J|`.
    pub fn bellman_residual(&self, chain: &ParamChain) -> f64 {
        let p = chain.transition().as_matrix();
        (&self.values - chain.rewards() - self.beta * (p * &self.values)).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    /// The true gradient of the average reward.
    EtaExact,
    /// The discounted approximation `pi' dP J_beta`.
    EtaBeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: DVector<f64>,
    pub kind: GradientKind,
}

impl GradientVector {
    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// Solves the augmented balance system `{pi'(I - P) = 0, sum(pi) = 1}` in the
/// least-squares sense.
pub fn stationary_distribution(p: &StochasticMatrix) -> Result<StationaryDistribution> {
    let n = p.n();
    let pm = p.as_matrix();
    let mut a = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            // row i of (I - P)' is column i of (I - P)
            a[(i, j)] = if i == j { 1.0 } else { 0.0 } - pm[(j, i)];
        }
    }
    for j in 0..n {
        a[(n, j)] = 1.0;
    }
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;

    let svd = a.svd(true, true);
    let sigma_min = svd.singular_values.min();
    if sigma_min < STATIONARY_RANK_TOL {
        return Err(Error::NonUniqueStationary { sigma_min });
    }
    let mut pi = svd.solve(&b, 0.0).map_err(|_| Error::SingularSystem("stationary least-squares solve"))?;
    // Transient states come out as tiny signed roundoff.
    for v in pi.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total = pi.sum();
    pi /= total;
    Ok(StationaryDistribution { pi })
}

/// Average reward `eta = pi' r`.
pub fn average_reward(chain: &ParamChain) -> Result<f64> {
    let pi = stationary_distribution(chain.transition())?;
    Ok(pi.pi.dot(chain.rewards()))
}

/// Solves `(I - beta P) J = r`.
pub fn discounted_value(chain: &ParamChain, beta: f64) -> Result<DiscountedValueVector> {
    check_discount(beta)?;
    let values = solve_discounted(chain.transition().as_matrix(), beta, chain.rewards())?;
    Ok(DiscountedValueVector { beta, values })
}

pub(crate) fn solve_discounted(p: &DMatrix<f64>, beta: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - beta * p;
    a.lu().solve(rhs).ok_or(Error::SingularSystem("I - beta P"))
}

/// `I - P + e pi'`, invertible under a unique stationary distribution.
fn fundamental(p: &DMatrix<f64>, pi: &DVector<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - p[(i, j)] + pi[j])
}

fn checked_lu(a: DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    let lu = a.lu();
    let u = lu.u();
    if (0..n).any(|i| u[(i, i)].abs() <= 1e-13 * scale) {
        return Err(Error::SingularSystem("I - P + e pi'"));
    }
    Ok(lu)
}

/// `pi' dP_k` for every parameter, as the rows of a `K x n` matrix.
fn pi_times_grad(chain: &ParamChain, pi: &DVector<f64>) -> DMatrix<f64> {
    let n = chain.n();
    let mut out = DMatrix::zeros(chain.k(), n);
    for (k, g) in chain.grad_transition().iter().enumerate() {
        out.set_row(k, &g.tr_mul(pi).transpose());
    }
    out
}

/// The `K x n` matrix `d pi'` whose row `k` is `d pi / dtheta_k`:
/// `d pi' = pi' dP [I - P + e pi']^{-1}`.
pub fn grad_pi(chain: &ParamChain) -> Result<DMatrix<f64>> {
    let pi = stationary_distribution(chain.transition())?.pi;
    let lu = checked_lu(fundamental(chain.transition().as_matrix(), &pi).transpose())?;
    let rhs = pi_times_grad(chain, &pi);
    let mut out = DMatrix::zeros(chain.k(), chain.n());
    for k in 0..chain.k() {
        let row = lu.solve(&rhs.row(k).transpose()).ok_or(Error::SingularSystem("I - P + e pi'"))?;
        out.set_row(k, &row.transpose());
    }
    Ok(out)
}

/// `grad eta = pi' dP [I - P + e pi']^{-1} r`, using one factorization.
pub fn exact_grad_eta(chain: &ParamChain) -> Result<GradientVector> {
    let pi = stationary_distribution(chain.transition())?.pi;
    let lu = checked_lu(fundamental(chain.transition().as_matrix(), &pi))?;
    let v = lu.solve(chain.rewards()).ok_or(Error::SingularSystem("I - P + e pi'"))?;
    let values = pi_times_grad(chain, &pi) * v;
    Ok(GradientVector { values, kind: GradientKind::EtaExact })
}

/// The discounted approximation `pi' dP J_beta`.
pub fn grad_beta_eta(chain: &ParamChain, beta: f64) -> Result<GradientVector> {
    let j = discounted_value(chain, beta)?;
    let pi = stationary_distribution(chain.transition())?.pi;
    let values = pi_times_grad(chain, &pi) * j.values;
    Ok(GradientVector { values, kind: GradientKind::EtaBeta })
}

/// `d J_beta = beta (I - beta P)^{-1} dP J_beta`, as a `K x n` matrix.
pub fn grad_j_beta(chain: &ParamChain, beta: f64) -> Result<DMatrix<f64>> {
    let j = discounted_value(chain, beta)?;
    let n = chain.n();
    let lu = (DMatrix::identity(n, n) - beta * chain.transition().as_matrix()).lu();
    let mut out = DMatrix::zeros(chain.k(), n);
    for (k, g) in chain.grad_transition().iter().enumerate() {
        let rhs = beta * (g * &j.values);
        let row = lu.solve(&rhs).ok_or(Error::SingularSystem("I - beta P"))?;
        out.set_row(k, &row.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn appendix_a_u1() -> ParamChain {
        let p = StochasticMatrix::from_rows(&[vec![1.0 / 3.0, 2.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        ParamChain::constant(p, DVector::from_vec(vec![0.0, 1.0]), 1).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = StochasticMatrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::InvalidStochastic(_)));
        assert!(StochasticMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn stationary_of_two_cycle_is_uniform() {
        let pi = stationary_distribution(&two_cycle()).unwrap();
        assert!((pi.pi[0] - 0.5).abs() < 1e-15 && (pi.pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reducible_chain_is_not_unichain() {
        let p = StochasticMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(stationary_distribution(&p), Err(Error::NonUniqueStationary { .. })));
    }

    #[test]
    fn transient_states_get_zero_mass() {
        let p = StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert_eq!(pi.pi[0], 0.0);
        assert!((pi.pi[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_state_example_values() {
        let chain = appendix_a_u1();
        let pi = stationary_distribution(chain.transition()).unwrap();
        assert!((pi.pi[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((average_reward(&chain).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        let j = discounted_value(&chain, 0.6).unwrap();
        assert!((j.values[0] - 1.0).abs() < 1e-13 && (j.values[1] - 2.0).abs() < 1e-13);
        assert!(j.bellman_residual(&chain) < 1e-12);
    }

    #[test]
    fn single_state_chain() {
        let p = StochasticMatrix::from_rows(&[vec![1.0]]).unwrap();
        let chain = ParamChain::constant(p, DVector::from_element(1, -2.5), 0).unwrap();
        assert_eq!(average_reward(&chain).unwrap(), -2.5);
    }

    #[test]
    fn constant_rewards_give_geometric_values() {
        let p = StochasticMatrix::from_rows(&[vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let chain = ParamChain::constant(p, DVector::from_element(2, 3.0), 2).unwrap();
        assert!((average_reward(&chain).unwrap() - 3.0).abs() < 1e-14);
        let j = discounted_value(&chain, 0.9).unwrap();
        for v in j.values.iter() {
            assert!((v - 30.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_discount_rejected() {
        let chain = appendix_a_u1();
        assert_eq!(discounted_value(&chain, 1.0).unwrap_err(), Error::InvalidDiscount(1.0));
        assert!(grad_beta_eta(&chain, -0.1).is_err());
        assert!(grad_j_beta(&chain, 1.5).is_err());
    }

    #[test]
    fn parameter_free_chain_has_zero_gradients() {
        let chain = appendix_a_u1();
        assert_eq!(exact_grad_eta(&chain).unwrap().values[0], 0.0);
        assert_eq!(grad_beta_eta(&chain, 0.9).unwrap().values[0], 0.0);
        assert!(grad_pi(&chain).unwrap().iter().all(|&v| v == 0.0));
        assert!(grad_j_beta(&chain, 0.9).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_on_forbidden_transition_rejected() {
        let p = StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[0.1, -0.1, 0.0, 0.0]);
        let err = ParamChain::new(DVector::zeros(1), p, vec![g], DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::InvalidChain(_)));
    }

    #[test]
    fn derivative_rows_must_sum_to_zero() {
        let p = StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[0.1, 0.1, 0.0, 0.0]);
        assert!(ParamChain::new(DVector::zeros(1), p, vec![g], DVector::zeros(2)).is_err());
    }

    #[test]
    fn declared_bounds_are_checked() {
        let chain = appendix_a_u1();
        assert!(chain.clone().with_bounds(0.5, 1.0).is_err());
        let c = chain.with_bounds(2.0, 1.0).unwrap();
        assert_eq!(c.reward_bound(), 2.0);
    }

    #[test]
    fn zero_over_zero_ratio_is_zero() {
        let p = StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let chain = ParamChain::constant(p, DVector::zeros(2), 2).unwrap();
        let mut out = [1.0, 1.0];
        chain.likelihood_ratio(0, 0, &mut out).unwrap();
        assert_eq!(out, [0.0, 0.0]);
    }
}
