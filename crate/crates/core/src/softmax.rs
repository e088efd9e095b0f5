//! Softmax parameterizations of transition rows and control distributions.
//!
//! A row of probabilities `p = softmax(l)` is driven by logits `l = A theta + c`
//! for a fixed `m x K` map `A`. With `abar_k = sum_a p_a A[a, k]`:
//!
//! ```text
//! dp_j / dtheta_k           = p_j (A[j, k] - abar_k)
//! d2p_j / dtheta_k dtheta_l = p_j [(A[j, k] - abar_k)(A[j, l] - abar_l) - cov_p(A[., k], A[., l])]
//! ```
//!
//! so every likelihood ratio `(dp_j/dtheta_k) / p_j` lies in `[-1, 1]` when the
//! map entries are 0/1 indicators, as they are for a parameter table.

use nalgebra::{DMatrix, DVector};

use crate::chain::{ParamChain, StochasticMatrix};
use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Probabilities, gradient and Hessian of one softmax row.
#[derive(Debug, Clone)]
pub(crate) struct RowDerivatives {
    pub probs: Vec<f64>,
    /// `grad[j][k]`
    pub grad: Vec<Vec<f64>>,
    /// `hess[j][k * K + l]`
    pub hess: Option<Vec<Vec<f64>>>,
}

/// Derivatives of a softmax row whose logits depend linearly on `theta`.
/// `map[a][k]` is `dl_a / dtheta_k`.
pub(crate) fn row_derivatives(logits: &[f64], map: &[Vec<f64>], with_hessian: bool) -> RowDerivatives {
    let m = logits.len();
    let k_dim = map.first().map_or(0, |r| r.len());
    let probs = softmax(logits);
    let abar: Vec<f64> = (0..k_dim).map(|k| (0..m).map(|a| probs[a] * map[a][k]).sum()).collect();
    let centered: Vec<Vec<f64>> = (0..m).map(|j| (0..k_dim).map(|k| map[j][k] - abar[k]).collect()).collect();
    let grad = (0..m).map(|j| centered[j].iter().map(|c| probs[j] * c).collect()).collect();
    let hess = with_hessian.then(|| {
        let mut cov = vec![0.0; k_dim * k_dim];
        // Written as p_a * (c_k * c_l) so the result is bitwise symmetric.
        for a in 0..m {
            for k in 0..k_dim {
                for l in 0..k_dim {
                    cov[k * k_dim + l] += probs[a] * (centered[a][k] * centered[a][l]);
                }
            }
        }
        (0..m)
            .map(|j| {
                let mut h = vec![0.0; k_dim * k_dim];
                for k in 0..k_dim {
                    for l in 0..k_dim {
                        h[k * k_dim + l] = probs[j] * (centered[j][k] * centered[j][l] - cov[k * k_dim + l]);
                    }
                }
                h
            })
            .collect()
    });
    RowDerivatives { probs, grad, hess }
}

/// A chain whose transition logits are an affine function of `theta`:
/// `logit[i * n + j] = sum_k map[(i * n + j, k)] theta_k + offset[i * n + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxChainFamily {
    n: usize,
    map: DMatrix<f64>,
    offset: DVector<f64>,
    rewards: DVector<f64>,
}

impl SoftmaxChainFamily {
    pub fn new(n: usize, map: DMatrix<f64>, offset: DVector<f64>, rewards: DVector<f64>) -> Result<Self> {
        if map.nrows() != n * n || offset.len() != n * n {
            return Err(Error::DimensionMismatch(format!("logit map must have {} rows", n * n)));
        }
        if rewards.len() != n {
            return Err(Error::DimensionMismatch(format!("{} rewards for {n} states", rewards.len())));
        }
        Ok(Self { n, map, offset, rewards })
    }

    /// One free logit per transition, `K = n^2`.
    pub fn table(n: usize, rewards: DVector<f64>) -> Result<Self> {
        Self::new(n, DMatrix::identity(n * n, n * n), DVector::zeros(n * n), rewards)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.map.ncols()
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    /// Evaluates the chain, with analytic first and second derivatives.
    pub fn at(&self, theta: &DVector<f64>) -> Result<ParamChain> {
        let n = self.n;
        let k_dim = self.k();
        if theta.len() != k_dim {
            return Err(Error::DimensionMismatch(format!("theta has {} entries, expected {k_dim}", theta.len())));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite".into()));
        }
        let logits = &self.map * theta + &self.offset;
        let mut p = DMatrix::zeros(n, n);
        let mut grad = vec![DMatrix::zeros(n, n); k_dim];
        let mut hess = vec![DMatrix::zeros(n, n); k_dim * k_dim];
        for i in 0..n {
            let row_logits: Vec<f64> = (0..n).map(|j| logits[i * n + j]).collect();
            let row_map: Vec<Vec<f64>> =
                (0..n).map(|j| (0..k_dim).map(|k| self.map[(i * n + j, k)]).collect()).collect();
            let d = row_derivatives(&row_logits, &row_map, true);
            let h = d.hess.as_ref().expect("hessian requested");
            for j in 0..n {
                p[(i, j)] = d.probs[j];
                for k in 0..k_dim {
                    grad[k][(i, j)] = d.grad[j][k];
                }
                for kl in 0..k_dim * k_dim {
                    hess[kl][(i, j)] = h[j][kl];
                }
            }
        }
        ParamChain::new(theta.clone(), StochasticMatrix::new(p)?, grad, self.rewards.clone())?.with_hessian(hess)
    }
}

/// The `n^2`-parameter softmax table chain `p_ij = exp(theta_ij) / sum_l exp(theta_il)`,
/// with `theta` laid out row-major.
pub fn make_softmax_table_chain(n: usize, theta: &[f64], rewards: &[f64]) -> Result<ParamChain> {
    if theta.len() != n * n {
        return Err(Error::DimensionMismatch(format!("softmax table needs {} parameters, got {}", n * n, theta.len())));
    }
    SoftmaxChainFamily::table(n, DVector::from_column_slice(rewards))?.at(&DVector::from_column_slice(theta))
}
