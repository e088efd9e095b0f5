#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pg_lab_core::{make_softmax_table_chain, ParamChain, SoftmaxChainFamily, StochasticMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_table_chain(rng: &mut ChaCha8Rng, n: usize) -> ParamChain {
    let theta = uniform_vec(rng, n * n, -2.0, 2.0);
    let rewards = uniform_vec(rng, n, -1.0, 1.0);
    make_softmax_table_chain(n, &theta, &rewards).unwrap()
}

/// A softmax family with `k` parameters mixed into every logit.
pub fn random_family(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (SoftmaxChainFamily, DVector<f64>) {
    let map = DMatrix::from_vec(n * n, k, uniform_vec(rng, n * n * k, -1.0, 1.0));
    let offset = DVector::from_vec(uniform_vec(rng, n * n, -1.0, 1.0));
    let rewards = DVector::from_vec(uniform_vec(rng, n, -1.0, 1.0));
    let theta = DVector::from_vec(uniform_vec(rng, k, -1.0, 1.0));
    (SoftmaxChainFamily::new(n, map, offset, rewards).unwrap(), theta)
}

pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> StochasticMatrix {
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    for i in 0..n {
        let s = m.row(i).sum();
        for j in 0..n {
            m[(i, j)] /= s;
        }
    }
    StochasticMatrix::with_tolerance(m, 1e-12).unwrap()
}

/// The 3-state chain used by the convergence tests.
pub fn three_state_chain() -> ParamChain {
    make_softmax_table_chain(3, &[0.4, -0.3, 0.1, -0.6, 0.2, 0.5, 0.3, 0.0, -0.4], &[1.0, 0.0, -0.5]).unwrap()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y} (tol {tol})");
    }
}
