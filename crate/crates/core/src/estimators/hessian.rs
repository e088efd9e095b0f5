use nalgebra::DMatrix;

use super::{Algorithm, ChainSampler, GradientEstimate, MatrixTrace, RatioTable, RunSpec, TraceParam};
use crate::chain::{ParamChain, PROB_FLOOR};
use crate::error::{Error, Result};

/// Second-order MCG: averages `r(X_{t+1}) [Z_{t+1} + z_{t+1} z_{t+1}']` with
/// `Z <- beta Z + H/p - (g/p)(g/p)'`.
pub fn hessian_run(chain: &ParamChain, beta: f64, run: &RunSpec) -> Result<GradientEstimate<DMatrix<f64>>> {
    run.check()?;
    let hess = chain.hess_transition().ok_or(Error::MissingSecondDerivatives)?;
    let (n, k) = (chain.n(), chain.k());
    let table = RatioTable::new(chain);
    // H/p per transition, row-major K x K.
    let mut hess_ratio = vec![0.0; n * n * k * k];
    for i in 0..n {
        for j in 0..n {
            let p = chain.transition().get(i, j);
            if p < PROB_FLOOR {
                continue;
            }
            let base = (i * n + j) * k * k;
            for (kl, h) in hess.iter().enumerate() {
                hess_ratio[base + kl] = h[(i, j)] / p;
            }
        }
    }
    let mut trace = MatrixTrace::new(k, beta)?;
    let mut sampler = ChainSampler::new(chain, run.seed, run.initial_state)?;
    for _ in 0..run.burn_in {
        sampler.advance();
    }
    let mut delta = DMatrix::zeros(k, k);
    for t in 0..run.steps {
        let from = sampler.state();
        let to = sampler.advance();
        let base = (from * n + to) * k * k;
        trace.push(table.get(chain, from, to)?, &hess_ratio[base..base + k * k]);
        let r = chain.rewards()[to];
        let z = trace.z();
        let zz = trace.second();
        let c = (t + 1) as f64;
        for a in 0..k {
            for b in 0..k {
                let x = r * (zz[(a, b)] + z[a] * z[b]);
                delta[(a, b)] += (x - delta[(a, b)]) / c;
            }
        }
    }
    Ok(GradientEstimate {
        delta,
        steps: run.steps,
        seed: run.seed,
        algorithm: Algorithm::Hessian,
        trace: TraceParam::Discount(beta),
    })
}
