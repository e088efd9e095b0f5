use super::spectral::{spectral_report, SpectralReport};
use crate::chain::{exact_grad_eta, grad_beta_eta, grad_pi, stationary_distribution, ParamChain};
use crate::error::{check_discount, Error, Result};

const DEGENERATE_NORM: f64 = 1e-9;

/// Both sides of the bias bound
/// `1 - grad eta . beta grad_beta eta / |grad eta|^2
///   <= kappa |grad sqrt(pi)| / |grad eta| sqrt(r' Pi r) (1 - beta) / (1 - beta |lambda_2|)`.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub kappa2: f64,
    /// Frobenius norm of the `K x n` matrix `d sqrt(pi)`.
    pub grad_sqrt_pi_norm: f64,
    pub grad_eta_norm: f64,
    /// `sqrt(r' Pi r)`
    pub reward_norm: f64,
    pub lambda2_mag: f64,
    pub spectral: SpectralReport,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9
    }
}

pub fn theorem3_check(chain: &ParamChain, beta: f64) -> Result<BoundReport> {
    check_discount(beta)?;
    let grad = exact_grad_eta(chain)?.values;
    let norm = grad.norm();
    if norm <= DEGENERATE_NORM {
        return Err(Error::DegenerateGradient { norm });
    }
    let approx = grad_beta_eta(chain, beta)?.values;
    let lhs = 1.0 - grad.dot(&(beta * approx)) / (norm * norm);

    let pi = stationary_distribution(chain.transition())?;
    let spectral = spectral_report(chain.transition(), &pi)?;
    if !spectral.distinct {
        return Err(Error::NotDistinct { min_gap: spectral.min_gap });
    }
    let dpi = grad_pi(chain)?;
    let mut sq = 0.0;
    for k in 0..dpi.nrows() {
        for i in 0..dpi.ncols() {
            let d = dpi[(k, i)];
            if d == 0.0 {
                continue;
            }
            let v = d / (2.0 * pi.pi[i].sqrt());
            sq += v * v;
        }
    }
    let grad_sqrt_pi_norm = sq.sqrt();
    let reward_norm = pi.pi.iter().zip(chain.rewards().iter()).map(|(p, r)| p * r * r).sum::<f64>().sqrt();
    let lambda2_mag = spectral.lambda2_mag;
    let rhs = spectral.kappa2 * grad_sqrt_pi_norm / norm * reward_norm * (1.0 - beta) / (1.0 - beta * lambda2_mag);
    Ok(BoundReport {
        beta,
        lhs,
        rhs,
        kappa2: spectral.kappa2,
        grad_sqrt_pi_norm,
        grad_eta_norm: norm,
        reward_norm,
        lambda2_mag,
        spectral,
    })
}
