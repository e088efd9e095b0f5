use nalgebra::{Complex, DMatrix, Schur};
use num_complex::Complex64;

use crate::chain::{StationaryDistribution, StochasticMatrix};
use crate::error::{Error, Result};

const CLUSTER_TOL: f64 = 1e-8;
const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Eigen-decomposition `P = S diag(lambda) S^{-1}` of a transition matrix.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Sorted by decreasing modulus; `eigenvalues[0]` is 1.
    pub eigenvalues: Vec<Complex64>,
    /// `|lambda_2|`, or 0 for a single state.
    pub lambda2_mag: f64,
    /// Right eigenvectors as columns, the first being the all-ones vector.
    pub s: DMatrix<Complex64>,
    pub s_inv: DMatrix<Complex64>,
    /// Spectral condition number of `Pi^{1/2} S`.
    pub kappa2: f64,
    /// Smallest distance between two eigenvalues.
    pub min_gap: f64,
    pub distinct: bool,
    /// `max row sum |S Lambda S^{-1} - P|`.
    pub reconstruction_residual: f64,
}

// Moduli are compared after rounding so that roundoff does not split ties
// between eigenvalues on the same circle.
fn sort_key(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    let q = |c: &Complex64| (c.norm() * 1e10).round();
    q(b).total_cmp(&q(a)).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im))
}

fn condition_number(m: DMatrix<Complex64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Decomposes `P` and reports the quantities that enter the bias bound.
///
/// Eigenvalues come from a real Schur form. Each eigenvector (or basis of a
/// cluster of eigenvalues closer than `1e-8`) is taken from the smallest
/// right singular vectors of `P - lambda I`; vectors other than `e` are
/// scaled to unit norm.
pub fn spectral_report(p: &StochasticMatrix, pi: &StationaryDistribution) -> Result<SpectralReport> {
    let n = p.n();
    if pi.pi.len() != n {
        return Err(Error::DimensionMismatch("stationary distribution length".into()));
    }
    let pm = p.as_matrix();
    let schur = Schur::try_new(pm.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::DecompositionFailure("Schur iteration did not converge".into()))?;
    let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(sort_key);
    let one = Complex64::new(1.0, 0.0);
    let lead = (0..n)
        .min_by(|&a, &b| (eigenvalues[a] - one).norm().total_cmp(&(eigenvalues[b] - one).norm()))
        .expect("non-empty spectrum");
    let unit = eigenvalues.remove(lead);
    eigenvalues.insert(0, unit);
    if (eigenvalues[0] - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::DecompositionFailure(format!("leading eigenvalue {} is not 1", eigenvalues[0])));
    }
    eigenvalues[0] = Complex64::new(1.0, 0.0);

    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            min_gap = min_gap.min((eigenvalues[a] - eigenvalues[b]).norm());
        }
    }

    let pc: DMatrix<Complex64> = pm.map(|v| Complex::new(v, 0.0));
    let mut s = DMatrix::<Complex64>::zeros(n, n);
    let mut col = 0;
    while col < n {
        let lambda = eigenvalues[col];
        let mut size = 1;
        while col + size < n && (eigenvalues[col + size] - lambda).norm() < CLUSTER_TOL {
            size += 1;
        }
        if col == 0 && size == 1 {
            s.column_mut(0).fill(Complex64::new(1.0, 0.0));
        } else {
            let shifted = &pc - DMatrix::<Complex64>::identity(n, n) * lambda;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.ok_or_else(|| Error::DecompositionFailure("SVD without V".into()))?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
            for (slot, &idx) in order.iter().take(size).enumerate() {
                let v: Vec<Complex64> = v_t.row(idx).iter().map(|c| c.conj()).collect();
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                for (i, c) in v.into_iter().enumerate() {
                    s[(i, col + slot)] = c / norm;
                }
            }
        }
        col += size;
    }

    let s_inv =
        s.clone().try_inverse().ok_or_else(|| Error::DecompositionFailure("eigenvector matrix is singular".into()))?;
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.clone()));
    let recon = &s * lambda * &s_inv - &pc;
    let reconstruction_residual =
        (0..n).map(|i| recon.row(i).iter().map(|c| c.norm()).sum::<f64>()).fold(0.0, f64::max);
    if !(reconstruction_residual <= RECONSTRUCTION_TOL) {
        return Err(Error::DecompositionFailure(format!(
            "reconstruction residual {reconstruction_residual:.3e} (defective or ill-conditioned matrix)"
        )));
    }
    let weighted = DMatrix::from_fn(n, n, |i, j| s[(i, j)] * pi.pi[i].sqrt());
    let kappa2 = condition_number(weighted);
    Ok(SpectralReport {
        lambda2_mag: eigenvalues.get(1).map_or(0.0, |l| l.norm()),
        eigenvalues,
        s,
        s_inv,
        kappa2,
        min_gap,
        distinct: min_gap > CLUSTER_TOL,
        reconstruction_residual,
    })
}
