//! Central finite differences, used as an independent check on the analytic
//! derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// `(f(theta + h e_k) - f(theta - h e_k)) / 2h` for every `k`, as the columns
/// of an `m x K` Jacobian.
pub fn central_jacobian<F>(theta: &DVector<f64>, h: f64, mut f: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k = theta.len();
    let mut cols = Vec::with_capacity(k);
    for kk in 0..k {
        let mut plus = theta.clone();
        plus[kk] += h;
        let mut minus = theta.clone();
        minus[kk] -= h;
        cols.push((f(&plus)? - f(&minus)?) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(m, k, |i, kk| cols[kk][i]))
}

/// Gradient of a scalar function by central differences.
pub fn central_gradient<F>(theta: &DVector<f64>, h: f64, mut f: F) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let jac = central_jacobian(theta, h, |t| Ok(DVector::from_element(1, f(t)?)))?;
    Ok(jac.row(0).transpose())
}

/// `|a - b| / max(|a|, |b|, 1e-12)` in the Euclidean norm.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Angle between two vectors in degrees, `None` if either is (near) zero.
pub fn angle_deg(a: &[f64], b: &[f64]) -> Option<f64> {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}
