use nalgebra::DMatrix;

use crate::error::{check_discount, Result};

/// `z <- beta z + ratio`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedTrace {
    beta: f64,
    z: Vec<f64>,
}

impl DiscountedTrace {
    pub fn new(k: usize, beta: f64) -> Result<Self> {
        check_discount(beta)?;
        Ok(Self { beta, z: vec![0.0; k] })
    }

    #[inline]
    pub fn push(&mut self, ratio: &[f64]) {
        for (z, r) in self.z.iter_mut().zip(ratio) {
            *z = self.beta * *z + r;
        }
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Sum of the last `window` ratios.
///
/// The sum is kept incrementally (add the newest ratio, subtract the one
/// leaving the window) and rebuilt from the buffer every time the ring wraps,
/// so cancellation error cannot build up over long runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTrace {
    window: usize,
    k: usize,
    buffer: Vec<f64>,
    /// Slot of the oldest entry once full, else of the next free one.
    head: usize,
    len: usize,
    z: Vec<f64>,
}

impl TruncatedTrace {
    pub fn new(k: usize, window: usize) -> Self {
        assert!(window > 0, "window must be positive");
        Self { window, k, buffer: vec![0.0; window * k], head: 0, len: 0, z: vec![0.0; k] }
    }

    pub fn push(&mut self, ratio: &[f64]) {
        let k = self.k;
        if self.len < self.window {
            let slot = self.len;
            self.buffer[slot * k..(slot + 1) * k].copy_from_slice(ratio);
            for (z, r) in self.z.iter_mut().zip(ratio) {
                *z += r;
            }
            self.len += 1;
            return;
        }
        let slot = self.head;
        for kk in 0..k {
            self.z[kk] += ratio[kk] - self.buffer[slot * k + kk];
        }
        self.buffer[slot * k..(slot + 1) * k].copy_from_slice(ratio);
        self.head = (self.head + 1) % self.window;
        if self.head == 0 {
            self.z = self.sum_from_buffer();
        }
    }

    /// The window sum recomputed from scratch, oldest entry first.
    pub fn sum_from_buffer(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k];
        for age in 0..self.len {
            let slot = if self.len < self.window { age } else { (self.head + age) % self.window };
            for kk in 0..k {
                out[kk] += self.buffer[slot * k + kk];
            }
        }
        out
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Second-order trace `Z <- beta Z + H/p - (g/p)(g/p)'` alongside the
/// first-order one.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTrace {
    first: DiscountedTrace,
    second: DMatrix<f64>,
}

impl MatrixTrace {
    pub fn new(k: usize, beta: f64) -> Result<Self> {
        Ok(Self { first: DiscountedTrace::new(k, beta)?, second: DMatrix::zeros(k, k) })
    }

    /// `hess_ratio` is `H/p`, row-major `K x K`.
    pub fn push(&mut self, ratio: &[f64], hess_ratio: &[f64]) {
        let k = ratio.len();
        let beta = self.first.beta();
        for a in 0..k {
            for b in 0..k {
                let zab = &mut self.second[(a, b)];
                *zab = beta * *zab + (hess_ratio[a * k + b] - ratio[a] * ratio[b]);
            }
        }
        self.first.push(ratio);
    }

    pub fn z(&self) -> &[f64] {
        self.first.z()
    }

    pub fn second(&self) -> &DMatrix<f64> {
        &self.second
    }
}

/// Incremental mean `d += (x - d) / count`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    delta: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(k: usize) -> Self {
        Self { delta: vec![0.0; k], count: 0 }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for (d, v) in self.delta.iter_mut().zip(x) {
            *d += (v - *d) / c;
        }
    }

    /// Pushes `scale * x` without allocating.
    #[inline]
    pub fn push_scaled(&mut self, scale: f64, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for (d, v) in self.delta.iter_mut().zip(x) {
            *d += (scale * v - *d) / c;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.delta
    }

    pub fn into_mean(self) -> Vec<f64> {
        self.delta
    }
}
