//! Seeded random streams shared by every simulator.
//!
//! A run is identified by a single `u64` seed. The seed keys a ChaCha8
//! generator which is split into independent streams, one per sampling role.
//! Each simulated step draws exactly one uniform variate from each role it
//! uses, so a trajectory is fully determined by the seed and the model, and
//! two simulators that consume the same role for the same decision see the
//! same random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The sampling roles. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Choice of the initial state.
    Initial = 0,
    /// Observation draws `y ~ nu(i)`.
    Observation = 1,
    /// The decision draw: control `u ~ mu(theta, y)` in a POMDP, or the whole
    /// transition `j ~ P(theta)[i, .]` in a parameterized chain.
    Decision = 2,
    /// Successor draws `j ~ P(u)[i, .]` in a POMDP.
    Transition = 3,
}

/// One run's random source: four independent ChaCha8 streams under one seed.
#[derive(Debug, Clone)]
pub struct RunRng {
    seed: u64,
    streams: [ChaCha8Rng; 4],
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        let make = |s: Stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            rng
        };
        Self {
            seed,
            streams: [
                make(Stream::Initial),
                make(Stream::Observation),
                make(Stream::Decision),
                make(Stream::Transition),
            ],
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A uniform variate in `[0, 1)` from the given stream.
    pub fn uniform(&mut self, stream: Stream) -> f64 {
        self.streams[stream as usize].random::<f64>()
    }

    /// A uniform index in `0..n`. Drawn as a `u64` so the result does not
    /// depend on the platform's pointer width.
    pub fn index(&mut self, stream: Stream, n: usize) -> usize {
        self.streams[stream as usize].random_range(0..n as u64) as usize
    }

    /// Samples an index from `probs` using one uniform from `stream`.
    pub fn categorical<I>(&mut self, stream: Stream, probs: I) -> usize
    where
        I: IntoIterator<Item = f64>,
    {
        let u = self.uniform(stream);
        inverse_cdf(u, probs)
    }
}

/// Inverse-CDF lookup: the first index `j` with positive mass whose
/// cumulative sum (accumulated in ascending index order) is `>= u`.
///
/// A `u` landing exactly on a boundary goes to the lower index. When
/// rounding leaves the total mass below `u`, the last index with positive
/// mass is returned. Zero-mass entries are never selected.
pub fn inverse_cdf<I>(u: f64, probs: I) -> usize
where
    I: IntoIterator<Item = f64>,
{
    let mut cum = 0.0;
    let mut last_positive = None;
    for (j, p) in probs.into_iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last_positive = Some(j);
        if u <= cum {
            return j;
        }
    }
    last_positive.expect("distribution has no positive mass")
}
