//! Comparisons between the exact and discounted gradients.

mod appendix;
mod bound;
mod spectral;
mod sweep;

pub use appendix::{appendix_a_model, appendix_a_scenario, greedy_preferred_state, td1_fixed_point, AppendixAReport};
pub use bound::{theorem3_check, BoundReport};
pub use spectral::{spectral_report, SpectralReport};
pub use sweep::{bias_variance_sweep, SweepRecord};
