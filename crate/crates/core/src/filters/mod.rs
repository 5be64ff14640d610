//! Baseline ensemble filters: stochastic EnKF and bootstrap SIR.

mod enkf;
mod sir;

pub use enkf::{enkf_update, EnkfConfig};
pub use sir::{
    effective_sample_size, multinomial_resample, normalize_log_weights, sir_update, Resampling,
    SirConfig,
};
