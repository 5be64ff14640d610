//! Sequential data assimilation with a training-free conditional diffusion
//! filter.
//!
//! The update step draws a posterior ensemble by integrating a reverse-time
//! ODE whose drift is the closed-form score of a Gaussian kernel density
//! estimate over paired forecast states and synthetic observations. The
//! crate also ships a stochastic EnKF and a bootstrap SIR filter, the
//! Lorenz-63 and Lorenz-96 benchmark systems, exact Wasserstein-2 and RMSE
//! metrics, and an experiment harness with replayable run records.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod kernels;
pub mod metrics;
pub mod ode;
pub mod rng;
pub mod ssm;

pub use diffusion::{diffusion_update, Controller, DiffusionConfig, DiffusionUpdate};
pub use ensemble::{Ensemble, PairedEnsemble, StateEnsemble};
pub use error::{Error, Result};
pub use filters::{enkf_update, sir_update, EnkfConfig, SirConfig};
pub use metrics::{averaged_rmse, averaged_w2, wasserstein2, EmpiricalMeasure, TransportPlan};
pub use rng::RngStream;
pub use ssm::{GaussianObservation, ObservationModel, ObservationOperator, ProcessModel};
