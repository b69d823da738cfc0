//! Volatility estimation for discretely observed Lévy processes
//! `X_t = σW_t + Y_t` with `W` symmetric stable.

mod density_table;
mod error;
mod incgamma;
mod params;
mod quad;
mod roots;

pub mod asymptotics;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod levy_models;
pub mod moment_maps;
pub mod stable_core;

pub use asymptotics::{AsymptoticProfile, Section8Regime};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, EstimationContext, EstimatorSpec, PlanCase, SamplePlan};
pub use harness::{ExperimentConfig, ExperimentSummary};
pub use kernels::{Kernel, KernelKind};
pub use levy_models::{IncrementSample, PerturbationLaw};
pub use stable_core::StableLaw;
