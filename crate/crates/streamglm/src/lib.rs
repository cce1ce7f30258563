//! Streaming estimation for conditional exponential-family models (GLMs)
//! trained by single-pass, constant-step-size SGD.
//!
//! With a constant step size the iterates form a Markov chain that never
//! converges; what converges is what you average. This crate implements and
//! compares the two natural choices — averaging the parameters versus
//! averaging the predictions — plus a cheap Taylor-corrected prediction
//! average built from the running mean and covariance of the iterates.
//! Feature maps cover the plain linear model and Nystrom (column-sampling)
//! kernel approximations, data sources cover seeded synthetic generators and
//! CSV datasets, and the experiment runner sweeps step sizes and replications
//! into deterministic metric logs.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod family;
pub mod features;
pub mod predictor;
pub mod runner;
pub mod synth;
pub mod trainer;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use family::{LinkFamily, Sample};
pub use features::{FeatureMap, Kernel, KernelKind};
pub use predictor::{Predictor, PredictorKind};
pub use runner::{fit_reference, run_experiment, scaling_summary, RunSummary, ScalingReport};
pub use trainer::{train_stream, SgdConfig, TrainerState};
