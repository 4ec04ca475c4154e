//! Distribution-free predictive inference under covariate shift.
//!
//! The crate provides weighted jackknife+ intervals (JAW), their
//! influence-function approximations (JAWA-K), the usual exchangeable
//! baselines, error assessment built on the same interval machinery, and a
//! seeded benchmark harness.

pub mod audit;
pub mod empdist;
pub mod error;
pub mod harness;
pub mod iflow;
pub mod infer;
pub mod jet;
pub mod metrics;
pub mod predictors;
pub mod shift;
pub mod weights_est;

pub use empdist::{ExtReal, PredictionInterval, WeightedAtoms};
pub use error::{Error, Result};
pub use predictors::{Dataset, MlpConfig, ModelParams, Predictor, RidgeConfig};
pub use shift::{NormalizedWeights, ShiftSpec};
