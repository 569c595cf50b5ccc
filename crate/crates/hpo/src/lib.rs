//! Hyperparameter search: a Tree-structured Parzen Estimator over mixed
//! search spaces, a percentile pruner fed by validation curves, and a
//! sequential study runner with a JSON-lines log.

pub mod error;
pub mod pruner;
pub mod space;
pub mod study;
pub mod tpe;
pub mod trial;

pub use error::{Error, Result};
pub use pruner::PercentilePruner;
pub use space::{ParamSpec, ParamValue, Params, SearchSpace};
pub use study::{run_study, ObjectiveError, Sampler, StudyConfig, StudyResult, TrialReporter};
pub use tpe::{sample_prior, suggest, Parzen, TpeConfig};
pub use trial::{Direction, Trial, TrialStatus};
