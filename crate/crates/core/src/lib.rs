//! Hyperparameter tuning and class rebalancing for security bug report
//! prediction.
//!
//! The crate covers the whole pipeline: loading bug reports or
//! pre-vectorized matrices ([`dataset`]), tf-idf vectorization
//! ([`textprep`]), keyword and noise filters ([`filters`]), five
//! classifiers with bounded hyperparameter spaces ([`learners`]), a
//! differential evolution engine ([`optimizer`]), SMOTE and DE-tuned SMOTE
//! ([`balance`]) and pd/pf/g-measure evaluation with cross-validation
//! ([`evaluation`]).

pub mod balance;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod filters;
pub mod learners;
pub mod optimizer;
pub mod rng;
pub mod space;
pub mod textprep;

pub use error::{Error, Result};
