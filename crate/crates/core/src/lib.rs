//! Training shallow feedforward networks with a Bayesian hyper-heuristic.
//!
//! The hyper-heuristic keeps a population of candidate weight vectors. Each
//! one is updated by a low-level heuristic (seven gradient methods, PSO, DE
//! and GA) chosen by sampling from a conjugate belief over which heuristic
//! performs well. The belief is updated from a sliding log of recent
//! outcomes. [`harness`] runs it against standalone heuristics and ranks the
//! results.

pub mod bhh;
pub mod data;
pub mod error;
pub mod ffnn;
pub mod harness;
pub mod heuristics;
pub mod rng;

pub use bhh::{bhh_train, train_standalone, Bhh, BhhConfig, CreditKind, TrainSetup, TrainingTrace};
pub use data::{Dataset, DatasetSpec, RawData};
pub use error::{DivergenceSite, Error, Result};
pub use ffnn::{LossKind, Model, NetworkSpec, ParameterVector};
pub use harness::{
    average_rank, emit_reports, run_experiment, Contender, ExperimentConfig, RankTable,
};
pub use heuristics::{HeuristicConfig, HeuristicKind, HeuristicPool, HeuristicSettings};
