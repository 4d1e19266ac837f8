//! The Bayesian hyper-heuristic.
//!
//! A population of entities is trained side by side. Each entity applies the
//! low-level heuristic currently selected for it; every application is logged,
//! credited, and periodically folded into a conjugate belief from which new
//! selections are sampled.

mod belief;
mod credit;
mod log;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{HeuristicConfig, HeuristicPool, HeuristicSettings, ProxyMap};

pub use belief::{
    bayesian_update, init_priors, log_sum_exp_of_factors, reselect, sample_categorical,
    sample_parameters, select_heuristics, selection_scores, summarize_counts, ConcentrationState,
    CountSummary, SampledParameters,
};
pub use credit::{assign_credit, CreditKind, CreditStrategy, DISCOUNT_FACTOR};
pub use log::{prune_log, LogEntry, PerformanceLog};
pub use trainer::{
    bhh_train, train_recording, train_standalone, EntityRecord, LogSize, Mode, StepRecord,
    TrainSetup, TrainingTrace,
};

/// Hyper-heuristic settings. Defaults are the baseline configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BhhConfig {
    pub heuristic_pool: HeuristicPool,
    pub population_size: usize,
    pub burn_in: usize,
    pub credit: CreditKind,
    pub reselection_interval: usize,
    pub replay_window: usize,
    pub reanalysis_interval: usize,
    pub normalise: bool,
    pub discounted_rewards: bool,
}

impl Default for BhhConfig {
    fn default() -> Self {
        Self {
            heuristic_pool: HeuristicPool::ALL,
            population_size: 5,
            burn_in: 0,
            credit: CreditKind::Ibest,
            reselection_interval: 10,
            replay_window: 10,
            reanalysis_interval: 10,
            normalise: false,
            discounted_rewards: false,
        }
    }
}

impl BhhConfig {
    pub fn credit_strategy(&self) -> CreditStrategy {
        CreditStrategy {
            kind: self.credit,
            normalise: self.normalise,
            discounted: self.discounted_rewards,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("population_size", self.population_size),
            ("reselection_interval", self.reselection_interval),
            ("replay_window", self.replay_window),
            ("reanalysis_interval", self.reanalysis_interval),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("bhh.{name} must be >= 1")));
            }
        }
        if self.heuristic_pool.kinds().is_empty() {
            return Err(Error::InvalidConfig("bhh.heuristic_pool is empty".into()));
        }
        Ok(())
    }
}

/// A fully resolved hyper-heuristic: configuration, the concrete heuristic
/// pool, provider settings for proxied state, and the priors.
#[derive(Debug, Clone, PartialEq)]
pub struct Bhh {
    pub config: BhhConfig,
    pub pool: Vec<HeuristicConfig>,
    pub settings: HeuristicSettings,
    pub proxies: ProxyMap,
    pub priors: ConcentrationState,
}

impl Bhh {
    /// Pool taken from `config.heuristic_pool` with hyper-parameters from
    /// `settings`.
    pub fn new(config: BhhConfig, settings: HeuristicSettings) -> Result<Self> {
        let pool = config.heuristic_pool.configs(&settings);
        Self::with_pool(config, pool, settings)
    }

    /// Explicit pool, e.g. with per-entry hyper-parameters.
    pub fn with_pool(
        config: BhhConfig,
        pool: Vec<HeuristicConfig>,
        settings: HeuristicSettings,
    ) -> Result<Self> {
        config.validate()?;
        settings.validate()?;
        if pool.is_empty() {
            return Err(Error::InvalidConfig("heuristic pool is empty".into()));
        }
        for h in &pool {
            h.validate()?;
            let required = h.min_population();
            if config.population_size < required {
                return Err(Error::PopulationTooSmall {
                    heuristic: h.kind(),
                    required,
                    found: config.population_size,
                });
            }
        }
        let proxies = ProxyMap::default();
        proxies.validate()?;
        let priors = init_priors(pool.len(), config.population_size);
        Ok(Self {
            config,
            pool,
            settings,
            proxies,
            priors,
        })
    }

    /// Replaces the uniform priors, e.g. to inject expert knowledge.
    pub fn with_priors(mut self, priors: ConcentrationState) -> Result<Self> {
        priors.validate()?;
        if priors.heuristics() != self.pool.len()
            || priors.entities() != self.config.population_size
        {
            return Err(Error::InvalidConfig(
                "prior shape does not match pool and population".into(),
            ));
        }
        self.priors = priors;
        Ok(self)
    }
}
