//! Low-level training heuristics.
//!
//! Seven gradient-based optimizers and three population-based metaheuristics,
//! all operating on an [`EntityState`] whose position is a flat parameter
//! vector. Hyper-parameters default to the benchmark configuration; values
//! that decay carry an `(initial, decay)` pair resolved by [`decay_schedule`].

mod config;
mod gradient;
mod objective;
mod population;
mod proxy;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{
    AdadeltaParams, AdagradParams, AdamParams, DeBase, DeCrossover, DeParams, Decayed, GaCrossover,
    GaParams, GaSelection, HeuristicConfig, HeuristicSettings, MomentumParams, PsoParams,
    RmspropParams, SgdParams,
};
pub use gradient::{
    apply_adadelta, apply_adagrad, apply_adam, apply_momentum, apply_nag, apply_rmsprop, apply_sgd,
};
pub use objective::{BatchObjective, Objective};
pub use population::{apply_de, apply_ga, apply_pso};
pub use proxy::{
    apply_heuristic, apply_with_proxies, maintains, proxy_update, EntityRngs, ProxyMap, Resolution,
    StateParam,
};
pub use state::{EntityState, PopulationState};

/// `initial / (1 + rate * step)`.
pub fn decay_schedule(initial: f64, rate: f64, step: usize) -> f64 {
    initial / (1.0 + rate * step as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    Sgd,
    Momentum,
    Nag,
    Adagrad,
    Rmsprop,
    Adadelta,
    Adam,
    Pso,
    De,
    Ga,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 10] = [
        HeuristicKind::Sgd,
        HeuristicKind::Momentum,
        HeuristicKind::Nag,
        HeuristicKind::Adagrad,
        HeuristicKind::Rmsprop,
        HeuristicKind::Adadelta,
        HeuristicKind::Adam,
        HeuristicKind::Pso,
        HeuristicKind::De,
        HeuristicKind::Ga,
    ];

    pub const GRADIENT_BASED: [HeuristicKind; 7] = [
        HeuristicKind::Sgd,
        HeuristicKind::Momentum,
        HeuristicKind::Nag,
        HeuristicKind::Adagrad,
        HeuristicKind::Rmsprop,
        HeuristicKind::Adadelta,
        HeuristicKind::Adam,
    ];

    pub const METAHEURISTICS: [HeuristicKind; 3] =
        [HeuristicKind::Pso, HeuristicKind::De, HeuristicKind::Ga];

    pub fn is_gradient_based(self) -> bool {
        !matches!(
            self,
            HeuristicKind::Pso | HeuristicKind::De | HeuristicKind::Ga
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::Sgd => "sgd",
            HeuristicKind::Momentum => "momentum",
            HeuristicKind::Nag => "nag",
            HeuristicKind::Adagrad => "adagrad",
            HeuristicKind::Rmsprop => "rmsprop",
            HeuristicKind::Adadelta => "adadelta",
            HeuristicKind::Adam => "adam",
            HeuristicKind::Pso => "pso",
            HeuristicKind::De => "de",
            HeuristicKind::Ga => "ga",
        }
    }

    /// Smallest population the heuristic can operate on.
    pub fn min_population(self, settings: &HeuristicSettings) -> usize {
        match self {
            HeuristicKind::De => match settings.de.selection {
                DeBase::Best => 3,
                DeBase::Rand => 4,
            },
            HeuristicKind::Ga => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeuristicKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown heuristic '{s}'")))
    }
}

/// Which low-level heuristics a hyper-heuristic may choose from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HeuristicPool {
    Named(PoolName),
    Custom(Vec<HeuristicKind>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolName {
    #[default]
    All,
    Gd,
    Mh,
}

impl Default for HeuristicPool {
    fn default() -> Self {
        HeuristicPool::ALL
    }
}

impl HeuristicPool {
    pub const ALL: HeuristicPool = HeuristicPool::Named(PoolName::All);
    pub const GD: HeuristicPool = HeuristicPool::Named(PoolName::Gd);
    pub const MH: HeuristicPool = HeuristicPool::Named(PoolName::Mh);

    pub fn kinds(&self) -> Vec<HeuristicKind> {
        match self {
            HeuristicPool::Named(PoolName::All) => HeuristicKind::ALL.to_vec(),
            HeuristicPool::Named(PoolName::Gd) => HeuristicKind::GRADIENT_BASED.to_vec(),
            HeuristicPool::Named(PoolName::Mh) => HeuristicKind::METAHEURISTICS.to_vec(),
            HeuristicPool::Custom(kinds) => kinds.clone(),
        }
    }

    pub fn configs(&self, settings: &HeuristicSettings) -> Vec<HeuristicConfig> {
        self.kinds().into_iter().map(|k| settings.get(k)).collect()
    }
}

impl fmt::Display for HeuristicPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeuristicPool::Named(PoolName::All) => f.write_str("all"),
            HeuristicPool::Named(PoolName::Gd) => f.write_str("gd"),
            HeuristicPool::Named(PoolName::Mh) => f.write_str("mh"),
            HeuristicPool::Custom(kinds) => {
                let names: Vec<_> = kinds.iter().map(|k| k.name()).collect();
                write!(f, "[{}]", names.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        assert_eq!(decay_schedule(0.1, 0.01, 0), 0.1);
        assert_eq!(decay_schedule(0.1, 0.0, 1_000_000), 0.1);
        assert!((decay_schedule(1.0, 0.95, 20) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn kinds_parse_and_partition() {
        for k in HeuristicKind::ALL {
            assert_eq!(k.name().parse::<HeuristicKind>().unwrap(), k);
        }
        assert!("lbfgs".parse::<HeuristicKind>().is_err());
        assert_eq!(
            HeuristicKind::ALL
                .iter()
                .filter(|k| k.is_gradient_based())
                .count(),
            7
        );
        assert_eq!(HeuristicPool::MH.kinds(), HeuristicKind::METAHEURISTICS);
    }
}
