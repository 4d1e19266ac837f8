//! Benchmarking the hyper-heuristic against standalone heuristics over
//! repeated seeded runs, with descriptive rank aggregation and CSV reports.

mod rank;
mod report;
mod run;

use std::collections::HashSet;

use crate::bhh::{Bhh, BhhConfig};
use crate::data::RawData;
use crate::error::{Error, Result};
use crate::ffnn::Model;
use crate::heuristics::{HeuristicConfig, HeuristicKind, HeuristicPool, HeuristicSettings};

pub use rank::{average_rank, RankTable};
pub use report::{
    emit_reports, read_concentrations, read_entity_trace, read_loss_curve, read_rank_table,
    read_selection_freq, write_entity_trace, write_loss_curve, ConcentrationRow, EntityRow,
    LossCurveRow, RankRow, SelectionRow,
};
pub use run::{run_experiment, ExperimentResults, RunResult};

/// Labels understood by [`Contender::from_label`], in report order.
pub const STANDARD_LABELS: [&str; 13] = [
    "sgd", "momentum", "nag", "adagrad", "rmsprop", "adadelta", "adam", "pso", "de", "ga",
    "bhh_all", "bhh_gd", "bhh_mh",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Trainer {
    Standalone(HeuristicConfig),
    Bhh(Box<Bhh>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contender {
    pub label: String,
    pub trainer: Trainer,
}

impl Contender {
    pub fn standalone(config: HeuristicConfig) -> Self {
        Self {
            label: config.kind().name().to_string(),
            trainer: Trainer::Standalone(config),
        }
    }

    pub fn bhh(label: impl Into<String>, bhh: Bhh) -> Self {
        Self {
            label: label.into(),
            trainer: Trainer::Bhh(Box::new(bhh)),
        }
    }

    /// Resolves a contender label. `bhh` uses `bhh` as configured, `bhh_all`,
    /// `bhh_gd` and `bhh_mh` override its pool, and a heuristic name gives
    /// that heuristic on its own.
    pub fn from_label(label: &str, bhh: &BhhConfig, settings: &HeuristicSettings) -> Result<Self> {
        let pool = match label {
            "bhh" => Some(bhh.heuristic_pool.clone()),
            "bhh_all" => Some(HeuristicPool::ALL),
            "bhh_gd" => Some(HeuristicPool::GD),
            "bhh_mh" => Some(HeuristicPool::MH),
            _ => None,
        };
        match pool {
            Some(heuristic_pool) => {
                let config = BhhConfig {
                    heuristic_pool,
                    ..bhh.clone()
                };
                Ok(Self::bhh(label, Bhh::new(config, *settings)?))
            }
            None => {
                let kind: HeuristicKind = label
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("unknown contender '{label}'")))?;
                Ok(Self::standalone(settings.get(kind)))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: Model,
    /// Unscaled rows; each run splits and scales them with its own seed.
    pub data: RawData,
    pub train_fraction: f64,
    pub batch_size: usize,
    pub contenders: Vec<Contender>,
    pub epochs: usize,
    pub runs: usize,
    pub base_seed: u64,
    /// Upper bound on runs trained in parallel.
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!(
                "invalid experiment name '{}'",
                self.name
            )));
        }
        if self.contenders.is_empty() {
            return Err(Error::InvalidConfig("no contenders".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.contenders {
            if c.label.is_empty() || c.label.contains(['/', '\\']) {
                return Err(Error::InvalidConfig(format!(
                    "invalid contender label '{}'",
                    c.label
                )));
            }
            if !seen.insert(c.label.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate contender '{}'",
                    c.label
                )));
            }
        }
        if self.epochs == 0 || self.runs == 0 || self.batch_size == 0 || self.workers == 0 {
            return Err(Error::InvalidConfig(
                "epochs, runs, batch size and workers must be >= 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "train fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_resolve() {
        let settings = HeuristicSettings::default();
        let bhh = BhhConfig::default();
        for label in STANDARD_LABELS {
            let c = Contender::from_label(label, &bhh, &settings).unwrap();
            assert_eq!(c.label, label);
        }
        let gd = Contender::from_label("bhh_gd", &bhh, &settings).unwrap();
        let Trainer::Bhh(b) = gd.trainer else {
            panic!()
        };
        assert_eq!(b.pool.len(), 7);
        assert!(Contender::from_label("lbfgs", &bhh, &settings).is_err());
    }
}
