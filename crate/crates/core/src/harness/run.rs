use rayon::prelude::*;

use super::{ExperimentConfig, Trainer};
use crate::bhh::{train_recording, Mode, TrainSetup, TrainingTrace};
use crate::data::{batch_count, prepare, split_indices};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub contender: String,
    pub run: usize,
    pub seed: u64,
    /// Test loss of the reported solution at every step. Steps after a
    /// divergence are `+inf`, so the run ranks last from there on.
    pub test_loss: Vec<f64>,
    pub final_test_loss: f64,
    pub final_accuracy: Option<f64>,
    pub trace: TrainingTrace,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        self.trace.divergence.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub name: String,
    pub labels: Vec<String>,
    /// Indexed by contender, then run.
    pub runs: Vec<Vec<RunResult>>,
}

impl ExperimentResults {
    /// Test-loss series indexed by contender, run, step.
    pub fn series(&self) -> Vec<Vec<Vec<f64>>> {
        self.runs
            .iter()
            .map(|runs| runs.iter().map(|r| r.test_loss.clone()).collect())
            .collect()
    }
}

/// Trains every contender `runs` times with seeds `base_seed + r`. Runs are
/// spread over at most `workers` threads; results do not depend on the
/// schedule.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let (train_rows, _) =
        split_indices(config.data.len(), config.train_fraction, config.base_seed)?;
    let steps = config.epochs * batch_count(train_rows.len(), config.batch_size);

    let jobs: Vec<(usize, usize)> = (0..config.contenders.len())
        .flat_map(|c| (0..config.runs).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let results: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_one(config, c, r, steps))
            .collect::<Result<_>>()
    })?;

    let mut runs: Vec<Vec<RunResult>> =
        vec![Vec::with_capacity(config.runs); config.contenders.len()];
    for result in results {
        let c = config
            .contenders
            .iter()
            .position(|k| k.label == result.contender)
            .unwrap();
        runs[c].push(result);
    }
    Ok(ExperimentResults {
        name: config.name.clone(),
        labels: config.contenders.iter().map(|c| c.label.clone()).collect(),
        runs,
    })
}

fn run_one(
    config: &ExperimentConfig,
    contender: usize,
    run: usize,
    steps: usize,
) -> Result<RunResult> {
    let c = &config.contenders[contender];
    let seed = config.base_seed + run as u64;
    let (train, test) = prepare(&config.data, config.train_fraction, seed)?;
    let setup = TrainSetup {
        model: config.model,
        train: &train,
        test: &test,
        batch_size: config.batch_size,
        epochs: config.epochs,
        seed,
    };
    let mode = match &c.trainer {
        Trainer::Standalone(h) => Mode::Standalone(h),
        Trainer::Bhh(b) => Mode::Bhh(b),
    };
    let trace = train_recording(&setup, mode)?;
    let mut test_loss: Vec<f64> = trace.steps.iter().map(|s| s.test_loss).collect();
    test_loss.resize(steps, f64::INFINITY);
    let last = trace.final_step().filter(|_| trace.divergence.is_none());
    Ok(RunResult {
        contender: c.label.clone(),
        run,
        seed,
        test_loss,
        final_test_loss: last.map_or(f64::INFINITY, |s| s.test_loss),
        final_accuracy: last.and_then(|s| s.accuracy),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bhh::{Bhh, BhhConfig};
    use crate::data::iris;
    use crate::ffnn::{presets::model_preset, Model};
    use crate::harness::{average_rank, Contender};
    use crate::heuristics::{Decayed, HeuristicConfig, HeuristicKind, HeuristicSettings};

    pub(crate) fn iris_experiment(
        contenders: Vec<Contender>,
        runs: usize,
        epochs: usize,
    ) -> ExperimentConfig {
        let p = model_preset("iris").unwrap();
        ExperimentConfig {
            name: "iris".into(),
            model: Model::new(p.spec(), p.loss()).unwrap(),
            data: iris(),
            train_fraction: 0.8,
            batch_size: 16,
            contenders,
            epochs,
            runs,
            base_seed: 100,
            workers: 2,
        }
    }

    fn frozen_sgd() -> Contender {
        let mut sgd = HeuristicSettings::default().sgd;
        sgd.learning_rate = Decayed::constant(0.0);
        Contender {
            label: "frozen".into(),
            ..Contender::standalone(HeuristicConfig::Sgd(sgd))
        }
    }

    #[test]
    fn one_run_full_series() {
        let adam = Contender::standalone(HeuristicSettings::default().get(HeuristicKind::Adam));
        let r = run_experiment(&iris_experiment(vec![adam], 1, 2)).unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(r.runs[0].len(), 1);
        assert_eq!(r.runs[0][0].test_loss.len(), 16);
        assert_eq!(r.runs[0][0].seed, 100);
    }

    #[test]
    fn frozen_contender_is_constant_and_ranks_last() {
        let adam = Contender::standalone(HeuristicSettings::default().get(HeuristicKind::Adam));
        let config = iris_experiment(vec![frozen_sgd(), adam], 2, 3);
        let r = run_experiment(&config).unwrap();
        for run in &r.runs[0] {
            assert!(run.test_loss.iter().all(|&l| l == run.test_loss[0]));
        }
        let table = average_rank(&r.labels, &r.series()).unwrap();
        assert!(table.mean[0] > table.mean[1]);
        assert_eq!(table.normalised, [2, 1]);
    }

    #[test]
    fn deterministic_regardless_of_workers() {
        let bhh = Bhh::new(BhhConfig::default(), HeuristicSettings::default()).unwrap();
        let mut config = iris_experiment(vec![Contender::bhh("bhh", bhh), frozen_sgd()], 3, 1);
        let a = run_experiment(&config).unwrap();
        config.workers = 1;
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergent_run_padded_with_infinity() {
        let mut sgd = HeuristicSettings::default().sgd;
        sgd.learning_rate = Decayed::constant(1e308);
        let config = iris_experiment(vec![Contender::standalone(HeuristicConfig::Sgd(sgd))], 1, 2);
        let r = run_experiment(&config).unwrap();
        let run = &r.runs[0][0];
        assert!(run.diverged());
        assert_eq!(run.test_loss.len(), 16);
        assert_eq!(*run.test_loss.last().unwrap(), f64::INFINITY);
        assert_eq!(run.final_test_loss, f64::INFINITY);
    }
}
