use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ExperimentResults, RankTable, RunResult};
use crate::bhh::TrainingTrace;
use crate::error::{Error, Result};
use crate::heuristics::HeuristicKind;

/// One entity at one step; rows of `run_<r>.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityRow {
    pub run: usize,
    pub step: usize,
    pub epoch: usize,
    pub entity: usize,
    pub heuristic: HeuristicKind,
    pub train_loss: f64,
    pub test_loss: f64,
    pub accuracy: Option<f64>,
    pub credit: f64,
}

/// The reported solution at one step; rows of `loss_curve.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCurveRow {
    pub run: usize,
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub contender: String,
    pub mean_rank: f64,
    pub std_rank: f64,
    pub normalised_rank: usize,
}

/// How many entities ran a heuristic at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub contender: String,
    pub run: usize,
    pub step: usize,
    pub epoch: usize,
    pub heuristic: HeuristicKind,
    pub count: usize,
}

/// One concentration value after a belief update. `entity` is set only for
/// the per-entity concentrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub step: usize,
    pub param: String,
    pub entity: Option<usize>,
    pub heuristic: HeuristicKind,
    pub value: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .into_deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn entity_rows(run: usize, trace: &TrainingTrace) -> impl Iterator<Item = EntityRow> + '_ {
    trace.entities.iter().map(move |e| EntityRow {
        run,
        step: e.step,
        epoch: e.epoch,
        entity: e.entity,
        heuristic: e.heuristic,
        train_loss: e.train_loss,
        test_loss: e.test_loss,
        accuracy: e.accuracy,
        credit: e.credit,
    })
}

/// Writes a single training trace in the per-run layout.
pub fn write_entity_trace(path: &Path, run: usize, trace: &TrainingTrace) -> Result<()> {
    write_rows(path, entity_rows(run, trace))
}

pub fn read_entity_trace(path: &Path) -> Result<Vec<EntityRow>> {
    read_rows(path)
}

pub fn read_loss_curve(path: &Path) -> Result<Vec<LossCurveRow>> {
    read_rows(path)
}

pub fn read_rank_table(path: &Path) -> Result<Vec<RankRow>> {
    read_rows(path)
}

pub fn read_selection_freq(path: &Path) -> Result<Vec<SelectionRow>> {
    read_rows(path)
}

pub fn read_concentrations(path: &Path) -> Result<Vec<ConcentrationRow>> {
    read_rows(path)
}

fn curve_rows(run: usize, trace: &TrainingTrace) -> impl Iterator<Item = LossCurveRow> + '_ {
    trace.steps.iter().map(move |s| LossCurveRow {
        run,
        step: s.step,
        epoch: s.epoch,
        train_loss: s.train_loss,
        test_loss: s.test_loss,
        accuracy: s.accuracy,
    })
}

fn loss_curve_rows(runs: &[RunResult]) -> Vec<LossCurveRow> {
    runs.iter()
        .flat_map(|r| curve_rows(r.run, &r.trace))
        .collect()
}

/// Writes the reported solution of a single training trace.
pub fn write_loss_curve(path: &Path, run: usize, trace: &TrainingTrace) -> Result<()> {
    write_rows(path, curve_rows(run, trace))
}

fn selection_rows(label: &str, run: &RunResult) -> Vec<SelectionRow> {
    let trace = &run.trace;
    let mut rows = Vec::new();
    for (step, (selection, record)) in trace.selections.iter().zip(&trace.steps).enumerate() {
        for (index, &heuristic) in trace.pool.iter().enumerate() {
            rows.push(SelectionRow {
                contender: label.to_string(),
                run: run.run,
                step,
                epoch: record.epoch,
                heuristic,
                count: selection.iter().filter(|&&s| s == index).count(),
            });
        }
    }
    rows
}

fn concentration_rows(trace: &TrainingTrace) -> Vec<ConcentrationRow> {
    let mut rows = Vec::new();
    for (step, state) in &trace.concentrations {
        let row = |param: &str, entity, k: usize, value| ConcentrationRow {
            step: *step,
            param: param.to_string(),
            entity,
            heuristic: trace.pool[k],
            value,
        };
        for (k, &a) in state.alpha.iter().enumerate() {
            rows.push(row("alpha", None, k, a));
        }
        for (j, per_entity) in state.beta.iter().enumerate() {
            for (k, &b) in per_entity.iter().enumerate() {
                rows.push(row("beta", Some(j), k, b));
            }
        }
        for (k, (&g1, &g0)) in state.gamma1.iter().zip(&state.gamma0).enumerate() {
            rows.push(row("gamma1", None, k, g1));
            rows.push(row("gamma0", None, k, g0));
        }
    }
    rows
}

/// Writes all reports under `<out>/<experiment name>/` and returns the paths
/// written:
///
/// - `<contender>/run_<r>.csv`: every entity at every step
/// - `<contender>/loss_curve.csv`: the reported solution per run and step
/// - `<contender>/concentrations_<r>.csv`: belief after each update, for
///   hyper-heuristic contenders
/// - `rank_table.csv` and `selection_freq.csv`
///
/// Inputs are checked before anything is written.
pub fn emit_reports(
    out: &Path,
    results: &ExperimentResults,
    table: &RankTable,
) -> Result<Vec<PathBuf>> {
    if results.labels.is_empty() {
        return Err(Error::InvalidConfig("no contenders to report".into()));
    }
    if table.labels != results.labels || results.runs.len() != results.labels.len() {
        return Err(Error::InvalidConfig(
            "rank table does not match results".into(),
        ));
    }
    let root = out.join(&results.name);
    let mut written = Vec::new();
    let mut selections = Vec::new();
    for (label, runs) in results.labels.iter().zip(&results.runs) {
        let dir = root.join(label);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for run in runs {
            let path = dir.join(format!("run_{}.csv", run.run));
            write_entity_trace(&path, run.run, &run.trace)?;
            written.push(path);
            if run.trace.final_concentrations.is_some() {
                let path = dir.join(format!("concentrations_{}.csv", run.run));
                write_rows(&path, concentration_rows(&run.trace))?;
                written.push(path);
                selections.extend(selection_rows(label, run));
            }
        }
        let path = dir.join("loss_curve.csv");
        write_rows(&path, loss_curve_rows(runs))?;
        written.push(path);
    }

    let path = root.join("rank_table.csv");
    let ranks = (0..table.labels.len()).map(|i| RankRow {
        contender: table.labels[i].clone(),
        mean_rank: table.mean[i],
        std_rank: table.std[i],
        normalised_rank: table.normalised[i],
    });
    write_rows(&path, ranks)?;
    written.push(path);

    let path = root.join("selection_freq.csv");
    if selections.is_empty() {
        // Keep the header so the file parses even without hyper-heuristic
        // contenders.
        fs::write(&path, "contender,run,step,epoch,heuristic,count\n")
            .map_err(|e| Error::io(&path, e))?;
    } else {
        write_rows(&path, selections)?;
    }
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bhh::{Bhh, BhhConfig};
    use crate::data::iris;
    use crate::ffnn::{presets::model_preset, Model};
    use crate::harness::{average_rank, run_experiment, Contender, ExperimentConfig};
    use crate::heuristics::{HeuristicPool, HeuristicSettings};
    use std::collections::BTreeMap;

    fn experiment(contenders: Vec<Contender>, runs: usize) -> ExperimentConfig {
        let p = model_preset("iris").unwrap();
        ExperimentConfig {
            name: "iris".into(),
            model: Model::new(p.spec(), p.loss()).unwrap(),
            data: iris(),
            train_fraction: 0.8,
            batch_size: 16,
            contenders,
            epochs: 2,
            runs,
            base_seed: 7,
            workers: 2,
        }
    }

    fn three_contenders() -> Vec<Contender> {
        let s = HeuristicSettings::default();
        let bhh = |pool| {
            let config = BhhConfig {
                heuristic_pool: pool,
                ..Default::default()
            };
            Bhh::new(config, s).unwrap()
        };
        vec![
            Contender::standalone(s.get(HeuristicKind::Adam)),
            Contender::bhh("bhh_all", bhh(HeuristicPool::ALL)),
            Contender::bhh("bhh_gd", bhh(HeuristicPool::GD)),
        ]
    }

    #[test]
    fn empty_contender_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let results = ExperimentResults {
            name: "x".into(),
            labels: vec![],
            runs: vec![],
        };
        let table = RankTable {
            labels: vec![],
            mean: vec![],
            std: vec![],
            normalised: vec![],
        };
        assert!(emit_reports(dir.path(), &results, &table).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn reports_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let results = run_experiment(&experiment(three_contenders(), 1)).unwrap();
        let table = average_rank(&results.labels, &results.series()).unwrap();
        emit_reports(dir.path(), &results, &table).unwrap();
        let root = dir.path().join("iris");

        let ranks = read_rank_table(&root.join("rank_table.csv")).unwrap();
        for (i, r) in ranks.iter().enumerate() {
            assert_eq!(r.contender, table.labels[i]);
            assert_eq!(r.mean_rank, table.mean[i]);
            assert_eq!(r.std_rank, table.std[i]);
            assert_eq!(r.normalised_rank, table.normalised[i]);
        }
        for (label, runs) in results.labels.iter().zip(&results.runs) {
            let run = &runs[0];
            let rows = read_entity_trace(&root.join(label).join("run_0.csv")).unwrap();
            assert_eq!(rows, entity_rows(0, &run.trace).collect::<Vec<_>>());
            let curve = read_loss_curve(&root.join(label).join("loss_curve.csv")).unwrap();
            assert_eq!(curve, loss_curve_rows(runs));
            let bhh = label.starts_with("bhh");
            let conc = root.join(label).join("concentrations_0.csv");
            assert_eq!(conc.exists(), bhh);
            if bhh {
                assert_eq!(
                    read_concentrations(&conc).unwrap(),
                    concentration_rows(&run.trace)
                );
            }
        }
    }

    #[test]
    fn selection_counts_conserve_entities() {
        let dir = tempfile::tempdir().unwrap();
        let results = run_experiment(&experiment(three_contenders(), 2)).unwrap();
        let table = average_rank(&results.labels, &results.series()).unwrap();
        emit_reports(dir.path(), &results, &table).unwrap();
        let rows = read_selection_freq(&dir.path().join("iris/selection_freq.csv")).unwrap();
        let mut totals: BTreeMap<(String, usize, usize), usize> = BTreeMap::new();
        for r in rows {
            *totals.entry((r.contender, r.run, r.step)).or_default() += r.count;
        }
        // Two hyper-heuristic contenders, two runs, 16 steps each.
        assert_eq!(totals.len(), 2 * 2 * 16);
        assert!(totals.values().all(|&n| n == 5));
    }

    #[test]
    fn selection_file_has_header_without_bhh() {
        let dir = tempfile::tempdir().unwrap();
        let s = HeuristicSettings::default();
        let results = run_experiment(&experiment(
            vec![Contender::standalone(s.get(HeuristicKind::Sgd))],
            1,
        ))
        .unwrap();
        let table = average_rank(&results.labels, &results.series()).unwrap();
        emit_reports(dir.path(), &results, &table).unwrap();
        let rows = read_selection_freq(&dir.path().join("iris/selection_freq.csv")).unwrap();
        assert!(rows.is_empty());
    }
}
