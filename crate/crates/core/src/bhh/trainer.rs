use serde::{Deserialize, Serialize};

use super::{
    assign_credit, bayesian_update, reselect, summarize_counts, Bhh, ConcentrationState, LogEntry,
    PerformanceLog,
};
use crate::data::{batch_count, batches, Dataset};
use crate::error::{DivergenceSite, Error, Result};
use crate::ffnn::{glorot_init, Batch, Model};
use crate::heuristics::{
    apply_heuristic, apply_with_proxies, BatchObjective, EntityRngs, EntityState, HeuristicConfig,
    HeuristicKind, Objective, PopulationState,
};
use crate::rng::{self, derive_seed, Purpose};

/// What to train and on which data.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub model: Model,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainSetup<'_> {
    pub fn steps_per_epoch(&self) -> usize {
        batch_count(self.train.len(), self.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// One heuristic on its own; population methods use their own
    /// population size.
    Standalone(&'a HeuristicConfig),
    Bhh(&'a Bhh),
}

/// Per-step summary of the reported solution. Standalone population methods
/// report their global best; the hyper-heuristic reports the entity with the
/// lowest loss on the current batch, since a global best fixed by one easy
/// batch can go stale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub accuracy: Option<f64>,
}

/// One entity's outcome at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub step: usize,
    pub epoch: usize,
    pub entity: usize,
    pub heuristic: HeuristicKind,
    /// Batch loss after the update.
    pub train_loss: f64,
    pub test_loss: f64,
    pub accuracy: Option<f64>,
    pub credit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSize {
    pub step: usize,
    pub len: usize,
    pub oldest_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub pool: Vec<HeuristicKind>,
    pub steps_per_epoch: usize,
    pub steps: Vec<StepRecord>,
    pub entities: Vec<EntityRecord>,
    /// Pool index selected for each entity, per step.
    pub selections: Vec<Vec<usize>>,
    /// Belief after each analysis, keyed by step.
    pub concentrations: Vec<(usize, ConcentrationState)>,
    pub final_concentrations: Option<ConcentrationState>,
    /// Log size after pruning, per step.
    pub log_sizes: Vec<LogSize>,
    /// Set when training stopped early because of a divergence.
    pub divergence: Option<DivergenceSite>,
}

impl TrainingTrace {
    pub fn final_step(&self) -> Option<&StepRecord> {
        self.steps.last()
    }
}

/// Trains with the hyper-heuristic; a divergence is returned as an error.
pub fn bhh_train(setup: &TrainSetup, bhh: &Bhh) -> Result<TrainingTrace> {
    finished(train_recording(setup, Mode::Bhh(bhh))?)
}

/// Trains a single heuristic; a divergence is returned as an error.
pub fn train_standalone(setup: &TrainSetup, config: &HeuristicConfig) -> Result<TrainingTrace> {
    finished(train_recording(setup, Mode::Standalone(config))?)
}

fn finished(trace: TrainingTrace) -> Result<TrainingTrace> {
    match trace.divergence {
        Some(site) => Err(Error::Divergence(site)),
        None => Ok(trace),
    }
}

fn evaluate(model: &Model, params: &[f64], data: &Batch) -> Option<(f64, Option<f64>)> {
    let e = model.evaluate(params, data).ok()?;
    e.loss.is_finite().then_some((e.loss, e.accuracy))
}

/// Entity with the lowest loss on the current batch; ties go to the lowest
/// index.
fn iteration_best(entities: &[EntityState]) -> &EntityState {
    entities
        .iter()
        .reduce(|best, e| if e.loss < best.loss { e } else { best })
        .expect("population is never empty")
}

/// Trains and keeps everything recorded up to a divergence, which is noted in
/// the trace instead of being returned. Configuration errors are still
/// returned.
pub fn train_recording(setup: &TrainSetup, mode: Mode) -> Result<TrainingTrace> {
    let model = &setup.model;
    if setup.batch_size == 0 || setup.epochs == 0 {
        return Err(Error::InvalidConfig(
            "batch size and epochs must be >= 1".into(),
        ));
    }
    if setup.train.input_dim() != model.spec.input_dim
        || setup.test.input_dim() != model.spec.input_dim
    {
        return Err(Error::Shape {
            what: "dataset width",
            expected: model.spec.input_dim,
            found: setup.train.input_dim(),
        });
    }
    let (pool, population) = match mode {
        Mode::Standalone(c) => {
            c.validate()?;
            (vec![*c], c.standalone_population())
        }
        Mode::Bhh(b) => (b.pool.clone(), b.config.population_size),
    };
    for c in &pool {
        if population < c.min_population() {
            return Err(Error::PopulationTooSmall {
                heuristic: c.kind(),
                required: c.min_population(),
                found: population,
            });
        }
    }
    let test = setup.test.to_batch()?;
    let seed = setup.seed;

    let mut trace = TrainingTrace {
        pool: pool.iter().map(HeuristicConfig::kind).collect(),
        steps_per_epoch: setup.steps_per_epoch(),
        steps: Vec::new(),
        entities: Vec::new(),
        selections: Vec::new(),
        concentrations: Vec::new(),
        final_concentrations: None,
        log_sizes: Vec::new(),
        divergence: None,
    };

    let mut fresh: Vec<EntityState> = (0..population)
        .map(|j| {
            EntityState::new(
                j,
                glorot_init(&model.spec, derive_seed(seed, Purpose::Init, j as u64)),
            )
        })
        .collect();
    let mut rngs: Vec<EntityRngs> = (0..population).map(|j| EntityRngs::new(seed, j)).collect();
    let mut selection_rng = rng::stream(seed, Purpose::Selection, 0);
    let mut belief = match mode {
        Mode::Bhh(b) => Some(b.priors.clone()),
        Mode::Standalone(_) => None,
    };
    let mut selection = match &belief {
        Some(b) => reselect(b, &mut selection_rng)?,
        None => vec![0; population],
    };
    let mut log = PerformanceLog::new();
    let mut pop: Option<PopulationState> = None;
    let mut step = 0;

    let diverged = |trace: &mut TrainingTrace, heuristic, step, entity| {
        trace.divergence = Some(DivergenceSite {
            heuristic,
            step: Some(step),
            entity,
        });
    };

    'epochs: for epoch in 0..setup.epochs {
        let epoch_batches = batches(
            setup.train,
            setup.batch_size,
            derive_seed(seed, Purpose::Shuffle, epoch as u64),
        )?;
        for batch in &epoch_batches {
            let objective = BatchObjective::new(model, batch);
            let snapshot = match pop.take() {
                Some(p) => p,
                None => {
                    // Initial losses come from the first batch so personal
                    // and global bests start at the initial positions.
                    for e in fresh.iter_mut() {
                        match objective.loss(&e.position) {
                            Ok(l) => {
                                e.record_loss(l);
                            }
                            Err(_) => {
                                diverged(&mut trace, None, step, Some(e.entity_id));
                                break 'epochs;
                            }
                        }
                    }
                    PopulationState::new(std::mem::take(&mut fresh))
                }
            };

            let mut next = Vec::with_capacity(population);
            let mut improved = Vec::with_capacity(population);
            for j in 0..population {
                let mut e = snapshot.entities[j].clone();
                let config = &pool[selection[j]];
                let outcome = match mode {
                    Mode::Standalone(_) => apply_heuristic(
                        &mut e,
                        &snapshot,
                        config,
                        &objective,
                        step,
                        &mut rngs[j].heuristic,
                    ),
                    Mode::Bhh(b) => apply_with_proxies(
                        &mut e,
                        &snapshot,
                        config,
                        &b.settings,
                        &objective,
                        &b.proxies,
                        step,
                        &mut rngs[j],
                    ),
                };
                match outcome {
                    Ok(i) => improved.push(i),
                    Err(err) if err.is_divergence() => {
                        diverged(&mut trace, Some(config.kind()), step, Some(j));
                        break 'epochs;
                    }
                    Err(err) => return Err(err),
                }
                next.push(e);
            }
            let old_gbest = snapshot.gbest_loss;
            let mut current = snapshot;
            current.commit(next);

            let first_record = trace.entities.len();
            for (j, e) in current.entities.iter().enumerate() {
                let Some((test_loss, accuracy)) = evaluate(model, &e.position, &test) else {
                    diverged(&mut trace, Some(pool[selection[j]].kind()), step, Some(j));
                    break 'epochs;
                };
                trace.entities.push(EntityRecord {
                    step,
                    epoch,
                    entity: j,
                    heuristic: pool[selection[j]].kind(),
                    train_loss: e.loss,
                    test_loss,
                    accuracy,
                    credit: 0.0,
                });
            }

            let (reported, train_loss) = match mode {
                Mode::Standalone(_) if population > 1 => {
                    (&current.gbest_position, current.gbest_loss)
                }
                _ => {
                    let e = iteration_best(&current.entities);
                    (&e.position, e.loss)
                }
            };
            let Some((test_loss, accuracy)) = evaluate(model, reported, &test) else {
                diverged(&mut trace, None, step, None);
                break 'epochs;
            };
            trace.steps.push(StepRecord {
                step,
                epoch,
                train_loss,
                test_loss,
                accuracy,
            });
            trace.selections.push(selection.clone());

            if let (Mode::Bhh(b), Some(state)) = (mode, belief.as_mut()) {
                let cfg = &b.config;
                for (j, e) in current.entities.iter().enumerate() {
                    log.push(LogEntry {
                        pbest_improved: improved[j],
                        gbest_improved: improved[j] && e.pbest_loss < old_gbest,
                        ..LogEntry::new(step, j, selection[j], e.loss)
                    });
                }
                log.prune(step, cfg.replay_window);
                assign_credit(log.entries_mut(), cfg.credit_strategy());
                for entry in log.entries().iter().filter(|e| e.step == step) {
                    trace.entities[first_record + entry.entity].credit = entry.credit;
                }
                trace.log_sizes.push(LogSize {
                    step,
                    len: log.len(),
                    oldest_step: log.oldest_step(),
                });

                if step < cfg.burn_in {
                    selection = reselect(state, &mut selection_rng)?;
                } else {
                    if step % cfg.reanalysis_interval == 0 {
                        let counts = summarize_counts(
                            log.entries().iter().filter(|e| !e.consumed),
                            b.pool.len(),
                            population,
                        );
                        bayesian_update(state, &counts);
                        log.entries_mut().iter_mut().for_each(|e| e.consumed = true);
                        trace.concentrations.push((step, state.clone()));
                    }
                    if step % cfg.reselection_interval == 0 {
                        selection = reselect(state, &mut selection_rng)?;
                    }
                }
            }

            pop = Some(current);
            step += 1;
        }
    }
    trace.final_concentrations = belief;
    Ok(trace)
}
