use serde::{Deserialize, Serialize};

use super::StateParam;
use crate::ffnn::ParameterVector;

/// One candidate solution together with every piece of heuristic state any
/// heuristic in the pool may read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityState {
    pub entity_id: usize,
    pub position: ParameterVector,
    pub velocity: Vec<f64>,
    pub gradient: Vec<f64>,
    pub position_delta: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// Running average of squared updates (Adadelta).
    pub accumulated_delta: Vec<f64>,
    pub step_counter: usize,
    /// Loss at `position` on the most recent batch.
    pub loss: f64,
    pub pbest_position: ParameterVector,
    pub pbest_loss: f64,
    refreshed: [Option<usize>; StateParam::COUNT],
}

impl EntityState {
    pub fn new(entity_id: usize, position: ParameterVector) -> Self {
        let n = position.len();
        Self {
            entity_id,
            pbest_position: position.clone(),
            position,
            velocity: vec![0.0; n],
            gradient: vec![0.0; n],
            position_delta: vec![0.0; n],
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            accumulated_delta: vec![0.0; n],
            step_counter: 0,
            loss: f64::INFINITY,
            pbest_loss: f64::INFINITY,
            refreshed: [None; StateParam::COUNT],
        }
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// Step at which `param` was last written, if ever.
    pub fn refreshed_at(&self, param: StateParam) -> Option<usize> {
        self.refreshed[param as usize]
    }

    pub(crate) fn mark(&mut self, param: StateParam, step: usize) {
        self.refreshed[param as usize] = Some(step);
    }

    /// Records the loss at the current position and updates the personal
    /// best. Returns whether the personal best strictly improved.
    pub fn record_loss(&mut self, loss: f64) -> bool {
        self.loss = loss;
        if loss < self.pbest_loss {
            self.pbest_loss = loss;
            self.pbest_position = self.position.clone();
            true
        } else {
            false
        }
    }

    /// Moves to `new_position`, recording the delta and bumping the step
    /// counter. Every heuristic finishes its update through here.
    pub(crate) fn move_to(&mut self, new_position: &[f64], step: usize) {
        for ((d, old), new) in self
            .position_delta
            .iter_mut()
            .zip(self.position.iter())
            .zip(new_position)
        {
            *d = new - old;
        }
        self.position.copy_from_slice(new_position);
        self.step_counter += 1;
        self.mark(StateParam::PositionDelta, step);
        self.mark(StateParam::StepCounter, step);
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && [
                &self.velocity,
                &self.gradient,
                &self.position_delta,
                &self.first_moment,
                &self.second_moment,
                &self.accumulated_delta,
            ]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// The entity pool plus the global best found so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub entities: Vec<EntityState>,
    pub gbest_position: ParameterVector,
    pub gbest_loss: f64,
}

impl PopulationState {
    /// Panics on an empty entity list.
    pub fn new(entities: Vec<EntityState>) -> Self {
        assert!(!entities.is_empty(), "population needs at least one entity");
        let mut pop = Self {
            gbest_position: entities[0].pbest_position.clone(),
            gbest_loss: f64::INFINITY,
            entities,
        };
        pop.refresh_gbest();
        pop
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Pulls the global best from the entities' personal bests. Returns the
    /// index of the entity that strictly improved it, if any; among equal
    /// personal bests the lowest index wins.
    pub fn refresh_gbest(&mut self) -> Option<usize> {
        let mut winner = None;
        for (i, e) in self.entities.iter().enumerate() {
            if e.pbest_loss < self.gbest_loss {
                self.gbest_loss = e.pbest_loss;
                winner = Some(i);
            }
        }
        if let Some(i) = winner {
            self.gbest_position = self.entities[i].pbest_position.clone();
        }
        winner
    }

    /// Replaces the entities with their updated versions and refreshes the
    /// global best.
    pub fn commit(&mut self, entities: Vec<EntityState>) -> Option<usize> {
        self.entities = entities;
        self.refresh_gbest()
    }
}
