use crate::error::Result;
use crate::ffnn::{Batch, Model};

/// Loss surface seen by a heuristic at one training step.
pub trait Objective {
    fn loss(&self, position: &[f64]) -> Result<f64>;
    fn loss_and_gradient(&self, position: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Mean loss of a model over a single mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchObjective<'a> {
    pub model: &'a Model,
    pub batch: &'a Batch,
}

impl<'a> BatchObjective<'a> {
    pub fn new(model: &'a Model, batch: &'a Batch) -> Self {
        Self { model, batch }
    }
}

impl Objective for BatchObjective<'_> {
    fn loss(&self, position: &[f64]) -> Result<f64> {
        self.model.loss(position, self.batch)
    }

    fn loss_and_gradient(&self, position: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (l, g) = self.model.loss_and_gradient(position, self.batch)?;
        Ok((l, g.into_inner()))
    }
}
