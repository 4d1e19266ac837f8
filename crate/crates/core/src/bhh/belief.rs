//! Conjugate belief over heuristic quality.
//!
//! The selection model is a naive Bayes factorisation: a prior over
//! heuristics `theta ~ Dir(alpha)`, per-entity heuristic affinities
//! `phi_j ~ Dir(beta_j)`, and per-heuristic success probabilities
//! `psi_k ~ Beta(gamma1_k, gamma0_k)`. Observed counts from the performance
//! log are added straight onto the concentrations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::LogEntry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationState {
    /// Per heuristic.
    pub alpha: Vec<f64>,
    /// Per entity, then per heuristic.
    pub beta: Vec<Vec<f64>>,
    pub gamma1: Vec<f64>,
    pub gamma0: Vec<f64>,
}

/// Uninformative priors: every concentration is one.
pub fn init_priors(heuristics: usize, entities: usize) -> ConcentrationState {
    ConcentrationState {
        alpha: vec![1.0; heuristics],
        beta: vec![vec![1.0; heuristics]; entities],
        gamma1: vec![1.0; heuristics],
        gamma0: vec![1.0; heuristics],
    }
}

impl ConcentrationState {
    pub fn heuristics(&self) -> usize {
        self.alpha.len()
    }

    pub fn entities(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.heuristics();
        let shapes_ok = k > 0
            && self.gamma1.len() == k
            && self.gamma0.len() == k
            && !self.beta.is_empty()
            && self.beta.iter().all(|r| r.len() == k);
        if !shapes_ok {
            return Err(Error::InvalidConfig(
                "inconsistent concentration shapes".into(),
            ));
        }
        let all = self
            .alpha
            .iter()
            .chain(self.beta.iter().flatten())
            .chain(&self.gamma1)
            .chain(&self.gamma0);
        for &v in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "concentrations must be finite and > 0, found {v}"
                )));
            }
        }
        Ok(())
    }

    /// Expected value of `theta`.
    pub fn theta_mean(&self) -> Vec<f64> {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / total).collect()
    }
}

/// Sufficient statistics of a credited window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    /// Applications of each heuristic.
    pub n_k: Vec<u64>,
    /// Applications of each heuristic by each entity.
    pub n_jk: Vec<Vec<u64>>,
    /// Credit collected by each heuristic.
    pub n1_k: Vec<f64>,
    /// Applications minus credit.
    pub n0_k: Vec<f64>,
}

impl CountSummary {
    pub fn zeros(heuristics: usize, entities: usize) -> Self {
        Self {
            n_k: vec![0; heuristics],
            n_jk: vec![vec![0; heuristics]; entities],
            n1_k: vec![0.0; heuristics],
            n0_k: vec![0.0; heuristics],
        }
    }
}

pub fn summarize_counts<'a>(
    entries: impl IntoIterator<Item = &'a LogEntry>,
    heuristics: usize,
    entities: usize,
) -> CountSummary {
    let mut c = CountSummary::zeros(heuristics, entities);
    for e in entries {
        c.n_k[e.heuristic] += 1;
        c.n_jk[e.entity][e.heuristic] += 1;
        c.n1_k[e.heuristic] += e.credit;
    }
    for k in 0..heuristics {
        c.n0_k[k] = c.n_k[k] as f64 - c.n1_k[k];
    }
    c
}

/// Adds the counts onto the concentrations.
pub fn bayesian_update(state: &mut ConcentrationState, counts: &CountSummary) {
    for k in 0..state.heuristics() {
        state.alpha[k] += counts.n_k[k] as f64;
        state.gamma1[k] += counts.n1_k[k];
        state.gamma0[k] += counts.n0_k[k];
    }
    for (row, n) in state.beta.iter_mut().zip(&counts.n_jk) {
        for (b, c) in row.iter_mut().zip(n) {
            *b += *c as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledParameters {
    pub theta: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
}

fn dirichlet(concentration: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draws: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive concentration")
                .sample(rng)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // Every gamma draw underflowed; fall back to the mean.
        let s: f64 = concentration.iter().sum();
        draws = concentration.iter().map(|a| a / s).collect();
    }
    draws
}

/// Draws `theta`, one `phi` row per entity, and `psi`.
pub fn sample_parameters(state: &ConcentrationState, rng: &mut ChaCha8Rng) -> SampledParameters {
    let theta = dirichlet(&state.alpha, rng);
    let phi = state.beta.iter().map(|row| dirichlet(row, rng)).collect();
    let psi = state
        .gamma1
        .iter()
        .zip(&state.gamma0)
        .map(|(&a, &b)| Beta::new(a, b).expect("positive concentration").sample(rng))
        .collect();
    SampledParameters { theta, phi, psi }
}

/// Selection probabilities for entity `j`, proportional to
/// `theta_k * phi_jk * psi_k`. The product is formed as a sum of logs and
/// normalised after subtracting the maximum, so tiny factors do not
/// underflow.
pub fn selection_scores(params: &SampledParameters, j: usize) -> Result<Vec<f64>> {
    let logs: Vec<f64> = (0..params.theta.len())
        .map(|k| params.theta[k].ln() + params.phi[j][k].ln() + params.psi[k].ln())
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateScores);
    }
    let mut scores: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = scores.iter().sum();
    scores.iter_mut().for_each(|s| *s /= total);
    Ok(scores)
}

/// `ln(exp(phi) + exp(psi) + exp(theta))` for one heuristic, evaluated
/// stably. This is the log-sum-exp of the three raw factors, which is not a
/// normalised product and is therefore not used by [`selection_scores`].
pub fn log_sum_exp_of_factors(theta: f64, phi: f64, psi: f64) -> f64 {
    let m = theta.max(phi).max(psi);
    m + ((phi - m).exp() + (psi - m).exp() + (theta - m).exp()).ln()
}

/// Index drawn from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left `u` past the last boundary.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One heuristic per entity, sampled from that entity's score vector.
pub fn select_heuristics(scores: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    scores.iter().map(|s| sample_categorical(s, rng)).collect()
}

/// Samples fresh parameters and selects a heuristic for every entity.
pub fn reselect(state: &ConcentrationState, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let params = sample_parameters(state, rng);
    let scores = (0..state.entities())
        .map(|j| selection_scores(&params, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_heuristics(&scores, rng))
}
