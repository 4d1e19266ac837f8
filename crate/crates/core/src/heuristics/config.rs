use serde::{Deserialize, Deserializer, Serialize};

use super::{decay_schedule, HeuristicKind};
use crate::error::{Error, Result};

/// A hyper-parameter with an inverse-time decay schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decayed {
    pub initial: f64,
    pub decay: f64,
}

impl Decayed {
    pub const fn new(initial: f64, decay: f64) -> Self {
        Self { initial, decay }
    }

    pub const fn constant(value: f64) -> Self {
        Self {
            initial: value,
            decay: 0.0,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        decay_schedule(self.initial, self.decay, step)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.initial.is_finite() || !self.decay.is_finite() || self.decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{name}: decay rate must be finite and >= 0"
            )));
        }
        Ok(())
    }
}

// Accepts either `{ initial = .., decay = .. }` or a bare number (no decay).
impl<'de> Deserialize<'de> for Decayed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Full {
            initial: f64,
            #[serde(default)]
            decay: f64,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Bare(f64),
            Full(Full),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Bare(v) => Decayed::constant(v),
            Repr::Full(f) => Decayed::new(f.initial, f.decay),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdParams {
    pub learning_rate: Decayed,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            learning_rate: Decayed::new(0.1, 0.01),
        }
    }
}

/// Shared by classical momentum and Nesterov accelerated gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentumParams {
    pub learning_rate: Decayed,
    pub momentum: f64,
}

impl Default for MomentumParams {
    fn default() -> Self {
        Self {
            learning_rate: Decayed::new(0.1, 0.01),
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdagradParams {
    pub learning_rate: Decayed,
    pub epsilon: f64,
}

impl Default for AdagradParams {
    fn default() -> Self {
        Self {
            learning_rate: Decayed::new(0.1, 0.01),
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmspropParams {
    pub learning_rate: Decayed,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropParams {
    fn default() -> Self {
        Self {
            learning_rate: Decayed::new(0.1, 0.01),
            rho: 0.95,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdadeltaParams {
    pub learning_rate: Decayed,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdadeltaParams {
    fn default() -> Self {
        Self {
            learning_rate: Decayed::new(1.0, 0.95),
            rho: 0.95,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub learning_rate: Decayed,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: Decayed::new(0.1, 0.01),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoParams {
    /// Population used when PSO runs standalone.
    pub population_size: usize,
    pub learning_rate: Decayed,
    pub inertia_weight: f64,
    pub cognitive_control: f64,
    pub social_control: f64,
    pub velocity_clip_min: f64,
    pub velocity_clip_max: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            population_size: 10,
            learning_rate: Decayed::new(1.0, 0.9),
            inertia_weight: 0.729844,
            cognitive_control: 1.49618,
            social_control: 1.49618,
            velocity_clip_min: -1.0,
            velocity_clip_max: 1.0,
        }
    }
}

/// Base vector of the DE mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeBase {
    /// Global best position.
    Best,
    /// A random third entity.
    Rand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeCrossover {
    /// Exponential: copy a contiguous (cyclic) run of genes from the mutant.
    Exp,
    /// Binomial: copy each gene independently, plus one forced gene.
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeParams {
    pub population_size: usize,
    pub selection: DeBase,
    pub crossover: DeCrossover,
    pub recombination_probability: Decayed,
    pub beta: Decayed,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            population_size: 10,
            selection: DeBase::Best,
            crossover: DeCrossover::Exp,
            recombination_probability: Decayed::new(0.9, 0.1),
            beta: Decayed::new(2.0, 0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaSelection {
    /// Uniformly random partner.
    Rand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaCrossover {
    /// Each gene taken from either parent with probability one half.
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub selection: GaSelection,
    pub crossover: GaCrossover,
    pub mutation_rate: Decayed,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 10,
            selection: GaSelection::Rand,
            crossover: GaCrossover::Bin,
            mutation_rate: Decayed::new(0.2, 0.05),
        }
    }
}

/// One low-level heuristic together with its hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeuristicConfig {
    Sgd(SgdParams),
    Momentum(MomentumParams),
    Nag(MomentumParams),
    Adagrad(AdagradParams),
    Rmsprop(RmspropParams),
    Adadelta(AdadeltaParams),
    Adam(AdamParams),
    Pso(PsoParams),
    De(DeParams),
    Ga(GaParams),
}

impl HeuristicConfig {
    pub fn kind(&self) -> HeuristicKind {
        match self {
            HeuristicConfig::Sgd(_) => HeuristicKind::Sgd,
            HeuristicConfig::Momentum(_) => HeuristicKind::Momentum,
            HeuristicConfig::Nag(_) => HeuristicKind::Nag,
            HeuristicConfig::Adagrad(_) => HeuristicKind::Adagrad,
            HeuristicConfig::Rmsprop(_) => HeuristicKind::Rmsprop,
            HeuristicConfig::Adadelta(_) => HeuristicKind::Adadelta,
            HeuristicConfig::Adam(_) => HeuristicKind::Adam,
            HeuristicConfig::Pso(_) => HeuristicKind::Pso,
            HeuristicConfig::De(_) => HeuristicKind::De,
            HeuristicConfig::Ga(_) => HeuristicKind::Ga,
        }
    }

    pub fn defaults(kind: HeuristicKind) -> Self {
        HeuristicSettings::default().get(kind)
    }

    pub fn is_gradient_based(&self) -> bool {
        self.kind().is_gradient_based()
    }

    /// Population size used when this heuristic runs on its own.
    pub fn standalone_population(&self) -> usize {
        match self {
            HeuristicConfig::Pso(p) => p.population_size,
            HeuristicConfig::De(p) => p.population_size,
            HeuristicConfig::Ga(p) => p.population_size,
            _ => 1,
        }
    }

    pub fn min_population(&self) -> usize {
        match self {
            HeuristicConfig::De(p) => match p.selection {
                DeBase::Best => 3,
                DeBase::Rand => 4,
            },
            HeuristicConfig::Ga(_) => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.kind().name();
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name}.{what} must lie in [0, 1]"
                )))
            }
        };
        match self {
            HeuristicConfig::Sgd(p) => p.learning_rate.validate(name),
            HeuristicConfig::Momentum(p) | HeuristicConfig::Nag(p) => {
                p.learning_rate.validate(name)?;
                unit(p.momentum, "momentum")
            }
            HeuristicConfig::Adagrad(p) => p.learning_rate.validate(name),
            HeuristicConfig::Rmsprop(p) => {
                p.learning_rate.validate(name)?;
                unit(p.rho, "rho")
            }
            HeuristicConfig::Adadelta(p) => {
                p.learning_rate.validate(name)?;
                unit(p.rho, "rho")
            }
            HeuristicConfig::Adam(p) => {
                p.learning_rate.validate(name)?;
                unit(p.beta1, "beta1")?;
                unit(p.beta2, "beta2")
            }
            HeuristicConfig::Pso(p) => {
                p.learning_rate.validate(name)?;
                if p.velocity_clip_min > p.velocity_clip_max {
                    return Err(Error::InvalidConfig(
                        "pso velocity clip min exceeds max".into(),
                    ));
                }
                Ok(())
            }
            HeuristicConfig::De(p) => {
                p.recombination_probability.validate(name)?;
                p.beta.validate(name)
            }
            HeuristicConfig::Ga(p) => p.mutation_rate.validate(name),
        }
    }
}

/// Hyper-parameters for all ten heuristics. Also supplies the provider
/// configurations used for proxied state updates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicSettings {
    pub sgd: SgdParams,
    pub momentum: MomentumParams,
    pub nag: MomentumParams,
    pub adagrad: AdagradParams,
    pub rmsprop: RmspropParams,
    pub adadelta: AdadeltaParams,
    pub adam: AdamParams,
    pub pso: PsoParams,
    pub de: DeParams,
    pub ga: GaParams,
}

impl HeuristicSettings {
    pub fn get(&self, kind: HeuristicKind) -> HeuristicConfig {
        match kind {
            HeuristicKind::Sgd => HeuristicConfig::Sgd(self.sgd),
            HeuristicKind::Momentum => HeuristicConfig::Momentum(self.momentum),
            HeuristicKind::Nag => HeuristicConfig::Nag(self.nag),
            HeuristicKind::Adagrad => HeuristicConfig::Adagrad(self.adagrad),
            HeuristicKind::Rmsprop => HeuristicConfig::Rmsprop(self.rmsprop),
            HeuristicKind::Adadelta => HeuristicConfig::Adadelta(self.adadelta),
            HeuristicKind::Adam => HeuristicConfig::Adam(self.adam),
            HeuristicKind::Pso => HeuristicConfig::Pso(self.pso),
            HeuristicKind::De => HeuristicConfig::De(self.de),
            HeuristicKind::Ga => HeuristicConfig::Ga(self.ga),
        }
    }

    pub fn validate(&self) -> Result<()> {
        HeuristicKind::ALL
            .iter()
            .try_for_each(|&k| self.get(k).validate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_benchmark_table() {
        let s = HeuristicSettings::default();
        for lr in [
            s.sgd.learning_rate,
            s.momentum.learning_rate,
            s.nag.learning_rate,
            s.adagrad.learning_rate,
            s.rmsprop.learning_rate,
            s.adam.learning_rate,
        ] {
            assert_eq!(lr, Decayed::new(0.1, 0.01));
        }
        assert_eq!(s.momentum.momentum, 0.9);
        assert_eq!(s.nag.momentum, 0.9);
        assert_eq!(s.adagrad.epsilon, 1e-7);
        assert_eq!((s.rmsprop.rho, s.rmsprop.epsilon), (0.95, 1e-7));
        assert_eq!(s.adadelta.learning_rate, Decayed::new(1.0, 0.95));
        assert_eq!((s.adadelta.rho, s.adadelta.epsilon), (0.95, 1e-7));
        assert_eq!(
            (s.adam.beta1, s.adam.beta2, s.adam.epsilon),
            (0.9, 0.999, 1e-7)
        );

        assert_eq!(s.pso.population_size, 10);
        assert_eq!(s.pso.learning_rate, Decayed::new(1.0, 0.9));
        assert_eq!(s.pso.inertia_weight, 0.729844);
        assert_eq!(
            (s.pso.cognitive_control, s.pso.social_control),
            (1.49618, 1.49618)
        );
        assert_eq!(
            (s.pso.velocity_clip_min, s.pso.velocity_clip_max),
            (-1.0, 1.0)
        );

        assert_eq!(s.de.population_size, 10);
        assert_eq!(
            (s.de.selection, s.de.crossover),
            (DeBase::Best, DeCrossover::Exp)
        );
        assert_eq!(s.de.recombination_probability, Decayed::new(0.9, 0.1));
        assert_eq!(s.de.beta, Decayed::new(2.0, 0.1));

        assert_eq!(s.ga.population_size, 10);
        assert_eq!(
            (s.ga.selection, s.ga.crossover),
            (GaSelection::Rand, GaCrossover::Bin)
        );
        assert_eq!(s.ga.mutation_rate, Decayed::new(0.2, 0.05));

        s.validate().unwrap();
    }

    #[test]
    fn negative_decay_rejected() {
        let cfg = HeuristicConfig::Sgd(SgdParams {
            learning_rate: Decayed::new(0.1, -1.0),
        });
        assert!(cfg.validate().is_err());
    }
}
