//! Proxied state updates.
//!
//! Every entity carries the full state any heuristic might read. After the
//! selected heuristic performs its own update, each state parameter it does
//! not maintain is refreshed by a provider heuristic's state-only fragment.
//! The position is never moved by a fragment.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::population::pso_velocity;
use super::{
    apply_adadelta, apply_adagrad, apply_adam, apply_de, apply_ga, apply_momentum, apply_nag,
    apply_pso, apply_rmsprop, apply_sgd, EntityState, HeuristicConfig, HeuristicKind,
    HeuristicSettings, Objective, PopulationState,
};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateParam {
    Gradient,
    Loss,
    Velocity,
    PositionDelta,
    FirstMoment,
    SecondMoment,
    AccumulatedDelta,
    StepCounter,
    PersonalBest,
}

impl StateParam {
    pub const COUNT: usize = 9;

    pub const ALL: [StateParam; StateParam::COUNT] = [
        StateParam::Gradient,
        StateParam::Loss,
        StateParam::Velocity,
        StateParam::PositionDelta,
        StateParam::FirstMoment,
        StateParam::SecondMoment,
        StateParam::AccumulatedDelta,
        StateParam::StepCounter,
        StateParam::PersonalBest,
    ];

    /// Parameters the training loop refreshes itself.
    pub fn is_implicit(self) -> bool {
        matches!(
            self,
            StateParam::Gradient | StateParam::Loss | StateParam::PersonalBest
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StateParam::Gradient => "gradient",
            StateParam::Loss => "loss",
            StateParam::Velocity => "velocity",
            StateParam::PositionDelta => "position_delta",
            StateParam::FirstMoment => "first_moment",
            StateParam::SecondMoment => "second_moment",
            StateParam::AccumulatedDelta => "accumulated_delta",
            StateParam::StepCounter => "step_counter",
            StateParam::PersonalBest => "personal_best",
        }
    }
}

impl fmt::Display for StateParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether `kind`'s own update rule writes `param`.
pub fn maintains(kind: HeuristicKind, param: StateParam) -> bool {
    use HeuristicKind as H;
    use StateParam as P;
    match param {
        P::PositionDelta | P::StepCounter => true,
        P::Velocity => matches!(kind, H::Momentum | H::Nag | H::Pso),
        P::FirstMoment => kind == H::Adam,
        P::SecondMoment => matches!(kind, H::Adagrad | H::Rmsprop | H::Adadelta | H::Adam),
        P::AccumulatedDelta => kind == H::Adadelta,
        P::Gradient | P::Loss | P::PersonalBest => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// The heuristic's own update writes the parameter.
    Primary,
    /// Another heuristic's state fragment writes it.
    Proxy(HeuristicKind),
    /// The training loop writes it.
    Implicit,
}

/// Resolution of every (heuristic, state parameter) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyMap {
    table: [[Option<Resolution>; StateParam::COUNT]; 10],
}

impl Default for ProxyMap {
    /// Each parameter is outsourced to its natural owner: velocity to PSO,
    /// both moments to Adam, the squared-update accumulator to Adadelta.
    fn default() -> Self {
        let mut map = Self::empty();
        for kind in HeuristicKind::ALL {
            for param in StateParam::ALL {
                let res = if param.is_implicit() {
                    Resolution::Implicit
                } else if maintains(kind, param) {
                    Resolution::Primary
                } else {
                    Resolution::Proxy(match param {
                        StateParam::Velocity => HeuristicKind::Pso,
                        StateParam::FirstMoment | StateParam::SecondMoment => HeuristicKind::Adam,
                        StateParam::AccumulatedDelta => HeuristicKind::Adadelta,
                        _ => unreachable!("every heuristic maintains {param}"),
                    })
                };
                map.set(kind, param, res);
            }
        }
        map
    }
}

impl ProxyMap {
    /// A map with nothing resolved.
    pub fn empty() -> Self {
        Self {
            table: [[None; StateParam::COUNT]; 10],
        }
    }

    pub fn set(&mut self, kind: HeuristicKind, param: StateParam, res: Resolution) {
        self.table[kind as usize][param as usize] = Some(res);
    }

    pub fn resolve(&self, kind: HeuristicKind, param: StateParam) -> Result<Resolution> {
        self.table[kind as usize][param as usize].ok_or(Error::UnresolvedProxy {
            heuristic: kind,
            param,
        })
    }

    /// Checks that every entry is resolved and consistent: primaries are
    /// maintained by the heuristic, providers maintain what they provide,
    /// and implicit entries are loop-owned. Since a provider always owns the
    /// parameter itself, provider chains cannot form.
    pub fn validate(&self) -> Result<()> {
        for kind in HeuristicKind::ALL {
            for param in StateParam::ALL {
                let ok = match self.resolve(kind, param)? {
                    Resolution::Primary => maintains(kind, param),
                    Resolution::Proxy(p) => {
                        p != kind && maintains(p, param) && !maintains(kind, param)
                    }
                    Resolution::Implicit => param.is_implicit(),
                };
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "inconsistent proxy entry for {kind}/{param}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-entity random streams: one for the selected heuristic, one for proxy
/// fragments, so proxies never perturb the primary trajectory.
#[derive(Debug, Clone)]
pub struct EntityRngs {
    pub heuristic: ChaCha8Rng,
    pub proxy: ChaCha8Rng,
}

impl EntityRngs {
    pub fn new(seed: u64, entity: usize) -> Self {
        Self {
            heuristic: rng::stream(seed, Purpose::Heuristic, entity as u64),
            proxy: rng::stream(seed, Purpose::Proxy, entity as u64),
        }
    }
}

/// Evaluates loss and gradient at the current position.
fn refresh(
    entity: &mut EntityState,
    objective: &(impl Objective + ?Sized),
    step: usize,
) -> Result<()> {
    let (loss, grad) = objective.loss_and_gradient(&entity.position)?;
    entity.loss = loss;
    entity.gradient = grad;
    entity.mark(StateParam::Gradient, step);
    Ok(())
}

/// Runs the heuristic's own update. Returns the loss at the new position
/// when the heuristic already knows it.
fn primary<O: Objective + ?Sized>(
    entity: &mut EntityState,
    population: &PopulationState,
    config: &HeuristicConfig,
    objective: &O,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    let g = std::mem::take(&mut entity.gradient);
    let out = match config {
        HeuristicConfig::Sgd(p) => apply_sgd(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Momentum(p) => apply_momentum(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Nag(p) => apply_nag(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Adagrad(p) => apply_adagrad(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Rmsprop(p) => apply_rmsprop(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Adadelta(p) => apply_adadelta(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Adam(p) => apply_adam(entity, &g, p, step).map(|_| None),
        HeuristicConfig::Pso(p) => apply_pso(entity, population, p, step, rng).map(|_| None),
        HeuristicConfig::De(p) => apply_de(entity, population, p, objective, step, rng).map(Some),
        HeuristicConfig::Ga(p) => apply_ga(entity, population, p, objective, step, rng).map(Some),
    };
    entity.gradient = g;
    out
}

/// Records the loss at the new position and refreshes the personal best.
/// Returns whether the personal best improved.
fn finish<O: Objective + ?Sized>(
    entity: &mut EntityState,
    known: Option<f64>,
    objective: &O,
    step: usize,
) -> Result<bool> {
    let loss = match known {
        Some(l) => l,
        None => objective.loss(&entity.position)?,
    };
    let improved = entity.record_loss(loss);
    entity.mark(StateParam::Loss, step);
    entity.mark(StateParam::PersonalBest, step);
    Ok(improved)
}

/// One step of a heuristic on its own, with no proxied state. This is what
/// standalone training runs. Returns whether the personal best improved.
///
/// `entity.entity_id` must be the entity's index in `population`.
pub fn apply_heuristic<O: Objective + ?Sized>(
    entity: &mut EntityState,
    population: &PopulationState,
    config: &HeuristicConfig,
    objective: &O,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let kind = config.kind();
    refresh(entity, objective, step).map_err(|e| tag(e, kind))?;
    let known =
        primary(entity, population, config, objective, step, rng).map_err(|e| tag(e, kind))?;
    finish(entity, known, objective, step).map_err(|e| tag(e, kind))
}

/// One step of the selected heuristic followed by proxied updates of every
/// state parameter it does not maintain. Provider hyper-parameters come from
/// `settings`. Returns whether the personal best improved.
#[allow(clippy::too_many_arguments)]
pub fn apply_with_proxies<O: Objective + ?Sized>(
    entity: &mut EntityState,
    population: &PopulationState,
    selected: &HeuristicConfig,
    settings: &HeuristicSettings,
    objective: &O,
    proxies: &ProxyMap,
    step: usize,
    rngs: &mut EntityRngs,
) -> Result<bool> {
    let kind = selected.kind();
    for param in StateParam::ALL {
        proxies.resolve(kind, param)?;
    }
    refresh(entity, objective, step).map_err(|e| tag(e, kind))?;
    let known = primary(
        entity,
        population,
        selected,
        objective,
        step,
        &mut rngs.heuristic,
    )
    .map_err(|e| tag(e, kind))?;
    proxy_update(
        entity,
        population,
        kind,
        settings,
        proxies,
        step,
        &mut rngs.proxy,
    )?;
    finish(entity, known, objective, step).map_err(|e| tag(e, kind))
}

fn tag(err: Error, kind: HeuristicKind) -> Error {
    match err {
        Error::Divergence(mut site) => {
            site.heuristic.get_or_insert(kind);
            Error::Divergence(site)
        }
        other => other,
    }
}

/// Refreshes every parameter `selected` outsources, using the gradient and
/// position delta already written this step.
pub fn proxy_update(
    entity: &mut EntityState,
    population: &PopulationState,
    selected: HeuristicKind,
    settings: &HeuristicSettings,
    proxies: &ProxyMap,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for param in StateParam::ALL {
        if let Resolution::Proxy(provider) = proxies.resolve(selected, param)? {
            fragment(entity, population, provider, param, settings, step, rng)?;
            entity.mark(param, step);
        }
    }
    if !entity.is_finite() {
        return Err(Error::divergence(selected));
    }
    Ok(())
}

fn fragment(
    e: &mut EntityState,
    population: &PopulationState,
    provider: HeuristicKind,
    param: StateParam,
    settings: &HeuristicSettings,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let g = &e.gradient;
    let ema = |old: &mut [f64], rho: f64, sq: &dyn Fn(usize) -> f64| {
        for (i, s) in old.iter_mut().enumerate() {
            *s = rho * *s + (1.0 - rho) * sq(i);
        }
    };
    match (param, settings.get(provider)) {
        (StateParam::Velocity, HeuristicConfig::Pso(p)) => {
            e.velocity = pso_velocity(
                &e.velocity,
                &e.position,
                &e.pbest_position,
                &population.gbest_position,
                &p,
                || rng.random::<f64>(),
            );
        }
        (StateParam::Velocity, HeuristicConfig::Momentum(p) | HeuristicConfig::Nag(p)) => {
            let lr = p.learning_rate.at(step);
            for (v, gi) in e.velocity.iter_mut().zip(g) {
                *v = p.momentum * *v - lr * gi;
            }
        }
        (StateParam::FirstMoment, HeuristicConfig::Adam(p)) => {
            for (m, gi) in e.first_moment.iter_mut().zip(g) {
                *m = p.beta1 * *m + (1.0 - p.beta1) * gi;
            }
        }
        (StateParam::SecondMoment, HeuristicConfig::Adam(p)) => {
            ema(&mut e.second_moment, p.beta2, &|i| g[i] * g[i]);
        }
        (StateParam::SecondMoment, HeuristicConfig::Rmsprop(p)) => {
            ema(&mut e.second_moment, p.rho, &|i| g[i] * g[i]);
        }
        (StateParam::SecondMoment, HeuristicConfig::Adadelta(p)) => {
            ema(&mut e.second_moment, p.rho, &|i| g[i] * g[i]);
        }
        (StateParam::SecondMoment, HeuristicConfig::Adagrad(_)) => {
            for (s, gi) in e.second_moment.iter_mut().zip(g) {
                *s += gi * gi;
            }
        }
        (StateParam::AccumulatedDelta, HeuristicConfig::Adadelta(p)) => {
            let d = &e.position_delta;
            ema(&mut e.accumulated_delta, p.rho, &|i| d[i] * d[i]);
        }
        _ => {
            return Err(Error::InvalidConfig(format!(
                "{provider} cannot provide {param}"
            )))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnn::ParameterVector;
    use crate::heuristics::Decayed;
    use approx::assert_relative_eq;

    /// `0.5 * sum (x_i - c_i)^2` with gradient `x - c`.
    struct Quad(Vec<f64>);

    impl Objective for Quad {
        fn loss(&self, x: &[f64]) -> Result<f64> {
            Ok(0.5
                * x.iter()
                    .zip(&self.0)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>())
        }
        fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((
                self.loss(x)?,
                x.iter().zip(&self.0).map(|(a, b)| a - b).collect(),
            ))
        }
    }

    fn pop_of(points: &[Vec<f64>]) -> PopulationState {
        PopulationState::new(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| EntityState::new(i, ParameterVector::new(p.clone())))
                .collect(),
        )
    }

    #[test]
    fn default_map_is_valid_and_complete() {
        let map = ProxyMap::default();
        map.validate().unwrap();
        assert_eq!(
            map.resolve(HeuristicKind::Sgd, StateParam::Velocity)
                .unwrap(),
            Resolution::Proxy(HeuristicKind::Pso)
        );
        assert_eq!(
            map.resolve(HeuristicKind::Pso, StateParam::Velocity)
                .unwrap(),
            Resolution::Primary
        );
        assert_eq!(
            map.resolve(HeuristicKind::Rmsprop, StateParam::FirstMoment)
                .unwrap(),
            Resolution::Proxy(HeuristicKind::Adam)
        );
        assert_eq!(
            map.resolve(HeuristicKind::Ga, StateParam::Gradient)
                .unwrap(),
            Resolution::Implicit
        );
    }

    #[test]
    fn unresolved_and_inconsistent_maps_rejected() {
        let mut map = ProxyMap::default();
        map.table[HeuristicKind::Sgd as usize][StateParam::Velocity as usize] = None;
        assert!(matches!(map.validate(), Err(Error::UnresolvedProxy { .. })));

        let pop = pop_of(&[vec![0.0]]);
        let mut e = pop.entities[0].clone();
        let mut rngs = EntityRngs::new(0, 0);
        let s = HeuristicSettings::default();
        let err = apply_with_proxies(
            &mut e,
            &pop,
            &s.get(HeuristicKind::Sgd),
            &s,
            &Quad(vec![1.0]),
            &map,
            0,
            &mut rngs,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::UnresolvedProxy {
                param: StateParam::Velocity,
                ..
            }
        ));

        let mut bad = ProxyMap::default();
        bad.set(
            HeuristicKind::Sgd,
            StateParam::Velocity,
            Resolution::Proxy(HeuristicKind::Adam),
        );
        assert!(bad.validate().is_err());
    }

    #[test]
    fn every_field_refreshed_each_step() {
        let pop = pop_of(&[
            vec![0.5, -0.5],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            vec![2.0, 1.0],
        ]);
        let s = HeuristicSettings::default();
        let map = ProxyMap::default();
        let obj = Quad(vec![1.0, 1.0]);
        for kind in HeuristicKind::ALL {
            let mut e = pop.entities[0].clone();
            let mut rngs = EntityRngs::new(1, 0);
            for step in 0..2 {
                apply_with_proxies(&mut e, &pop, &s.get(kind), &s, &obj, &map, step, &mut rngs)
                    .unwrap();
                for param in StateParam::ALL {
                    assert_eq!(
                        e.refreshed_at(param),
                        Some(step),
                        "{kind} left {param} stale"
                    );
                }
            }
        }
    }

    #[test]
    fn sgd_with_proxies_updates_all_vectors() {
        let pop = pop_of(&[vec![0.0], vec![2.0]]);
        let mut e = pop.entities[0].clone();
        e.pbest_position = ParameterVector::new(vec![0.4]);
        e.pbest_loss = 0.2;
        let s = HeuristicSettings::default();
        let mut rngs = EntityRngs::new(3, 0);
        apply_with_proxies(
            &mut e,
            &pop,
            &s.get(HeuristicKind::Sgd),
            &s,
            &Quad(vec![1.0]),
            &ProxyMap::default(),
            0,
            &mut rngs,
        )
        .unwrap();
        // gradient -1 at x=0; sgd moves to 0.1.
        assert_relative_eq!(e.position[0], 0.1, epsilon = 1e-15);
        assert_ne!(e.velocity[0], 0.0);
        assert_relative_eq!(e.first_moment[0], -0.1, epsilon = 1e-15);
        assert_relative_eq!(e.second_moment[0], 0.001, epsilon = 1e-15);
        assert_relative_eq!(e.accumulated_delta[0], 0.05 * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn metaheuristic_still_gets_gradient() {
        let pop = pop_of(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let mut e = pop.entities[0].clone();
        let s = HeuristicSettings::default();
        let mut rngs = EntityRngs::new(3, 0);
        apply_with_proxies(
            &mut e,
            &pop,
            &s.get(HeuristicKind::Pso),
            &s,
            &Quad(vec![3.0, -1.0]),
            &ProxyMap::default(),
            0,
            &mut rngs,
        )
        .unwrap();
        assert_eq!(e.gradient, [-3.0, 1.0]);
    }

    #[test]
    fn sgd_then_adam_hand_trace() {
        let pop = pop_of(&[vec![0.0]]);
        let mut e = pop.entities[0].clone();
        let mut s = HeuristicSettings::default();
        s.sgd.learning_rate = Decayed::constant(0.1);
        s.adam.learning_rate = Decayed::constant(0.1);
        let obj = Quad(vec![1.0]);
        let map = ProxyMap::default();
        let mut rngs = EntityRngs::new(0, 0);

        apply_with_proxies(
            &mut e,
            &pop,
            &s.get(HeuristicKind::Sgd),
            &s,
            &obj,
            &map,
            0,
            &mut rngs,
        )
        .unwrap();
        // step 1: g1 = -1, x1 = 0.1, moments accumulated by proxy.
        let g1 = -1.0;
        let (m1, v1) = (0.1 * g1, 0.001 * g1 * g1);
        assert_relative_eq!(e.first_moment[0], m1, epsilon = 1e-15);
        assert_relative_eq!(e.second_moment[0], v1, epsilon = 1e-15);

        apply_with_proxies(
            &mut e,
            &pop,
            &s.get(HeuristicKind::Adam),
            &s,
            &obj,
            &map,
            1,
            &mut rngs,
        )
        .unwrap();
        // step 2: g2 = 0.1 - 1; Adam builds on the proxied moments with t = 2.
        let g2 = 0.1 - 1.0;
        let m2 = 0.9 * m1 + 0.1 * g2;
        let v2 = 0.999 * v1 + 0.001 * g2 * g2;
        let mhat = m2 / (1.0 - 0.81);
        let vhat = v2 / (1.0 - 0.999f64.powi(2));
        let x2 = 0.1 - 0.1 * mhat / (vhat.sqrt() + 1e-7);
        assert_relative_eq!(e.first_moment[0], m2, epsilon = 1e-15);
        assert_relative_eq!(e.second_moment[0], v2, epsilon = 1e-15);
        assert_relative_eq!(e.position[0], x2, epsilon = 1e-14);
        assert_eq!(e.step_counter, 2);
    }

    #[test]
    fn proxies_do_not_change_the_primary_trajectory() {
        let pop = pop_of(&[vec![0.3, -0.7], vec![1.0, 0.0]]);
        let s = HeuristicSettings::default();
        let obj = Quad(vec![1.0, 1.0]);
        for kind in [
            HeuristicKind::Sgd,
            HeuristicKind::Adagrad,
            HeuristicKind::Pso,
        ] {
            let mut a = pop.entities[0].clone();
            let mut b = a.clone();
            let mut rngs = EntityRngs::new(5, 0);
            let mut plain = EntityRngs::new(5, 0).heuristic;
            for step in 0..5 {
                apply_with_proxies(
                    &mut a,
                    &pop,
                    &s.get(kind),
                    &s,
                    &obj,
                    &ProxyMap::default(),
                    step,
                    &mut rngs,
                )
                .unwrap();
                apply_heuristic(&mut b, &pop, &s.get(kind), &obj, step, &mut plain).unwrap();
            }
            assert_eq!(a.position, b.position, "{kind}");
            assert_eq!(a.pbest_loss, b.pbest_loss);
        }
    }

    #[test]
    fn personal_best_never_increases() {
        let pop = pop_of(&[
            vec![4.0, -3.0],
            vec![0.0, 0.0],
            vec![1.0, 5.0],
            vec![-2.0, 2.0],
        ]);
        let s = HeuristicSettings::default();
        let obj = Quad(vec![1.0, 1.0]);
        let mut e = pop.entities[0].clone();
        let mut rngs = EntityRngs::new(8, 0);
        let mut last = f64::INFINITY;
        for step in 0..40 {
            let kind = HeuristicKind::ALL[step % 10];
            apply_with_proxies(
                &mut e,
                &pop,
                &s.get(kind),
                &s,
                &obj,
                &ProxyMap::default(),
                step,
                &mut rngs,
            )
            .unwrap();
            assert!(e.pbest_loss <= last);
            assert!(e.pbest_loss <= e.loss);
            last = e.pbest_loss;
        }
    }
}
