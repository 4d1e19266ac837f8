//! Population-based update rules. They read other entities from an immutable
//! snapshot of the population taken at the start of the step.
//!
//! DE and GA compare candidates on the objective of the current step and
//! expect `entity.loss` to already hold the loss at the current position on
//! that objective. They return the loss at the entity's resulting position.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    DeBase, DeCrossover, DeParams, EntityState, GaParams, HeuristicKind, Objective,
    PopulationState, PsoParams, StateParam,
};
use crate::error::{Error, Result};

/// Relative scale of the Gaussian mutation, plus a floor so genes at zero
/// can still move.
const GA_SIGMA_SCALE: f64 = 0.1;
const GA_SIGMA_FLOOR: f64 = 1e-3;

/// PSO velocity rule. `draw` supplies the uniform coefficients, `r1` then
/// `r2` for each coordinate in order.
pub(crate) fn pso_velocity(
    velocity: &[f64],
    position: &[f64],
    pbest: &[f64],
    gbest: &[f64],
    params: &PsoParams,
    mut draw: impl FnMut() -> f64,
) -> Vec<f64> {
    (0..position.len())
        .map(|i| {
            let r1 = draw();
            let r2 = draw();
            let v = params.inertia_weight * velocity[i]
                + params.cognitive_control * r1 * (pbest[i] - position[i])
                + params.social_control * r2 * (gbest[i] - position[i]);
            v.clamp(params.velocity_clip_min, params.velocity_clip_max)
        })
        .collect()
}

pub fn apply_pso(
    entity: &mut EntityState,
    population: &PopulationState,
    params: &PsoParams,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let lr = params.learning_rate.at(step);
    let v = pso_velocity(
        &entity.velocity,
        &entity.position,
        &entity.pbest_position,
        &population.gbest_position,
        params,
        || rng.random::<f64>(),
    );
    let x: Vec<f64> = entity
        .position
        .iter()
        .zip(&v)
        .map(|(x, v)| x + lr * v)
        .collect();
    if v.iter().chain(&x).any(|x| !x.is_finite()) {
        return Err(Error::divergence(HeuristicKind::Pso));
    }
    entity.velocity = v;
    entity.mark(StateParam::Velocity, step);
    entity.move_to(&x, step);
    Ok(())
}

/// Uniform index in `0..n` outside `exclude`, by rejection.
fn pick_other(rng: &mut ChaCha8Rng, n: usize, exclude: &[usize]) -> usize {
    loop {
        let i = rng.random_range(0..n);
        if !exclude.contains(&i) {
            return i;
        }
    }
}

fn ensure_population(kind: HeuristicKind, required: usize, found: usize) -> Result<()> {
    if found < required {
        return Err(Error::PopulationTooSmall {
            heuristic: kind,
            required,
            found,
        });
    }
    Ok(())
}

/// Differential evolution against the shared entity pool.
///
/// Draw order: `r1`, `r2` (and `r0` for the random base), then the crossover
/// draws. Exponential crossover picks a start gene and keeps copying mutant
/// genes while a uniform draw falls below the recombination probability;
/// binomial crossover picks a forced gene and then tests every gene.
pub fn apply_de<O: Objective + ?Sized>(
    entity: &mut EntityState,
    population: &PopulationState,
    params: &DeParams,
    objective: &O,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = population.len();
    let required = match params.selection {
        DeBase::Best => 3,
        DeBase::Rand => 4,
    };
    ensure_population(HeuristicKind::De, required, n)?;
    let me = entity.entity_id;
    let beta = params.beta.at(step);
    let cr = params.recombination_probability.at(step);

    let r1 = pick_other(rng, n, &[me]);
    let r2 = pick_other(rng, n, &[me, r1]);
    let base: &[f64] = match params.selection {
        DeBase::Best => &population.gbest_position,
        DeBase::Rand => &population.entities[pick_other(rng, n, &[me, r1, r2])].position,
    };
    let (x1, x2) = (
        &population.entities[r1].position,
        &population.entities[r2].position,
    );
    let mutant: Vec<f64> = (0..entity.dim())
        .map(|i| base[i] + beta * (x1[i] - x2[i]))
        .collect();

    let dim = entity.dim();
    let mut trial = entity.position.to_vec();
    match params.crossover {
        DeCrossover::Exp => {
            let mut j = rng.random_range(0..dim);
            let mut copied = 0;
            loop {
                trial[j] = mutant[j];
                j = (j + 1) % dim;
                copied += 1;
                if copied >= dim || rng.random::<f64>() >= cr {
                    break;
                }
            }
        }
        DeCrossover::Bin => {
            let forced = rng.random_range(0..dim);
            for (j, t) in trial.iter_mut().enumerate() {
                if rng.random::<f64>() < cr || j == forced {
                    *t = mutant[j];
                }
            }
        }
    }
    if trial.iter().any(|x| !x.is_finite()) {
        return Err(Error::divergence(HeuristicKind::De));
    }

    let trial_loss = objective.loss(&trial)?;
    if trial_loss <= entity.loss {
        entity.move_to(&trial, step);
        Ok(trial_loss)
    } else {
        let stay = entity.position.to_vec();
        entity.move_to(&stay, step);
        Ok(entity.loss)
    }
}

/// Genetic algorithm step: random partner, uniform crossover producing one
/// offspring, Gaussian mutation with `sigma = 0.1 * |gene| + 1e-3`. The
/// offspring replaces the entity only if it strictly improves the loss.
///
/// Draw order: partner, one crossover coin per gene, then per gene a mutation
/// coin followed by a normal draw when the coin fires.
pub fn apply_ga<O: Objective + ?Sized>(
    entity: &mut EntityState,
    population: &PopulationState,
    params: &GaParams,
    objective: &O,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = population.len();
    ensure_population(HeuristicKind::Ga, 2, n)?;
    let rate = params.mutation_rate.at(step);
    let partner = &population.entities[pick_other(rng, n, &[entity.entity_id])].position;

    let mut child: Vec<f64> = entity
        .position
        .iter()
        .zip(partner.iter())
        .map(|(own, other)| if rng.random_bool(0.5) { *other } else { *own })
        .collect();
    for gene in child.iter_mut() {
        if rng.random::<f64>() < rate {
            let sigma = GA_SIGMA_SCALE * gene.abs() + GA_SIGMA_FLOOR;
            let normal =
                Normal::new(0.0, sigma).map_err(|_| Error::divergence(HeuristicKind::Ga))?;
            *gene += normal.sample(rng);
        }
    }
    if child.iter().any(|x| !x.is_finite()) {
        return Err(Error::divergence(HeuristicKind::Ga));
    }

    let child_loss = objective.loss(&child)?;
    if child_loss < entity.loss {
        entity.move_to(&child, step);
        Ok(child_loss)
    } else {
        let stay = entity.position.to_vec();
        entity.move_to(&stay, step);
        Ok(entity.loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnn::ParameterVector;
    use crate::heuristics::{Decayed, GaCrossover, GaSelection};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// `sum (x_i - 1)^2`.
    struct Bowl;

    impl Objective for Bowl {
        fn loss(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum())
        }
        fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.loss(x)?, x.iter().map(|v| 2.0 * (v - 1.0)).collect()))
        }
    }

    fn population(points: &[Vec<f64>]) -> PopulationState {
        let entities = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut e = EntityState::new(i, ParameterVector::new(p.clone()));
                e.record_loss(Bowl.loss(p).unwrap());
                e
            })
            .collect();
        PopulationState::new(entities)
    }

    #[test]
    fn pso_at_rest_on_best_stays_put() {
        let pop = population(&[vec![1.0, 1.0], vec![3.0, 0.0]]);
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        apply_pso(&mut e, &pop, &PsoParams::default(), 0, &mut rng).unwrap();
        assert_eq!(&e.position[..], &[1.0, 1.0]);
        assert_eq!(e.velocity, [0.0, 0.0]);
    }

    #[test]
    fn pso_hand_trace_with_unit_coefficients() {
        let p = PsoParams::default();
        // w*v + c1*(pbest - x) + c2*(gbest - x) with v=0.2, x=0, pbest=0.1, gbest=0.3
        let v = pso_velocity(&[0.2], &[0.0], &[0.1], &[0.3], &p, || 1.0);
        let expected = 0.729844 * 0.2 + 1.49618 * 0.1 + 1.49618 * 0.3;
        assert_relative_eq!(v[0], expected, epsilon = 1e-15);
        let clipped = pso_velocity(&[0.0], &[0.0], &[5.0], &[-5.0], &p, || 1.0);
        assert_eq!(clipped[0], 0.0);
        let high = pso_velocity(&[0.9], &[0.0], &[5.0], &[5.0], &p, || 1.0);
        assert_eq!(high[0], 1.0);
    }

    #[test]
    fn de_degenerate_mutation_copies_gbest() {
        let pop = population(&[vec![0.0, 0.0], vec![0.5, 2.0], vec![3.0, -1.0]]);
        let params = DeParams {
            beta: Decayed::constant(0.0),
            recombination_probability: Decayed::constant(1.0),
            ..DeParams::default()
        };
        let mut e = pop.entities[2].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = apply_de(&mut e, &pop, &params, &Bowl, 0, &mut rng).unwrap();
        assert_eq!(e.position, pop.gbest_position);
        assert_eq!(l, pop.gbest_loss);
    }

    #[test]
    fn de_rejects_worse_trial() {
        // The best entity cannot be improved by a mutant around itself with a
        // large step.
        let pop = population(&[vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 2.0]]);
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = apply_de(&mut e, &pop, &DeParams::default(), &Bowl, 0, &mut rng).unwrap();
        assert_eq!(&e.position[..], &[1.0, 1.0]);
        assert_eq!(l, 0.0);
        assert_eq!(e.position_delta, [0.0, 0.0]);
        assert_eq!(e.step_counter, 1);
    }

    #[test]
    fn de_hand_trace_replays_draws() {
        let pts = [
            vec![0.0, 0.0, 0.0],
            vec![1.5, 0.5, 2.0],
            vec![-1.0, 2.0, 0.5],
        ];
        let pop = population(&pts);
        let params = DeParams::default();
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut replay = rng.clone();
        let l = apply_de(&mut e, &pop, &params, &Bowl, 4, &mut rng).unwrap();

        // Independent enumeration of the same draws.
        let (beta, cr) = (2.0 / 1.4, 0.9 / 1.4);
        let mut r1;
        loop {
            r1 = replay.random_range(0..3usize);
            if r1 != 0 {
                break;
            }
        }
        let mut r2;
        loop {
            r2 = replay.random_range(0..3usize);
            if r2 != 0 && r2 != r1 {
                break;
            }
        }
        let g = &pop.gbest_position;
        let mutant: Vec<f64> = (0..3)
            .map(|i| g[i] + beta * (pts[r1][i] - pts[r2][i]))
            .collect();
        let mut trial = pts[0].clone();
        let start = replay.random_range(0..3usize);
        let mut len = 1;
        while len < 3 && replay.random::<f64>() < cr {
            len += 1;
        }
        for k in 0..len {
            trial[(start + k) % 3] = mutant[(start + k) % 3];
        }
        let trial_loss = Bowl.loss(&trial).unwrap();
        let (want, want_loss) = if trial_loss <= pop.entities[0].loss {
            (trial, trial_loss)
        } else {
            (pts[0].clone(), pop.entities[0].loss)
        };
        assert_eq!(&e.position[..], &want[..]);
        assert_eq!(l, want_loss);
    }

    #[test]
    fn de_needs_enough_entities() {
        let pop = population(&[vec![0.0], vec![1.0]]);
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = apply_de(&mut e, &pop, &DeParams::default(), &Bowl, 0, &mut rng).unwrap_err();
        assert!(matches!(
            err,
            Error::PopulationTooSmall {
                required: 3,
                found: 2,
                ..
            }
        ));
        let rand_base = DeParams {
            selection: DeBase::Rand,
            ..DeParams::default()
        };
        let pop3 = population(&[vec![0.0], vec![1.0], vec![2.0]]);
        let err = apply_de(&mut e, &pop3, &rand_base, &Bowl, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PopulationTooSmall { required: 4, .. }));
    }

    #[test]
    fn ga_without_mutation_and_identical_partner_is_a_no_op() {
        let pop = population(&[vec![0.2, 0.4], vec![0.2, 0.4]]);
        let params = GaParams {
            mutation_rate: Decayed::constant(0.0),
            ..GaParams::default()
        };
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        apply_ga(&mut e, &pop, &params, &Bowl, 0, &mut rng).unwrap();
        assert_eq!(&e.position[..], &[0.2, 0.4]);
    }

    #[test]
    fn ga_hand_trace_replays_draws() {
        let pts = [vec![0.0, 0.5, 3.0, -1.0], vec![1.0, 1.2, 0.0, 2.0]];
        let pop = population(&pts);
        let params = GaParams {
            selection: GaSelection::Rand,
            crossover: GaCrossover::Bin,
            mutation_rate: Decayed::constant(0.5),
            ..GaParams::default()
        };
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut replay = rng.clone();
        let l = apply_ga(&mut e, &pop, &params, &Bowl, 0, &mut rng).unwrap();

        let partner = loop {
            let p = replay.random_range(0..2usize);
            if p != 0 {
                break p;
            }
        };
        let mask: Vec<bool> = (0..4).map(|_| replay.random_bool(0.5)).collect();
        let mut child: Vec<f64> = (0..4)
            .map(|i| if mask[i] { pts[partner][i] } else { pts[0][i] })
            .collect();
        for gene in child.iter_mut() {
            if replay.random::<f64>() < 0.5 {
                let sigma = 0.1 * gene.abs() + 1e-3;
                *gene += Normal::new(0.0, sigma).unwrap().sample(&mut replay);
            }
        }
        let child_loss = Bowl.loss(&child).unwrap();
        if child_loss < pop.entities[0].loss {
            assert_eq!(&e.position[..], &child[..]);
            assert_eq!(l, child_loss);
        } else {
            assert_eq!(&e.position[..], &pts[0][..]);
        }
    }

    #[test]
    fn ga_needs_a_partner() {
        let pop = population(&[vec![0.0]]);
        let mut e = pop.entities[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(apply_ga(&mut e, &pop, &GaParams::default(), &Bowl, 0, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn metaheuristics_never_worsen_and_clip_velocity(
            pts in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 4..7),
            seed in any::<u64>(),
            step in 0usize..50,
        ) {
            let pop = population(&pts);
            let s = crate::heuristics::HeuristicSettings::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..pop.len() {
                let before = pop.entities[i].loss;
                let mut de = pop.entities[i].clone();
                prop_assert!(apply_de(&mut de, &pop, &s.de, &Bowl, step, &mut rng).unwrap() <= before);
                let mut ga = pop.entities[i].clone();
                prop_assert!(apply_ga(&mut ga, &pop, &s.ga, &Bowl, step, &mut rng).unwrap() <= before);
                let mut pso = pop.entities[i].clone();
                apply_pso(&mut pso, &pop, &s.pso, step, &mut rng).unwrap();
                prop_assert!(pso.velocity.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn same_seed_same_update(seed in any::<u64>()) {
            let pop = population(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5], vec![3.0, 3.0]]);
            let s = crate::heuristics::HeuristicSettings::default();
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut a = pop.entities[1].clone();
                apply_pso(&mut a, &pop, &s.pso, 2, &mut rng).unwrap();
                apply_de(&mut a, &pop, &s.de, &Bowl, 2, &mut rng).unwrap();
                apply_ga(&mut a, &pop, &s.ga, &Bowl, 2, &mut rng).unwrap();
                a
            };
            prop_assert_eq!(run(), run());
        }
    }
}
