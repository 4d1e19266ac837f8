//! Gradient-based update rules. Each function consumes the gradient at the
//! current position, moves the position, and writes the state fields the
//! heuristic owns. On a non-finite result the entity is left untouched.

use super::{
    AdadeltaParams, AdagradParams, AdamParams, EntityState, HeuristicKind, MomentumParams,
    RmspropParams, SgdParams, StateParam,
};
use crate::error::{Error, Result};

fn check_len(entity: &EntityState, gradient: &[f64]) -> Result<()> {
    if gradient.len() != entity.dim() {
        return Err(Error::Shape {
            what: "gradient",
            expected: entity.dim(),
            found: gradient.len(),
        });
    }
    Ok(())
}

fn all_finite(vs: &[&[f64]]) -> bool {
    vs.iter().all(|v| v.iter().all(|x| x.is_finite()))
}

pub fn apply_sgd(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &SgdParams,
    step: usize,
) -> Result<()> {
    check_len(entity, gradient)?;
    let lr = params.learning_rate.at(step);
    let x: Vec<f64> = entity
        .position
        .iter()
        .zip(gradient)
        .map(|(x, g)| x - lr * g)
        .collect();
    if !all_finite(&[&x]) {
        return Err(Error::divergence(HeuristicKind::Sgd));
    }
    entity.move_to(&x, step);
    Ok(())
}

/// Classical momentum: `v = m*v - lr*g; x += v`.
pub fn apply_momentum(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &MomentumParams,
    step: usize,
) -> Result<()> {
    momentum_like(entity, gradient, params, step, false)
}

/// Nesterov momentum in its look-ahead-free form:
/// `v = m*v - lr*g; x += m*v - lr*g`.
pub fn apply_nag(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &MomentumParams,
    step: usize,
) -> Result<()> {
    momentum_like(entity, gradient, params, step, true)
}

fn momentum_like(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &MomentumParams,
    step: usize,
    nesterov: bool,
) -> Result<()> {
    check_len(entity, gradient)?;
    let lr = params.learning_rate.at(step);
    let m = params.momentum;
    let v: Vec<f64> = entity
        .velocity
        .iter()
        .zip(gradient)
        .map(|(v, g)| m * v - lr * g)
        .collect();
    let x: Vec<f64> = entity
        .position
        .iter()
        .zip(&v)
        .zip(gradient)
        .map(|((x, v), g)| if nesterov { x + m * v - lr * g } else { x + v })
        .collect();
    if !all_finite(&[&v, &x]) {
        let kind = if nesterov {
            HeuristicKind::Nag
        } else {
            HeuristicKind::Momentum
        };
        return Err(Error::divergence(kind));
    }
    entity.velocity = v;
    entity.mark(StateParam::Velocity, step);
    entity.move_to(&x, step);
    Ok(())
}

pub fn apply_adagrad(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &AdagradParams,
    step: usize,
) -> Result<()> {
    check_len(entity, gradient)?;
    let lr = params.learning_rate.at(step);
    let s: Vec<f64> = entity
        .second_moment
        .iter()
        .zip(gradient)
        .map(|(s, g)| s + g * g)
        .collect();
    let x: Vec<f64> = (0..entity.dim())
        .map(|i| entity.position[i] - lr * gradient[i] / (s[i].sqrt() + params.epsilon))
        .collect();
    if !all_finite(&[&s, &x]) {
        return Err(Error::divergence(HeuristicKind::Adagrad));
    }
    entity.second_moment = s;
    entity.mark(StateParam::SecondMoment, step);
    entity.move_to(&x, step);
    Ok(())
}

pub fn apply_rmsprop(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &RmspropParams,
    step: usize,
) -> Result<()> {
    check_len(entity, gradient)?;
    let lr = params.learning_rate.at(step);
    let rho = params.rho;
    let s: Vec<f64> = entity
        .second_moment
        .iter()
        .zip(gradient)
        .map(|(s, g)| rho * s + (1.0 - rho) * g * g)
        .collect();
    let x: Vec<f64> = (0..entity.dim())
        .map(|i| entity.position[i] - lr * gradient[i] / (s[i].sqrt() + params.epsilon))
        .collect();
    if !all_finite(&[&s, &x]) {
        return Err(Error::divergence(HeuristicKind::Rmsprop));
    }
    entity.second_moment = s;
    entity.mark(StateParam::SecondMoment, step);
    entity.move_to(&x, step);
    Ok(())
}

/// Adadelta with a learning-rate multiplier on the unit-corrected step.
pub fn apply_adadelta(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &AdadeltaParams,
    step: usize,
) -> Result<()> {
    check_len(entity, gradient)?;
    let lr = params.learning_rate.at(step);
    let (rho, eps) = (params.rho, params.epsilon);
    let n = entity.dim();
    let mut s = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut x = vec![0.0; n];
    for i in 0..n {
        let g = gradient[i];
        s[i] = rho * entity.second_moment[i] + (1.0 - rho) * g * g;
        let d = g * (entity.accumulated_delta[i] + eps).sqrt() / (s[i] + eps).sqrt();
        acc[i] = rho * entity.accumulated_delta[i] + (1.0 - rho) * d * d;
        x[i] = entity.position[i] - lr * d;
    }
    if !all_finite(&[&s, &acc, &x]) {
        return Err(Error::divergence(HeuristicKind::Adadelta));
    }
    entity.second_moment = s;
    entity.accumulated_delta = acc;
    entity.mark(StateParam::SecondMoment, step);
    entity.mark(StateParam::AccumulatedDelta, step);
    entity.move_to(&x, step);
    Ok(())
}

/// Adam with bias correction; the time index is the entity's step counter
/// after this update, so moments accumulated under other heuristics count.
pub fn apply_adam(
    entity: &mut EntityState,
    gradient: &[f64],
    params: &AdamParams,
    step: usize,
) -> Result<()> {
    check_len(entity, gradient)?;
    let lr = params.learning_rate.at(step);
    let (b1, b2) = (params.beta1, params.beta2);
    let t = (entity.step_counter + 1) as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let n = entity.dim();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut x = vec![0.0; n];
    for i in 0..n {
        let g = gradient[i];
        m[i] = b1 * entity.first_moment[i] + (1.0 - b1) * g;
        v[i] = b2 * entity.second_moment[i] + (1.0 - b2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        x[i] = entity.position[i] - lr * mhat / (vhat.sqrt() + params.epsilon);
    }
    if !all_finite(&[&m, &v, &x]) {
        return Err(Error::divergence(HeuristicKind::Adam));
    }
    entity.first_moment = m;
    entity.second_moment = v;
    entity.mark(StateParam::FirstMoment, step);
    entity.mark(StateParam::SecondMoment, step);
    entity.move_to(&x, step);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnn::ParameterVector;
    use crate::heuristics::Decayed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(x: f64) -> EntityState {
        EntityState::new(0, ParameterVector::new(vec![x]))
    }

    #[test]
    fn sgd_zero_gradient_is_a_no_op() {
        let mut e = EntityState::new(0, ParameterVector::new(vec![0.3, -1.2]));
        apply_sgd(&mut e, &[0.0, 0.0], &SgdParams::default(), 0).unwrap();
        assert_eq!(&e.position[..], &[0.3, -1.2]);
        assert_eq!(e.position_delta, [0.0, 0.0]);
        assert_eq!(e.step_counter, 1);
    }

    #[test]
    fn sgd_uses_decayed_rate() {
        let mut e = scalar(1.0);
        apply_sgd(&mut e, &[2.0], &SgdParams::default(), 100).unwrap();
        // lr = 0.1 / (1 + 0.01 * 100) = 0.05
        assert_relative_eq!(e.position[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(e.position_delta[0], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn zero_momentum_matches_sgd() {
        let grads = [[0.5, -0.2], [0.1, 0.3], [-0.4, 0.0]];
        let sgd = SgdParams::default();
        let mom = MomentumParams {
            learning_rate: sgd.learning_rate,
            momentum: 0.0,
        };
        let mut a = EntityState::new(0, ParameterVector::new(vec![1.0, 2.0]));
        let mut b = a.clone();
        let mut c = a.clone();
        for (t, g) in grads.iter().enumerate() {
            apply_sgd(&mut a, g, &sgd, t).unwrap();
            apply_momentum(&mut b, g, &mom, t).unwrap();
            apply_nag(&mut c, g, &mom, t).unwrap();
        }
        assert_eq!(a.position, b.position);
        assert_eq!(a.position, c.position);
    }

    #[test]
    fn momentum_and_nag_hand_trace() {
        let p = MomentumParams {
            learning_rate: Decayed::constant(0.1),
            momentum: 0.9,
        };
        let mut m = scalar(0.0);
        let mut n = scalar(0.0);
        for t in 0..2 {
            apply_momentum(&mut m, &[1.0], &p, t).unwrap();
            apply_nag(&mut n, &[1.0], &p, t).unwrap();
        }
        // v1 = -0.1, v2 = -0.19
        assert_relative_eq!(m.velocity[0], -0.19, epsilon = 1e-15);
        assert_relative_eq!(m.position[0], -0.29, epsilon = 1e-15);
        // nag: x1 = 0.9*-0.1 - 0.1 = -0.19; x2 = x1 + 0.9*-0.19 - 0.1 = -0.461
        assert_relative_eq!(n.position[0], -0.461, epsilon = 1e-15);
    }

    #[test]
    fn adam_three_step_hand_trace() {
        let p = AdamParams {
            learning_rate: Decayed::constant(0.1),
            ..AdamParams::default()
        };
        let g = 0.5;
        let mut e = scalar(1.0);
        let (mut m, mut v, mut x) = (0.0_f64, 0.0_f64, 1.0_f64);
        for t in 1..=3 {
            apply_adam(&mut e, &[g], &p, t - 1).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9_f64.powi(t as i32));
            let vhat = v / (1.0 - 0.999_f64.powi(t as i32));
            x -= 0.1 * mhat / (vhat.sqrt() + 1e-7);
            assert_relative_eq!(
                e.first_moment[0],
                (1.0 - 0.9_f64.powi(t as i32)) * g,
                epsilon = 1e-15
            );
            assert_relative_eq!(mhat, g, epsilon = 1e-15);
            assert_relative_eq!(e.position[0], x, epsilon = 1e-15);
        }
        // Constant gradient: each step moves by lr * g / (|g| + eps) ~ 0.1.
        assert_relative_eq!(e.position[0], 0.7, epsilon = 1e-6);
        assert_eq!(e.step_counter, 3);
    }

    #[test]
    fn adagrad_rmsprop_adadelta_hand_traces() {
        let mut a = scalar(0.0);
        let ap = AdagradParams {
            learning_rate: Decayed::constant(0.1),
            epsilon: 0.0,
        };
        apply_adagrad(&mut a, &[2.0], &ap, 0).unwrap();
        apply_adagrad(&mut a, &[2.0], &ap, 1).unwrap();
        // s: 4, 8 -> x = -0.1*2/2 - 0.1*2/sqrt(8)
        assert_relative_eq!(a.position[0], -0.1 - 0.2 / 8f64.sqrt(), epsilon = 1e-15);

        let mut r = scalar(0.0);
        let rp = RmspropParams {
            learning_rate: Decayed::constant(0.1),
            rho: 0.5,
            epsilon: 0.0,
        };
        apply_rmsprop(&mut r, &[2.0], &rp, 0).unwrap();
        assert_relative_eq!(r.second_moment[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(r.position[0], -0.2 / 2f64.sqrt(), epsilon = 1e-15);

        let mut d = scalar(0.0);
        let dp = AdadeltaParams {
            learning_rate: Decayed::constant(1.0),
            rho: 0.5,
            epsilon: 1e-2,
        };
        apply_adadelta(&mut d, &[1.0], &dp, 0).unwrap();
        // s = 0.5; step = sqrt(0.01)/sqrt(0.51); acc = 0.5 * step^2
        let step = 0.1 / 0.51f64.sqrt();
        assert_relative_eq!(d.position[0], -step, epsilon = 1e-15);
        assert_relative_eq!(d.accumulated_delta[0], 0.5 * step * step, epsilon = 1e-15);
    }

    #[test]
    fn divergence_leaves_entity_untouched() {
        let mut e = scalar(1.0);
        let before = e.clone();
        let err = apply_sgd(&mut e, &[f64::INFINITY], &SgdParams::default(), 0).unwrap_err();
        assert!(err.is_divergence());
        assert_eq!(e, before);
        assert!(apply_sgd(&mut e, &[1.0, 2.0], &SgdParams::default(), 0).is_err());
    }

    proptest! {
        #[test]
        fn updates_stay_finite_and_delta_matches(
            x in prop::collection::vec(-10.0..10.0f64, 1..8),
            scale in 0.0..5.0f64,
            step in 0usize..200,
        ) {
            let g: Vec<f64> = x.iter().map(|v| v * scale - 0.5).collect();
            let s = crate::heuristics::HeuristicSettings::default();
            let mut entities: Vec<EntityState> =
                (0..7).map(|i| EntityState::new(i, ParameterVector::new(x.clone()))).collect();
            apply_sgd(&mut entities[0], &g, &s.sgd, step).unwrap();
            apply_momentum(&mut entities[1], &g, &s.momentum, step).unwrap();
            apply_nag(&mut entities[2], &g, &s.nag, step).unwrap();
            apply_adagrad(&mut entities[3], &g, &s.adagrad, step).unwrap();
            apply_rmsprop(&mut entities[4], &g, &s.rmsprop, step).unwrap();
            apply_adadelta(&mut entities[5], &g, &s.adadelta, step).unwrap();
            apply_adam(&mut entities[6], &g, &s.adam, step).unwrap();
            for e in &entities {
                prop_assert!(e.is_finite());
                prop_assert_eq!(e.step_counter, 1);
                for i in 0..x.len() {
                    prop_assert_eq!(e.position_delta[i], e.position[i] - x[i]);
                }
            }
        }
    }
}
