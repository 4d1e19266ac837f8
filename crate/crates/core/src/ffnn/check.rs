//! Backpropagation versus central finite differences over random networks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    finite_diff_gradient, gradient, Batch, LossKind, Matrix, NetworkSpec, OutputActivation, Targets,
};
use crate::error::Result;

/// Absolute differences below this are treated relative to it instead of to
/// the gradient magnitude; central differences carry roughly `eps / h`
/// round-off, which dwarfs tiny coordinates.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Hidden pre-activations closer than this to the leaky-ReLU kink are redrawn,
/// since a finite-difference probe straddling the kink is meaningless.
const KINK_MARGIN: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckCase {
    pub spec: NetworkSpec,
    pub loss: LossKind,
    pub params: Vec<f64>,
    pub batch: Batch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckReport {
    pub cases: usize,
    pub max_relative_error: f64,
    pub worst_case: usize,
}

/// Random network, parameters and batch with every dimension in `1..=max_dim`.
/// Loss kinds cycle with `index` so all three are covered.
pub fn random_case(rng: &mut ChaCha8Rng, index: usize, max_dim: usize) -> GradientCheckCase {
    let kind = [
        LossKind::BinaryCrossEntropy,
        LossKind::SparseCategoricalCrossEntropy,
        LossKind::MeanSquaredError,
    ][index % 3];
    let input_dim = rng.random_range(1..=max_dim);
    let hidden_dim = rng.random_range(1..=max_dim);
    let (output_dim, act) = match kind {
        LossKind::BinaryCrossEntropy => (1, OutputActivation::Sigmoid),
        LossKind::SparseCategoricalCrossEntropy => (
            rng.random_range(2..=max_dim.max(2)),
            OutputActivation::Softmax,
        ),
        LossKind::MeanSquaredError => (rng.random_range(1..=max_dim), OutputActivation::Sigmoid),
    };
    let spec = NetworkSpec::new(input_dim, hidden_dim, output_dim, act);
    let n = rng.random_range(1..=max_dim);

    loop {
        let params: Vec<f64> = (0..spec.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..input_dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        if near_kink(&spec, &params, &rows) {
            continue;
        }
        let targets = match kind {
            LossKind::BinaryCrossEntropy => {
                Targets::Classes((0..n).map(|_| rng.random_range(0..2)).collect())
            }
            LossKind::SparseCategoricalCrossEntropy => {
                Targets::Classes((0..n).map(|_| rng.random_range(0..output_dim)).collect())
            }
            LossKind::MeanSquaredError => {
                let t: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..output_dim).map(|_| rng.random::<f64>()).collect())
                    .collect();
                Targets::Values(Matrix::from_rows(&t).expect("rectangular"))
            }
        };
        let batch = Batch::new(Matrix::from_rows(&rows).expect("rectangular"), targets)
            .expect("valid batch");
        return GradientCheckCase {
            spec,
            loss: kind,
            params,
            batch,
        };
    }
}

fn near_kink(spec: &NetworkSpec, params: &[f64], rows: &[Vec<f64>]) -> bool {
    let h = spec.hidden_dim;
    let b1 = spec.input_dim * h;
    rows.iter().any(|x| {
        (0..h).any(|j| {
            let mut z = params[b1 + j];
            for (i, xi) in x.iter().enumerate() {
                z += xi * params[i * h + j];
            }
            z.abs() < KINK_MARGIN
        })
    })
}

pub fn check_case(case: &GradientCheckCase, h: f64) -> Result<f64> {
    let analytic = gradient(&case.spec, &case.params, &case.batch, case.loss)?;
    let numeric = finite_diff_gradient(&case.spec, &case.params, &case.batch, case.loss, h)?;
    Ok(analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max))
}

/// Runs `cases` random checks with dimensions up to `max_dim`.
pub fn run_gradient_check(
    cases: usize,
    max_dim: usize,
    h: f64,
    seed: u64,
) -> Result<GradientCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientCheckReport {
        cases,
        max_relative_error: 0.0,
        worst_case: 0,
    };
    for i in 0..cases {
        let case = random_case(&mut rng, i, max_dim);
        let err = check_case(&case, h)?;
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_case = i;
        }
    }
    Ok(report)
}
