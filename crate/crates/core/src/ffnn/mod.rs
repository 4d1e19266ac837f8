//! Shallow (one hidden layer) feedforward networks.
//!
//! A network is described by a [`NetworkSpec`] and its trainable weights live
//! in a flat [`ParameterVector`] with a fixed layout:
//!
//! 1. layer-1 weights, row-major with shape `(input_dim, hidden_dim)`
//! 2. layer-1 biases (`hidden_dim`)
//! 3. layer-2 weights, row-major with shape `(hidden_dim, output_dim)`
//! 4. layer-2 biases (`output_dim`)
//!
//! Bias blocks are absent when `use_biases` is false. Heuristics only ever see
//! the flat vector, so they stay independent of the architecture.

pub mod check;
mod matrix;
pub mod presets;

use std::ops::{Deref, DerefMut};

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DivergenceSite, Error, Result};

pub use matrix::Matrix;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Leaky-ReLU slope used by every bundled model configuration.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    LeakyRelu { slope: f64 },
}

impl HiddenActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative; at the kink (z == 0) this is the slope.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            HiddenActivation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

impl Default for HiddenActivation {
    fn default() -> Self {
        HiddenActivation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub use_biases: bool,
}

impl NetworkSpec {
    /// A biased network with the default leaky-ReLU hidden layer.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        output_activation: OutputActivation,
    ) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            hidden_activation: HiddenActivation::default(),
            output_activation,
            use_biases: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidSpec("all dimensions must be >= 1".into()));
        }
        let HiddenActivation::LeakyRelu { slope } = self.hidden_activation;
        if !slope.is_finite() {
            return Err(Error::InvalidSpec("leaky-relu slope must be finite".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    fn layout(&self) -> Layout {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let b = usize::from(self.use_biases);
        let w1 = 0;
        let b1 = w1 + i * h;
        let w2 = b1 + b * h;
        let b2 = w2 + h * o;
        Layout {
            w1,
            b1,
            w2,
            b2,
            len: b2 + b * o,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    len: usize,
}

/// Exact number of trainable parameters.
pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.layout().len
}

/// Flat trainable-weight vector (an entity's position).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Supervised targets: class indices for classification, a real matrix for
/// regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values(m) => Targets::Values(m.select_rows(indices)),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Targets::Classes(c) => Some(c),
            Targets::Values(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::Shape {
                what: "batch size",
                expected: 1,
                found: 0,
            });
        }
        if targets.len() != inputs.rows() {
            return Err(Error::Shape {
                what: "batch targets",
                expected: inputs.rows(),
                found: targets.len(),
            });
        }
        if !inputs.is_finite() {
            return Err(Error::NonFinite("batch inputs"));
        }
        if let Targets::Values(m) = &targets {
            if !m.is_finite() {
                return Err(Error::NonFinite("batch targets"));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BinaryCrossEntropy,
    SparseCategoricalCrossEntropy,
    MeanSquaredError,
}

impl LossKind {
    /// Checks that this loss is compatible with the network's output layer.
    pub fn check(self, spec: &NetworkSpec) -> Result<()> {
        let ok = match self {
            LossKind::BinaryCrossEntropy => {
                spec.output_dim == 1 && spec.output_activation == OutputActivation::Sigmoid
            }
            LossKind::SparseCategoricalCrossEntropy => {
                spec.output_activation == OutputActivation::Softmax
            }
            LossKind::MeanSquaredError => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "{self:?} is incompatible with {:?} output of width {}",
                spec.output_activation, spec.output_dim
            )))
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, LossKind::MeanSquaredError)
    }
}

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
pub fn glorot_init(spec: &NetworkSpec, seed: u64) -> ParameterVector {
    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; layout.len];

    let (i, h, o) = (spec.input_dim, spec.hidden_dim, spec.output_dim);
    for (start, fan_in, fan_out) in [(layout.w1, i, h), (layout.w2, h, o)] {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
        for w in &mut values[start..start + fan_in * fan_out] {
            *w = dist.sample(&mut rng);
        }
    }
    ParameterVector(values)
}

fn check_params(spec: &NetworkSpec, params: &[f64]) -> Result<Layout> {
    let layout = spec.layout();
    if params.len() != layout.len {
        return Err(Error::Shape {
            what: "parameter vector",
            expected: layout.len,
            found: params.len(),
        });
    }
    Ok(layout)
}

fn check_inputs(spec: &NetworkSpec, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != spec.input_dim {
        return Err(Error::Shape {
            what: "input width",
            expected: spec.input_dim,
            found: inputs.cols(),
        });
    }
    if !inputs.is_finite() {
        return Err(Error::NonFinite("network inputs"));
    }
    Ok(())
}

/// Pre-activations of both layers for one row. Outputs are written into `z1`
/// and `out` (activated).
fn forward_row(
    spec: &NetworkSpec,
    layout: Layout,
    params: &[f64],
    x: &[f64],
    z1: &mut [f64],
    a1: &mut [f64],
    out: &mut [f64],
) {
    let (h, o) = (spec.hidden_dim, spec.output_dim);
    let w1 = &params[layout.w1..layout.w1 + x.len() * h];
    if spec.use_biases {
        z1.copy_from_slice(&params[layout.b1..layout.b1 + h]);
    } else {
        z1.fill(0.0);
    }
    for (xi, wrow) in x.iter().zip(w1.chunks_exact(h)) {
        for (z, w) in z1.iter_mut().zip(wrow) {
            *z += xi * w;
        }
    }
    for (a, &z) in a1.iter_mut().zip(z1.iter()) {
        *a = spec.hidden_activation.apply(z);
    }

    let w2 = &params[layout.w2..layout.w2 + h * o];
    if spec.use_biases {
        out.copy_from_slice(&params[layout.b2..layout.b2 + o]);
    } else {
        out.fill(0.0);
    }
    for (ah, wrow) in a1.iter().zip(w2.chunks_exact(o)) {
        for (z, w) in out.iter_mut().zip(wrow) {
            *z += ah * w;
        }
    }
    activate_output(spec.output_activation, out);
}

fn activate_output(act: OutputActivation, z: &mut [f64]) {
    match act {
        OutputActivation::Sigmoid => {
            for v in z.iter_mut() {
                *v = sigmoid(*v);
            }
        }
        OutputActivation::Softmax => {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in z.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in z.iter_mut() {
                *v /= sum;
            }
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Output-layer activations for every input row.
pub fn forward(spec: &NetworkSpec, params: &[f64], inputs: &Matrix) -> Result<Matrix> {
    let layout = check_params(spec, params)?;
    check_inputs(spec, inputs)?;
    let mut z1 = vec![0.0; spec.hidden_dim];
    let mut a1 = vec![0.0; spec.hidden_dim];
    let mut out = Matrix::zeros(inputs.rows(), spec.output_dim);
    for r in 0..inputs.rows() {
        forward_row(
            spec,
            layout,
            params,
            inputs.row(r),
            &mut z1,
            &mut a1,
            out.row_mut(r),
        );
    }
    Ok(out)
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_targets(kind: LossKind, rows: usize, cols: usize, targets: &Targets) -> Result<()> {
    if targets.len() != rows {
        return Err(Error::Shape {
            what: "targets",
            expected: rows,
            found: targets.len(),
        });
    }
    match (kind, targets) {
        (LossKind::BinaryCrossEntropy, Targets::Classes(c)) => {
            if cols != 1 {
                return Err(Error::Shape {
                    what: "binary prediction width",
                    expected: 1,
                    found: cols,
                });
            }
            if let Some(&bad) = c.iter().find(|&&c| c > 1) {
                return Err(Error::Shape {
                    what: "binary class index",
                    expected: 1,
                    found: bad,
                });
            }
        }
        (LossKind::SparseCategoricalCrossEntropy, Targets::Classes(c)) => {
            if let Some(&bad) = c.iter().find(|&&c| c >= cols) {
                return Err(Error::Shape {
                    what: "class index",
                    expected: cols,
                    found: bad,
                });
            }
        }
        (LossKind::MeanSquaredError, Targets::Values(t)) => {
            if t.cols() != cols {
                return Err(Error::Shape {
                    what: "regression target width",
                    expected: cols,
                    found: t.cols(),
                });
            }
        }
        _ => {
            return Err(Error::InvalidSpec(format!(
                "{kind:?} cannot be used with these targets"
            )))
        }
    }
    Ok(())
}

/// Per-row loss contribution (before averaging over the batch).
fn row_loss(kind: LossKind, p: &[f64], targets: &Targets, r: usize) -> f64 {
    match (kind, targets) {
        (LossKind::BinaryCrossEntropy, Targets::Classes(c)) => {
            let y = c[r] as f64;
            let q = clamp_prob(p[0]);
            -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
        }
        (LossKind::SparseCategoricalCrossEntropy, Targets::Classes(c)) => -clamp_prob(p[c[r]]).ln(),
        (LossKind::MeanSquaredError, Targets::Values(t)) => {
            let tr = t.row(r);
            p.iter().zip(tr).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
        }
        _ => unreachable!("checked by check_targets"),
    }
}

/// dL_row/dp, written into `grad`.
fn row_loss_grad(kind: LossKind, p: &[f64], targets: &Targets, r: usize, grad: &mut [f64]) {
    grad.fill(0.0);
    match (kind, targets) {
        (LossKind::BinaryCrossEntropy, Targets::Classes(c)) => {
            let y = c[r] as f64;
            let q = p[0];
            if q > PROB_EPS && q < 1.0 - PROB_EPS {
                grad[0] = -y / q + (1.0 - y) / (1.0 - q);
            }
        }
        (LossKind::SparseCategoricalCrossEntropy, Targets::Classes(c)) => {
            let q = p[c[r]];
            if q > PROB_EPS && q < 1.0 - PROB_EPS {
                grad[c[r]] = -1.0 / q;
            }
        }
        (LossKind::MeanSquaredError, Targets::Values(t)) => {
            let m = p.len() as f64;
            for ((g, a), b) in grad.iter_mut().zip(p).zip(t.row(r)) {
                *g = 2.0 * (a - b) / m;
            }
        }
        _ => unreachable!("checked by check_targets"),
    }
}

/// Mean loss over the batch.
pub fn loss(kind: LossKind, predictions: &Matrix, targets: &Targets) -> Result<f64> {
    check_targets(kind, predictions.rows(), predictions.cols(), targets)?;
    let n = predictions.rows();
    if n == 0 {
        return Err(Error::Shape {
            what: "batch size",
            expected: 1,
            found: 0,
        });
    }
    let total: f64 = (0..n)
        .map(|r| row_loss(kind, predictions.row(r), targets, r))
        .sum();
    Ok(total / n as f64)
}

/// Fraction of rows whose predicted class matches the target. Single-column
/// (sigmoid) predictions are thresholded at 0.5.
pub fn accuracy(predictions: &Matrix, targets: &[usize]) -> f64 {
    let n = predictions.rows();
    if n == 0 {
        return 0.0;
    }
    let hits = predictions
        .iter_rows()
        .zip(targets)
        .filter(|(p, &t)| predicted_class(p) == t)
        .count();
    hits as f64 / n as f64
}

pub fn predicted_class(p: &[f64]) -> usize {
    if p.len() == 1 {
        usize::from(p[0] > 0.5)
    } else {
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        best
    }
}

/// Mean batch loss evaluated at `params`.
pub fn batch_loss(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &Batch,
    kind: LossKind,
) -> Result<f64> {
    let predictions = forward(spec, params, &batch.inputs)?;
    loss(kind, &predictions, &batch.targets)
}

/// Analytic gradient of the mean batch loss via backpropagation.
pub fn gradient(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &Batch,
    kind: LossKind,
) -> Result<ParameterVector> {
    Ok(loss_and_gradient(spec, params, batch, kind)?.1)
}

/// Mean batch loss and its gradient from a single forward/backward pass.
pub fn loss_and_gradient(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &Batch,
    kind: LossKind,
) -> Result<(f64, ParameterVector)> {
    let layout = check_params(spec, params)?;
    check_inputs(spec, &batch.inputs)?;
    kind.check(spec)?;

    let (h, o) = (spec.hidden_dim, spec.output_dim);
    let n = batch.len();
    let mut z1 = vec![0.0; h];
    let mut a1 = vec![0.0; h];
    let mut p = vec![0.0; o];
    let mut dp = vec![0.0; o];
    let mut dz2 = vec![0.0; o];
    let mut dz1 = vec![0.0; h];
    let mut grad = vec![0.0; layout.len];
    let mut total = 0.0;

    check_targets(kind, n, o, &batch.targets)?;

    let scale = 1.0 / n as f64;
    for r in 0..n {
        let x = batch.inputs.row(r);
        forward_row(spec, layout, params, x, &mut z1, &mut a1, &mut p);
        total += row_loss(kind, &p, &batch.targets, r);
        row_loss_grad(kind, &p, &batch.targets, r, &mut dp);

        match spec.output_activation {
            OutputActivation::Sigmoid => {
                for k in 0..o {
                    dz2[k] = scale * dp[k] * p[k] * (1.0 - p[k]);
                }
            }
            OutputActivation::Softmax => {
                let dot: f64 = dp.iter().zip(&p).map(|(g, q)| g * q).sum();
                for k in 0..o {
                    dz2[k] = scale * p[k] * (dp[k] - dot);
                }
            }
        }

        let w2 = &params[layout.w2..layout.w2 + h * o];
        for j in 0..h {
            let mut back = 0.0;
            for k in 0..o {
                grad[layout.w2 + j * o + k] += a1[j] * dz2[k];
                back += w2[j * o + k] * dz2[k];
            }
            dz1[j] = back * spec.hidden_activation.derivative(z1[j]);
        }
        if spec.use_biases {
            for k in 0..o {
                grad[layout.b2 + k] += dz2[k];
            }
            for j in 0..h {
                grad[layout.b1 + j] += dz1[j];
            }
        }
        for (i, xi) in x.iter().enumerate() {
            let row = &mut grad[layout.w1 + i * h..layout.w1 + (i + 1) * h];
            for (g, d) in row.iter_mut().zip(&dz1) {
                *g += xi * d;
            }
        }
    }

    let loss = total * scale;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence(DivergenceSite::default()));
    }
    Ok((loss, ParameterVector(grad)))
}

/// Central-difference approximation of the batch-loss gradient.
pub fn finite_diff_gradient(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &Batch,
    kind: LossKind,
    h: f64,
) -> Result<ParameterVector> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidConfig(
            "finite-difference step must be > 0".into(),
        ));
    }
    check_params(spec, params)?;
    let mut probe = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = batch_loss(spec, &probe, batch, kind)?;
        probe[i] = orig - h;
        let down = batch_loss(spec, &probe, batch, kind)?;
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(ParameterVector(grad))
}

/// A network bound to its loss function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub loss: LossKind,
}

impl Model {
    pub fn new(spec: NetworkSpec, loss: LossKind) -> Result<Self> {
        spec.validate()?;
        loss.check(&spec)?;
        Ok(Self { spec, loss })
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.spec)
    }

    pub fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        let l = batch_loss(&self.spec, params, batch, self.loss)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::Divergence(DivergenceSite::default()))
        }
    }

    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        batch: &Batch,
    ) -> Result<(f64, ParameterVector)> {
        loss_and_gradient(&self.spec, params, batch, self.loss)
    }

    /// Loss and (for classification) accuracy over a whole batch/dataset.
    pub fn evaluate(&self, params: &[f64], batch: &Batch) -> Result<Evaluation> {
        let predictions = forward(&self.spec, params, &batch.inputs)?;
        let loss = loss(self.loss, &predictions, &batch.targets)?;
        let accuracy = batch.targets.classes().map(|c| accuracy(&predictions, c));
        Ok(Evaluation { loss, accuracy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<f64>,
}
