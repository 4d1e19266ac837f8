//! Model configurations for the benchmark datasets.
//!
//! Each row records the architecture as published together with its listed
//! parameter count. Three binary-classification rows (bank, adult, mushroom)
//! list a softmax output over a single unit, which is degenerate; [`ModelPreset::spec`]
//! builds those as a sigmoid output trained with binary cross-entropy instead.
//! The parameter count is unaffected.

use super::{LossKind, NetworkSpec, OutputActivation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Classification { classes: usize },
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPreset {
    pub name: &'static str,
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub listed_output: OutputActivation,
    pub listed_parameters: usize,
    pub problem: Problem,
}

impl ModelPreset {
    pub fn spec(&self) -> NetworkSpec {
        let output = if self.outputs == 1 {
            OutputActivation::Sigmoid
        } else {
            self.listed_output
        };
        NetworkSpec::new(self.inputs, self.hidden, self.outputs, output)
    }

    /// Whether the published output activation was replaced.
    pub fn reinterpreted(&self) -> bool {
        self.spec().output_activation != self.listed_output
    }

    pub fn loss(&self) -> LossKind {
        match self.problem {
            Problem::Regression => LossKind::MeanSquaredError,
            Problem::Classification { .. } if self.outputs == 1 => LossKind::BinaryCrossEntropy,
            Problem::Classification { .. } => LossKind::SparseCategoricalCrossEntropy,
        }
    }
}

const fn row(
    name: &'static str,
    inputs: usize,
    hidden: usize,
    outputs: usize,
    listed_output: OutputActivation,
    listed_parameters: usize,
    problem: Problem,
) -> ModelPreset {
    ModelPreset {
        name,
        inputs,
        hidden,
        outputs,
        listed_output,
        listed_parameters,
        problem,
    }
}

use OutputActivation::{Sigmoid, Softmax};
use Problem::{Classification as C, Regression as R};

pub const MODEL_PRESETS: [ModelPreset; 15] = [
    row("fish_toxicity", 6, 3, 1, Sigmoid, 25, R),
    row("iris", 4, 5, 3, Softmax, 43, C { classes: 3 }),
    row("air_quality", 12, 8, 1, Sigmoid, 113, R),
    row("housing", 13, 8, 1, Sigmoid, 121, R),
    row("wine_quality", 13, 10, 7, Softmax, 217, C { classes: 7 }),
    row("parkinsons", 21, 10, 1, Sigmoid, 231, R),
    row("car", 21, 10, 4, Softmax, 264, C { classes: 4 }),
    row("forest_fires", 43, 16, 1, Sigmoid, 721, R),
    row("abalone", 10, 36, 28, Softmax, 1432, C { classes: 28 }),
    row("bank", 51, 32, 1, Softmax, 1697, C { classes: 2 }),
    row("bike", 61, 32, 1, Sigmoid, 2017, R),
    row("student_performance", 99, 32, 1, Sigmoid, 3233, R),
    row("adult", 108, 64, 1, Softmax, 7041, C { classes: 2 }),
    row("mushroom", 117, 64, 1, Softmax, 7617, C { classes: 2 }),
    row("diabetic", 2369, 32, 3, Softmax, 75939, C { classes: 3 }),
];

pub fn model_preset(name: &str) -> Option<&'static ModelPreset> {
    let key = name.replace([' ', '-'], "_").to_ascii_lowercase();
    MODEL_PRESETS.iter().find(|p| p.name == key)
}
