//! The TOML experiment file. Every section is optional and every key has a
//! default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use bhh_core::data::{self, Column, ProblemKind};
use bhh_core::ffnn::presets::model_preset;
use bhh_core::ffnn::{HiddenActivation, OutputActivation, DEFAULT_LEAKY_SLOPE};
use bhh_core::harness::{Contender, ExperimentConfig, STANDARD_LABELS};
use bhh_core::{
    BhhConfig, DatasetSpec, Error, HeuristicSettings, LossKind, Model, NetworkSpec, RawData, Result,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub dataset: DatasetSection,
    pub bhh: BhhConfig,
    pub heuristics: HeuristicSettings,
    pub experiment: ExperimentSection,
}

/// Network shape. `preset` names a bundled configuration (defaulting to the
/// dataset name); explicit keys override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_activation: Option<OutputActivation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
}

/// Either `preset = "iris"` (the bundled data) or a CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemKind>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<Column>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Relative paths are taken from the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub train_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            preset: None,
            name: None,
            problem: None,
            columns: Vec::new(),
            targets: Vec::new(),
            batch_size: None,
            path: None,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Output subdirectory; defaults to the dataset name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub epochs: usize,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
    pub contenders: Vec<String>,
    /// Contender trained by `bhh train`.
    pub train: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: None,
            epochs: 30,
            runs: 30,
            seed: 0,
            workers: 1,
            contenders: STANDARD_LABELS.iter().map(|s| s.to_string()).collect(),
            train: "bhh".into(),
        }
    }
}

/// Everything needed to train, with data loaded.
pub struct Resolved {
    pub file: ConfigFile,
    pub dataset: DatasetSpec,
    pub data: RawData,
    pub model: Model,
}

pub fn parse(text: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&text)
}

impl ConfigFile {
    /// Fills dataset and model sections with the values actually used, so the
    /// printed config shows every default.
    pub fn resolve(mut self, base_dir: &Path) -> Result<Resolved> {
        let (dataset, data) = self.dataset.resolve(base_dir)?;
        let model = self.model.resolve(&dataset)?;
        self.bhh.validate()?;
        self.heuristics.validate()?;
        let HiddenActivation::LeakyRelu { slope } = model.spec.hidden_activation;
        self.model = ModelSection {
            preset: self
                .model
                .preset
                .or_else(|| model_preset(&dataset.name).map(|p| p.name.to_string())),
            input_dim: Some(model.spec.input_dim),
            hidden_dim: Some(model.spec.hidden_dim),
            output_dim: Some(model.spec.output_dim),
            output_activation: Some(model.spec.output_activation),
            loss: Some(model.loss),
            leaky_slope: Some(slope),
        };
        if self.dataset.preset.is_none() && self.dataset.columns.is_empty() {
            self.dataset.preset = Some(dataset.name.clone());
        }
        self.dataset.name = Some(dataset.name.clone());
        self.dataset.batch_size = Some(dataset.batch_size);
        self.experiment
            .name
            .get_or_insert_with(|| dataset.name.clone());
        Ok(Resolved {
            file: self,
            dataset,
            data,
            model,
        })
    }
}

impl DatasetSection {
    fn resolve(&self, base_dir: &Path) -> Result<(DatasetSpec, RawData)> {
        let preset = match (&self.preset, self.columns.is_empty()) {
            (Some(p), true) => Some(p.as_str()),
            (None, true) => Some("iris"),
            (Some(_), false) => {
                return Err(Error::InvalidConfig(
                    "dataset: give either preset or columns, not both".into(),
                ))
            }
            (None, false) => None,
        };
        if let Some(name) = preset {
            if name != "iris" {
                return Err(Error::InvalidConfig(format!(
                    "dataset: no bundled data for '{name}'; describe the CSV with columns and path"
                )));
            }
            let mut spec = data::iris_spec();
            if let Some(bs) = self.batch_size {
                spec.batch_size = bs;
            }
            spec.validate()?;
            return Ok((spec, data::iris()));
        }
        let missing =
            |key: &str| Error::InvalidConfig(format!("dataset.{key} is required with columns"));
        let name = self.name.clone().ok_or_else(|| missing("name"))?;
        let spec = DatasetSpec {
            problem: self.problem.ok_or_else(|| missing("problem"))?,
            columns: self.columns.clone(),
            targets: self.targets.clone(),
            batch_size: self
                .batch_size
                .or_else(|| data::descriptor(&name).map(|d| d.batch_size))
                .ok_or_else(|| missing("batch_size"))?,
            path: self.path.as_ref().map(|p| base_dir.join(p)),
            name,
        };
        spec.validate()?;
        let raw = data::read_csv(&spec.resolve_path(base_dir), &spec)?;
        Ok((spec, raw))
    }
}

impl ModelSection {
    fn resolve(&self, dataset: &DatasetSpec) -> Result<Model> {
        let preset_name = self.preset.as_deref().unwrap_or(&dataset.name);
        let preset = model_preset(preset_name);
        if self.preset.is_some() && preset.is_none() {
            return Err(Error::InvalidConfig(format!(
                "model: unknown preset '{preset_name}'"
            )));
        }
        let base = preset.map(|p| (p.spec(), p.loss()));
        let missing =
            |key: &str| Error::InvalidConfig(format!("model.{key} is required without a preset"));
        let input_dim = self
            .input_dim
            .or(base.map(|b| b.0.input_dim))
            .unwrap_or(dataset.input_width());
        let output_dim = self
            .output_dim
            .or(base.map(|b| b.0.output_dim))
            .unwrap_or(dataset.output_width());
        let hidden_dim = self
            .hidden_dim
            .or(base.map(|b| b.0.hidden_dim))
            .ok_or_else(|| missing("hidden_dim"))?;
        let default_output = if output_dim == 1 {
            OutputActivation::Sigmoid
        } else {
            OutputActivation::Softmax
        };
        let output_activation = self
            .output_activation
            .or(base.map(|b| b.0.output_activation))
            .unwrap_or(default_output);
        let default_loss = match (dataset.problem, output_dim) {
            (ProblemKind::Regression, _) => LossKind::MeanSquaredError,
            (ProblemKind::Classification, 1) => LossKind::BinaryCrossEntropy,
            (ProblemKind::Classification, _) => LossKind::SparseCategoricalCrossEntropy,
        };
        let loss = self.loss.or(base.map(|b| b.1)).unwrap_or(default_loss);
        let mut spec = NetworkSpec::new(input_dim, hidden_dim, output_dim, output_activation);
        spec.hidden_activation = HiddenActivation::LeakyRelu {
            slope: self.leaky_slope.unwrap_or(DEFAULT_LEAKY_SLOPE),
        };
        if input_dim != dataset.input_width() || output_dim != dataset.output_width() {
            return Err(Error::InvalidConfig(format!(
                "model is {input_dim}-{hidden_dim}-{output_dim} but dataset '{}' has {} inputs and {} outputs",
                dataset.name,
                dataset.input_width(),
                dataset.output_width()
            )));
        }
        Model::new(spec, loss)
    }
}

impl Resolved {
    pub fn contender(&self, label: &str) -> Result<Contender> {
        Contender::from_label(label, &self.file.bhh, &self.file.heuristics)
    }

    pub fn experiment(
        &self,
        seed: Option<u64>,
        workers: Option<usize>,
    ) -> Result<ExperimentConfig> {
        let e = &self.file.experiment;
        let contenders = e
            .contenders
            .iter()
            .map(|l| self.contender(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentConfig {
            name: e.name.clone().unwrap_or_else(|| self.dataset.name.clone()),
            model: self.model,
            data: self.data.clone(),
            train_fraction: self.file.dataset.train_fraction,
            batch_size: self.dataset.batch_size,
            contenders,
            epochs: e.epochs,
            runs: e.runs,
            base_seed: seed.unwrap_or(e.seed),
            workers: workers.unwrap_or(e.workers),
        })
    }
}
