//! Tabular datasets: schema, CSV ingestion, encoding, splitting and batching.
//!
//! Loading happens in two stages. [`read_csv`] parses and one-hot encodes a
//! file into [`RawData`], leaving numeric columns in their original units.
//! A [`MinMaxScaler`] fitted on some rows then maps everything into `[0, 1]`.
//! [`prepare`] fits on the training split only; [`load_csv`] fits on all rows.

mod descriptors;

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffnn::{Batch, Matrix, Targets};
use crate::rng::{self, Purpose};

pub use descriptors::{descriptor, DatasetDescriptor, DATASETS};

const IRIS_CSV: &str = include_str!("../../data/iris.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    #[default]
    Real,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    #[serde(default)]
    pub kind: ColumnKind,
    /// Levels of a categorical column, in encoding order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl Column {
    pub fn real(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Real,
            categories: Vec::new(),
        }
    }

    pub fn integer(name: &str) -> Self {
        Self {
            kind: ColumnKind::Integer,
            ..Self::real(name)
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn width(&self) -> usize {
        match self.kind {
            ColumnKind::Categorical => self.categories.len(),
            _ => 1,
        }
    }
}

/// Schema of a CSV file. `columns` lists every column in the file; the ones
/// named in `targets` are outputs and the rest are inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub problem: ProblemKind,
    pub columns: Vec<Column>,
    pub targets: Vec<String>,
    pub batch_size: usize,
    /// Location of the CSV. When absent, `<data_dir>/<name>.csv` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(format!("{}: {m}", self.name)));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.targets.is_empty() {
            return bad("no target column".into());
        }
        let mut seen = HashMap::new();
        for c in &self.columns {
            if seen.insert(c.name.as_str(), ()).is_some() {
                return bad(format!("duplicate column '{}'", c.name));
            }
            if c.kind == ColumnKind::Categorical && c.categories.is_empty() {
                return bad(format!("categorical column '{}' has no categories", c.name));
            }
        }
        for t in &self.targets {
            let Some(col) = self.column(t) else {
                return bad(format!("target '{t}' is not a column"));
            };
            match (self.problem, col.kind) {
                (ProblemKind::Classification, ColumnKind::Categorical) => {}
                (ProblemKind::Classification, _) => {
                    return bad(format!("classification target '{t}' must be categorical"))
                }
                (ProblemKind::Regression, ColumnKind::Categorical) => {
                    return bad(format!("regression target '{t}' must be numeric"))
                }
                (ProblemKind::Regression, _) => {}
            }
        }
        if self.problem == ProblemKind::Classification && self.targets.len() != 1 {
            return bad("classification needs exactly one target".into());
        }
        if self.input_columns().next().is_none() {
            return bad("no input columns".into());
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn input_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns
            .iter()
            .filter(|c| !self.targets.contains(&c.name))
    }

    /// Width of the encoded input matrix.
    pub fn input_width(&self) -> usize {
        self.input_columns().map(Column::width).sum()
    }

    /// Number of classes, for classification.
    pub fn classes(&self) -> Option<usize> {
        match self.problem {
            ProblemKind::Classification => {
                self.column(&self.targets[0]).map(|c| c.categories.len())
            }
            ProblemKind::Regression => None,
        }
    }

    /// Number of target outputs the model must produce. Two-class problems
    /// use one sigmoid unit.
    pub fn output_width(&self) -> usize {
        match self.classes() {
            Some(2) => 1,
            Some(c) => c,
            None => self.targets.len(),
        }
    }

    pub fn resolve_path(&self, data_dir: &Path) -> PathBuf {
        self.path
            .clone()
            .unwrap_or_else(|| data_dir.join(format!("{}.csv", self.name)))
    }
}

/// The bundled iris schema.
pub fn iris_spec() -> DatasetSpec {
    DatasetSpec {
        name: "iris".into(),
        problem: ProblemKind::Classification,
        columns: vec![
            Column::real("sepal_length"),
            Column::real("sepal_width"),
            Column::real("petal_length"),
            Column::real("petal_width"),
            Column::categorical("species", &["setosa", "versicolor", "virginica"]),
        ],
        targets: vec!["species".into()],
        batch_size: 16,
        path: None,
    }
}

/// Encoded inputs and targets, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select(rows),
        }
    }

    /// The whole dataset as a single batch.
    pub fn to_batch(&self) -> Result<Batch> {
        Batch::new(self.inputs.clone(), self.targets.clone())
    }
}

/// Encoded but unscaled data, with the columns that still need scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub data: Dataset,
    /// Per encoded input column: true for numeric columns.
    pub numeric_inputs: Vec<bool>,
}

impl RawData {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> RawData {
        RawData {
            data: self.data.select(rows),
            numeric_inputs: self.numeric_inputs.clone(),
        }
    }
}

/// Per-column `(min, max)` for numeric inputs and regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    inputs: Vec<Option<(f64, f64)>>,
    targets: Vec<(f64, f64)>,
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Maps into `[0, 1]`; a constant column maps to zero.
fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let range = hi - lo;
    if range > 0.0 {
        (v - lo) / range
    } else {
        0.0
    }
}

impl MinMaxScaler {
    pub fn fit(raw: &RawData) -> Self {
        let x = &raw.data.inputs;
        let inputs = raw
            .numeric_inputs
            .iter()
            .enumerate()
            .map(|(j, &numeric)| numeric.then(|| min_max(x.iter_rows().map(|r| r[j]))))
            .collect();
        let targets = match &raw.data.targets {
            Targets::Values(t) => (0..t.cols())
                .map(|j| min_max(t.iter_rows().map(|r| r[j])))
                .collect(),
            Targets::Classes(_) => Vec::new(),
        };
        Self { inputs, targets }
    }

    /// Scales `raw`. With `clamp`, values outside the fitted range are
    /// clipped to `[0, 1]`.
    pub fn transform(&self, raw: &RawData, clamp: bool) -> Dataset {
        let fix = |v: f64| if clamp { v.clamp(0.0, 1.0) } else { v };
        let mut inputs = raw.data.inputs.clone();
        for i in 0..inputs.rows() {
            for (v, range) in inputs.row_mut(i).iter_mut().zip(&self.inputs) {
                if let Some(r) = range {
                    *v = fix(scale(*v, *r));
                }
            }
        }
        let targets = match &raw.data.targets {
            Targets::Values(t) => {
                let mut t = t.clone();
                for i in 0..t.rows() {
                    for (v, r) in t.row_mut(i).iter_mut().zip(&self.targets) {
                        *v = fix(scale(*v, *r));
                    }
                }
                Targets::Values(t)
            }
            classes => classes.clone(),
        };
        Dataset { inputs, targets }
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "?"
}

/// Parses and one-hot encodes a CSV file without scaling.
pub fn read_csv(path: &Path, spec: &DatasetSpec) -> Result<RawData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, spec)
}

pub fn read_csv_from<R: Read>(reader: R, spec: &DatasetSpec) -> Result<RawData> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    for name in &header {
        if spec.column(name).is_none() {
            return Err(Error::Schema(format!("unexpected column '{name}'")));
        }
    }
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let inputs: Vec<(&Column, usize)> = spec
        .input_columns()
        .map(|c| Ok((c, position(&c.name)?)))
        .collect::<Result<_>>()?;
    let targets: Vec<(&Column, usize)> = spec
        .targets
        .iter()
        .map(|t| Ok((spec.column(t).expect("validated"), position(t)?)))
        .collect::<Result<_>>()?;

    let width = spec.input_width();
    let mut x = Vec::new();
    let mut classes = Vec::new();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based file line, counting the header
        let line = r + 2;
        let cell = |idx: usize, col: &Column| -> Result<&str> {
            let v = record.get(idx).unwrap_or("");
            if is_missing(v) {
                return Err(Error::Data {
                    row: line,
                    column: col.name.clone(),
                    message: "missing value".into(),
                });
            }
            Ok(v)
        };
        for &(col, idx) in &inputs {
            encode_cell(cell(idx, col)?, col, line, &mut x)?;
        }
        for &(col, idx) in &targets {
            let v = cell(idx, col)?;
            match col.kind {
                ColumnKind::Categorical => classes.push(category_index(v, col, line)?),
                _ => values.push(parse_number(v, col, line)?),
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Schema(format!("{}: no data rows", spec.name)));
    }

    let numeric_inputs = inputs
        .iter()
        .flat_map(|(c, _)| std::iter::repeat_n(c.kind != ColumnKind::Categorical, c.width()))
        .collect();
    let targets = match spec.problem {
        ProblemKind::Classification => Targets::Classes(classes),
        ProblemKind::Regression => Targets::Values(Matrix::new(rows, spec.targets.len(), values)?),
    };
    Ok(RawData {
        data: Dataset {
            inputs: Matrix::new(rows, width, x)?,
            targets,
        },
        numeric_inputs,
    })
}

fn parse_number(v: &str, col: &Column, row: usize) -> Result<f64> {
    let err = |m: &str| Error::Data {
        row,
        column: col.name.clone(),
        message: format!("{m} '{v}'"),
    };
    let parsed = match col.kind {
        ColumnKind::Integer => v
            .parse::<i64>()
            .map(|i| i as f64)
            .map_err(|_| err("not an integer")),
        _ => v.parse::<f64>().map_err(|_| err("not a number")),
    }?;
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(err("non-finite value"))
    }
}

fn category_index(v: &str, col: &Column, row: usize) -> Result<usize> {
    col.categories
        .iter()
        .position(|c| c == v)
        .ok_or_else(|| Error::Data {
            row,
            column: col.name.clone(),
            message: format!("unknown category '{v}'"),
        })
}

fn encode_cell(v: &str, col: &Column, row: usize, out: &mut Vec<f64>) -> Result<()> {
    match col.kind {
        ColumnKind::Categorical => {
            let k = category_index(v, col, row)?;
            out.extend((0..col.categories.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
        }
        _ => out.push(parse_number(v, col, row)?),
    }
    Ok(())
}

/// Reads, encodes and min-max scales a CSV using statistics from every row.
pub fn load_csv(path: &Path, spec: &DatasetSpec) -> Result<Dataset> {
    let raw = read_csv(path, spec)?;
    Ok(MinMaxScaler::fit(&raw).transform(&raw, false))
}

/// The bundled iris data, encoded but unscaled.
pub fn iris() -> RawData {
    read_csv_from(IRIS_CSV.as_bytes(), &iris_spec()).expect("bundled iris parses")
}

/// Train/test row indices: shuffled by `seed`, then the first
/// `ceil(fraction * n)` rows train.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Split, 0));
    // Round away representation error before taking the ceiling.
    let exact = train_fraction * n as f64;
    let train = ((exact * 1e9).round() / 1e9).ceil() as usize;
    let test = idx.split_off(train.min(n));
    Ok((idx, test))
}

pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(dataset.len(), train_fraction, seed)?;
    Ok((dataset.select(&a), dataset.select(&b)))
}

/// Splits raw data, fits scaling on the training rows only and applies it to
/// both parts. Test values outside the training range are clamped.
pub fn prepare(raw: &RawData, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(raw.len(), train_fraction, seed)?;
    let (train, test) = (raw.select(&a), raw.select(&b));
    let scaler = MinMaxScaler::fit(&train);
    Ok((
        scaler.transform(&train, false),
        scaler.transform(&test, true),
    ))
}

pub fn batch_count(rows: usize, batch_size: usize) -> usize {
    rows.div_ceil(batch_size.max(1))
}

/// One epoch of mini-batches over a seeded shuffle; the last batch may be
/// short.
pub fn batches(dataset: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut rng::stream(epoch_seed, Purpose::Shuffle, 0));
    idx.chunks(batch_size)
        .map(|rows| {
            let part = dataset.select(rows);
            Batch::new(part.inputs, part.targets)
        })
        .collect()
}
