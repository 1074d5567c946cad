//! Tabular datasets and the source/target split rules used for the
//! covariate-shift experiments.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::mlp::TargetVec;

const IRIS_CSV: &str = include_str!("../../data/iris.csv");

/// Names accepted by [`DatasetSpec::builtin`].
pub const BUILTIN_DATASETS: [&str; 7] = [
    "iris",
    "iris-noshift",
    "diabetes",
    "abalone",
    "abalone-noshift",
    "iowa",
    "mosquito",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Regress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    BundledIris,
    Csv(PathBuf),
}

/// Which rows go to training when splitting on a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cut {
    /// `value < c`.
    Below(f64),
    /// `value <= c`.
    AtMost(f64),
    /// `value <= median(column)`.
    AtMostMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// Every row is in both sets; the test copy has `offset` added to `columns`.
    Offset { columns: Vec<String>, offset: f64 },
    /// Every row is in both sets, unchanged.
    Identity,
    /// Rows passing `cut` on `column` train, the rest test.
    Threshold { column: String, cut: Cut },
    /// Even rows train, odd rows test.
    Interleave,
    /// Rows whose year (numeric, or the leading `YYYY` of a date) is at most
    /// `last_train_year` train, later rows test.
    YearThrough { column: String, last_train_year: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub source: DataSource,
    pub features: Vec<String>,
    pub label: String,
    pub task: Task,
    pub split: SplitRule,
    /// Integer-valued feature columns that receive jitter before streaming.
    pub noise_columns: Vec<String>,
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl DatasetSpec {
    /// A named experiment. Every dataset except Iris needs a CSV path.
    ///
    /// Expected headers:
    /// - diabetes (Pima): `Glucose, BMI, Age, Outcome`
    /// - abalone: `Length, Diameter, Height, Whole weight, Shucked weight,
    ///   Viscera weight, Shell weight, Rings`
    /// - iowa (Kaggle house prices `train.csv`): `GrLivArea, OverallQual,
    ///   YearBuilt, SalePrice`
    /// - mosquito: `date, mosquito_Indicator, rain(mm), mean_T(℃), min_T(℃),
    ///   max_T(℃)`
    pub fn builtin(name: &str, csv: Option<&Path>) -> Result<Self, PipelineError> {
        let iris_features = strings(&["sepal_length", "sepal_width", "petal_length", "petal_width"]);
        let needs_csv = |name: &str| -> Result<DataSource, PipelineError> {
            csv.map(|p| DataSource::Csv(p.to_path_buf()))
                .ok_or_else(|| PipelineError::MissingCsv(name.to_string()))
        };
        let abalone_features = strings(&[
            "Length",
            "Diameter",
            "Height",
            "Whole weight",
            "Shucked weight",
            "Viscera weight",
            "Shell weight",
        ]);
        let spec = match name {
            "iris" | "iris-noshift" => Self {
                name: name.to_string(),
                source: csv.map_or(DataSource::BundledIris, |p| DataSource::Csv(p.to_path_buf())),
                features: iris_features,
                label: "species".into(),
                task: Task::Classify,
                split: if name == "iris" {
                    SplitRule::Offset {
                        columns: strings(&["petal_length", "petal_width"]),
                        offset: 5.0,
                    }
                } else {
                    SplitRule::Identity
                },
                noise_columns: vec![],
            },
            "diabetes" => Self {
                name: name.into(),
                source: needs_csv(name)?,
                features: strings(&["Glucose", "BMI"]),
                label: "Outcome".into(),
                task: Task::Classify,
                split: SplitRule::Threshold {
                    column: "Age".into(),
                    cut: Cut::Below(24.0),
                },
                noise_columns: strings(&["Glucose"]),
            },
            "abalone" | "abalone-noshift" => Self {
                name: name.into(),
                source: needs_csv(name)?,
                features: abalone_features,
                label: "Rings".into(),
                task: Task::Regress,
                split: if name == "abalone" {
                    SplitRule::Threshold {
                        column: "Whole weight".into(),
                        cut: Cut::AtMostMedian,
                    }
                } else {
                    SplitRule::Interleave
                },
                noise_columns: vec![],
            },
            "iowa" => Self {
                name: name.into(),
                source: needs_csv(name)?,
                features: strings(&["GrLivArea", "OverallQual"]),
                label: "SalePrice".into(),
                task: Task::Regress,
                split: SplitRule::Threshold {
                    column: "YearBuilt".into(),
                    cut: Cut::AtMost(2000.0),
                },
                noise_columns: strings(&["GrLivArea", "OverallQual"]),
            },
            "mosquito" => Self {
                name: name.into(),
                source: needs_csv(name)?,
                features: strings(&["rain(mm)", "mean_T(℃)", "min_T(℃)", "max_T(℃)"]),
                label: "mosquito_Indicator".into(),
                task: Task::Regress,
                split: SplitRule::YearThrough {
                    column: "date".into(),
                    last_train_year: 2018,
                },
                noise_columns: vec![],
            },
            other => {
                return Err(PipelineError::UnknownDataset {
                    name: other.to_string(),
                    valid: BUILTIN_DATASETS.join(", "),
                })
            }
        };
        Ok(spec)
    }
}

/// A headered table of raw string cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| PipelineError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| PipelineError::Csv(e.to_string()))?;
        Ok(Self { headers, rows })
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn column_index(&self, name: &str) -> Result<usize, PipelineError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::MissingColumn(name.to_string()))
    }

    fn numeric(&self, row: usize, col: usize) -> Result<f64, PipelineError> {
        let cell = &self.rows[row][col];
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| PipelineError::BadCell {
                row: row + 2,
                column: self.headers[col].clone(),
                value: cell.clone(),
            })
    }

    fn year(&self, row: usize, col: usize) -> Result<i32, PipelineError> {
        let cell = &self.rows[row][col];
        let digits: String = cell.chars().take_while(|c| c.is_ascii_digit()).collect();
        match digits.len() {
            4 => Ok(digits.parse().expect("four ascii digits")),
            _ => cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0)
                .map(|v| v as i32)
                .ok_or_else(|| PipelineError::BadCell {
                    row: row + 2,
                    column: self.headers[col].clone(),
                    value: cell.clone(),
                }),
        }
    }
}

/// Source and target sides of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub name: String,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub x_train: Array2<f64>,
    pub y_train: TargetVec,
    pub x_test: Array2<f64>,
    pub y_test: TargetVec,
    /// Class names in label-index order (classification only).
    pub classes: Vec<String>,
    /// Feature indices that receive jitter.
    pub noise_columns: Vec<usize>,
}

impl Split {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Loads the source and applies the split rule.
pub fn load_split(spec: &DatasetSpec) -> Result<Split, PipelineError> {
    let table = match &spec.source {
        DataSource::BundledIris => Table::parse(IRIS_CSV)?,
        DataSource::Csv(path) => Table::read(path)?,
    };
    split_table(spec, &table)
}

pub fn split_table(spec: &DatasetSpec, table: &Table) -> Result<Split, PipelineError> {
    let feature_cols = spec
        .features
        .iter()
        .map(|f| table.column_index(f))
        .collect::<Result<Vec<_>, _>>()?;
    let label_col = table.column_index(&spec.label)?;
    let noise_columns = spec
        .noise_columns
        .iter()
        .map(|c| {
            spec.features
                .iter()
                .position(|f| f == c)
                .ok_or_else(|| PipelineError::MissingColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = table.rows.len();
    let mut features = Array2::zeros((n, feature_cols.len()));
    for r in 0..n {
        for (j, &c) in feature_cols.iter().enumerate() {
            features[[r, j]] = table.numeric(r, c)?;
        }
    }

    let (labels, classes) = match spec.task {
        Task::Classify => {
            let names: BTreeSet<&str> = table.rows.iter().map(|row| row[label_col].as_str()).collect();
            let classes: Vec<String> = names.into_iter().map(str::to_string).collect();
            let idx = table
                .rows
                .iter()
                .map(|row| classes.binary_search(&row[label_col]).expect("collected above"))
                .collect();
            (TargetVec::Classes(idx), classes)
        }
        Task::Regress => {
            let values = (0..n)
                .map(|r| table.numeric(r, label_col))
                .collect::<Result<Vec<_>, _>>()?;
            (TargetVec::Values(values), vec![])
        }
    };

    let all: Vec<usize> = (0..n).collect();
    let (train_rows, test_rows, offset) = match &spec.split {
        SplitRule::Offset { columns, offset } => {
            let cols = columns
                .iter()
                .map(|c| {
                    spec.features
                        .iter()
                        .position(|f| f == c)
                        .ok_or_else(|| PipelineError::MissingColumn(c.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (all.clone(), all, Some((cols, *offset)))
        }
        SplitRule::Identity => (all.clone(), all, None),
        SplitRule::Interleave => {
            let (train, test): (Vec<usize>, Vec<usize>) = all.into_iter().partition(|r| r % 2 == 0);
            (train, test, None)
        }
        SplitRule::Threshold { column, cut } => {
            let c = table.column_index(column)?;
            let values = (0..n).map(|r| table.numeric(r, c)).collect::<Result<Vec<_>, _>>()?;
            let passes: Box<dyn Fn(f64) -> bool> = match *cut {
                Cut::Below(t) => Box::new(move |v| v < t),
                Cut::AtMost(t) => Box::new(move |v| v <= t),
                Cut::AtMostMedian => {
                    if values.is_empty() {
                        return Err(PipelineError::EmptySplit { side: "train" });
                    }
                    let median = crate::metrics::empirical_quantile(&values, 0.5).expect("finite, nonempty");
                    Box::new(move |v| v <= median)
                }
            };
            let (train, test): (Vec<usize>, Vec<usize>) = all.into_iter().partition(|&r| passes(values[r]));
            (train, test, None)
        }
        SplitRule::YearThrough {
            column,
            last_train_year,
        } => {
            let c = table.column_index(column)?;
            let years = (0..n).map(|r| table.year(r, c)).collect::<Result<Vec<_>, _>>()?;
            let (train, test): (Vec<usize>, Vec<usize>) = all.into_iter().partition(|&r| years[r] <= *last_train_year);
            (train, test, None)
        }
    };

    if train_rows.is_empty() {
        return Err(PipelineError::EmptySplit { side: "train" });
    }
    if test_rows.is_empty() {
        return Err(PipelineError::EmptySplit { side: "test" });
    }

    let x_train = features.select(ndarray::Axis(0), &train_rows);
    let mut x_test = features.select(ndarray::Axis(0), &test_rows);
    if let Some((cols, offset)) = offset {
        for c in cols {
            x_test.column_mut(c).mapv_inplace(|v| v + offset);
        }
    }

    Ok(Split {
        name: spec.name.clone(),
        task: spec.task,
        feature_names: spec.features.clone(),
        x_train,
        y_train: labels.select(&train_rows),
        x_test,
        y_test: labels.select(&test_rows),
        classes,
        noise_columns,
    })
}

/// Floor applied to the noise scale of constant columns, in column units.
pub const NOISE_SD_FLOOR: f64 = 1e-6;

/// Adds `N(0, (sigma_frac * sd_j)^2)` noise to each listed column `j`, where
/// `sd_j` is the column's sample standard deviation (floored at
/// [`NOISE_SD_FLOOR`]). Other columns are untouched.
pub fn inject_noise<R: Rng + ?Sized>(
    x: &Array2<f64>,
    columns: &[usize],
    sigma_frac: f64,
    rng: &mut R,
) -> Result<Array2<f64>, PipelineError> {
    if !(sigma_frac.is_finite() && sigma_frac > 0.0) {
        return Err(PipelineError::InvalidConfig(format!(
            "sigma_frac must be > 0, got {sigma_frac}"
        )));
    }
    let mut out = x.clone();
    for &c in columns {
        if c >= x.ncols() {
            return Err(PipelineError::Dimension {
                expected: x.ncols(),
                got: c + 1,
            });
        }
        let col = x.column(c);
        let n = col.len();
        let sd = if n > 1 {
            let mean = col.sum() / n as f64;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let sigma = if sd > 0.0 { sigma_frac * sd } else { NOISE_SD_FLOOR };
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        for v in out.column_mut(c) {
            *v += normal.sample(rng);
        }
    }
    Ok(out)
}
