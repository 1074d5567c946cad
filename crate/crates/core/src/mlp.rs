//! A small feed-forward network trained with plain mini-batch SGD.
//!
//! Hidden layers use ReLU. The output head is either softmax with
//! cross-entropy (classification) or a single linear unit with mean squared
//! error (regression).

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("layer dims must have at least an input and an output, all > 0: {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("linear MSE head needs exactly one output, got {0}")]
    RegressionOutputs(usize),
    #[error("input has {got} columns, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("{rows} rows but {targets} targets")]
    TargetCount { rows: usize, targets: usize },
    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("targets do not match the model head")]
    HeadMismatch,
    #[error("training set is empty")]
    EmptyData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed model payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    SoftmaxXent,
    LinearMse,
}

/// Supervision for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Owned targets, used when rows are gathered into mini-batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetVec {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl TargetVec {
    pub fn view(&self) -> Targets<'_> {
        match self {
            TargetVec::Classes(c) => Targets::Classes(c),
            TargetVec::Values(v) => Targets::Values(v),
        }
    }

    pub fn len(&self) -> usize {
        self.view().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> TargetVec {
        match self {
            TargetVec::Classes(c) => TargetVec::Classes(rows.iter().map(|&i| c[i]).collect()),
            TargetVec::Values(v) => TargetVec::Values(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    head: Head,
    layers: Vec<Layer>,
}

/// Gradients with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Stops training after `after_epoch` once the epoch loss improved by less
/// than `rel_tol` (relative) over the last `window` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauCap {
    pub after_epoch: usize,
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for PlateauCap {
    fn default() -> Self {
        Self {
            after_epoch: 500,
            window: 50,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub plateau_cap: Option<PlateauCap>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 200,
            epochs: 2000,
            learning_rate: 0.01,
            seed: 0,
            plateau_cap: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if self.batch_size == 0 {
            return Err(MlpError::InvalidConfig("batch_size must be > 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(MlpError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if let Some(cap) = self.plateau_cap {
            if cap.window == 0 || cap.rel_tol.is_nan() || cap.rel_tol < 0.0 {
                return Err(MlpError::InvalidConfig(format!("bad plateau cap {cap:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch loss per epoch, measured before each step.
    pub loss_curve: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_on_plateau: bool,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl MlpModel {
    /// Fan-in scaled zero-mean normal weights (`sd = sqrt(2 / fan_in)`), zero
    /// biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], head: Head, rng: &mut R) -> Result<Self, MlpError> {
        let mut model = Self::zeros(dims, head)?;
        for layer in &mut model.layers {
            let fan_in = layer.weights.nrows();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive sd");
            layer.weights.mapv_inplace(|_| normal.sample(rng));
        }
        Ok(model)
    }

    pub fn init_seeded(dims: &[usize], head: Head, seed: u64) -> Result<Self, MlpError> {
        Self::init(dims, head, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// All weights and biases zero.
    pub fn zeros(dims: &[usize], head: Head) -> Result<Self, MlpError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(MlpError::InvalidDims(dims.to_vec()));
        }
        let outputs = *dims.last().expect("len >= 2");
        if head == Head::LinearMse && outputs != 1 {
            return Err(MlpError::RegressionOutputs(outputs));
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            head,
            layers,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), MlpError> {
        if x.ncols() != self.input_dim() {
            return Err(MlpError::InputWidth {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn check_targets(&self, rows: usize, targets: Targets<'_>) -> Result<(), MlpError> {
        if targets.len() != rows {
            return Err(MlpError::TargetCount {
                rows,
                targets: targets.len(),
            });
        }
        match (self.head, targets) {
            (Head::SoftmaxXent, Targets::Classes(labels)) => {
                let classes = self.output_dim();
                if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
                    return Err(MlpError::LabelOutOfRange { label, classes });
                }
                Ok(())
            }
            (Head::LinearMse, Targets::Values(_)) => Ok(()),
            _ => Err(MlpError::HeadMismatch),
        }
    }

    /// Pre-activations of every layer and the post-activations feeding each
    /// layer. `inputs[0]` is `x`; the last entry of `pre` is the logits.
    fn forward_trace(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            inputs.push(a);
            a = if i + 1 < self.layers.len() { relu(&z) } else { z.clone() };
            pre.push(z);
        }
        (inputs, pre)
    }

    fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            a = if i + 1 < self.layers.len() { relu(&z) } else { z };
        }
        a
    }

    /// Class probabilities (softmax head) or one prediction per row (MSE head).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
        self.check_input(&x)?;
        let logits = self.logits(x);
        Ok(match self.head {
            Head::SoftmaxXent => softmax_rows(&logits),
            Head::LinearMse => logits,
        })
    }

    pub fn predict_classes(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, MlpError> {
        let probs = self.forward(x)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                    )
                    .0
            })
            .collect())
    }

    pub fn predict_values(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, MlpError> {
        Ok(self.forward(x)?.column(0).to_vec())
    }

    fn loss_from_logits(&self, logits: &Array2<f64>, targets: Targets<'_>) -> f64 {
        let n = logits.nrows() as f64;
        match targets {
            Targets::Classes(labels) => {
                let mut total = 0.0;
                for (row, &label) in logits.rows().into_iter().zip(labels) {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                    total += lse - row[label];
                }
                total / n
            }
            Targets::Values(values) => {
                logits
                    .column(0)
                    .iter()
                    .zip(values)
                    .map(|(p, y)| (p - y).powi(2))
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Mean cross-entropy (stabilized log-softmax) or mean squared error.
    pub fn loss(&self, x: ArrayView2<f64>, targets: Targets<'_>) -> Result<f64, MlpError> {
        self.check_input(&x)?;
        self.check_targets(x.nrows(), targets)?;
        Ok(self.loss_from_logits(&self.logits(x), targets))
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, targets: Targets<'_>) -> Result<(f64, Gradients), MlpError> {
        self.check_input(&x)?;
        self.check_targets(x.nrows(), targets)?;
        let n = x.nrows() as f64;
        let (inputs, pre) = self.forward_trace(x);
        let logits = pre.last().expect("at least one layer");
        let loss = self.loss_from_logits(logits, targets);

        let mut delta = match targets {
            Targets::Classes(labels) => {
                let mut d = softmax_rows(logits);
                for (mut row, &label) in d.rows_mut().into_iter().zip(labels) {
                    row[label] -= 1.0;
                }
                d / n
            }
            Targets::Values(values) => {
                let mut d = logits.clone();
                for (mut row, &y) in d.rows_mut().into_iter().zip(values) {
                    row[0] = 2.0 * (row[0] - y) / n;
                }
                d
            }
        };

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weights = inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                Zip::from(&mut back).and(&pre[i - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            layer.bias.scaled_add(-learning_rate, &g.bias);
        }
    }

    /// Mini-batch SGD over rows shuffled each epoch with `cfg.seed`.
    pub fn train(
        &mut self,
        x: ArrayView2<f64>,
        targets: &TargetVec,
        cfg: &TrainConfig,
    ) -> Result<TrainReport, MlpError> {
        cfg.validate()?;
        if x.nrows() == 0 {
            return Err(MlpError::EmptyData);
        }
        self.check_input(&x)?;
        self.check_targets(x.nrows(), targets.view())?;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut report = TrainReport {
            loss_curve: Vec::with_capacity(cfg.epochs),
            epochs_run: 0,
            stopped_on_plateau: false,
        };
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut weighted = 0.0;
            for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
                let bx = x.select(Axis(0), rows);
                let by = targets.select(rows);
                let (loss, grads) = self.loss_and_gradients(bx.view(), by.view())?;
                if !loss.is_finite() {
                    return Err(MlpError::NonFiniteLoss { epoch, batch, loss });
                }
                weighted += loss * rows.len() as f64;
                self.apply(&grads, cfg.learning_rate);
            }
            report.loss_curve.push(weighted / x.nrows() as f64);
            report.epochs_run = epoch + 1;

            if let Some(cap) = cfg.plateau_cap {
                let curve = &report.loss_curve;
                if epoch + 1 >= cap.after_epoch && curve.len() > cap.window {
                    let before = curve[curve.len() - 1 - cap.window];
                    let now = curve[curve.len() - 1];
                    if before - now <= cap.rel_tol * before.abs() {
                        report.stopped_on_plateau = true;
                        break;
                    }
                }
            }
        }
        Ok(report)
    }

    /// Parameters in save order: per layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    fn param_mut(&mut self, coord: ParamCoord) -> &mut f64 {
        let layer = &mut self.layers[coord.layer];
        match coord.kind {
            ParamKind::Weight => {
                let cols = layer.weights.ncols();
                &mut layer.weights[[coord.index / cols, coord.index % cols]]
            }
            ParamKind::Bias => &mut layer.bias[coord.index],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SavedModel {
            version: MODEL_VERSION,
            dims: self.dims.clone(),
            head: self.head,
            params: self.flat_params(),
        })
        .expect("finite parameters serialize")
    }

    pub fn from_json(payload: &str) -> Result<Self, MlpError> {
        let saved: SavedModel = serde_json::from_str(payload).map_err(|e| MlpError::Malformed(e.to_string()))?;
        if saved.version != MODEL_VERSION {
            return Err(MlpError::UnsupportedVersion(saved.version));
        }
        let mut model = Self::zeros(&saved.dims, saved.head)?;
        if saved.params.len() != model.param_count() {
            return Err(MlpError::Malformed(format!(
                "expected {} parameters, got {}",
                model.param_count(),
                saved.params.len()
            )));
        }
        let mut it = saved.params.into_iter();
        for layer in &mut model.layers {
            for w in layer.weights.iter_mut() {
                *w = it.next().expect("length checked");
            }
            for b in layer.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedModel {
    version: u32,
    dims: Vec<usize>,
    head: Head,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Location of one scalar parameter; `index` is row-major within the layer's
/// weight matrix or the position within its bias vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCoord {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter where the maximum was attained.
    pub worst: ParamCoord,
    pub analytic: f64,
    pub numeric: f64,
}

/// Step used by [`gradient_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares backprop against central finite differences over every
/// parameter: `|g_a - g_n| / max(|g_a| + |g_n|, 1e-8)`.
pub fn gradient_check(model: &MlpModel, x: ArrayView2<f64>, targets: Targets<'_>) -> Result<GradCheck, MlpError> {
    let (_, grads) = model.loss_and_gradients(x, targets)?;
    let mut probe = model.clone();
    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: ParamCoord {
            layer: 0,
            kind: ParamKind::Weight,
            index: 0,
        },
        analytic: 0.0,
        numeric: 0.0,
    };
    for (layer, g) in grads.layers.iter().enumerate() {
        let coords = g
            .weights
            .iter()
            .enumerate()
            .map(|(index, &v)| (ParamKind::Weight, index, v))
            .chain(g.bias.iter().enumerate().map(|(index, &v)| (ParamKind::Bias, index, v)));
        for (kind, index, analytic) in coords {
            let coord = ParamCoord { layer, kind, index };
            let original = *probe.param_mut(coord);
            *probe.param_mut(coord) = original + GRAD_CHECK_STEP;
            let plus = probe.loss(x, targets)?;
            *probe.param_mut(coord) = original - GRAD_CHECK_STEP;
            let minus = probe.loss(x, targets)?;
            *probe.param_mut(coord) = original;
            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if rel > result.max_rel_error {
                result = GradCheck {
                    max_rel_error: rel,
                    worst: coord,
                    analytic,
                    numeric,
                };
            }
        }
    }
    Ok(result)
}

/// Row `i` of `x` as a one-row matrix.
pub fn row(x: ArrayView2<f64>, i: usize) -> Array2<f64> {
    x.slice(s![i..i + 1, ..]).to_owned()
}
