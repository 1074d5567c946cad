use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bank::fit_bank;
use super::dataset::{inject_noise, load_split, DatasetSpec, Split, Task};
use super::PipelineError;
use crate::metrics::{accuracy, mse, MeanSd};
use crate::mlp::{Head, MlpModel, TargetVec, TrainConfig};
use crate::qtree::XenovertConfig;

pub const RAW_ARM: &str = "mlp";
pub const XENOVERT_ARM: &str = "mlp+xenovert";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub xenovert: XenovertConfig,
    /// Shuffled passes over the training features when fitting the bank.
    pub passes: usize,
    /// Shuffled passes over the target features before the final in-order
    /// online pass that produces the evaluated outputs. 0 means the target
    /// stream is seen exactly once.
    pub adapt_passes: usize,
    /// Divide interval indices by `2^L` before feeding the network.
    pub normalize_quantized: bool,
    pub noise_sigma_frac: f64,
    pub hidden: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            xenovert: XenovertConfig::default(),
            passes: 1_000,
            adapt_passes: 1_000,
            normalize_quantized: false,
            noise_sigma_frac: 0.01,
            hidden: vec![200, 200],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub raw: f64,
    pub xenovert: f64,
    pub raw_epochs: usize,
    pub xenovert_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub experiment: ExperimentConfig,
    pub train: TrainConfig,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub task: Task,
    pub arms: Vec<ArmSummary>,
    pub config: ConfigEcho,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub per_seed: Vec<SeedOutcome>,
}

impl ExperimentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Columns `seed,mlp,mlp+xenovert,mlp_epochs,mlp+xenovert_epochs`.
    pub fn per_seed_csv(&self) -> String {
        let mut out = format!("seed,{RAW_ARM},{XENOVERT_ARM},{RAW_ARM}_epochs,{XENOVERT_ARM}_epochs\n");
        for s in &self.per_seed {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.seed, s.raw, s.xenovert, s.raw_epochs, s.xenovert_epochs
            ));
        }
        out
    }
}

/// Per-column mean and standard deviation from training data; constant
/// columns get unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

// RNG stream ids per seed.
const STREAM_NOISE: u64 = 1;
const STREAM_BANK: u64 = 2;
const STREAM_INIT: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn evaluate(model: &MlpModel, x: ArrayView2<f64>, truth: &TargetVec) -> Result<f64, PipelineError> {
    Ok(match truth {
        TargetVec::Classes(labels) => accuracy(&model.predict_classes(x)?, labels)?,
        TargetVec::Values(values) => mse(&model.predict_values(x)?, values)?,
    })
}

fn network_dims(split: &Split, hidden: &[usize]) -> (Vec<usize>, Head) {
    let (outputs, head) = match split.task {
        Task::Classify => (split.n_classes().max(2), Head::SoftmaxXent),
        Task::Regress => (1, Head::LinearMse),
    };
    let mut dims = vec![split.n_features()];
    dims.extend_from_slice(hidden);
    dims.push(outputs);
    (dims, head)
}

/// Both arms for one seed. Networks see source data only; the Xenovert arm
/// adapts its bank on the target features before inference.
pub fn run_seed(
    split: &Split,
    config: &ExperimentConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<SeedOutcome, PipelineError> {
    let mut noise_rng = rng_for(seed, STREAM_NOISE);
    let (x_train, x_test) = if split.noise_columns.is_empty() {
        (split.x_train.clone(), split.x_test.clone())
    } else {
        (
            inject_noise(
                &split.x_train,
                &split.noise_columns,
                config.noise_sigma_frac,
                &mut noise_rng,
            )?,
            inject_noise(
                &split.x_test,
                &split.noise_columns,
                config.noise_sigma_frac,
                &mut noise_rng,
            )?,
        )
    };
    let (dims, head) = network_dims(split, &config.hidden);
    let train_cfg = TrainConfig { seed, ..*train };

    let scaler = Standardizer::fit(x_train.view());
    let mut raw = MlpModel::init(&dims, head, &mut rng_for(seed, STREAM_INIT))?;
    let raw_report = raw.train(scaler.apply(x_train.view()).view(), &split.y_train, &train_cfg)?;
    let raw_metric = evaluate(&raw, scaler.apply(x_test.view()).view(), &split.y_test)?;

    let mut bank_rng = rng_for(seed, STREAM_BANK);
    let mut bank = fit_bank(x_train.view(), config.xenovert, config.passes, &mut bank_rng)?;
    let scale = if config.normalize_quantized {
        1.0 / bank.interval_count() as f64
    } else {
        1.0
    };
    let to_input = |q: Array2<usize>| q.mapv(|v| v as f64 * scale);
    let q_train = to_input(bank.transform(x_train.view(), false)?);
    let mut xeno = MlpModel::init(&dims, head, &mut rng_for(seed, STREAM_INIT))?;
    let xeno_report = xeno.train(q_train.view(), &split.y_train, &train_cfg)?;

    bank.adapt(x_test.view(), config.adapt_passes, &mut bank_rng)?;
    let q_test = to_input(bank.transform(x_test.view(), true)?);
    let xeno_metric = evaluate(&xeno, q_test.view(), &split.y_test)?;

    Ok(SeedOutcome {
        seed,
        raw: raw_metric,
        xenovert: xeno_metric,
        raw_epochs: raw_report.epochs_run,
        xenovert_epochs: xeno_report.epochs_run,
    })
}

/// Runs every seed (in parallel on the current rayon pool) and aggregates
/// mean ± SD per arm.
pub fn run_on_split(
    split: &Split,
    config: &ExperimentConfig,
    train: &TrainConfig,
    seeds: &[u64],
    split_desc: String,
) -> Result<ExperimentReport, PipelineError> {
    if seeds.is_empty() {
        return Err(PipelineError::InvalidConfig("at least one seed is required".into()));
    }
    config.xenovert.validate()?;
    train.validate()?;
    if !(config.noise_sigma_frac.is_finite() && config.noise_sigma_frac > 0.0) {
        return Err(PipelineError::InvalidConfig(format!(
            "noise sigma_frac must be > 0, got {}",
            config.noise_sigma_frac
        )));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&seed| run_seed(split, config, train, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let metric = match split.task {
        Task::Classify => "accuracy",
        Task::Regress => "mse",
    };
    let summarize = |name: &str, values: Vec<f64>| {
        let s = MeanSd::of(&values).expect("nonempty");
        ArmSummary {
            name: name.to_string(),
            metric: metric.to_string(),
            mean: s.mean,
            sd: s.sd,
            n_seeds: s.n,
        }
    };
    Ok(ExperimentReport {
        dataset: split.name.clone(),
        task: split.task,
        arms: vec![
            summarize(RAW_ARM, per_seed.iter().map(|s| s.raw).collect()),
            summarize(XENOVERT_ARM, per_seed.iter().map(|s| s.xenovert).collect()),
        ],
        config: ConfigEcho {
            experiment: config.clone(),
            train: *train,
            split: split_desc,
        },
        seeds: seeds.to_vec(),
        per_seed,
    })
}

pub fn run_experiment(
    spec: &DatasetSpec,
    config: &ExperimentConfig,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<ExperimentReport, PipelineError> {
    let split = load_split(spec)?;
    let desc = serde_json::to_string(&spec.split).expect("split rule serializes");
    run_on_split(&split, config, train, seeds, desc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn toy_split(task: Task, noise: bool) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x_train = Array2::from_shape_fn((40, 2), |_| rng.random_range(-1.0..1.0));
        let x_test = x_train.mapv(|v| v + 0.5);
        let (y_train, y_test, classes) = match task {
            Task::Classify => {
                let lab = |x: &Array2<f64>| x.rows().into_iter().map(|r| usize::from(r[0] > r[1])).collect();
                (
                    TargetVec::Classes(lab(&x_train)),
                    TargetVec::Classes(lab(&x_test)),
                    vec!["a".into(), "b".into()],
                )
            }
            Task::Regress => {
                let val = |x: &Array2<f64>| x.rows().into_iter().map(|r| r[0] - 2.0 * r[1]).collect();
                (
                    TargetVec::Values(val(&x_train)),
                    TargetVec::Values(val(&x_test)),
                    vec![],
                )
            }
        };
        Split {
            name: "toy".into(),
            task,
            feature_names: vec!["f0".into(), "f1".into()],
            x_train,
            y_train,
            x_test,
            y_test,
            classes,
            noise_columns: if noise { vec![1] } else { vec![] },
        }
    }

    fn quick() -> (ExperimentConfig, TrainConfig) {
        let cfg = ExperimentConfig {
            xenovert: XenovertConfig::with_levels(3),
            passes: 5,
            adapt_passes: 2,
            hidden: vec![8, 8],
            ..Default::default()
        };
        let train = TrainConfig {
            batch_size: 16,
            epochs: 5,
            ..Default::default()
        };
        (cfg, train)
    }

    #[test]
    fn standardizer_uses_training_statistics() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view());
        assert_eq!(s.apply(x.view()), array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(s.apply(array![[5.0, 6.0]].view()), array![[3.0, 1.0]]);
    }

    #[test]
    fn report_is_deterministic_for_fixed_seeds() {
        let (cfg, train) = quick();
        for task in [Task::Classify, Task::Regress] {
            let split = toy_split(task, true);
            let a = run_on_split(&split, &cfg, &train, &[1, 2, 3], "toy".into()).unwrap();
            let b = run_on_split(&split, &cfg, &train, &[1, 2, 3], "toy".into()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.per_seed_csv(), b.per_seed_csv());
            assert_eq!(a.arms.len(), 2);
            assert!(a.arms.iter().all(|arm| arm.n_seeds == 3 && arm.mean.is_finite()));
        }
    }

    #[test]
    fn single_seed_reports_zero_sd() {
        let (cfg, train) = quick();
        let report = run_on_split(&toy_split(Task::Classify, false), &cfg, &train, &[7], "toy".into()).unwrap();
        let arm = report.arm(XENOVERT_ARM).unwrap();
        assert_eq!((arm.sd, arm.n_seeds), (0.0, 1));
        assert_eq!(arm.metric, "accuracy");
        assert_eq!(report.per_seed_csv().lines().count(), 2);
    }

    #[test]
    fn report_json_has_expected_fields() {
        let (cfg, train) = quick();
        let report = run_on_split(&toy_split(Task::Regress, false), &cfg, &train, &[0, 1], "toy".into()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&report).unwrap();
        for key in ["dataset", "task", "arms", "config", "seeds"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["arms"][0]["metric"], "mse");
        assert_eq!(v["config"]["experiment"]["passes"], 5);
    }

    #[test]
    fn invalid_configs_rejected() {
        let (cfg, train) = quick();
        let split = toy_split(Task::Classify, false);
        assert!(matches!(
            run_on_split(&split, &cfg, &train, &[], "toy".into()),
            Err(PipelineError::InvalidConfig(_))
        ));
        let bad = ExperimentConfig {
            noise_sigma_frac: 0.0,
            ..cfg.clone()
        };
        assert!(run_on_split(&split, &bad, &train, &[0], "toy".into()).is_err());
        let bad_tree = ExperimentConfig {
            xenovert: XenovertConfig {
                levels: 0,
                ..cfg.xenovert
            },
            ..cfg
        };
        assert!(matches!(
            run_on_split(&split, &bad_tree, &train, &[0], "toy".into()),
            Err(PipelineError::Tree(_))
        ));
    }

    /// Scaling a feature column by a > 0 on both sides leaves the quantized
    /// matrices unchanged when trees start from q = 0.
    #[test]
    fn positive_scaling_preserves_quantized_features() {
        let split = toy_split(Task::Classify, false);
        let cfg = XenovertConfig::with_levels(4);
        let quantize = |xtr: &Array2<f64>, xte: &Array2<f64>| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut bank = fit_bank(xtr.view(), cfg, 20, &mut rng).unwrap();
            let tr = bank.transform(xtr.view(), false).unwrap();
            bank.adapt(xte.view(), 3, &mut rng).unwrap();
            (tr, bank.transform(xte.view(), true).unwrap())
        };
        let base = quantize(&split.x_train, &split.x_test);
        for a in [1e-3, 0.37, 8.0, 950.0] {
            let mut xtr = split.x_train.clone();
            let mut xte = split.x_test.clone();
            xtr.column_mut(0).mapv_inplace(|v| v * a);
            xte.column_mut(0).mapv_inplace(|v| v * a);
            assert_eq!(quantize(&xtr, &xte), base, "a = {a}");
        }
    }
}
