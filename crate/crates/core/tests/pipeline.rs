use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xenovert::mlp::{TargetVec, TrainConfig};
use xenovert::pipeline::{load_split, run_experiment, DatasetSpec, ExperimentConfig, Task, RAW_ARM, XENOVERT_ARM};
use xenovert::XenovertConfig;

/// Abalone-shaped CSV: same headers, Rings loosely tied to size.
fn abalone_fixture(rows: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out =
        String::from("Sex,Length,Diameter,Height,Whole weight,Shucked weight,Viscera weight,Shell weight,Rings\n");
    for _ in 0..rows {
        let size: f64 = rng.random_range(0.1..0.8);
        let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0.9..1.1);
        let whole = size * size * 2.0 * jitter(&mut rng);
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.3},{:.4},{:.4},{:.4},{:.4},{}\n",
            ["M", "F", "I"][rng.random_range(0..3)],
            size,
            size * 0.8 * jitter(&mut rng),
            size * 0.25 * jitter(&mut rng),
            whole,
            whole * 0.45 * jitter(&mut rng),
            whole * 0.2 * jitter(&mut rng),
            whole * 0.3 * jitter(&mut rng),
            (3.0 + 15.0 * size + rng.random_range(-1.0..1.0)).round()
        ));
    }
    out
}

fn tiny_config() -> (ExperimentConfig, TrainConfig) {
    (
        ExperimentConfig {
            xenovert: XenovertConfig::with_levels(4),
            passes: 20,
            adapt_passes: 20,
            normalize_quantized: true,
            hidden: vec![16, 16],
            ..Default::default()
        },
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            ..Default::default()
        },
    )
}

#[test]
fn abalone_split_on_whole_weight_median() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abalone.csv");
    std::fs::write(&path, abalone_fixture(201)).unwrap();
    let split = load_split(&DatasetSpec::builtin("abalone", Some(&path)).unwrap()).unwrap();
    assert_eq!(split.task, Task::Regress);
    assert_eq!(split.n_features(), 7);
    assert_eq!(split.x_train.nrows(), 101);
    assert_eq!(split.x_test.nrows(), 100);
    let whole = split.feature_names.iter().position(|f| f == "Whole weight").unwrap();
    let max_train = split.x_train.column(whole).fold(f64::MIN, |a, &b| a.max(b));
    assert!(split.x_test.column(whole).iter().all(|&w| w > max_train));
    assert!(matches!(split.y_train, TargetVec::Values(_)));

    let noshift = load_split(&DatasetSpec::builtin("abalone-noshift", Some(&path)).unwrap()).unwrap();
    assert_eq!((noshift.x_train.nrows(), noshift.x_test.nrows()), (101, 100));
}

#[test]
fn abalone_experiment_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abalone.csv");
    std::fs::write(&path, abalone_fixture(120)).unwrap();
    let (cfg, train) = tiny_config();
    let spec = DatasetSpec::builtin("abalone", Some(&path)).unwrap();
    let report = run_experiment(&spec, &cfg, &train, &[0, 1]).unwrap();
    for name in [RAW_ARM, XENOVERT_ARM] {
        let arm = report.arm(name).unwrap();
        assert_eq!(arm.metric, "mse");
        assert!(arm.mean.is_finite() && arm.mean >= 0.0);
    }
}

#[test]
fn iris_report_is_deterministic_and_shift_hurts_raw_arm() {
    let (cfg, train) = tiny_config();
    let spec = DatasetSpec::builtin("iris", None).unwrap();
    let a = run_experiment(&spec, &cfg, &train, &[5, 6]).unwrap();
    let b = run_experiment(&spec, &cfg, &train, &[5, 6]).unwrap();
    assert_eq!(a, b);

    // Same seeds, same source rows: only the target side differs.
    let c = run_experiment(
        &DatasetSpec::builtin("iris-noshift", None).unwrap(),
        &cfg,
        &train,
        &[5, 6],
    )
    .unwrap();
    assert!(a.arm(RAW_ARM).unwrap().mean < c.arm(RAW_ARM).unwrap().mean);
}

#[test]
fn missing_csv_and_bad_cells_are_reported() {
    assert!(DatasetSpec::builtin("diabetes", None).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diabetes.csv");
    std::fs::write(&path, "Glucose,BMI,Age,Outcome\n90,22.1,21,0\n150,x,40,1\n").unwrap();
    let err = load_split(&DatasetSpec::builtin("diabetes", Some(&path)).unwrap()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}
