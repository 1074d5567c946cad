//! The downstream network on its own: verify backprop against finite
//! differences, then fit a two-moons-style toy problem and a regression.
//!
//! Usage: cargo run --release --example mlp_training

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xenovert::metrics::{accuracy, mse};
use xenovert::mlp::{gradient_check, Head, MlpModel, TargetVec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Array2::from_shape_fn((400, 2), |_| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| usize::from(r[1] > (3.0_f64 * r[0]).sin() * 0.5_f64))
        .collect();
    let values: Vec<f64> = x.rows().into_iter().map(|r| r[0] * r[0] - r[1]).collect();

    let mut clf = MlpModel::init(&[2, 32, 32, 2], Head::SoftmaxXent, &mut rng)?;
    let check = gradient_check(
        &clf,
        x.slice(ndarray::s![..8, ..]),
        TargetVec::Classes(labels[..8].to_vec()).view(),
    )?;
    println!(
        "gradient check (softmax head): max relative error {:.2e}",
        check.max_rel_error
    );

    let cfg = TrainConfig {
        batch_size: 32,
        epochs: 300,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let report = clf.train(x.view(), &TargetVec::Classes(labels.clone()), &cfg)?;
    println!(
        "classifier: loss {:.3} -> {:.3}, train accuracy {:.3}",
        report.loss_curve[0],
        report.loss_curve.last().unwrap(),
        accuracy(&clf.predict_classes(x.view())?, &labels)?
    );

    let mut reg = MlpModel::init(&[2, 32, 32, 1], Head::LinearMse, &mut rng)?;
    reg.train(x.view(), &TargetVec::Values(values.clone()), &cfg)?;
    println!(
        "regressor: train MSE {:.4}",
        mse(&reg.predict_values(x.view())?, &values)?
    );
    Ok(())
}
