//! Feed a stream through one tree and watch its boundaries settle on the
//! quantiles of the input distribution.
//!
//! Usage: cargo run --release --example quantize_stream

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use xenovert::metrics::{hi_score, IntervalHistogram};
use xenovert::{Xenovert, XenovertConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = XenovertConfig {
        levels: 3,
        learning_rate: 1e-4,
        ..XenovertConfig::default()
    };
    let mut tree = Xenovert::grow(config)?;
    let exp = Exp::new(1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut last = IntervalHistogram::new(tree.interval_count())?;
    let steps = 300_000;
    for t in 0..steps {
        let out = tree.update_convert(exp.sample(&mut rng))?;
        if t >= steps - 20_000 {
            last.record(out)?;
        }
    }

    // Exp(1) has quantile -ln(1 - p).
    let n = tree.node_count() as f64;
    println!("node  learned  true-quantile");
    for (i, q) in tree.quantile_values() {
        let p = (i + 1) as f64 / (n + 1.0);
        println!("{i:>4}  {q:>7.3}  {:>13.3}", -(1.0 - p).ln());
    }
    println!("interval counts over the last 20k inputs: {:?}", last.counts());
    println!("HI vs uniform: {:.3}", hi_score(&last)?);
    for x in [0.05, 0.5, 1.0, 3.0] {
        println!("convert({x}) = {}", tree.convert(x)?);
    }
    Ok(())
}
