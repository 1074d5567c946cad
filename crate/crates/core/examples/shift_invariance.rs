//! The tree's response does not depend on how far or at what scale the
//! distribution moves: N(0, 5) -> N(250, 5) and N(50, 5) -> N(250, 5) give
//! near-identical recovery, and rescaling the whole stream by any a > 0
//! reproduces the exact same interval sequence.
//!
//! Usage: cargo run --release --example shift_invariance

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xenovert::distgen::{run_univariate, DistSpec, RunConfig, ShiftSchedule};
use xenovert::{Xenovert, XenovertConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phase = 200_000;
    let run = RunConfig {
        hi_window: 10_000,
        record_every: 20_000,
    };
    for source in ["normal:0,5", "normal:50,5"] {
        let schedule = ShiftSchedule::instant(source.parse()?, "normal:250,5".parse()?, phase)?;
        let traj = run_univariate(&schedule, XenovertConfig::default(), run, 1)?;
        let series: Vec<String> = traj.points.iter().map(|p| format!("{:.3}", p.hi_score)).collect();
        println!("{source:>12} -> normal:250,5  {}", series.join(" "));
    }

    let dist: DistSpec = "chi2:3".parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<f64> = (0..50_000).map(|_| dist.sample(&mut rng)).collect();
    let outputs = |a: f64| -> Result<Vec<usize>, xenovert::TreeError> {
        let mut tree = Xenovert::grow(XenovertConfig::with_levels(4))?;
        xs.iter().map(|&x| tree.update_convert(a * x)).collect()
    };
    let base = outputs(1.0)?;
    for a in [1e-3, 7.5, 1e3] {
        println!("scale {a:>7}: identical interval sequence = {}", outputs(a)? == base);
    }
    Ok(())
}
