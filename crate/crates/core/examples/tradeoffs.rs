//! Two knobs: more levels means finer intervals but a noisier (lower) HI
//! score; a larger learning rate adapts faster but fluctuates more.
//!
//! Usage: cargo run --release --example tradeoffs

use xenovert::distgen::{run_univariate, RunConfig, ShiftSchedule, Trajectory};
use xenovert::XenovertConfig;

/// Steps from the shift until HI climbs back to `level` after its post-shift low.
fn steps_to_recover(traj: &Trajectory, t_shift: usize, level: f64) -> Option<usize> {
    let after: Vec<_> = traj.points.iter().filter(|p| p.t > t_shift).collect();
    let low = after
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.hi_score.total_cmp(&b.1.hi_score))?
        .0;
    after[low..].iter().find(|p| p.hi_score >= level).map(|p| p.t - t_shift)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phase = 200_000;
    let schedule = ShiftSchedule::instant("normal:2,4".parse()?, "normal:10,2".parse()?, phase)?;
    let run = RunConfig {
        hi_window: 10_000,
        record_every: 1_000,
    };

    println!("levels  intervals  plateau HI");
    for levels in [2, 3, 4, 5, 6, 7] {
        let traj = run_univariate(&schedule, XenovertConfig::with_levels(levels), run, 0)?;
        println!(
            "{levels:>6}  {:>9}  {:.3}",
            1usize << levels,
            traj.plateau(0.1).unwrap()
        );
    }

    println!("\nalpha    steps to HI >= 0.9 after shift  plateau HI  plateau spread");
    for alpha in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
        let cfg = XenovertConfig {
            learning_rate: alpha,
            ..XenovertConfig::default()
        };
        let traj = run_univariate(&schedule, cfg, run, 0)?;
        let tail: Vec<f64> = traj
            .points
            .iter()
            .filter(|p| p.t > 2 * phase - phase / 10)
            .map(|p| p.hi_score)
            .collect();
        let spread = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
        let rec = steps_to_recover(&traj, phase, 0.9).map_or("never".to_string(), |s| s.to_string());
        println!(
            "{alpha:<8} {rec:>30}  {:>10.3}  {spread:>14.3}",
            traj.plateau(0.1).unwrap()
        );
    }
    Ok(())
}
