//! Instant, gradual and recurring shifts from N(2, 4) to N(10, 2): the HI
//! score dips when the stream moves and climbs back as the tree re-adapts.
//!
//! Usage: cargo run --release --example univariate_shift [draws_per_phase]

use xenovert::distgen::{run_univariate, DistSpec, RunConfig, ShiftSchedule};
use xenovert::XenovertConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phase: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let source: DistSpec = "normal:2,4".parse()?;
    let target: DistSpec = "normal:10,2".parse()?;
    let schedules = [
        (
            "instant",
            ShiftSchedule::instant(source.clone(), target.clone(), phase)?,
        ),
        (
            "gradual",
            ShiftSchedule::gradual(source.clone(), target.clone(), phase)?,
        ),
        ("recurring", ShiftSchedule::recurring(source, target, phase)?),
    ];
    let run = RunConfig {
        hi_window: 10_000,
        record_every: phase / 20,
    };
    for (name, schedule) in &schedules {
        let traj = run_univariate(schedule, XenovertConfig::default(), run, 0)?;
        let series: Vec<String> = traj.points.iter().map(|p| format!("{:.2}", p.hi_score)).collect();
        println!(
            "{name:>9}: plateau {:.3} | {}",
            traj.plateau(0.1).unwrap_or(f64::NAN),
            series.join(" ")
        );
    }
    Ok(())
}
