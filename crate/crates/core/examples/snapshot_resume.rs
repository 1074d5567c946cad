//! Persist a tree mid-stream, restore it, and check the restored copy
//! produces the same outputs as the original on the rest of the stream.
//!
//! Usage: cargo run --release --example snapshot_resume

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xenovert::distgen::DistSpec;
use xenovert::{Xenovert, XenovertConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dist: DistSpec = "multimodal:-3,1,0.5;3,1,0.5".parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let stream: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
    let (head, tail) = stream.split_at(60_000);

    let mut tree = Xenovert::grow(XenovertConfig::with_levels(4))?;
    for &x in head {
        tree.update(x)?;
    }
    let json = tree.to_json();
    println!(
        "snapshot: {} bytes, {} nodes, {} updates",
        json.len(),
        tree.node_count(),
        tree.updates_seen()
    );

    let mut resumed = Xenovert::from_json(&json)?;
    let a: Vec<usize> = tail.iter().map(|&x| tree.update_convert(x)).collect::<Result<_, _>>()?;
    let b: Vec<usize> = tail
        .iter()
        .map(|&x| resumed.update_convert(x))
        .collect::<Result<_, _>>()?;
    println!("replayed {} inputs: identical outputs = {}", tail.len(), a == b);
    println!("final states identical = {}", tree.to_json() == resumed.to_json());
    Ok(())
}
