//! Stable bridges pinned at both ends, compared with free paths from the same
//! start, and dumped to CSV for plotting.

use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};
use fracheat::sampler::{sample_bridge_skeleton, sample_path_skeleton, write_skeletons, BridgeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fracheat::Result<()> {
    let index = StabilityIndex::new(1.2, 2)?;
    let kernel = Kernel::new(index)?;
    let disk = Shape::unit_ball(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (x, y, t) = ([0.0, 0.0], [0.8, 0.0], 0.5);
    let times: Vec<f64> = (1..20).map(|j| t * j as f64 / 20.0 * 0.95).collect();

    let mut bridges = Vec::new();
    let mut acceptance = 0.0;
    let mut occupation = 0.0;
    for _ in 0..200 {
        let b = sample_bridge_skeleton(&x, &y, t, &times, &kernel, &BridgeConfig::default(), &mut rng)?;
        acceptance += b.acceptance / 200.0;
        occupation += b.path.occupation_fraction(&disk) / 200.0;
        bridges.push(b.path);
    }
    let mut free_occupation = 0.0;
    for _ in 0..200 {
        let p = sample_path_skeleton(&x, t, 20, index, &mut rng)?;
        free_occupation += p.occupation_fraction(&disk) / 200.0;
    }
    println!("mean acceptance rate         {acceptance:.3}");
    println!("occupation fraction, bridge  {occupation:.3}");
    println!("occupation fraction, free    {free_occupation:.3}");

    let path = std::env::temp_dir().join("fracheat-bridges.csv");
    write_skeletons(&bridges[..10], std::fs::File::create(&path)?)?;
    println!("10 bridges written to {}", path.display());
    Ok(())
}
