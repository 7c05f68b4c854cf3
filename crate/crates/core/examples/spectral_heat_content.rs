//! Spectral heat content Q(t): the mass of paths that never leave the
//! domain. The estimate only sees the path on a grid, so it is biased high;
//! doubling the grid shows how much.

use fracheat::functionals::{heat_content, spectral_heat_content, FunctionalConfig};
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};

fn main() -> fracheat::Result<()> {
    let disk = Shape::unit_ball(2)?;
    for alpha in [0.5, 1.5, 2.0] {
        let k = Kernel::new(StabilityIndex::new(alpha, 2)?)?;
        println!("alpha = {alpha}");
        for n_steps in [16, 64] {
            let cfg = FunctionalConfig { n_samples: 100_000, n_steps, ..Default::default() };
            let t = 0.05;
            let q = spectral_heat_content(&disk, &k, t, &cfg)?;
            let h = heat_content(&disk, &k, t, &cfg)?.h;
            println!(
                "  n={n_steps:<3} Q_n={:.5} Q_2n={:.5} gap={:.1e}  H={:.5}",
                q.coarse.value, q.fine.value, q.refinement_gap.value, h.value
            );
        }
    }
    Ok(())
}
