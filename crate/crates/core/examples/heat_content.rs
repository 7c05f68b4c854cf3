//! Heat content H(t) of the unit square under Brownian motion, three ways,
//! against the closed form, then the same disk for several α.

use fracheat::functionals::{box_heat_content_exact, heat_content, FunctionalConfig, HeatMethod};
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};

fn main() -> fracheat::Result<()> {
    let square = Shape::unit_cube(2)?;
    let bm = Kernel::new(StabilityIndex::new(2.0, 2)?)?;
    println!("unit square, alpha = 2");
    for t in [0.001, 0.01, 0.1] {
        let exact = box_heat_content_exact(&square, t)?;
        print!("  t={t:<6} exact {exact:.8}");
        for method in [HeatMethod::Indicator, HeatMethod::Covariogram, HeatMethod::Quadrature] {
            let cfg = FunctionalConfig { n_samples: 200_000, heat_method: method, ..Default::default() };
            let h = heat_content(&square, &bm, t, &cfg)?.h;
            print!("  {} {:.8}±{:.0e}", method.name(), h.value, h.stderr);
        }
        println!();
    }

    let disk = Shape::unit_ball(2)?;
    println!("\nunit disk, deficit |Ω| - H(t)");
    for alpha in [0.5, 1.0, 1.5, 2.0] {
        let k = Kernel::new(StabilityIndex::new(alpha, 2)?)?;
        let row: Vec<String> = [1e-4, 1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&t| {
                let d = heat_content(&disk, &k, t, &FunctionalConfig::default()).unwrap().deficit;
                format!("{:.6e}", d.value)
            })
            .collect();
        println!("  alpha={alpha:<4} {}", row.join("  "));
    }
    Ok(())
}
