//! α-perimeter of a disk and a rectangle by deterministic quadrature and by
//! Monte Carlo, for several values of α.

use fracheat::geometry::{alpha_perimeter, PerimeterMethod, Shape};

fn main() -> fracheat::Result<()> {
    let shapes = [
        Shape::unit_ball(2)?,
        "box:d=2,lo=0,0,hi=2,1".parse::<Shape>()?,
        Shape::unit_ball(3)?,
    ];
    let mc = PerimeterMethod::MonteCarlo { n_samples: 200_000, seed: 1 };
    println!("{:<28} {:>5} {:>18} {:>26}", "shape", "alpha", "quadrature", "monte carlo");
    for shape in &shapes {
        for alpha in [0.25, 0.5, 0.75] {
            let q = alpha_perimeter(shape, alpha, PerimeterMethod::Quadrature)?;
            let m = alpha_perimeter(shape, alpha, mc)?;
            println!(
                "{:<28} {alpha:>5} {:>18.10} {:>16.6} ± {:.1e}",
                shape.spec(),
                q.value,
                m.value,
                m.stderr
            );
        }
    }
    // as α → 0 the α-perimeter blows up like 1/α times |Ω| |S^{d-1}|
    Ok(())
}
