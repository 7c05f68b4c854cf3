//! Moments of the occupation time, T^(k)(t) = ∫ dx E_x[A_t^k], and the
//! remainder R(t). All three ratios T^(k)/t^k approach |Ω| as t → 0.

use fracheat::functionals::{occupation_moments, t_moment, FunctionalConfig};
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};

fn main() -> fracheat::Result<()> {
    let disk = Shape::unit_ball(2)?;
    let k = Kernel::new(StabilityIndex::new(1.5, 2)?)?;
    let cfg = FunctionalConfig { n_samples: 50_000, n_steps: 64, ..Default::default() };
    let vol = disk.volume();
    println!("{:>8} {:>10} {:>10} {:>10} {:>12}", "t", "T1/t|Ω|", "T2/t²|Ω|", "T3/t³|Ω|", "6R/t³|Ω|");
    for t in [1e-1, 1e-2, 1e-3] {
        let t1 = t_moment(&disk, &k, t, 1, &cfg)?.value;
        let t2 = t_moment(&disk, &k, t, 2, &cfg)?.value;
        let m = occupation_moments(&disk, &k, t, &cfg)?;
        println!(
            "{t:>8} {:>10.6} {:>10.6} {:>10.6} {:>12.6}",
            t1 / (t * vol),
            t2 / (t * t * vol),
            m.t3.value / (t.powi(3) * vol),
            6.0 * m.remainder.value / (t.powi(3) * vol)
        );
    }
    Ok(())
}
