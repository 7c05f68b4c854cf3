//! Schrödinger heat content Ψ(t) with potential 1_Ω, by the Palm-sampled free
//! paths, by truncated plain Monte Carlo and by the decomposition into the
//! heat-content deficit and a bracketed remainder.

use fracheat::functionals::{psi, FunctionalConfig, PsiMethod};
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};

fn main() -> fracheat::Result<()> {
    let disk = Shape::unit_ball(2)?;
    let cfg = FunctionalConfig { n_samples: 50_000, n_steps: 32, ..Default::default() };
    for alpha in [0.5, 1.5] {
        let k = Kernel::new(StabilityIndex::new(alpha, 2)?)?;
        for t in [0.01, 0.1] {
            println!("alpha={alpha} t={t}   t|Ω| = {:.6e}", t * disk.volume());
            for method in [PsiMethod::Direct, PsiMethod::Truncated, PsiMethod::Decomposed] {
                let r = psi(&disk, &k, t, method, &cfg)?;
                println!(
                    "  {:<10} Ψ = {:.9e} ± {:.1e}   R in [{:.3e}, {:.3e}]",
                    method.name(),
                    r.psi.value,
                    r.psi.stderr,
                    r.r_lower,
                    r.r_upper
                );
            }
        }
    }
    Ok(())
}
