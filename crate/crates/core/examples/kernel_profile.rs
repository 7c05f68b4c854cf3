//! Build the transition density of a stable process for which no closed form
//! exists, inspect it, and round-trip it through its CSV format.
//!
//! ```text
//! cargo run --release --example kernel_profile -- 0.75 3
//! ```

use fracheat::kernel::{
    beta_const, build_profile, fit_two_sided_constant, kernel_eval, origin_density, GridConfig, Kernel,
    KernelProfile, StabilityIndex,
};

fn main() -> fracheat::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map_or(Ok(1.5), |s| s.parse()).expect("alpha");
    let d: usize = args.next().map_or(Ok(2), |s| s.parse()).expect("dimension");
    let index = StabilityIndex::new(alpha, d)?;

    let profile = build_profile(index, &GridConfig::default())?;
    println!("alpha={alpha} d={d}");
    println!("  nodes              {}", profile.radii().len());
    println!("  switch to series   r = {:.4}", profile.switch_radius());
    println!("  total mass         {:.10}", profile.total_mass());
    println!("  p_1(0)             {:.12} (closed form {:.12})", profile.eval(0.0), origin_density(index));
    println!("  tail constant      {:.12} (beta = {:.12})", profile.tail_constant(), beta_const(index));

    let mut csv = Vec::new();
    profile.write_csv(&mut csv)?;
    let reloaded = Kernel::from_profile(KernelProfile::read_csv(csv.as_slice())?);
    let kernel = Kernel::from_profile(profile);
    println!("  two-sided constant {:.4}", fit_two_sided_constant(&kernel)?);

    println!("\n{:>8} {:>20} {:>20} {:>12}", "r", "p_1(r)", "P(|X_1| > r)", "reload diff");
    for r in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0] {
        let p = kernel_eval(&kernel, 1.0, r)?;
        let diff = (p - kernel_eval(&reloaded, 1.0, r)?).abs();
        println!("{r:>8} {p:>20.12e} {:>20.12e} {diff:>12.1e}", kernel.survival(1.0, r));
    }

    // the scaling relation gives p_t from p_1
    let t = 0.01;
    println!("\np_{t}(0.05) = {:.12e}", kernel_eval(&kernel, t, 0.05)?);
    Ok(())
}
