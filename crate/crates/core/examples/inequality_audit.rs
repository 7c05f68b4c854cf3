//! Check every inequality between H, Q, Ψ, T^(k) and R on a grid, write the
//! rows to CSV, then show that a deliberately corrupted heat content is caught.

use fracheat::asymptotics::{inequality_audit, TGrid, VerifyConfig};
use fracheat::functionals::FunctionalConfig;
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};
use fracheat::output::{write_report_csv, Header};

fn main() -> fracheat::Result<()> {
    let square = Shape::unit_cube(2)?;
    let k = Kernel::new(StabilityIndex::new(1.5, 2)?)?;
    let grid = TGrid::log(1e-3, 1e-1, 6)?;
    let cfg = VerifyConfig {
        functional: FunctionalConfig { n_samples: 20_000, n_steps: 32, ..Default::default() },
        ..Default::default()
    };
    let report = inequality_audit(&square, &k, &grid, &cfg)?;
    println!("{}", report.summary());

    let path = std::env::temp_dir().join("fracheat-audit.csv");
    let header = Header::new().with("shape", square.spec()).with("grid", &grid).with("seed", cfg.functional.seed);
    write_report_csv(std::fs::File::create(&path)?, &header, std::slice::from_ref(&report))?;
    println!("rows written to {}", path.display());

    let corrupted = VerifyConfig { h_shift: 0.2, ..cfg };
    let bad = inequality_audit(&square, &k, &grid, &corrupted)?;
    println!("\nwith H shifted up by 0.2: verdict {}", if bad.verdict { "pass" } else { "fail" });
    for row in bad.failed_rows().take(4) {
        println!("  {} at t={:.2e}: margin {:.3e}", row.check, row.t.unwrap_or(f64::NAN), row.bound_margin.unwrap());
    }
    Ok(())
}
