//! Fit the small-time limits on the default grids and compare them with
//! their predicted constants. Pass theorem names to run a subset:
//!
//! ```text
//! cargo run --release --example theorem_reports -- hc-a main-i
//! ```

use fracheat::asymptotics::{verify, TGrid, TheoremId, VerifyConfig};
use fracheat::functionals::FunctionalConfig;
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};

fn main() -> fracheat::Result<()> {
    let wanted: Vec<String> = std::env::args().skip(1).collect();
    let disk = Shape::unit_ball(2)?;
    let cfg = VerifyConfig {
        functional: FunctionalConfig { n_samples: 50_000, n_steps: 32, ..Default::default() },
        ..Default::default()
    };
    let runs = [
        (TheoremId::HcA, 2.0),
        (TheoremId::HcA, 1.5),
        (TheoremId::HcB, 1.0),
        (TheoremId::HcC, 0.5),
        (TheoremId::MainI, 2.0),
        (TheoremId::MainII, 1.0),
        (TheoremId::MainIII, 0.5),
        (TheoremId::Remainder, 1.5),
    ];
    for (id, alpha) in runs {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id.name()) {
            continue;
        }
        let k = Kernel::new(StabilityIndex::new(alpha, 2)?)?;
        let report = verify(id, &disk, &k, &TGrid::default_for(alpha), &cfg)?;
        println!("{}\n", report.summary());
    }
    Ok(())
}
