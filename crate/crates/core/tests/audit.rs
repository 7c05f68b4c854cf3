use fracheat::asymptotics::{inequality_audit, verify_hc_b, verify_main_ii, TGrid, VerifyConfig};
use fracheat::functionals::FunctionalConfig;
use fracheat::geometry::{gamma_const, lambda_const, Shape};
use fracheat::kernel::{Kernel, StabilityIndex};

fn cfg(n: u64) -> VerifyConfig {
    VerifyConfig {
        functional: FunctionalConfig { n_samples: n, n_steps: 16, seed: 3, ..FunctionalConfig::default() },
        ..VerifyConfig::default()
    }
}

fn cauchy() -> Kernel {
    Kernel::new(StabilityIndex::new(1.0, 2).unwrap()).unwrap()
}

#[test]
fn audit_detects_an_injected_violation() {
    let disk = Shape::unit_ball(2).unwrap();
    let k = Kernel::new(StabilityIndex::new(2.0, 2).unwrap()).unwrap();
    let grid = TGrid::log(1e-4, 1e-2, 5).unwrap();
    let clean = inequality_audit(&disk, &k, &grid, &cfg(5_000)).unwrap();
    assert!(clean.verdict, "{}", clean.summary());
    // the deficit at t = 1e-2 is about 0.35; shifting H up by 0.5 breaks H <= |Ω| everywhere
    let shifted = VerifyConfig { h_shift: 0.5, ..cfg(5_000) };
    let r = inequality_audit(&disk, &k, &grid, &shifted).unwrap();
    assert!(!r.verdict);
    assert!(r.rows_for("h-below-volume").all(|x| !x.pass));
    assert!(r.rows_for("q-below-h-fine").all(|x| x.pass));
    assert!(r.rows_for("h-nonnegative").all(|x| x.pass));
}

#[test]
fn cauchy_heat_content_bound_and_limsup() {
    let disk = Shape::unit_ball(2).unwrap();
    let r = verify_hc_b(&disk, &cauchy(), &TGrid::default_for(1.0), &cfg(1_000)).unwrap();
    assert!(r.verdict, "{}", r.summary());
    assert!((lambda_const(&disk) - 3.305_624_299_580_778).abs() < 1e-10);
    assert!((r.limits[0].paper_constant - 2.0).abs() < 1e-12);
    assert_eq!(r.rows_for("monotone").count(), 7);
}

#[test]
fn cauchy_schrodinger_bound_on_admissible_grid() {
    let disk = Shape::unit_ball(2).unwrap();
    assert!((gamma_const(&disk) - 1.352_313_936_639_539_7).abs() < 1e-10);
    let grid = TGrid::log(1e-3, 1e-1, 5).unwrap();
    let r = verify_main_ii(&disk, &cauchy(), &grid, &cfg(20_000)).unwrap();
    assert!(r.rows_for("ratio").all(|x| x.pass), "{}", r.summary());
    assert!((r.limits[0].paper_constant - 1.0 / 3.0).abs() < 1e-12);
}
