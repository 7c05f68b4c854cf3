use std::f64::consts::PI;

use fracheat::asymptotics::{fit_limit, CorrectionModel, TGrid};
use fracheat::functionals::{occupation_moments, simplex_integral, simplex_reduced, FunctionalConfig, SimplexKind};
use fracheat::geometry::Shape;
use fracheat::kernel::{Kernel, StabilityIndex};
use fracheat::Estimate;
use proptest::prelude::*;

fn closed_form_kernel(gaussian: bool, d: usize) -> Kernel {
    Kernel::new(StabilityIndex::new(if gaussian { 2.0 } else { 1.0 }, d).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_deficit_is_bounded_and_monotone(
        d in 2usize..5,
        radius in 0.1f64..3.0,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let ball = Shape::ball(vec![0.0; d], radius).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f_lo = ball.radial_deficit(lo * 2.0 * radius).unwrap();
        let f_hi = ball.radial_deficit(hi * 2.0 * radius).unwrap();
        prop_assert!(f_lo >= 0.0 && f_hi <= ball.volume() * (1.0 + 1e-12));
        prop_assert!(f_lo <= f_hi + 1e-12 * ball.volume());
    }

    #[test]
    fn box_deficit_is_symmetric_and_bounded(
        hx in -2.0f64..2.0,
        hy in -2.0f64..2.0,
        lx in 0.2f64..2.0,
        ly in 0.2f64..2.0,
    ) {
        let b = Shape::cuboid(vec![0.0, 0.0], vec![lx, ly]).unwrap();
        let f = b.shift_deficit(&[hx, hy]);
        prop_assert!(f >= 0.0 && f <= b.volume() * (1.0 + 1e-12));
        prop_assert!((f - b.shift_deficit(&[-hx, hy])).abs() <= 1e-12);
        prop_assert!((f - b.shift_deficit(&[hx, -hy])).abs() <= 1e-12);
    }

    #[test]
    fn shape_specs_round_trip(
        d in 2usize..4,
        radius in 0.1f64..5.0,
        c in -3.0f64..3.0,
        side in 0.1f64..4.0,
    ) {
        let ball = Shape::ball(vec![c; d], radius).unwrap();
        prop_assert_eq!(ball.spec().parse::<Shape>().unwrap(), ball);
        let cube = Shape::cuboid(vec![c; d], vec![c + side; d]).unwrap();
        prop_assert_eq!(cube.spec().parse::<Shape>().unwrap(), cube);
    }

    #[test]
    fn closed_form_kernels_scale_and_decrease(
        gaussian in any::<bool>(),
        d in 2usize..4,
        t in 1e-3f64..10.0,
        r1 in 0.0f64..5.0,
        r2 in 0.0f64..5.0,
    ) {
        let k = closed_form_kernel(gaussian, d);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(k.density_at(t, lo) >= k.density_at(t, hi));
        // p_t(r) = t^{-d/α} p_1(r t^{-1/α})
        let s = k.scale(t);
        let direct = k.density_at(t, lo);
        let scaled = k.unit_density(lo / s) / s.powi(d as i32);
        prop_assert!((direct - scaled).abs() <= 1e-12 * direct.abs().max(1e-300));
        let surv = k.survival(t, hi);
        prop_assert!((0.0..=1.0).contains(&surv));
    }

    #[test]
    fn exact_power_models_are_recovered(
        limit in -5.0f64..5.0,
        slope in -5.0f64..5.0,
        gamma in 0.2f64..1.5,
    ) {
        let grid = TGrid::default_for(1.5);
        let ts = grid.values().to_vec();
        let vs: Vec<Estimate> = ts.iter().map(|t| Estimate::exact(limit + slope * t.powf(gamma))).collect();
        let f = fit_limit(&ts, &vs, CorrectionModel::Power(gamma)).unwrap();
        prop_assert!((f.limit - limit).abs() < 1e-6 * (1.0 + limit.abs() + slope.abs()));
    }

    #[test]
    fn power_simplex_integral_matches_reduction(alpha in 0.2f64..2.0) {
        let kind = SimplexKind::Power(alpha);
        let closed = simplex_integral(kind).unwrap();
        let reduced = simplex_reduced(|x| kind.eval(x)).unwrap();
        prop_assert!((closed - reduced).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn occupation_functionals_respect_pathwise_bounds(
        t in 0.005f64..0.5,
        seed in any::<u64>(),
        gaussian in any::<bool>(),
    ) {
        let shape = Shape::unit_ball(2).unwrap();
        let k = closed_form_kernel(gaussian, 2);
        let cfg = FunctionalConfig { n_samples: 4_000, n_steps: 8, seed, ..FunctionalConfig::default() };
        let m = occupation_moments(&shape, &k, t, &cfg).unwrap();
        let vol = PI;
        prop_assert!(m.psi.value >= 0.0 && m.psi.value <= t * vol * (1.0 + 1e-12));
        prop_assert!(m.t2.value <= t * t * vol * (1.0 + 1e-12));
        prop_assert!(m.t3.value <= t.powi(3) * vol * (1.0 + 1e-12));
        prop_assert!(m.remainder.value >= (-t).exp() * m.t3.value / 6.0 * (1.0 - 1e-12));
        prop_assert!(m.remainder.value <= m.t3.value / 6.0 * (1.0 + 1e-12));
    }
}
