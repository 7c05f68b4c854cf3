//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Sample sizes are chosen so the whole run fits in a few minutes on one core.

use std::f64::consts::PI;
use std::time::Instant;

use fracheat::asymptotics::{
    inequality_audit, verify_hc_a, verify_hc_c, verify_main_i, verify_main_iii, verify_moments, verify_remainder,
    TGrid, TheoremReport, VerifyConfig,
};
use fracheat::estimate::{stream_base, SamplingPlan};
use fracheat::functionals::{
    box_heat_content_exact, heat_content, simplex_integral, simplex_quadrature_2d, t_moment, FunctionalConfig,
    HeatMethod, SimplexKind,
};
use fracheat::geometry::{alpha_perimeter, PerimeterMethod, Shape};
use fracheat::kernel::{
    beta_const, build_profile, c_star_const, kappa_const, sphere_area, GridConfig, Kernel, StabilityIndex,
};
use fracheat::output::{write_estimator_csv, write_report_csv, EstimatorRow, Header};
use fracheat::quad;
use fracheat::sampler::isotropic_increment_into;
use fracheat::stats::chi_square;
use fracheat::Result;

type Outcome = Result<(bool, String)>;

fn kernel(alpha: f64, d: usize) -> Kernel {
    Kernel::new(StabilityIndex::new(alpha, d).unwrap()).unwrap()
}

fn disk() -> Shape {
    Shape::unit_ball(2).unwrap()
}

fn square() -> Shape {
    Shape::unit_cube(2).unwrap()
}

fn path_cfg() -> VerifyConfig {
    VerifyConfig {
        functional: FunctionalConfig { n_samples: 100_000, n_steps: 64, seed: 20240101, ..FunctionalConfig::default() },
        ..VerifyConfig::default()
    }
}

fn limit_line(r: &TheoremReport) -> String {
    let l = &r.limits[0];
    format!(
        "fitted {:.5} ± {:.1e} vs {:.5} ({:+.2}%), {}/{} rows within 3σ",
        l.fit.limit,
        l.fit.stderr,
        l.paper_constant,
        100.0 * l.relative_error(),
        r.rows.iter().filter(|x| x.pass).count(),
        r.rows.len()
    )
}

fn criterion_1() -> Outcome {
    let inv_2pi = 1.0 / (2.0 * PI);
    let beta = beta_const(StabilityIndex::new(1.0, 2)?);
    let kappa = kappa_const(2);
    let cstar = c_star_const(2.0)?;
    let mut ok = (beta - inv_2pi).abs() < 1e-12
        && (kappa - inv_2pi).abs() < 1e-12
        && (cstar - 4.0 / (15.0 * PI.sqrt())).abs() < 1e-12;
    let mut worst = 0.0_f64;
    for (kind, want) in [
        (SimplexKind::Linear, 1.0 / 6.0),
        (SimplexKind::LogLinear, -5.0 / 36.0),
        (SimplexKind::Power(2.0), 4.0 / 15.0),
    ] {
        let closed = simplex_integral(kind)?;
        let numeric = simplex_quadrature_2d(|x| kind.eval(x))?;
        ok &= (closed - want).abs() < 1e-15 && (closed - numeric).abs() < 1e-8;
        worst = worst.max((closed - numeric).abs());
    }
    Ok((ok, format!("beta={beta:.15} kappa={kappa:.15} c*={cstar:.15}, simplex 2-D max diff {worst:.1e}")))
}

/// `∫ A_d r^{d-1} p_1(r) dr` by log-radius quadrature to `R`, plus the
/// leading-order tail `β A_d R^{-α} / α`.
fn radial_mass(k: &Kernel) -> Result<f64> {
    let idx = k.index();
    let d = idx.d();
    let area = sphere_area(d);
    let big_r: f64 = 1e6;
    let breaks: Vec<f64> = (-8..=6).map(|e| (10f64.powi(e)).ln()).collect();
    let body = quad::integrate_breaks(
        |u: f64| {
            let r = u.exp();
            area * r.powi(d as i32) * k.unit_density(r)
        },
        &breaks,
        1e-14,
        1e-11,
    )?;
    let tail = if idx.is_gaussian() { 0.0 } else { beta_const(idx) * area * big_r.powf(-idx.alpha()) / idx.alpha() };
    Ok(body.value + tail)
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut worst_mass = 0.0_f64;
    for alpha in [0.5, 1.0, 1.5, 2.0] {
        for d in [2, 3] {
            let m = radial_mass(&kernel(alpha, d))?;
            worst_mass = worst_mass.max((m - 1.0).abs());
        }
    }
    ok &= worst_mass < 1e-4;
    let mut worst_rel = 0.0_f64;
    for d in [2, 3] {
        let idx = StabilityIndex::new(1.0, d)?;
        let profile = build_profile(idx, &GridConfig::default())?;
        let poisson = kernel(1.0, d);
        for i in 0..=1000 {
            let r = 10.0 * i as f64 / 1000.0;
            let want = poisson.unit_density(r);
            worst_rel = worst_rel.max(((profile.eval(r) - want) / want).abs());
        }
    }
    ok &= worst_rel < 1e-6;
    Ok((ok, format!("max |mass-1| = {worst_mass:.1e}, max rel. error vs Poisson on [0,10] = {worst_rel:.1e}")))
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.75, 1.5] {
        let idx = StabilityIndex::new(alpha, 2)?;
        let k = Kernel::new(idx)?;
        let plan = SamplingPlan::new(11, stream_base("acceptance-cf", alpha.to_bits()), 1_000_000);
        let m = plan.run(|rng, out: &mut [f64; 1]| {
            let mut x = [0.0; 2];
            isotropic_increment_into(idx, 1.0, rng, &mut x);
            // ξ = (cos 1, sin 1), a unit vector off the axes
            out[0] = (x[0] * 1f64.cos() + x[1] * 1f64.sin()).cos();
        });
        let e = m[0].estimate(11);
        let z = (e.value - (-1f64).exp()) / e.stderr;
        ok &= z.abs() <= 3.0;

        // 20 radial bins of equal mass under the kernel
        let n_bins = 20;
        let edges: Vec<f64> = (1..n_bins)
            .map(|j| {
                let target = 1.0 - j as f64 / n_bins as f64;
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                while k.unit_survival(hi) > target {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if k.unit_survival(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        let n = 200_000;
        let plan = SamplingPlan::new(12, stream_base("acceptance-radial", alpha.to_bits()), n);
        let edges_ref = &edges;
        let hist = plan.run(|rng, out: &mut [f64; 20]| {
            let mut x = [0.0; 2];
            isotropic_increment_into(idx, 1.0, rng, &mut x);
            let r = x[0].hypot(x[1]);
            let bin = edges_ref.partition_point(|&e| e < r);
            *out = [0.0; 20];
            out[bin] = 1.0;
        });
        let observed: Vec<f64> = hist.iter().map(|h| h.mean() * n as f64).collect();
        let expected = vec![n as f64 / n_bins as f64; n_bins];
        let (_, p) = chi_square(&observed, &expected);
        ok &= p > 0.01;
        parts.push(format!("α={alpha}: cf z={z:+.2}, radial χ² p={p:.3}"));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_4() -> Outcome {
    let sq = square();
    let k = kernel(2.0, 2);
    let cfg = FunctionalConfig { n_samples: 1_000_000, heat_method: HeatMethod::Indicator, ..FunctionalConfig::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.01, 0.1] {
        let mc = heat_content(&sq, &k, t, &cfg)?.h;
        let exact = box_heat_content_exact(&sq, t)?;
        let z = (mc.value - exact) / mc.stderr;
        let rel = (mc.value - exact) / exact;
        ok &= z.abs() <= 3.0 && rel.abs() <= 0.005;
        parts.push(format!("t={t}: {:.6} vs {exact:.6} (z={z:+.2}, {:+.3}%)", mc.value, 100.0 * rel));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [2.0, 1.5] {
        let r = verify_hc_a(&disk(), &kernel(alpha, 2), &TGrid::default_for(alpha), &VerifyConfig::default())?;
        ok &= r.verdict;
        parts.push(format!("α={alpha}: {}", limit_line(&r)));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_6() -> Outcome {
    let r = verify_hc_c(&disk(), &kernel(0.5, 2), &TGrid::default_for(0.5), &path_cfg())?;
    let p = alpha_perimeter(&disk(), 0.5, PerimeterMethod::Quadrature)?;
    Ok((r.verdict, format!("P_0.5 = {:.6}, {}", p.value, limit_line(&r))))
}

fn criterion_7() -> Outcome {
    let r = verify_main_i(&disk(), &kernel(2.0, 2), &TGrid::default_for(2.0), &path_cfg())?;
    Ok((r.verdict, limit_line(&r)))
}

fn criterion_8() -> Outcome {
    let r = verify_main_iii(&disk(), &kernel(0.5, 2), &TGrid::default_for(0.5), &path_cfg())?;
    let agree = r.rows_for("direct-vs-decomposed").all(|x| x.pass) && r.rows_for("route-consistency").all(|x| x.pass);
    Ok((r.verdict && agree, format!("{}, direct/decomposed agree: {agree}", limit_line(&r))))
}

fn criterion_9() -> Outcome {
    let shape = disk();
    let k = kernel(1.5, 2);
    let cfg = path_cfg();
    let t = 1e-3;
    let mut ok = true;
    let mut parts = Vec::new();
    for kk in 1..=3u32 {
        let e = t_moment(&shape, &k, t, kk, &cfg.functional)?;
        let rel = e.value / t.powi(kk as i32) / PI - 1.0;
        ok &= if kk == 1 { rel == 0.0 } else { rel.abs() <= 0.02 };
        parts.push(format!("T{kk}/t^{kk}: {rel:+.3}%", rel = 100.0 * rel));
    }
    let r = verify_moments(&shape, &k, &TGrid::default_for(1.5), &cfg)?;
    let sandwich = r.rows.iter().filter(|x| x.check.ends_with("-lower") || x.check.ends_with("-upper"));
    let (n_ok, n) = sandwich.fold((0, 0), |(a, b), x| (a + x.pass as usize, b + 1));
    ok &= n_ok == n;
    parts.push(format!("sandwich {n_ok}/{n} within 3σ"));
    Ok((ok, parts.join(", ")))
}

fn criterion_10() -> Outcome {
    let r = verify_remainder(&disk(), &kernel(1.5, 2), &TGrid::default_for(1.5), &path_cfg())?;
    Ok((r.verdict, limit_line(&r)))
}

fn criterion_11() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (alpha, shape, name) in [(0.5, disk(), "disk"), (1.0, disk(), "disk"), (1.5, square(), "square"), (2.0, square(), "square")]
    {
        let r = inequality_audit(&shape, &kernel(alpha, 2), &TGrid::default_for(alpha), &path_cfg())?;
        let gap: f64 = r.rows_for("q-refinement-gap").map(|x| x.ratio).fold(0.0, f64::max);
        let both = r.rows_for("q-below-h-coarse").count() == 8 && r.rows_for("q-below-h-fine").count() == 8;
        ok &= r.verdict && both;
        parts.push(format!(
            "(α={alpha}, {name}) {}/{} (max Q gap {gap:.1e})",
            r.rows.iter().filter(|x| x.pass).count(),
            r.rows.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn report_bytes(threads: usize) -> Result<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let cfg = VerifyConfig {
            functional: FunctionalConfig { n_samples: 20_000, n_steps: 16, seed: 99, ..FunctionalConfig::default() },
            ..VerifyConfig::default()
        };
        let grid = TGrid::log(1e-3, 1e-1, 5)?;
        let shape = disk();
        let k = kernel(1.5, 2);
        let header = Header::new().with("seed", 99);
        let mut buf = Vec::new();
        let reports = vec![
            inequality_audit(&shape, &k, &grid, &cfg)?,
            verify_remainder(&shape, &k, &grid, &cfg)?,
        ];
        write_report_csv(&mut buf, &header, &reports)?;
        let ind = FunctionalConfig { heat_method: HeatMethod::Indicator, ..cfg.functional };
        let h = heat_content(&shape, &k, 0.01, &ind)?;
        let base = EstimatorRow {
            alpha: 1.5,
            d: 2,
            shape: shape.spec(),
            t: 0.01,
            quantity: "H".into(),
            method: "indicator".into(),
            value: 0.0,
            stderr: 0.0,
            n_samples: 0,
            n_steps: 0,
            seed: 99,
        };
        let row = EstimatorRow::from_estimate(&base, 0.01, "H", "indicator", &h.h);
        write_estimator_csv(&mut buf, &header, &[row])?;
        Ok(buf)
    })
}

fn criterion_12() -> Outcome {
    let a = report_bytes(1)?;
    let b = report_bytes(1)?;
    let c = report_bytes(4)?;
    let ok = a == b && a == c && !a.is_empty();
    Ok((ok, format!("{} bytes, repeat identical: {}, 1 vs 4 threads identical: {}", a.len(), a == b, a == c)))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "constants and simplex integrals", criterion_1),
        (2, "kernel normalisation and Poisson profile", criterion_2),
        (3, "sampler law", criterion_3),
        (4, "Gaussian square heat content vs closed form", criterion_4),
        (5, "heat-content limit, 1 < alpha <= 2", criterion_5),
        (6, "heat-content limit, alpha < 1", criterion_6),
        (7, "Schrodinger limit, alpha = 2", criterion_7),
        (8, "Schrodinger limit, alpha = 0.5", criterion_8),
        (9, "occupation moments", criterion_9),
        (10, "remainder", criterion_10),
        (11, "inequality audit", criterion_11),
        (12, "reproducibility", criterion_12),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {} [{:.1}s] {name}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
