//! Goodness-of-fit statistics used by the law-level checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided one-sample Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of a KS statistic `d` with effective sample size `n`
/// (Stephens' small-sample correction included).
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson χ² statistic and its upper-tail p-value. Bins with expected
/// count below 5 are pooled into their neighbour.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            stat += (o_acc - e_acc) * (o_acc - e_acc) / e_acc;
            bins += 1;
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        stat += (o_acc - e_acc) * (o_acc - e_acc) / e_acc;
        bins += 1;
    }
    let dof = (bins.max(2) - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, |x| x);
        assert!(d <= 0.0005 + 1e-12);
        assert!(ks_p_value(d, 1000.0) > 0.99);
        assert!(ks_p_value(0.1, 1000.0) < 1e-6);
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let (s, p) = chi_square(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0]);
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
