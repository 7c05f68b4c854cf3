//! Deterministic quadrature: adaptive Gauss–Kronrod, Gauss–Legendre rules
//! and Wynn's epsilon acceleration for alternating panel sums.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Value and error estimate of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

/// One 21-point Kronrod rule with its embedded 10-point Gauss error estimate.
pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> QuadResult {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        res_k += WGK[j] * s;
        if j % 2 == 1 {
            res_g += WG[j / 2] * s;
        }
    }
    let value = res_k * half;
    let error = ((res_k - res_g) * half).abs();
    QuadResult { value, error }
}

/// Globally adaptive Gauss–Kronrod quadrature on a finite interval.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    integrate_limited(&mut f, a, b, abs_tol, rel_tol, 2000)
}

pub fn integrate_limited<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    let first = gk21(f, a, b);
    let mut intervals: Vec<(f64, f64, QuadResult)> = vec![(a, b, first)];
    let mut total = first.value;
    let mut err = first.error;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if intervals.len() >= max_intervals {
            return Err(Error::Quadrature {
                radius: f64::NAN,
                detail: format!(
                    "adaptive quadrature on [{a}, {b}] hit {max_intervals} intervals, error {err:.3e}"
                ),
            });
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("non-empty");
        let (lo, hi, r) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval exhausted at floating point resolution
            intervals.push((lo, hi, QuadResult { value: r.value, error: 0.0 }));
            err = intervals.iter().map(|x| x.2.error).sum();
            continue;
        }
        let left = gk21(f, lo, mid);
        let right = gk21(f, mid, hi);
        intervals.push((lo, mid, left));
        intervals.push((mid, hi, right));
        total = intervals.iter().map(|x| x.2.value).sum();
        err = intervals.iter().map(|x| x.2.error).sum();
    }
    // sum in position order so the result does not depend on refinement history
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut acc = NeumaierSum::default();
    for iv in &intervals {
        acc.add(iv.2.value);
    }
    Ok(QuadResult { value: acc.value(), error: err })
}

/// Integrates over consecutive breakpoints and sums the pieces.
pub fn integrate_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let mut value = NeumaierSum::default();
    let mut error = 0.0;
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        let r = integrate_limited(&mut f, w[0], w[1], abs_tol / pieces, rel_tol, 2000)?;
        value.add(r.value);
        error += r.error;
    }
    Ok(QuadResult { value: value.value(), error })
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1, "need at least one node");
    let mut out = Vec::with_capacity(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n
        let mut x = ((i as f64 + 0.75) / (n as f64 + 0.5) * std::f64::consts::PI).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((mid - half * x, half * w));
    }
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Wynn's epsilon table over a sequence of partial sums. Returns the
/// highest even-column entry, which is the accelerated limit estimate.
pub fn wynn_epsilon(partial_sums: &[f64]) -> f64 {
    let n = partial_sums.len();
    if n < 3 {
        return *partial_sums.last().unwrap_or(&0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial_sums.to_vec();
    let mut best = *partial_sums.last().unwrap();
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let val = if diff == 0.0 {
                // converged column: propagate
                f64::INFINITY
            } else {
                prev[i + 1] + 1.0 / diff
            };
            next.push(val);
        }
        prev = cur;
        cur = next;
        col += 1;
        if col % 2 == 0 {
            match cur.last() {
                Some(v) if v.is_finite() => best = *v,
                _ => break,
            }
        }
    }
    best
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
