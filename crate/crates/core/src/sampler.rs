//! Exact-in-law stable increments, free path skeletons and pinned (bridge)
//! skeletons.
//!
//! Increments use subordination. Let `S'` be one-sided `(α/2)`-stable with
//! `E[exp(-λ S')] = exp(-λ^{α/2})` and `G` Gaussian with variance 2 in each
//! coordinate, independent of `S'`. Then `X = sqrt(t^{2/α} S') G` satisfies
//!
//! ```text
//! E[exp(i ξ·X)] = E[exp(-t^{2/α} S' |ξ|^2)] = exp(-(t^{2/α} |ξ|^2)^{α/2}) = exp(-t |ξ|^α),
//! ```
//!
//! the characteristic function of the process at time `t`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::Shape;
use crate::kernel::{Kernel, StabilityIndex};

/// One-sided `β`-stable variate with Laplace transform `exp(-λ^β)`,
/// `0 < β < 1`, by Kanter's representation
/// `S = sin(βU) / sin(U)^{1/β} · (sin((1-β)U) / E)^{(1-β)/β}`
/// with `U` uniform on `(0, π)` and `E` standard exponential.
pub fn positive_stable_sample<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0);
    loop {
        let u = PI * rng.random::<f64>();
        if u == 0.0 {
            continue;
        }
        let e: f64 = rng.sample(Exp1);
        let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
        let b = (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta);
        let v = a * b;
        if v > 0.0 && v.is_finite() {
            return v;
        }
    }
}

/// Writes one increment `X_t - X_0` into `out` (length `d`).
pub fn isotropic_increment_into<R: Rng + ?Sized>(index: StabilityIndex, t: f64, rng: &mut R, out: &mut [f64]) {
    let scale = if index.is_gaussian() {
        (2.0 * t).sqrt()
    } else {
        let alpha = index.alpha();
        let s = positive_stable_sample(alpha / 2.0, rng);
        (2.0 * t.powf(2.0 / alpha) * s).sqrt()
    };
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = scale * z;
    }
}

/// One increment of the process over time `t > 0`.
pub fn isotropic_increment<R: Rng + ?Sized>(index: StabilityIndex, t: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("increment time must be positive, got t = {t}")));
    }
    let mut x = vec![0.0; index.d()];
    isotropic_increment_into(index, t, rng, &mut x);
    Ok(x)
}

/// Time-ordered positions of one path, `points` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSkeleton {
    pub d: usize,
    pub times: Vec<f64>,
    pub points: Vec<f64>,
}

impl PathSkeleton {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.d..(j + 1) * self.d]
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    /// Fraction of grid intervals whose left endpoint lies in `shape`,
    /// a Riemann sum for `t^{-1} ∫_0^t 1_Ω(X_s) ds`.
    pub fn occupation_fraction(&self, shape: &Shape) -> f64 {
        let n = self.len() - 1;
        if n == 0 {
            return if shape.contains(self.point(0)) { 1.0 } else { 0.0 };
        }
        let mut num = 0.0;
        for j in 0..n {
            if shape.contains(self.point(j)) {
                num += self.times[j + 1] - self.times[j];
            }
        }
        num / (self.times[n] - self.times[0])
    }

    /// `true` iff every skeleton point lies in `shape`. Excursions between
    /// grid points are invisible, so this overestimates survival.
    pub fn stayed_inside(&self, shape: &Shape) -> bool {
        (0..self.len()).all(|j| shape.contains(self.point(j)))
    }
}

/// Free path on the uniform grid `{j t / n}` started at `x0`.
pub fn sample_path_skeleton<R: Rng + ?Sized>(
    x0: &[f64],
    t: f64,
    n_steps: usize,
    index: StabilityIndex,
    rng: &mut R,
) -> Result<PathSkeleton> {
    if n_steps == 0 {
        return Err(Error::Domain("a path skeleton needs at least one step".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("path length must be positive, got t = {t}")));
    }
    if x0.len() != index.d() {
        return Err(Error::DimensionMismatch { expected: index.d(), got: x0.len() });
    }
    let d = index.d();
    let dt = t / n_steps as f64;
    let mut points = Vec::with_capacity((n_steps + 1) * d);
    points.extend_from_slice(x0);
    let mut inc = vec![0.0; d];
    for j in 0..n_steps {
        isotropic_increment_into(index, dt, rng, &mut inc);
        for i in 0..d {
            let prev = points[j * d + i];
            points.push(prev + inc[i]);
        }
    }
    let times = (0..=n_steps).map(|j| if j == n_steps { t } else { j as f64 * dt }).collect();
    Ok(PathSkeleton { d, times, points })
}

/// Settings for the bridge rejection sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    /// minimum tolerated acceptance rate; below it sampling stops with an error
    pub acceptance_floor: f64,
    /// interior times must not exceed this fraction of `t`
    pub max_time_fraction: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { acceptance_floor: 1e-3, max_time_fraction: 0.95 }
    }
}

/// Skeleton of the process pinned at `x` at time 0 and `y` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSkeleton {
    pub path: PathSkeleton,
    /// mean acceptance rate over the interior points
    pub acceptance: f64,
}

/// Samples the bridge at `times` sequentially. Given `z_{j-1}`, the next
/// point has density proportional to `p_Δ(z_{j-1}, z) p_{t-s_j}(z, y)`; it is
/// drawn by proposing a free increment and accepting with probability
/// `p_{t-s_j}(z, y) / p_{t-s_j}(0)`, valid because the kernel peaks at the
/// origin.
pub fn sample_bridge_skeleton<R: Rng + ?Sized>(
    x: &[f64],
    y: &[f64],
    t: f64,
    times: &[f64],
    kernel: &Kernel,
    cfg: &BridgeConfig,
    rng: &mut R,
) -> Result<BridgeSkeleton> {
    let index = kernel.index();
    let d = index.d();
    if x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: if x.len() != d { x.len() } else { y.len() } });
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("bridge length must be positive, got t = {t}")));
    }
    let mut prev_s = 0.0;
    for &s in times {
        if !(s > prev_s && s < t) {
            return Err(Error::Domain(format!("bridge times must increase strictly inside (0, {t}), got {s}")));
        }
        if s > cfg.max_time_fraction * t {
            return Err(Error::Domain(format!(
                "bridge time {s} exceeds the cap {} t; acceptance collapses near the endpoint",
                cfg.max_time_fraction
            )));
        }
        prev_s = s;
    }
    let max_attempts = (20.0 / cfg.acceptance_floor).ceil() as u64;
    let mut points = Vec::with_capacity((times.len() + 2) * d);
    points.extend_from_slice(x);
    let mut cur = x.to_vec();
    let mut inc = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut total_attempts = 0u64;
    prev_s = 0.0;
    for (j, &s) in times.iter().enumerate() {
        let remaining = t - s;
        let peak = kernel.density_at(remaining, 0.0);
        let mut attempts = 0u64;
        loop {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::RejectionStall {
                    index: j,
                    rate: 1.0 / attempts as f64,
                    floor: cfg.acceptance_floor,
                });
            }
            isotropic_increment_into(index, s - prev_s, rng, &mut inc);
            let mut r2 = 0.0;
            for i in 0..d {
                z[i] = cur[i] + inc[i];
                r2 += (z[i] - y[i]) * (z[i] - y[i]);
            }
            let accept = kernel.density_at(remaining, r2.sqrt()) / peak;
            if rng.random::<f64>() < accept {
                break;
            }
        }
        total_attempts += attempts;
        points.extend_from_slice(&z);
        cur.copy_from_slice(&z);
        prev_s = s;
    }
    points.extend_from_slice(y);
    let mut all_times = Vec::with_capacity(times.len() + 2);
    all_times.push(0.0);
    all_times.extend_from_slice(times);
    all_times.push(t);
    let acceptance = if times.is_empty() { 1.0 } else { times.len() as f64 / total_attempts as f64 };
    Ok(BridgeSkeleton { path: PathSkeleton { d, times: all_times, points }, acceptance })
}

/// Writes skeletons as CSV rows `path_id, s, x_1..x_d`.
pub fn write_skeletons<W: Write>(paths: &[PathSkeleton], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let d = paths.first().map_or(0, |p| p.d);
    let mut header = vec!["path_id".to_string(), "s".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    wr.write_record(&header)?;
    for (id, p) in paths.iter().enumerate() {
        for j in 0..p.len() {
            let mut row = vec![id.to_string(), p.times[j].to_string()];
            row.extend(p.point(j).iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::RngStream;
    use crate::stats::{chi_square, ks_p_value, ks_statistic, ks_two_sample};
    use statrs::function::erf::erfc;

    fn idx(a: f64) -> StabilityIndex {
        StabilityIndex::new(a, 2).unwrap()
    }

    #[test]
    fn laplace_transform_of_positive_stable() {
        let mut rng = RngStream::new(11, 0).rng();
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = positive_stable_sample(0.75, &mut rng);
            assert!(v > 0.0);
            let e = (-v).exp();
            s += e;
            s2 += e * e;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - (-1.0f64).exp()).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn half_stable_is_levy() {
        // Laplace transform exp(-sqrt λ) is the law of 1/(2 Z^2), CDF erfc(1/(2 sqrt x))
        let mut rng = RngStream::new(12, 0).rng();
        let xs: Vec<f64> = (0..20_000).map(|_| positive_stable_sample(0.5, &mut rng)).collect();
        let d = ks_statistic(&xs, |x| erfc(0.5 / x.sqrt()));
        assert!(ks_p_value(d, xs.len() as f64) > 0.01, "D = {d}");
    }

    #[test]
    fn gaussian_coordinate_variance_is_two_t() {
        let mut rng = RngStream::new(13, 0).rng();
        let n = 200_000;
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for _ in 0..n {
            let x = isotropic_increment(idx(2.0), 1.0, &mut rng).unwrap();
            s2 += x[0] * x[0];
            s4 += x[0].powi(4);
        }
        let var = s2 / n as f64;
        let se = ((s4 / n as f64 - var * var) / n as f64).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn radial_law_matches_kernel() {
        let kernel = Kernel::new(idx(1.5)).unwrap();
        let mut rng = RngStream::new(14, 0).rng();
        let n = 100_000;
        let edges: Vec<f64> = (0..=30).map(|i| 0.2 * i as f64).collect();
        let mut obs = vec![0.0; edges.len()];
        for _ in 0..n {
            let x = isotropic_increment(idx(1.5), 1.0, &mut rng).unwrap();
            let r = x[0].hypot(x[1]);
            let b = edges.partition_point(|&e| e <= r).min(edges.len()) - 1;
            obs[b.min(edges.len() - 1)] += 1.0;
        }
        let mut exp = Vec::new();
        for w in edges.windows(2) {
            exp.push(n as f64 * (kernel.unit_survival(w[0]) - kernel.unit_survival(w[1])));
        }
        exp.push(n as f64 * kernel.unit_survival(*edges.last().unwrap()));
        let (_, p) = chi_square(&obs, &exp);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn skeleton_shape_and_endpoints() {
        let mut rng = RngStream::new(15, 0).rng();
        let p = sample_path_skeleton(&[0.0, 0.0], 1.0, 1, idx(1.5), &mut rng).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.times, vec![0.0, 1.0]);
        let q = sample_path_skeleton(&[0.0, 0.0], 0.3, 17, idx(0.7), &mut rng).unwrap();
        assert!(q.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*q.times.last().unwrap(), 0.3);
        assert!(sample_path_skeleton(&[0.0, 0.0], 1.0, 0, idx(1.5), &mut rng).is_err());
    }

    #[test]
    fn skeletons_are_reproducible() {
        let a = sample_path_skeleton(&[0.0, 0.0], 1.0, 10, idx(1.2), &mut RngStream::new(5, 9).rng()).unwrap();
        let b = sample_path_skeleton(&[0.0, 0.0], 1.0, 10, idx(1.2), &mut RngStream::new(5, 9).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn occupation_and_exit_flags() {
        let sq = Shape::unit_cube(2).unwrap();
        let inside = PathSkeleton { d: 2, times: vec![0.0, 0.5, 1.0], points: vec![0.5, 0.5, 0.2, 0.2, 0.9, 0.9] };
        assert_eq!(inside.occupation_fraction(&sq), 1.0);
        assert!(inside.stayed_inside(&sq));
        let outside = PathSkeleton { d: 2, times: vec![0.0, 0.5, 1.0], points: vec![5.0, 5.0, 6.0, 5.0, 7.0, 5.0] };
        assert_eq!(outside.occupation_fraction(&sq), 0.0);
        let mixed = PathSkeleton { d: 2, times: vec![0.0, 0.5, 1.0], points: vec![0.5, 0.5, 3.0, 0.5, 0.5, 0.5] };
        assert!(!mixed.stayed_inside(&sq));
        assert_eq!(mixed.occupation_fraction(&sq), 0.5);
    }

    #[test]
    fn chapman_kolmogorov() {
        for alpha in [1.0_f64, 1.5] {
            let mut rng = RngStream::new(16, alpha.to_bits()).rng();
            let n = 20_000;
            let one: Vec<f64> = (0..n).map(|_| isotropic_increment(idx(alpha), 1.0, &mut rng).unwrap()[0]).collect();
            let two: Vec<f64> = (0..n)
                .map(|_| {
                    let a = isotropic_increment(idx(alpha), 0.5, &mut rng).unwrap();
                    let b = isotropic_increment(idx(alpha), 0.5, &mut rng).unwrap();
                    a[0] + b[0]
                })
                .collect();
            let d = ks_two_sample(&one, &two);
            assert!(ks_p_value(d, n as f64 / 2.0) > 0.01, "alpha {alpha}: D = {d}");
        }
    }

    #[test]
    fn bridge_endpoints_and_validation() {
        let kernel = Kernel::new(idx(1.5)).unwrap();
        let mut rng = RngStream::new(17, 0).rng();
        let cfg = BridgeConfig::default();
        let y = [0.3, -0.7];
        let b = sample_bridge_skeleton(&[0.0, 0.0], &y, 1.0, &[], &kernel, &cfg, &mut rng).unwrap();
        assert_eq!(b.path.len(), 2);
        let b = sample_bridge_skeleton(&[0.0, 0.0], &y, 1.0, &[0.2, 0.5], &kernel, &cfg, &mut rng).unwrap();
        assert_eq!(b.path.last()[0].to_bits(), y[0].to_bits());
        assert_eq!(b.path.last()[1].to_bits(), y[1].to_bits());
        assert!(sample_bridge_skeleton(&[0.0, 0.0], &y, 1.0, &[0.5, 0.2], &kernel, &cfg, &mut rng).is_err());
        assert!(sample_bridge_skeleton(&[0.0, 0.0], &y, 1.0, &[0.99], &kernel, &cfg, &mut rng).is_err());
    }

    #[test]
    fn bridge_stall_is_reported() {
        // a far endpoint with a short remaining time makes acceptance tiny
        let kernel = Kernel::new(idx(2.0)).unwrap();
        let mut rng = RngStream::new(18, 0).rng();
        let cfg = BridgeConfig { acceptance_floor: 0.05, ..BridgeConfig::default() };
        let err = sample_bridge_skeleton(&[0.0, 0.0], &[30.0, 0.0], 1.0, &[0.9], &kernel, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, Error::RejectionStall { index: 0, .. }));
    }

    #[test]
    fn bridge_midpoint_law() {
        // x = y = 0, s = t/2: z has density p_{t/2}(z)^2 / p_t(0)
        let kernel = Kernel::new(idx(1.5)).unwrap();
        let mut rng = RngStream::new(19, 0).rng();
        let cfg = BridgeConfig::default();
        let n = 30_000;
        let edges: Vec<f64> = (0..=20).map(|i| 0.15 * i as f64).collect();
        let mut obs = vec![0.0; edges.len()];
        for _ in 0..n {
            let b = sample_bridge_skeleton(&[0.0, 0.0], &[0.0, 0.0], 1.0, &[0.5], &kernel, &cfg, &mut rng).unwrap();
            let z = b.path.point(1);
            let r = z[0].hypot(z[1]);
            let k = edges.partition_point(|&e| e <= r) - 1;
            obs[k.min(edges.len() - 1)] += 1.0;
        }
        let dens = |r: f64| 2.0 * PI * r * kernel.density_at(0.5, r).powi(2) / kernel.density_at(1.0, 0.0);
        let mut exp = Vec::new();
        for w in edges.windows(2) {
            exp.push(n as f64 * crate::quad::integrate(dens, w[0], w[1], 1e-12, 1e-10).unwrap().value);
        }
        let inner: f64 = exp.iter().sum::<f64>() / n as f64;
        exp.push(n as f64 * (1.0 - inner));
        let (_, p) = chi_square(&obs, &exp);
        assert!(p > 0.01, "p = {p}");
    }
}
