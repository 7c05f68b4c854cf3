//! Transition densities of the rotationally invariant α-stable process in
//! `d >= 2` dimensions and the constants built from them.
//!
//! The density is radial, `p_t(x, y) = p_t(|x - y|)`, with characteristic
//! function `exp(-t |ξ|^α)`. For α = 2 and α = 1 closed forms exist. For other
//! α the unit-time profile `p_1(r)` is tabulated on a logarithmic grid by
//! radial Fourier inversion
//!
//! ```text
//! p_1(r) = (2π)^{-d/2} r^{1-d/2} ∫_0^∞ exp(-s^α) s^{d/2} J_{d/2-1}(s r) ds
//! ```
//!
//! and stitched to the large-r series whose leading term is `β_{α,d} r^{-d-α}`.
//! Other times follow from the scaling `p_t(r) = t^{-d/α} p_1(r t^{-1/α})`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::quad::{self, gk21, NeumaierSum};
use crate::special::{bessel_j, gamma, ln_gamma, BesselOrder, ZeroTable};

/// Stability index α together with the ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityIndex {
    alpha: f64,
    d: usize,
}

impl StabilityIndex {
    pub fn new(alpha: f64, d: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidIndex(format!("alpha = {alpha} must lie in (0, 2]")));
        }
        if d < 2 {
            return Err(Error::InvalidIndex(format!("dimension d = {d} must be at least 2")));
        }
        Ok(Self { alpha, d })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    pub fn is_cauchy(&self) -> bool {
        self.alpha == 1.0
    }
}

/// Surface area of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Volume of the unit ball in `R^d`, by the recursion `V_d = 2π V_{d-2} / d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = d % 2;
    while k < d {
        k += 2;
        v *= 2.0 * PI / k as f64;
    }
    v
}

/// `β_{α,d}`, the constant in `p_t(r) / t → β_{α,d} / r^{d+α}` as `t → 0`.
/// Zero at α = 2, where the tail is Gaussian.
pub fn beta_const(index: StabilityIndex) -> f64 {
    let a = index.alpha;
    if a == 2.0 {
        return 0.0;
    }
    let d = index.d as f64;
    a * 2f64.powf(a - 1.0)
        * PI.powf(-1.0 - d / 2.0)
        * (PI * a / 2.0).sin()
        * gamma((d + a) / 2.0)
        * gamma(a / 2.0)
}

/// `k_d = Γ((d+1)/2) / π^{(d+1)/2}`, the Poisson kernel normalisation.
pub fn kappa_const(d: usize) -> f64 {
    let h = (d as f64 + 1.0) / 2.0;
    gamma(h) / PI.powf(h)
}

/// `c*_α = α² Γ(1 - 1/α) / (π (1+α)(1+2α))` for `1 < α <= 2`.
pub fn c_star_const(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!(
            "c*_alpha needs 1 < alpha <= 2 (Gamma(1 - 1/alpha) has a pole at alpha = 1), got {alpha}"
        )));
    }
    Ok(alpha * alpha * gamma(1.0 - 1.0 / alpha) / (PI * (1.0 + alpha) * (1.0 + 2.0 * alpha)))
}

/// `p_1(0) = Γ(d/α) / (α 2^{d-1} π^{d/2} Γ(d/2))`.
pub fn origin_density(index: StabilityIndex) -> f64 {
    let d = index.d as f64;
    let a = index.alpha;
    gamma(d / a) / (a * 2f64.powf(d - 1.0) * PI.powf(d / 2.0) * gamma(d / 2.0))
}

// ---------------------------------------------------------------------------
// large-r series

const MAX_SERIES_TERMS: usize = 400;

/// Large-r expansion
/// `p_1(r) = π^{-d/2-1} Σ_k (-1)^{k+1}/k! Γ(kα/2+1) Γ((kα+d)/2) sin(kπα/2) 2^{kα} r^{-(kα+d)}`.
/// Convergent for α < 1 (and r > 1 at α = 1), asymptotic for 1 < α < 2.
#[derive(Debug, Clone)]
pub struct TailSeries {
    alpha: f64,
    d: f64,
    /// `ln` of the coefficient magnitude without the sine factor
    ln_bound: Vec<f64>,
    /// signed sine factor times `(-1)^{k+1}`
    factor: Vec<f64>,
    convergent: bool,
}

/// Series value with truncation-error estimate and largest term magnitude.
#[derive(Debug, Clone, Copy)]
pub struct SeriesValue {
    pub value: f64,
    pub error: f64,
    pub max_term: f64,
}

impl SeriesValue {
    pub fn usable(&self, rel: f64) -> bool {
        self.value > 0.0 && self.error <= rel * self.value && self.max_term <= 1e4 * self.value
    }
}

impl TailSeries {
    pub fn new(index: StabilityIndex) -> Self {
        let a = index.alpha;
        let d = index.d as f64;
        let pre = -(d / 2.0 + 1.0) * PI.ln();
        let mut ln_bound = Vec::with_capacity(MAX_SERIES_TERMS);
        let mut factor = Vec::with_capacity(MAX_SERIES_TERMS);
        for k in 1..=MAX_SERIES_TERMS {
            let kf = k as f64;
            ln_bound.push(
                pre + ln_gamma(kf * a / 2.0 + 1.0) + ln_gamma((kf * a + d) / 2.0) - ln_gamma(kf + 1.0)
                    + kf * a * std::f64::consts::LN_2,
            );
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            factor.push(sign * (kf * PI * a / 2.0).sin());
        }
        Self { alpha: a, d, ln_bound, factor, convergent: a <= 1.0 }
    }

    /// Sums the series for `p_1(r)` (`power = 0`) or, with `survival = true`,
    /// for the radial tail mass `P(|X_1| > r)`.
    fn sum(&self, r: f64, survival: bool) -> SeriesValue {
        let lr = r.ln();
        let area = sphere_area(self.d as usize);
        let mut acc = NeumaierSum::default();
        let mut max_term = 0.0_f64;
        let mut prev_bound = f64::INFINITY;
        let mut error = f64::INFINITY;
        for (k0, (&lb, &fac)) in self.ln_bound.iter().zip(&self.factor).enumerate() {
            let kf = (k0 + 1) as f64;
            let ka = kf * self.alpha;
            let mut ln_b = lb - (ka + self.d) * lr;
            if survival {
                // ∫_r^∞ A_d ρ^{d-1} ρ^{-(kα+d)} dρ = A_d r^{-kα} / (kα)
                ln_b = lb - ka * lr + (area / ka).ln();
            }
            let bound = ln_b.exp();
            if !self.convergent && k0 > 0 && bound > prev_bound {
                error = prev_bound;
                break;
            }
            let term = fac * bound;
            acc.add(term);
            max_term = max_term.max(term.abs());
            prev_bound = bound;
            if bound < 1e-17 * acc.value().abs() {
                error = bound;
                break;
            }
        }
        SeriesValue { value: acc.value(), error, max_term }
    }

    pub fn density(&self, r: f64) -> SeriesValue {
        self.sum(r, false)
    }

    pub fn survival(&self, r: f64) -> SeriesValue {
        self.sum(r, true)
    }
}

// ---------------------------------------------------------------------------
// Bessel-transform inversion

/// Grid and tolerance settings for [`build_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// upper bound on the innermost radius; lowered automatically for small α
    pub r_min: f64,
    pub nodes_per_decade: usize,
    /// the profile fails if the tail series is still unusable here
    pub r_cap: f64,
    /// relative accuracy requested from each Bessel transform
    pub rel_tol: f64,
    /// required agreement between inversion and tail series at the switch
    pub stitch_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { r_min: 1e-3, nodes_per_decade: 40, r_cap: 1e3, rel_tol: 1e-12, stitch_tol: 1e-6 }
    }
}

/// `∫_0^∞ exp(-s^α) s^power J_order(s r) ds`, split at the zeros of
/// `J_order(s r)` and summed with epsilon acceleration.
fn bessel_transform(
    alpha: f64,
    power: f64,
    order: BesselOrder,
    r: f64,
    zeros: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    let log_env = |s: f64| power * s.ln() - s.powf(alpha);
    let s_peak = (power / alpha).powf(1.0 / alpha);
    let cut_level = log_env(s_peak) - 75.0;
    let mut s_cut = 2.0 * s_peak.max(1.0);
    while log_env(s_cut) > cut_level {
        s_cut *= 2.0;
    }
    let f = |s: f64| {
        if s == 0.0 {
            0.0
        } else {
            (log_env(s)).exp() * bessel_j(order, s * r)
        }
    };

    let mut partial = Vec::new();
    let mut acc = NeumaierSum::default();
    // a priori magnitude of the integral, so near-zero panels get a sane absolute tolerance
    let mut scale = log_env(s_peak).exp() * s_peak;
    let mut lo = 0.0;
    let mut k = 0usize;
    let mut stable = 0;
    let mut last_extrap = f64::NAN;
    loop {
        let hi = match zeros.get(k) {
            Some(z) => (z / r).min(s_cut),
            None if lo < s_cut => {
                return Err(Error::Quadrature {
                    radius: r,
                    detail: format!("zero table exhausted at panel {k}"),
                })
            }
            None => s_cut,
        };
        let mut breaks = vec![lo];
        if lo + 0.01 * (hi - lo) < s_peak && s_peak < hi - 0.01 * (hi - lo) {
            breaks.push(s_peak);
        }
        breaks.push(hi);
        let mut piece = NeumaierSum::default();
        for w in breaks.windows(2) {
            let res = quad::integrate_limited(
                &mut |s| f(s),
                w[0],
                w[1],
                1e-4 * rel_tol * scale,
                rel_tol * 1e-2,
                400,
            )
            .map_err(|e| Error::Quadrature { radius: r, detail: e.to_string() })?;
            piece.add(res.value);
        }
        let v = piece.value();
        scale = scale.max(v.abs());
        acc.add(v);
        partial.push(acc.value());
        k += 1;
        lo = hi;
        if hi >= s_cut {
            return Ok(acc.value());
        }
        if lo > s_peak && partial.len() >= 8 {
            let window = &partial[partial.len().saturating_sub(21)..];
            let extrap = quad::wynn_epsilon(window);
            let tol = rel_tol * extrap.abs().max(1e-300);
            if (extrap - last_extrap).abs() <= tol && (extrap - acc.value()).abs() <= 1e3 * scale {
                stable += 1;
                if stable >= 3 {
                    return Ok(extrap);
                }
            } else {
                stable = 0;
            }
            last_extrap = extrap;
        }
    }
}

fn zeros_needed(alpha: f64, power: f64, r_max: f64) -> usize {
    let s_peak = (power / alpha).powf(1.0 / alpha);
    let log_env = |s: f64| power * s.ln() - s.powf(alpha);
    let cut_level = log_env(s_peak) - 75.0;
    let mut s_cut = 2.0 * s_peak.max(1.0);
    while log_env(s_cut) > cut_level {
        s_cut *= 2.0;
    }
    (s_cut * r_max / PI).ceil() as usize + 4
}

/// `(p_1(r), r p_1'(r) / p_1(r))` by direct inversion.
fn invert_at(index: StabilityIndex, r: f64, zeros: &[f64], zeros_next: &[f64], rel_tol: f64) -> Result<(f64, f64)> {
    let d = index.d as f64;
    let order = BesselOrder::radial(index.d);
    let pre = (2.0 * PI).powf(-d / 2.0) * r.powf(1.0 - d / 2.0);
    let i0 = bessel_transform(index.alpha, d / 2.0, order, r, zeros, rel_tol)?;
    let i1 = bessel_transform(index.alpha, d / 2.0 + 1.0, order.next(), r, zeros_next, rel_tol)?;
    let p = pre * i0;
    if !(p > 0.0) {
        return Err(Error::Quadrature { radius: r, detail: format!("non-positive density {p:e}") });
    }
    let dp = -pre * i1;
    Ok((p, r * dp / p))
}

/// Radius below which `p_1` is replaced by its quadratic Taylor model: the
/// quartic term of the small-r series must be below `1e-9` relative.
fn inner_radius(index: StabilityIndex, cap: f64) -> f64 {
    let a = index.alpha;
    let d = index.d as f64;
    // t_k / t_0 = Γ((2k+d)/α) Γ(d/2) / (Γ(d/α) k! Γ(k+d/2)) (r/2)^{2k}
    let ln_ratio2 = ln_gamma((4.0 + d) / a) + ln_gamma(d / 2.0) - ln_gamma(d / a) - ln_gamma(3.0) - ln_gamma(2.0 + d / 2.0);
    // ratio2 * (r/2)^4 = 1e-9
    (2.0 * (((1e-9_f64).ln() - ln_ratio2) / 4.0).exp()).min(cap)
}

/// Tabulated unit-time radial density for 0 < α < 2.
#[derive(Debug, Clone)]
pub struct KernelProfile {
    index: StabilityIndex,
    radii: Vec<f64>,
    density: Vec<f64>,
    /// `d ln p_1 / d ln r` at the nodes
    slopes: Vec<f64>,
    tail_constant: f64,
    switch_radius: f64,
    origin: f64,
    tail: TailSeries,
    /// `P(|X_1| > radii[i])`
    mass_above: Vec<f64>,
    /// `∫ A_d r^{d-1} p_1` over `[0, radii[0]]`
    inner_mass: f64,
}

impl KernelProfile {
    pub fn index(&self) -> StabilityIndex {
        self.index
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    pub fn switch_radius(&self) -> f64 {
        self.switch_radius
    }

    pub fn tail(&self) -> &TailSeries {
        &self.tail
    }

    fn from_nodes(index: StabilityIndex, radii: Vec<f64>, density: Vec<f64>, mut slopes: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii.len() != density.len() || radii.len() != slopes.len() {
            return Err(Error::Parse("profile needs matching radii, densities and slopes".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
            return Err(Error::Parse("profile radii must be positive and strictly increasing".into()));
        }
        if density.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Parse("profile densities must be positive".into()));
        }
        limit_slopes(&radii, &density, &mut slopes);
        let mut profile = Self {
            index,
            switch_radius: *radii.last().unwrap(),
            tail_constant: beta_const(index),
            origin: origin_density(index),
            tail: TailSeries::new(index),
            radii,
            density,
            slopes,
            mass_above: Vec::new(),
            inner_mass: 0.0,
        };
        profile.tabulate_mass();
        Ok(profile)
    }

    fn tabulate_mass(&mut self) {
        let n = self.radii.len();
        let area = sphere_area(self.index.d);
        let d = self.index.d as f64;
        let mut above = vec![0.0; n];
        above[n - 1] = self.tail.survival(self.switch_radius).value;
        for i in (0..n - 1).rev() {
            let (a, b) = (self.radii[i], self.radii[i + 1]);
            let m = 0.5 * (a + b);
            let mut g = |r: f64| area * r.powf(d - 1.0) * self.interpolate(r);
            let seg = gk21(&mut g, a, m).value + gk21(&mut g, m, b).value;
            above[i] = above[i + 1] + seg;
        }
        let r0 = self.radii[0];
        let c = (self.density[0] - self.origin) / (r0 * r0);
        self.inner_mass = area * (self.origin * r0.powf(d) / d + c * r0.powf(d + 2.0) / (d + 2.0));
        self.mass_above = above;
    }

    /// Total probability mass of the tabulated profile (should be 1).
    pub fn total_mass(&self) -> f64 {
        self.inner_mass + self.mass_above[0]
    }

    fn interpolate(&self, r: f64) -> f64 {
        let i = self.radii.partition_point(|&x| x <= r).saturating_sub(1).min(self.radii.len() - 2);
        let (x0, x1) = (self.radii[i].ln(), self.radii[i + 1].ln());
        let (y0, y1) = (self.density[i].ln(), self.density[i + 1].ln());
        let h = x1 - x0;
        let s = (r.ln() - x0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * y0 + h10 * h * self.slopes[i] + h01 * y1 + h11 * h * self.slopes[i + 1]).exp()
    }

    /// `p_1(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        let r0 = self.radii[0];
        if r < r0 {
            let c = (self.density[0] - self.origin) / (r0 * r0);
            self.origin + c * r * r
        } else if r <= self.switch_radius {
            self.interpolate(r)
        } else {
            self.tail.density(r).value
        }
    }

    /// `P(|X_1| > r)`.
    pub fn survival(&self, r: f64) -> f64 {
        let area = sphere_area(self.index.d);
        let d = self.index.d as f64;
        let r0 = self.radii[0];
        if r >= self.switch_radius {
            return self.tail.survival(r).value;
        }
        if r < r0 {
            let c = (self.density[0] - self.origin) / (r0 * r0);
            let below = |x: f64| area * (self.origin * x.powf(d) / d + c * x.powf(d + 2.0) / (d + 2.0));
            return self.mass_above[0] + (below(r0) - below(r));
        }
        let i = self.radii.partition_point(|&x| x <= r).saturating_sub(1).min(self.radii.len() - 2);
        let b = self.radii[i + 1];
        let mut g = |x: f64| area * x.powf(d - 1.0) * self.interpolate(x);
        self.mass_above[i + 1] + gk21(&mut g, r, b).value
    }

    /// Writes the versioned CSV: one header comment, a column line, then
    /// `r, p1_of_r, dlogp_dlogr` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# fracheat-profile v1 alpha={} d={} tail_constant={} switch_radius={}",
            self.index.alpha, self.index.d, self.tail_constant, self.switch_radius
        )?;
        writeln!(w, "r,p1_of_r,dlogp_dlogr")?;
        for ((r, p), s) in self.radii.iter().zip(&self.density).zip(&self.slopes) {
            writeln!(w, "{r},{p},{s}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty profile file".into()))??;
        let rest = header
            .strip_prefix("# fracheat-profile v1 ")
            .ok_or_else(|| Error::Parse(format!("unrecognised profile header: {header}")))?;
        let mut alpha = None;
        let mut d = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv}")))?;
            match k {
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?),
                "d" => d = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "tail_constant" | "switch_radius" => {}
                other => return Err(Error::Parse(format!("unknown header key {other}"))),
            }
        }
        let index = StabilityIndex::new(
            alpha.ok_or_else(|| Error::Parse("header lacks alpha".into()))?,
            d.ok_or_else(|| Error::Parse("header lacks d".into()))?,
        )?;
        let columns = lines.next().ok_or_else(|| Error::Parse("missing column line".into()))??;
        if columns.trim() != "r,p1_of_r,dlogp_dlogr" {
            return Err(Error::Parse(format!("unexpected columns: {columns}")));
        }
        let (mut radii, mut density, mut slopes) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("bad profile row: {line}")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            radii.push(num(fields[0])?);
            density.push(num(fields[1])?);
            slopes.push(num(fields[2])?);
        }
        // slopes were already limited when written, so limiting again is a no-op
        Self::from_nodes(index, radii, density, slopes)
    }
}

/// Fritsch–Carlson limiter on log–log Hermite slopes: keeps each cubic
/// monotone wherever the data are.
fn limit_slopes(radii: &[f64], density: &[f64], slopes: &mut [f64]) {
    for i in 0..radii.len() - 1 {
        let h = (radii[i + 1] / radii[i]).ln();
        let delta = (density[i + 1] / density[i]).ln() / h;
        if delta == 0.0 {
            slopes[i] = 0.0;
            slopes[i + 1] = 0.0;
            continue;
        }
        let a = slopes[i] / delta;
        let b = slopes[i + 1] / delta;
        if a < 0.0 {
            slopes[i] = 0.0;
        }
        if b < 0.0 {
            slopes[i + 1] = 0.0;
        }
        let (a, b) = (slopes[i] / delta, slopes[i + 1] / delta);
        let norm = a * a + b * b;
        if norm > 9.0 {
            let tau = 3.0 / norm.sqrt();
            slopes[i] = tau * a * delta;
            slopes[i + 1] = tau * b * delta;
        }
    }
}

/// Builds the unit-time profile for `0 < α < 2` (α = 1 is accepted so the
/// inversion can be checked against the Poisson kernel).
pub fn build_profile(index: StabilityIndex, cfg: &GridConfig) -> Result<KernelProfile> {
    if index.alpha >= 2.0 {
        return Err(Error::Domain("alpha = 2 has a closed-form Gaussian kernel; no profile is built".into()));
    }
    let tail = TailSeries::new(index);
    let r_min = inner_radius(index, cfg.r_min);
    let step = 10f64.powf(1.0 / cfg.nodes_per_decade as f64);
    let node = |i: usize| r_min * step.powi(i as i32);

    // first node where the tail series is accurate enough to take over
    let mut switch = None;
    let mut i = 1usize;
    while node(i) <= cfg.r_cap {
        if tail.density(node(i)).usable(1e-12) {
            switch = Some(i);
            break;
        }
        i += 1;
    }
    let mut i_switch = switch.ok_or_else(|| Error::Quadrature {
        radius: cfg.r_cap,
        detail: "tail series never became accurate below the radius cap".into(),
    })?;
    i_switch = i_switch.max(2);

    let d = index.d as f64;
    loop {
        let r_max = node(i_switch);
        let order = BesselOrder::radial(index.d);
        let zeros: Vec<f64> = {
            let mut t = ZeroTable::new(order);
            (1..=zeros_needed(index.alpha, d / 2.0, r_max)).map(|k| t.get(k)).collect()
        };
        let zeros_next: Vec<f64> = {
            let mut t = ZeroTable::new(order.next());
            (1..=zeros_needed(index.alpha, d / 2.0 + 1.0, r_max)).map(|k| t.get(k)).collect()
        };
        let values: Vec<Result<(f64, f64)>> = (0..=i_switch)
            .into_par_iter()
            .map(|j| invert_at(index, node(j), &zeros, &zeros_next, cfg.rel_tol))
            .collect();
        let mut radii = Vec::with_capacity(values.len());
        let mut density = Vec::with_capacity(values.len());
        let mut slopes = Vec::with_capacity(values.len());
        for (j, v) in values.into_iter().enumerate() {
            let (p, s) = v?;
            radii.push(node(j));
            density.push(p);
            slopes.push(s);
        }
        let series = tail.density(r_max).value;
        let last = *density.last().unwrap();
        if (series - last).abs() <= cfg.stitch_tol * last {
            let mut profile = KernelProfile::from_nodes(index, radii, density, slopes)?;
            profile.switch_radius = r_max;
            return Ok(profile);
        }
        i_switch += cfg.nodes_per_decade / 4;
        if node(i_switch) > cfg.r_cap {
            return Err(Error::Quadrature {
                radius: r_max,
                detail: format!("inversion {last:e} and tail series {series:e} disagree at the switch radius"),
            });
        }
    }
}

// ---------------------------------------------------------------------------
// kernels

/// Transition density of the process: a closed form when one exists,
/// otherwise a tabulated profile.
#[derive(Debug, Clone)]
pub enum Kernel {
    Gaussian(StabilityIndex),
    Cauchy(StabilityIndex),
    Profile(Arc<KernelProfile>),
}

impl Kernel {
    /// Closed form for α ∈ {1, 2}, default-grid profile otherwise.
    pub fn new(index: StabilityIndex) -> Result<Self> {
        if index.is_gaussian() {
            Ok(Kernel::Gaussian(index))
        } else if index.is_cauchy() {
            Ok(Kernel::Cauchy(index))
        } else {
            Ok(Kernel::Profile(Arc::new(build_profile(index, &GridConfig::default())?)))
        }
    }

    pub fn from_profile(profile: KernelProfile) -> Self {
        Kernel::Profile(Arc::new(profile))
    }

    pub fn index(&self) -> StabilityIndex {
        match self {
            Kernel::Gaussian(i) | Kernel::Cauchy(i) => *i,
            Kernel::Profile(p) => p.index,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.index().alpha
    }

    pub fn d(&self) -> usize {
        self.index().d
    }

    /// `p_1(u)`.
    pub fn unit_density(&self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian(i) => (4.0 * PI).powf(-(i.d as f64) / 2.0) * (-u * u / 4.0).exp(),
            Kernel::Cauchy(i) => kappa_const(i.d) * (1.0 + u * u).powf(-(i.d as f64 + 1.0) / 2.0),
            Kernel::Profile(p) => p.eval(u),
        }
    }

    /// `P(|X_1| > u)`.
    pub fn unit_survival(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        match self {
            Kernel::Gaussian(i) => gamma_ur(i.d as f64 / 2.0, u * u / 4.0),
            Kernel::Cauchy(i) => beta_reg(0.5, i.d as f64 / 2.0, 1.0 / (1.0 + u * u)),
            Kernel::Profile(p) => p.survival(u),
        }
    }

    /// `t^{1/α}`, the length scale of `X_t`.
    pub fn scale(&self, t: f64) -> f64 {
        t.powf(1.0 / self.alpha())
    }

    /// `p_t(r)` for `t > 0` (no validation; see [`kernel_eval`]).
    pub fn density_at(&self, t: f64, r: f64) -> f64 {
        match self {
            Kernel::Gaussian(i) => (4.0 * PI * t).powf(-(i.d as f64) / 2.0) * (-r * r / (4.0 * t)).exp(),
            Kernel::Cauchy(i) => kappa_const(i.d) * t * (t * t + r * r).powf(-(i.d as f64 + 1.0) / 2.0),
            Kernel::Profile(p) => {
                let s = self.scale(t);
                p.eval(r / s) / s.powi(p.index.d as i32)
            }
        }
    }

    /// `P(|X_t| > rho)`.
    pub fn survival(&self, t: f64, rho: f64) -> f64 {
        self.unit_survival(rho / self.scale(t))
    }
}

/// `p_t(r)`; rejects `t <= 0`.
pub fn kernel_eval(kernel: &Kernel, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("kernel time must be positive, got t = {t}")));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius must be nonnegative, got r = {r}")));
    }
    Ok(kernel.density_at(t, r))
}

/// Smallest `c` with `c^{-1} m(u) <= p_1(u) <= c m(u)`, `m(u) = min(1, u^{-d-α})`,
/// over a logarithmic grid of `u = r t^{-1/α}` (by scaling this covers every
/// `(t, r)`). Only meaningful for α < 2.
pub fn fit_two_sided_constant(kernel: &Kernel) -> Result<f64> {
    let idx = kernel.index();
    if idx.is_gaussian() {
        return Err(Error::Domain("the two-sided power-law comparison does not hold for alpha = 2".into()));
    }
    let e = idx.d as f64 + idx.alpha;
    let mut c = 1.0_f64;
    for i in 0..=240 {
        let u = 10f64.powf(-3.0 + 6.0 * i as f64 / 240.0);
        let ratio = kernel.unit_density(u) / u.powf(-e).min(1.0);
        c = c.max(ratio).max(1.0 / ratio);
    }
    Ok(c)
}

/// One-line description, used in output headers.
pub fn describe(kernel: &Kernel) -> String {
    let mut s = String::new();
    let _ = write!(s, "alpha={} d={}", kernel.alpha(), kernel.d());
    if let Kernel::Profile(p) = kernel {
        let _ = write!(s, " profile_nodes={} switch_radius={}", p.radii.len(), p.switch_radius);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(a: f64, d: usize) -> StabilityIndex {
        StabilityIndex::new(a, d).unwrap()
    }

    #[test]
    fn index_rejects_out_of_range() {
        assert!(StabilityIndex::new(0.0, 2).is_err());
        assert!(StabilityIndex::new(2.1, 2).is_err());
        assert!(StabilityIndex::new(1.0, 1).is_err());
        assert!(StabilityIndex::new(2.0, 2).is_ok());
    }

    #[test]
    fn kappa_closed_forms() {
        assert!((kappa_const(1) - 1.0 / PI).abs() < 1e-15);
        assert!((kappa_const(2) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((kappa_const(3) - 1.0 / (PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn beta_matches_kappa_for_cauchy_and_vanishes_for_gaussian() {
        assert!((beta_const(idx(1.0, 2)) - kappa_const(2)).abs() < 1e-12);
        assert!((beta_const(idx(1.0, 3)) - kappa_const(3)).abs() < 1e-12);
        assert_eq!(beta_const(idx(2.0, 2)), 0.0);
    }

    #[test]
    fn beta_half_three_dimensions() {
        // independent evaluation in 30-digit arithmetic
        assert!((beta_const(idx(0.5, 3)) - 0.047_620_226_950_680_727).abs() < 1e-14);
    }

    #[test]
    fn c_star_values() {
        assert!((c_star_const(2.0).unwrap() - 4.0 / (15.0 * PI.sqrt())).abs() < 1e-14);
        assert!((c_star_const(1.5).unwrap() - 0.191_864_839_517_143_67).abs() < 1e-13);
        assert!(c_star_const(1.0).is_err());
        let mut prev = 0.0;
        for a in [1.5, 1.2, 1.1, 1.01, 1.001] {
            let c = c_star_const(a).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn series_reproduces_poisson_tail() {
        let s = TailSeries::new(idx(1.0, 2));
        for r in [2.0, 5.0, 30.0] {
            let v = s.density(r);
            let exact = kappa_const(2) * (1.0 + r * r).powf(-1.5);
            assert!((v.value - exact).abs() < 1e-13 * exact, "r={r}");
            let surv = s.survival(r).value;
            let exact_surv = 1.0 / (1.0 + r * r).sqrt();
            assert!((surv - exact_surv).abs() < 1e-12, "r={r}: {surv} vs {exact_surv}");
        }
    }

    #[test]
    fn gaussian_and_cauchy_closed_forms() {
        let g = Kernel::new(idx(2.0, 2)).unwrap();
        assert!((kernel_eval(&g, 1.0, 0.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let c = Kernel::new(idx(1.0, 2)).unwrap();
        assert!((kernel_eval(&c, 1.0, 0.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let expect = 2.0 * kappa_const(2) / 5f64.powf(1.5);
        assert!((kernel_eval(&c, 2.0, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!((kernel_eval(&c, 2.0, 1.0).unwrap() - c.unit_density(0.5) / 4.0).abs() < 1e-15);
        assert!(kernel_eval(&c, 0.0, 1.0).is_err());
        assert!(kernel_eval(&c, -1.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_survivals() {
        let c = Kernel::new(idx(1.0, 2)).unwrap();
        assert!((c.unit_survival(1.0) - 1.0 / 2f64.sqrt()).abs() < 1e-13);
        let g = Kernel::new(idx(2.0, 2)).unwrap();
        // |X_1|^2 / 4 ~ Exp(1) in two dimensions
        assert!((g.unit_survival(2.0) - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn profile_matches_reference_values() {
        // 30-digit reference values of the inversion integral
        let p = build_profile(idx(1.5, 2), &GridConfig::default()).unwrap();
        for (r, want) in [
            (0.0, 0.094_748_068_897_354_900),
            (0.5, 0.085_364_425_709_448_126),
            (1.0, 0.063_184_557_589_447_795),
            (2.0, 0.022_439_557_829_258_645),
            (5.0, 0.000_880_266_087_879_100_60),
        ] {
            let got = p.eval(r);
            assert!((got - want).abs() < 1e-7 * want, "r={r}: {got} vs {want}");
        }
        let q = build_profile(idx(0.5, 2), &GridConfig::default()).unwrap();
        for (r, want) in [
            (0.0, 1.909_859_317_102_744_0),
            (0.5, 0.105_391_539_736_845_07),
            (1.0, 0.029_450_952_114_370_551),
            (5.0, 0.000_951_998_010_858_736_13),
        ] {
            let got = q.eval(r);
            assert!((got - want).abs() < 1e-6 * want, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn profile_csv_round_trip_is_exact() {
        let p = build_profile(idx(1.5, 2), &GridConfig::default()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = KernelProfile::read_csv(std::io::Cursor::new(buf)).unwrap();
        for &r in p.radii().iter().step_by(7) {
            assert!((p.eval(r) - q.eval(r)).abs() <= 1e-12 * p.eval(r));
        }
        for r in [0.0, 0.3, 3.3, 50.0] {
            assert_eq!(p.eval(r).to_bits(), q.eval(r).to_bits());
        }
    }

    #[test]
    fn profile_csv_rejects_garbage() {
        assert!(KernelProfile::read_csv(std::io::Cursor::new("nope\n")).is_err());
        let bad = "# fracheat-profile v1 alpha=1.5 d=2 colour=blue\nr,p1_of_r,dlogp_dlogr\n";
        assert!(KernelProfile::read_csv(std::io::Cursor::new(bad)).is_err());
    }
}
