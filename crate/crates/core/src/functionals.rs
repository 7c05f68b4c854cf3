//! Estimators for the heat content `H`, the spectral heat content `Q`, the
//! Schrödinger heat content `Ψ`, the occupation moments `T^(k)` and the
//! remainder `R`, plus the simplex integrals that weight them.
//!
//! Two identities carry most of the work.
//!
//! * Covariogram form of the heat content. With `g(h) = |Ω ∩ (Ω + h)|`,
//!   `H(t) = ∫ p_t(h) g(h) dh`, so the deficit `|Ω| - H(t)` is the integral of
//!   the kernel against `|Ω| - g`, a known function for balls and boxes.
//! * Palm form of the free-path functionals. For any `F` with `F(0) = 0`,
//!   writing `F(A) = Σ_j (t/n) 1_Ω(X_{s_j}) F(A)/A` and translating each term
//!   so that the path passes through `y = X_{s_j}` gives
//!   `∫ dx E_x[F(A)] = t |Ω| E[F(A)/A]`, where `y` is uniform in `Ω`, `j` is
//!   uniform on the grid and the path runs forwards and backwards from `y`.
//!   The integrand is bounded, so no truncation of the outer integral is needed.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use libm::{erf, erfc};

use crate::error::{Error, Result};
use crate::estimate::{stream_base, Estimate, SamplingPlan};
use crate::geometry::Shape;
use crate::kernel::{sphere_area, Kernel};
use crate::quad::{self, gauss_legendre};
use crate::sampler::isotropic_increment_into;

/// How the heat content is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatMethod {
    /// `|Ω|` times the fraction of uniform starts with `z + X_t ∈ Ω`
    Indicator,
    /// Monte Carlo average of the covariogram deficit at `X_t`
    Covariogram,
    /// deterministic quadrature of the covariogram deficit
    Quadrature,
    /// quadrature when the shape supports it, covariogram otherwise
    Auto,
}

impl HeatMethod {
    pub fn name(self) -> &'static str {
        match self {
            HeatMethod::Indicator => "indicator",
            HeatMethod::Covariogram => "covariogram",
            HeatMethod::Quadrature => "quadrature",
            HeatMethod::Auto => "auto",
        }
    }
}

/// How `Ψ` is estimated outside the decomposed route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiMethod {
    /// Palm representation over all of `R^d`
    Direct,
    /// plain Monte Carlo over the bounding box padded by
    /// `truncation_padding · t^{1/α}`, with the neglected mass as a bias bound
    Truncated,
    /// `t|Ω| - t²|Ω|/2 + t² ∫(1-Δ)(|Ω| - H(tΔ)) dΔ + R`, `R` at its bracket midpoint
    Decomposed,
}

impl PsiMethod {
    pub fn name(self) -> &'static str {
        match self {
            PsiMethod::Direct => "direct",
            PsiMethod::Truncated => "truncated",
            PsiMethod::Decomposed => "decomposed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalConfig {
    pub n_samples: u64,
    /// path grid size
    pub n_steps: usize,
    pub seed: u64,
    /// outer padding, in units of `t^{1/α}`, for [`PsiMethod::Truncated`]
    pub truncation_padding: f64,
    /// Gauss–Legendre nodes for the `Δ` integral
    pub quadrature_nodes: usize,
    pub heat_method: HeatMethod,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        Self {
            n_samples: 200_000,
            n_steps: 64,
            seed: 20240101,
            truncation_padding: 4.0,
            quadrature_nodes: 32,
            heat_method: HeatMethod::Auto,
        }
    }
}

impl FunctionalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Domain("n_samples must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        if !(self.truncation_padding > 0.0) {
            return Err(Error::Domain(format!("truncation padding must be positive, got {}", self.truncation_padding)));
        }
        if self.quadrature_nodes == 0 {
            return Err(Error::Domain("quadrature_nodes must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be positive, got t = {t}")));
    }
    Ok(())
}

fn check_dims(shape: &Shape, kernel: &Kernel) -> Result<()> {
    if shape.d() != kernel.d() {
        return Err(Error::DimensionMismatch { expected: kernel.d(), got: shape.d() });
    }
    Ok(())
}

fn plan(cfg: &FunctionalConfig, label: &str, t: f64, extra: u64) -> SamplingPlan {
    SamplingPlan::new(cfg.seed, stream_base(label, t.to_bits() ^ extra.rotate_left(17)), cfg.n_samples)
}

// ---------------------------------------------------------------------------
// heat content

/// Heat content and its deficit `|Ω| - H` from the same evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatContent {
    pub h: Estimate,
    pub deficit: Estimate,
    /// the method actually used (never `Auto`)
    pub method: HeatMethod,
}

/// `H_Ω(t) = ∫_Ω P_z(X_t ∈ Ω) dz`.
pub fn heat_content(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<HeatContent> {
    check_time(t)?;
    check_dims(shape, kernel)?;
    cfg.validate()?;
    let vol = shape.volume();
    let method = match cfg.heat_method {
        HeatMethod::Auto if supports_quadrature(shape, kernel) => HeatMethod::Quadrature,
        HeatMethod::Auto => HeatMethod::Covariogram,
        m => m,
    };
    let deficit = match method {
        HeatMethod::Quadrature => deficit_quadrature(shape, kernel, t)?,
        HeatMethod::Covariogram => {
            let d = shape.d();
            let index = kernel.index();
            let m = plan(cfg, "heat-covariogram", t, 0).run(|rng: &mut ChaCha8Rng, out: &mut [f64; 1]| {
                let mut x = [0.0; 8];
                let x = sized(&mut x, d);
                let mut v = vec![0.0; 0];
                let x = match x {
                    Some(x) => x,
                    None => {
                        v.resize(d, 0.0);
                        &mut v[..]
                    }
                };
                isotropic_increment_into(index, t, rng, x);
                out[0] = shape.shift_deficit(x);
            });
            m[0].estimate(cfg.seed)
        }
        HeatMethod::Indicator => {
            let d = shape.d();
            let index = kernel.index();
            let m = plan(cfg, "heat-indicator", t, 0).run(|rng: &mut ChaCha8Rng, out: &mut [f64; 1]| {
                let mut z = vec![0.0; d];
                let mut x = vec![0.0; d];
                shape.sample_uniform_into(rng, &mut z);
                isotropic_increment_into(index, t, rng, &mut x);
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += zi;
                }
                out[0] = if shape.contains(&x) { 0.0 } else { 1.0 };
            });
            m[0].estimate(cfg.seed).scale(vol)
        }
        HeatMethod::Auto => unreachable!(),
    };
    let h = Estimate { value: vol - deficit.value, ..deficit };
    Ok(HeatContent { h, deficit, method })
}

/// Borrow a stack buffer of length `d` when it fits.
fn sized(buf: &mut [f64; 8], d: usize) -> Option<&mut [f64]> {
    if d <= buf.len() {
        Some(&mut buf[..d])
    } else {
        None
    }
}

/// Whether [`HeatMethod::Quadrature`] is available for this pair.
pub fn supports_quadrature(shape: &Shape, kernel: &Kernel) -> bool {
    match shape {
        Shape::Ball { .. } => true,
        Shape::Box { .. } => shape.d() == 2 || kernel.index().is_gaussian(),
    }
}

/// Deterministic `|Ω| - H(t)`.
pub fn deficit_quadrature(shape: &Shape, kernel: &Kernel, t: f64) -> Result<Estimate> {
    check_time(t)?;
    check_dims(shape, kernel)?;
    match shape {
        Shape::Box { .. } if kernel.index().is_gaussian() => Ok(Estimate::exact(gaussian_box_deficit(shape, t)?)),
        Shape::Ball { radius, .. } => ball_deficit_quadrature(shape, *radius, kernel, t),
        Shape::Box { lo, hi } if shape.d() == 2 => box_deficit_quadrature(shape, hi[0] - lo[0], hi[1] - lo[1], kernel, t),
        _ => Err(Error::Unsupported(format!(
            "deterministic heat content for a {}-dimensional box needs alpha = 2",
            shape.d()
        ))),
    }
}

fn log_breaks(lo: f64, hi: f64, scale: f64) -> Vec<f64> {
    let mut b = vec![lo.ln()];
    for k in -3..=3 {
        let r = scale * 10f64.powi(k);
        if r > lo * 1.01 && r < hi / 1.01 {
            b.push(r.ln());
        }
    }
    b.push(hi.ln());
    b
}

fn ball_deficit_quadrature(shape: &Shape, radius: f64, kernel: &Kernel, t: f64) -> Result<Estimate> {
    let d = shape.d();
    let vol = shape.volume();
    let area = sphere_area(d);
    let two_r = 2.0 * radius;
    let scale = kernel.scale(t);
    let lo = 1e-9 * scale.min(two_r);
    let breaks = log_breaks(lo, two_r, scale);
    let res = quad::integrate_breaks(
        |u: f64| {
            let r = u.exp();
            let f = shape.radial_deficit(r).unwrap_or(vol);
            area * r.powi(d as i32) * kernel.density_at(t, r) * f
        },
        &breaks,
        1e-15 * vol,
        1e-11,
    )?;
    let tail = vol * kernel.survival(t, two_r);
    Ok(Estimate::deterministic(res.value + tail, res.error))
}

/// In polar coordinates the box deficit `|h_x| L_y + |h_y| L_x - |h_x h_y|`
/// is a polynomial in `r` until the shift leaves the box, after which it
/// is `|Ω|`. By symmetry one quadrant suffices.
fn box_deficit_quadrature(shape: &Shape, lx: f64, ly: f64, kernel: &Kernel, t: f64) -> Result<Estimate> {
    let vol = shape.volume();
    let scale = kernel.scale(t);
    let corner = ly.atan2(lx);
    let mut inner_err = 0.0_f64;
    let mut inner_failure = None;
    let outer = quad::integrate_breaks(
        |th: f64| {
            let (s, c) = th.sin_cos();
            let rm = (lx / c.max(1e-300)).min(ly / s.max(1e-300));
            let a = lx * s + ly * c;
            let b = c * s;
            let lo = 1e-9 * scale.min(rm);
            let breaks = log_breaks(lo, rm, scale);
            let inner = quad::integrate_breaks(
                |u: f64| {
                    let r = u.exp();
                    kernel.density_at(t, r) * r * r * r * (a - b * r)
                },
                &breaks,
                1e-16 * vol,
                1e-11,
            );
            match inner {
                Ok(q) => {
                    inner_err = inner_err.max(q.error);
                    q.value + vol * kernel.survival(t, rm) / (2.0 * PI)
                }
                Err(e) => {
                    inner_failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &[0.0, corner, PI / 2.0],
        1e-15 * vol,
        1e-10,
    );
    if let Some(e) = inner_failure {
        return Err(e);
    }
    let outer = outer?;
    Ok(Estimate::deterministic(4.0 * outer.value, 4.0 * (outer.error + inner_err)))
}

/// One side of the Gaussian box: `1 - F(L)/L` with
/// `F(L) = L erf(L / 2√t) - 2 √(t/π) (1 - exp(-L²/4t))`.
fn gaussian_side_loss(len: f64, t: f64) -> f64 {
    let a = len / (2.0 * t.sqrt());
    erfc(a) + -(-a * a).exp_m1() / (a * PI.sqrt())
}

fn gaussian_box_deficit(shape: &Shape, t: f64) -> Result<f64> {
    match shape {
        Shape::Box { lo, hi } => {
            let s: f64 = lo.iter().zip(hi).map(|(a, b)| (-gaussian_side_loss(b - a, t)).ln_1p()).sum();
            Ok(shape.volume() * -s.exp_m1())
        }
        _ => Err(Error::InvalidShape("the closed-form Gaussian heat content needs a box".into())),
    }
}

/// Closed-form heat content of a box for α = 2: the product over sides of
/// `L erf(L / 2√t) - 2 √(t/π) (1 - exp(-L²/4t))`.
pub fn box_heat_content_exact(shape: &Shape, t: f64) -> Result<f64> {
    check_time(t)?;
    match shape {
        Shape::Box { lo, hi } => Ok(lo
            .iter()
            .zip(hi)
            .map(|(a, b)| {
                let l = b - a;
                l * erf(l / (2.0 * t.sqrt())) - 2.0 * (t / PI).sqrt() * -(-l * l / (4.0 * t)).exp_m1()
            })
            .product()),
        _ => Err(Error::InvalidShape("the closed-form Gaussian heat content needs a box".into())),
    }
}

// ---------------------------------------------------------------------------
// spectral heat content

/// `Q` at two grid resolutions from common paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralHeatContent {
    /// survival checked at `n_steps + 1` grid points
    pub coarse: Estimate,
    /// survival checked at `2 n_steps + 1` grid points
    pub fine: Estimate,
    pub n_steps: usize,
    /// `coarse - fine`, the part of the discretization bias the finer grid removes
    pub refinement_gap: Estimate,
}

/// `Q_Ω(t) = ∫_Ω P_x(t <= τ_Ω) dx` by checking the path at grid points.
/// Jumps out and back between grid points are missed, so both values are
/// biased high; the fine value is never above the coarse one.
pub fn spectral_heat_content(
    shape: &Shape,
    kernel: &Kernel,
    t: f64,
    cfg: &FunctionalConfig,
) -> Result<SpectralHeatContent> {
    check_time(t)?;
    check_dims(shape, kernel)?;
    cfg.validate()?;
    let d = shape.d();
    let index = kernel.index();
    let n_fine = 2 * cfg.n_steps;
    let dt = t / n_fine as f64;
    let m = plan(cfg, "spectral", t, cfg.n_steps as u64).run(|rng: &mut ChaCha8Rng, out: &mut [f64; 3]| {
        let mut x = vec![0.0; d];
        let mut inc = vec![0.0; d];
        shape.sample_uniform_into(rng, &mut x);
        let mut fine_ok = true;
        let mut coarse_ok = true;
        for j in 1..=n_fine {
            isotropic_increment_into(index, dt, rng, &mut inc);
            for (xi, di) in x.iter_mut().zip(&inc) {
                *xi += di;
            }
            if !shape.contains(&x) {
                fine_ok = false;
                if j % 2 == 0 {
                    coarse_ok = false;
                    break;
                }
            }
        }
        let c = if coarse_ok { 1.0 } else { 0.0 };
        let f = if fine_ok { 1.0 } else { 0.0 };
        *out = [c, f, c - f];
    });
    let vol = shape.volume();
    Ok(SpectralHeatContent {
        coarse: m[0].estimate(cfg.seed).scale(vol),
        fine: m[1].estimate(cfg.seed).scale(vol),
        n_steps: cfg.n_steps,
        refinement_gap: m[2].estimate(cfg.seed).scale(vol),
    })
}

// ---------------------------------------------------------------------------
// occupation functionals

/// Everything one pass of Palm-sampled paths yields, with the occupation
/// time `A` taken as the left-endpoint Riemann sum on `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationMoments {
    /// `∫ dx E_x[1 - exp(-A)]`
    pub psi: Estimate,
    /// `∫ dx E_x[A²]`
    pub t2: Estimate,
    /// `∫ dx E_x[A³]`
    pub t3: Estimate,
    /// `∫ dx E_x[1 - exp(-A) - A + A²/2]`, which equals `Ψ - T^(1) + T^(2)/2`
    /// for the discretised occupation time
    pub remainder: Estimate,
    pub n_steps: usize,
}

/// `φ(A)/A` with `φ(A) = 1 - e^{-A} - A + A²/2`, by series for small `A`.
fn phi_over_a(a: f64) -> f64 {
    if a < 1e-2 {
        // A²/6 - A³/24 + A⁴/120 - A⁵/720
        a * a * (1.0 / 6.0 - a * (1.0 / 24.0 - a * (1.0 / 120.0 - a / 720.0)))
    } else {
        (-(-a).exp_m1() - a + 0.5 * a * a) / a
    }
}

/// `(1 - e^{-A}) / A`, equal to 1 at `A = 0`.
fn psi_over_a(a: f64) -> f64 {
    if a < 1e-8 {
        1.0 - 0.5 * a
    } else {
        -(-a).exp_m1() / a
    }
}

pub fn occupation_moments(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<OccupationMoments> {
    check_time(t)?;
    check_dims(shape, kernel)?;
    cfg.validate()?;
    let d = shape.d();
    let n = cfg.n_steps;
    let index = kernel.index();
    let dt = t / n as f64;
    let m = plan(cfg, "palm", t, n as u64).run(|rng: &mut ChaCha8Rng, out: &mut [f64; 4]| {
        let mut y = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut inc = vec![0.0; d];
        shape.sample_uniform_into(rng, &mut y);
        let j = rng.random_range(0..n);
        // grid points 0..n-1 are left endpoints; point j is y itself
        let mut count = 1usize;
        x.copy_from_slice(&y);
        for _ in j + 1..n {
            isotropic_increment_into(index, dt, rng, &mut inc);
            for (xi, di) in x.iter_mut().zip(&inc) {
                *xi += di;
            }
            if shape.contains(&x) {
                count += 1;
            }
        }
        // increments are symmetric, so the backward walk has the same law
        x.copy_from_slice(&y);
        for _ in 0..j {
            isotropic_increment_into(index, dt, rng, &mut inc);
            for (xi, di) in x.iter_mut().zip(&inc) {
                *xi += di;
            }
            if shape.contains(&x) {
                count += 1;
            }
        }
        let a = t * count as f64 / n as f64;
        *out = [psi_over_a(a), a, a * a, phi_over_a(a)];
    });
    let w = t * shape.volume();
    Ok(OccupationMoments {
        psi: m[0].estimate(cfg.seed).scale(w),
        t2: m[1].estimate(cfg.seed).scale(w),
        t3: m[2].estimate(cfg.seed).scale(w),
        remainder: m[3].estimate(cfg.seed).scale(w),
        n_steps: n,
    })
}

/// `Ψ` with the bracket `e^{-t} T^(3)/3! <= R <= |Ω| t³/3!` attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiResult {
    pub psi: Estimate,
    pub r_lower: f64,
    pub r_upper: f64,
    pub method: PsiMethod,
}

fn r_bracket(shape: &Shape, t: f64, t3: &Estimate) -> (f64, f64) {
    ((-t).exp() * t3.value / 6.0, shape.volume() * t.powi(3) / 6.0)
}

/// `Ψ_Ω(t) = ∫ dx E_x[1 - exp(-∫_0^t 1_Ω(X_s) ds)]` from free paths.
pub fn psi_direct(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<PsiResult> {
    let m = occupation_moments(shape, kernel, t, cfg)?;
    let (r_lower, r_upper) = r_bracket(shape, t, &m.t3);
    Ok(PsiResult { psi: m.psi, r_lower, r_upper, method: PsiMethod::Direct })
}

/// Plain Monte Carlo over the padded bounding box. The neglected outer mass
/// is at most `t |Ω| P(|X_1| > padding)` and is added to the standard error.
pub fn psi_truncated(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<PsiResult> {
    check_time(t)?;
    check_dims(shape, kernel)?;
    cfg.validate()?;
    let d = shape.d();
    let n = cfg.n_steps;
    let index = kernel.index();
    let dt = t / n as f64;
    let pad = cfg.truncation_padding * kernel.scale(t);
    let (lo, hi) = shape.bounding_box();
    let lo: Vec<f64> = lo.iter().map(|v| v - pad).collect();
    let hi: Vec<f64> = hi.iter().map(|v| v + pad).collect();
    let outer_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let m = plan(cfg, "psi-truncated", t, n as u64).run(|rng: &mut ChaCha8Rng, out: &mut [f64; 2]| {
        let mut x = vec![0.0; d];
        let mut inc = vec![0.0; d];
        for (xi, (a, b)) in x.iter_mut().zip(lo.iter().zip(&hi)) {
            *xi = a + (b - a) * rng.random::<f64>();
        }
        let mut count = 0usize;
        for k in 0..n {
            if shape.contains(&x) {
                count += 1;
            }
            if k + 1 < n {
                isotropic_increment_into(index, dt, rng, &mut inc);
                for (xi, di) in x.iter_mut().zip(&inc) {
                    *xi += di;
                }
            }
        }
        let a = t * count as f64 / n as f64;
        *out = [-(-a).exp_m1(), a * a * a];
    });
    let bias = t * shape.volume() * kernel.unit_survival(cfg.truncation_padding);
    let mut psi = m[0].estimate(cfg.seed).scale(outer_vol);
    psi.stderr = psi.stderr.hypot(bias);
    let t3 = m[1].estimate(cfg.seed).scale(outer_vol);
    let (r_lower, r_upper) = r_bracket(shape, t, &t3);
    Ok(PsiResult { psi, r_lower, r_upper, method: PsiMethod::Truncated })
}

/// `∫_0^1 (1 - Δ) (|Ω| - H(tΔ)) dΔ` by Gauss–Legendre after `Δ = u²`, which
/// removes the `Δ^{1/α}` endpoint behaviour of the deficit.
pub fn weighted_deficit_integral(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<Estimate> {
    check_time(t)?;
    let mut value = 0.0;
    let mut var = 0.0;
    let mut n_samples = 0;
    for (i, (u, w)) in gauss_legendre(cfg.quadrature_nodes, 0.0, 1.0).into_iter().enumerate() {
        let delta = u * u;
        let node_cfg = FunctionalConfig { seed: cfg.seed ^ (i as u64).wrapping_mul(0x9E37_79B9), ..*cfg };
        let hc = heat_content(shape, kernel, t * delta, &node_cfg)?;
        let weight = w * 2.0 * u * (1.0 - delta);
        value += weight * hc.deficit.value;
        var += (weight * hc.deficit.stderr).powi(2);
        n_samples = hc.deficit.n_samples;
    }
    Ok(Estimate { value, stderr: var.sqrt(), n_samples, seed: cfg.seed })
}

/// Ψ from the decomposition with the remainder at the midpoint of its bracket.
pub fn psi_decomposed(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<PsiResult> {
    let j = weighted_deficit_integral(shape, kernel, t, cfg)?;
    let m = occupation_moments(shape, kernel, t, cfg)?;
    let (r_lower, r_upper) = r_bracket(shape, t, &m.t3);
    let vol = shape.volume();
    let mid = 0.5 * (r_lower + r_upper);
    let value = t * vol - 0.5 * t * t * vol + t * t * j.value + mid;
    let stderr = (t * t * j.stderr).hypot((-t).exp() * m.t3.stderr / 12.0);
    let psi = Estimate { value, stderr, n_samples: m.psi.n_samples, seed: cfg.seed };
    Ok(PsiResult { psi, r_lower, r_upper, method: PsiMethod::Decomposed })
}

/// `Ψ` by the requested method.
pub fn psi(shape: &Shape, kernel: &Kernel, t: f64, method: PsiMethod, cfg: &FunctionalConfig) -> Result<PsiResult> {
    match method {
        PsiMethod::Direct => psi_direct(shape, kernel, t, cfg),
        PsiMethod::Truncated => psi_truncated(shape, kernel, t, cfg),
        PsiMethod::Decomposed => psi_decomposed(shape, kernel, t, cfg),
    }
}

/// `T^(k)_Ω(t) = ∫ dx E_x[A_t^k]` for `k ∈ {1, 2, 3}`: `t|Ω|` exactly for
/// `k = 1`, `2t² ∫(1-Δ) H(tΔ) dΔ` for `k = 2`, free paths for `k = 3`.
pub fn t_moment(shape: &Shape, kernel: &Kernel, t: f64, k: u32, cfg: &FunctionalConfig) -> Result<Estimate> {
    check_time(t)?;
    let vol = shape.volume();
    match k {
        1 => Ok(Estimate::exact(t * vol)),
        2 => {
            let j = weighted_deficit_integral(shape, kernel, t, cfg)?;
            // ∫(1-Δ)H = |Ω|/2 - ∫(1-Δ)(|Ω|-H)
            Ok(Estimate { value: t * t * (vol - 2.0 * j.value), stderr: 2.0 * t * t * j.stderr, ..j })
        }
        3 => Ok(occupation_moments(shape, kernel, t, cfg)?.t3),
        _ => Err(Error::Domain(format!("occupation moments are implemented for k in {{1, 2, 3}}, got k = {k}"))),
    }
}

/// `R(t) = Ψ - T^(1) + T^(2)/2`, evaluated path by path so that the
/// cancellation happens before averaging.
pub fn remainder_r(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<Estimate> {
    Ok(occupation_moments(shape, kernel, t, cfg)?.remainder)
}

// ---------------------------------------------------------------------------
// simplex integrals

/// Integrands over the ordered simplex `0 <= λ1 <= λ2 <= 1` that depend on `λ2 - λ1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimplexKind {
    /// `Δ`
    Linear,
    /// `Δ ln Δ`
    LogLinear,
    /// `Δ^{1/α}`
    Power(f64),
}

impl SimplexKind {
    pub fn eval(self, delta: f64) -> f64 {
        match self {
            SimplexKind::Linear => delta,
            SimplexKind::LogLinear => {
                if delta == 0.0 {
                    0.0
                } else {
                    delta * delta.ln()
                }
            }
            SimplexKind::Power(a) => delta.powf(1.0 / a),
        }
    }
}

/// Closed forms: `1/6`, `-5/36` and `α² / ((1+α)(1+2α))`.
pub fn simplex_integral(kind: SimplexKind) -> Result<f64> {
    match kind {
        SimplexKind::Linear => Ok(1.0 / 6.0),
        SimplexKind::LogLinear => Ok(-5.0 / 36.0),
        SimplexKind::Power(a) if a > 0.0 && a.is_finite() => Ok(a * a / ((1.0 + a) * (1.0 + 2.0 * a))),
        SimplexKind::Power(a) => Err(Error::Domain(format!("power simplex integral needs alpha > 0, got {a}"))),
    }
}

/// `∫_0^1 dλ2 ∫_0^{λ2} dλ1 f(λ2 - λ1)` by nested adaptive quadrature.
pub fn simplex_quadrature_2d<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let mut inner_failure = None;
    let outer = quad::integrate(
        |l2: f64| match quad::integrate(|l1: f64| f(l2 - l1), 0.0, l2, 1e-15, 1e-13) {
            Ok(r) => r.value,
            Err(e) => {
                inner_failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        1.0,
        1e-14,
        1e-12,
    );
    if let Some(e) = inner_failure {
        return Err(e);
    }
    Ok(outer?.value)
}

/// `∫_0^1 (1 - Δ) f(Δ) dΔ`, the one-dimensional reduction of the simplex integral.
pub fn simplex_reduced<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    Ok(quad::integrate(|d: f64| (1.0 - d) * f(d), 0.0, 1.0, 1e-15, 1e-13)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::StabilityIndex;

    fn kernel(a: f64) -> Kernel {
        Kernel::new(StabilityIndex::new(a, 2).unwrap()).unwrap()
    }

    fn small_cfg() -> FunctionalConfig {
        FunctionalConfig { n_samples: 40_000, n_steps: 16, seed: 5, ..FunctionalConfig::default() }
    }

    #[test]
    fn simplex_closed_forms_match_quadrature() {
        for kind in [SimplexKind::Linear, SimplexKind::LogLinear, SimplexKind::Power(2.0), SimplexKind::Power(0.5)] {
            let exact = simplex_integral(kind).unwrap();
            let two_d = simplex_quadrature_2d(|x| kind.eval(x)).unwrap();
            let one_d = simplex_reduced(|x| kind.eval(x)).unwrap();
            assert!((exact - two_d).abs() < 1e-8, "{kind:?}");
            assert!((two_d - one_d).abs() < 1e-10, "{kind:?}");
        }
        assert!((simplex_integral(SimplexKind::Power(2.0)).unwrap() - 4.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_box_closed_form() {
        let sq = Shape::unit_cube(2).unwrap();
        // 30-digit evaluation of the erf product
        assert!((box_heat_content_exact(&sq, 0.01).unwrap() - 0.787_056_562_028_301_68).abs() < 1e-14);
        assert!((box_heat_content_exact(&sq, 0.1).unwrap() - 0.418_761_477_123_594_84).abs() < 1e-14);
        assert!((box_heat_content_exact(&sq, 1e-10).unwrap() - 1.0).abs() < 1e-4);
        assert!(box_heat_content_exact(&sq, 1e6).unwrap() < 1e-5);
        let d = gaussian_box_deficit(&sq, 0.01).unwrap();
        assert!((1.0 - d - box_heat_content_exact(&sq, 0.01).unwrap()).abs() < 1e-14);
        assert!(box_heat_content_exact(&Shape::unit_ball(2).unwrap(), 0.1).is_err());
    }

    #[test]
    fn one_dimensional_overlap_by_quadrature() {
        // ∫_0^1 ∫_0^1 g_t(u - v) du dv = 2 ∫_0^1 (1 - h) g_t(h) dh
        let t: f64 = 0.01;
        let g = |h: f64| (-h * h / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
        let q = quad::integrate(|h| 2.0 * (1.0 - h) * g(h), 0.0, 1.0, 1e-14, 1e-12).unwrap().value;
        let exact = box_heat_content_exact(&Shape::unit_cube(2).unwrap(), t).unwrap().sqrt();
        assert!((q - exact).abs() < 1e-10);
    }

    #[test]
    fn box_quadrature_matches_gaussian_closed_form() {
        // the polar box quadrature applied to the Gaussian kernel
        let sq = Shape::cuboid(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let k = kernel(2.0);
        for t in [1e-3, 0.05] {
            let q = box_deficit_quadrature(&sq, 1.0, 2.0, &k, t).unwrap().value;
            let e = gaussian_box_deficit(&sq, t).unwrap();
            assert!((q - e).abs() < 1e-8 * e, "t={t}: {q} vs {e}");
        }
    }

    #[test]
    fn ball_quadrature_agrees_with_covariogram_monte_carlo() {
        let disk = Shape::unit_ball(2).unwrap();
        let k = kernel(1.0);
        let q = deficit_quadrature(&disk, &k, 0.05).unwrap();
        let cfg = FunctionalConfig { heat_method: HeatMethod::Covariogram, ..small_cfg() };
        let mc = heat_content(&disk, &k, 0.05, &cfg).unwrap().deficit;
        assert!((q.value - mc.value).abs() < 4.0 * mc.stderr, "{} vs {} ± {}", q.value, mc.value, mc.stderr);
        let cfg = FunctionalConfig { heat_method: HeatMethod::Indicator, ..small_cfg() };
        let ind = heat_content(&disk, &k, 0.05, &cfg).unwrap().deficit;
        assert!((q.value - ind.value).abs() < 4.0 * ind.stderr);
    }

    #[test]
    fn heat_content_near_zero_time() {
        let disk = Shape::unit_ball(2).unwrap();
        let hc = heat_content(&disk, &kernel(1.5), 1e-6, &FunctionalConfig::default()).unwrap();
        assert_eq!(hc.method, HeatMethod::Quadrature);
        assert!(hc.h.value / PI >= 0.999);
        assert!(heat_content(&disk, &kernel(1.5), 0.0, &FunctionalConfig::default()).is_err());
    }

    #[test]
    fn spectral_below_heat_and_refinement_monotone() {
        let disk = Shape::unit_ball(2).unwrap();
        let k = kernel(1.5);
        let cfg = small_cfg();
        let q = spectral_heat_content(&disk, &k, 0.05, &cfg).unwrap();
        let h = heat_content(&disk, &k, 0.05, &cfg).unwrap();
        assert!(q.fine.value <= q.coarse.value);
        assert!(q.refinement_gap.value >= 0.0);
        assert!(q.coarse.le_within(&h.h, 3.0));
    }

    #[test]
    fn palm_moments_obey_exact_bounds() {
        let disk = Shape::unit_ball(2).unwrap();
        let k = kernel(1.5);
        let t = 0.05;
        let m = occupation_moments(&disk, &k, t, &small_cfg()).unwrap();
        let vol = PI;
        assert!(m.psi.value >= 0.0 && m.psi.value <= t * vol);
        assert!(m.t3.value <= t.powi(3) * vol * (1.0 + 1e-12));
        assert!(m.remainder.value <= m.t3.value / 6.0);
        assert!(m.remainder.value >= (-t).exp() * m.t3.value / 6.0);
    }

    #[test]
    fn discrete_t2_matches_lag_sum_of_heat_content() {
        // ∫dx E[A_n²] = (t/n)² [n |Ω| + 2 Σ_m (n - m) H(m t / n)]
        let disk = Shape::unit_ball(2).unwrap();
        let k = kernel(1.5);
        let t = 0.1;
        let cfg = FunctionalConfig { n_steps: 8, n_samples: 200_000, ..small_cfg() };
        let m = occupation_moments(&disk, &k, t, &cfg).unwrap();
        let n = 8;
        let mut s = n as f64 * PI;
        for lag in 1..n {
            s += 2.0 * (n - lag) as f64 * heat_content(&disk, &k, lag as f64 * t / n as f64, &cfg).unwrap().h.value;
        }
        let want = (t / n as f64).powi(2) * s;
        assert!((m.t2.value - want).abs() < 4.0 * m.t2.stderr, "{} ± {} vs {want}", m.t2.value, m.t2.stderr);
    }

    #[test]
    fn direct_and_truncated_agree_for_brownian_motion() {
        let disk = Shape::unit_ball(2).unwrap();
        let k = kernel(2.0);
        let cfg = small_cfg();
        let a = psi_direct(&disk, &k, 0.05, &cfg).unwrap();
        let b = psi_truncated(&disk, &k, 0.05, &cfg).unwrap();
        assert!((a.psi.value - b.psi.value).abs() < 4.0 * a.psi.stderr.hypot(b.psi.stderr));
    }

    #[test]
    fn moment_one_is_exact_and_k_validated() {
        let disk = Shape::unit_ball(2).unwrap();
        let k = kernel(1.5);
        let cfg = small_cfg();
        assert_eq!(t_moment(&disk, &k, 0.01, 1, &cfg).unwrap().value, 0.01 * PI);
        assert!(t_moment(&disk, &k, 0.01, 4, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = FunctionalConfig { truncation_padding: 0.0, ..FunctionalConfig::default() };
        assert!(bad.validate().is_err());
        let bad = FunctionalConfig { n_samples: 0, ..FunctionalConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn phi_series_matches_direct_formula() {
        for a in [1e-3_f64, 5e-3, 9.9e-3, 1.01e-2] {
            let direct = (-(-a).exp_m1() - a + 0.5 * a * a) / a;
            assert!((phi_over_a(a) - direct).abs() < 1e-6 * direct);
        }
    }
}
