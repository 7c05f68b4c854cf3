//! Bounded convex domains (balls and boxes) with exact metric data, their
//! covariograms, and the local and nonlocal perimeters.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::estimate::{stream_base, Estimate, SamplingPlan};
use crate::kernel::{kappa_const, sphere_area, unit_ball_volume};
use crate::quad;

/// A closed ball or an axis-aligned closed box in `R^d`, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Shape {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() < 2 {
            return Err(Error::InvalidShape(format!("ball needs d >= 2, got d = {}", center.len())));
        }
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidShape(format!("ball radius must be positive and finite, got {radius}")));
        }
        Ok(Shape::Ball { center, radius })
    }

    /// Ball of radius 1 centred at the origin.
    pub fn unit_ball(d: usize) -> Result<Self> {
        Self::ball(vec![0.0; d], 1.0)
    }

    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.len() < 2 {
            return Err(Error::InvalidShape(format!("box needs d >= 2, got d = {}", lo.len())));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidShape(format!("box side {i} is degenerate: lo = {a}, hi = {b}")));
            }
        }
        Ok(Shape::Box { lo, hi })
    }

    /// `[0, 1]^d`.
    pub fn unit_cube(d: usize) -> Result<Self> {
        Self::cuboid(vec![0.0; d], vec![1.0; d])
    }

    pub fn d(&self) -> usize {
        match self {
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lo, .. } => lo.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Shape::Ball { center, radius } => unit_ball_volume(center.len()) * radius.powi(center.len() as i32),
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
        }
    }

    /// Surface measure of the boundary.
    pub fn perimeter(&self) -> f64 {
        match self {
            Shape::Ball { center, radius } => sphere_area(center.len()) * radius.powi(center.len() as i32 - 1),
            Shape::Box { .. } => {
                let sides = self.side_lengths();
                let vol: f64 = sides.iter().product();
                sides.iter().map(|l| 2.0 * vol / l).sum()
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Box { .. } => self.side_lengths().iter().map(|l| l * l).sum::<f64>().sqrt(),
        }
    }

    fn side_lengths(&self) -> Vec<f64> {
        match self {
            Shape::Ball { center, radius } => vec![2.0 * radius; center.len()],
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).collect(),
        }
    }

    /// Smallest axis-aligned box containing the shape.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        match self {
            Shape::Ball { center, .. } => center.clone(),
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    /// Membership with the closed-set convention. Hot loops call this; the
    /// dimension is only checked in debug builds (see [`Shape::try_contains`]).
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.d());
        match self {
            Shape::Ball { center, radius } => {
                let mut s = 0.0;
                for (xi, ci) in x.iter().zip(center) {
                    let u = xi - ci;
                    s += u * u;
                }
                s <= radius * radius
            }
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b),
        }
    }

    pub fn try_contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.len() });
        }
        Ok(self.contains(x))
    }

    /// Writes a uniform point of the shape into `out`.
    pub fn sample_uniform_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Shape::Ball { center, radius } => loop {
                let mut s = 0.0;
                for (o, c) in out.iter_mut().zip(center) {
                    let u = rng.random_range(-1.0..1.0);
                    s += u * u;
                    *o = c + radius * u;
                }
                if s <= 1.0 {
                    return;
                }
            },
            Shape::Box { lo, hi } => {
                for (o, (a, b)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                    *o = a + (b - a) * rng.random::<f64>();
                }
            }
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.d()];
        self.sample_uniform_into(rng, &mut x);
        x
    }

    /// Distance from an interior point to the boundary along the unit vector `dir`.
    pub fn ray_exit(&self, y: &[f64], dir: &[f64]) -> f64 {
        match self {
            Shape::Ball { center, radius } => {
                let mut b = 0.0;
                let mut c = 0.0;
                for ((yi, ci), wi) in y.iter().zip(center).zip(dir) {
                    let u = yi - ci;
                    b += u * wi;
                    c += u * u;
                }
                let disc = (b * b - (c - radius * radius)).max(0.0);
                -b + disc.sqrt()
            }
            Shape::Box { lo, hi } => {
                let mut s = f64::INFINITY;
                for ((yi, wi), (a, bb)) in y.iter().zip(dir).zip(lo.iter().zip(hi)) {
                    if *wi > 0.0 {
                        s = s.min((bb - yi) / wi);
                    } else if *wi < 0.0 {
                        s = s.min((a - yi) / wi);
                    }
                }
                s.max(0.0)
            }
        }
    }

    /// Covariogram deficit `|Ω| - |Ω ∩ (Ω + h)|`, the measure of points of
    /// `Ω` that leave `Ω` under the shift `h`.
    pub fn shift_deficit(&self, h: &[f64]) -> f64 {
        match self {
            Shape::Ball { radius, .. } => {
                let r = h.iter().map(|x| x * x).sum::<f64>().sqrt();
                self.ball_deficit(r, *radius)
            }
            Shape::Box { .. } => {
                let sides = self.side_lengths();
                let mut log_frac = 0.0;
                for (l, hi) in sides.iter().zip(h) {
                    let u = hi.abs() / l;
                    if u >= 1.0 {
                        return self.volume();
                    }
                    log_frac += (-u).ln_1p();
                }
                self.volume() * -log_frac.exp_m1()
            }
        }
    }

    /// Radial covariogram deficit of a ball, accurate for small shifts.
    pub fn radial_deficit(&self, r: f64) -> Result<f64> {
        match self {
            Shape::Ball { radius, .. } => Ok(self.ball_deficit(r, *radius)),
            Shape::Box { .. } => Err(Error::Unsupported("radial deficit is only defined for balls".into())),
        }
    }

    fn ball_deficit(&self, r: f64, radius: f64) -> f64 {
        let vol = self.volume();
        if r >= 2.0 * radius {
            return vol;
        }
        if r <= 0.0 {
            return 0.0;
        }
        // the lens |B ∩ (B + h)| is |B| I_{1-u^2}((d+1)/2, 1/2) with u = r / 2R
        let u = r / (2.0 * radius);
        vol * beta_reg(0.5, (self.d() as f64 + 1.0) / 2.0, u * u)
    }

    /// Canonical spec string, accepted back by [`Shape::from_str`].
    pub fn spec(&self) -> String {
        self.to_string()
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Ball { center, radius } => {
                write!(f, "ball:d={},r={}", center.len(), radius)?;
                if center.iter().any(|&c| c != 0.0) {
                    write!(f, ",c={}", join(center))?;
                }
                Ok(())
            }
            Shape::Box { lo, hi } => write!(f, "box:d={},lo={},hi={}", lo.len(), join(lo), join(hi)),
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// Parses `ball:d=2,r=1[,c=x,y]` or `box:d=2,lo=0,0,hi=1,1`. Unknown or
    /// repeated keys and length mismatches are rejected.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidShape(format!("{m} in shape spec '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("missing ':'".into()))?;
        let mut fields: Vec<(String, Vec<f64>)> = Vec::new();
        for tok in rest.split(',') {
            let tok = tok.trim();
            let (key, val) = match tok.split_once('=') {
                Some((k, v)) => {
                    if fields.iter().any(|(f, _)| f == k) {
                        return Err(bad(format!("repeated key '{k}'")));
                    }
                    fields.push((k.to_string(), Vec::new()));
                    (k.to_string(), v)
                }
                None => match fields.last() {
                    Some((k, _)) => (k.clone(), tok),
                    None => return Err(bad(format!("value '{tok}' without a key"))),
                },
            };
            let x: f64 = val.parse().map_err(|_| bad(format!("'{val}' is not a number for key '{key}'")))?;
            fields.last_mut().expect("key pushed").1.push(x);
        }
        let take = |name: &str| fields.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
        let allowed: &[&str] = match kind {
            "ball" => &["d", "r", "c"],
            "box" => &["d", "lo", "hi"],
            other => return Err(bad(format!("unknown shape kind '{other}'"))),
        };
        if let Some((k, _)) = fields.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(bad(format!("unknown key '{k}'")));
        }
        let d = match take("d").as_deref() {
            Some([d]) if *d >= 2.0 && d.fract() == 0.0 => *d as usize,
            _ => return Err(bad("key 'd' must be one integer >= 2".into())),
        };
        let vector = |name: &str| -> Result<Vec<f64>> {
            let v = take(name).ok_or_else(|| bad(format!("missing key '{name}'")))?;
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            Ok(v)
        };
        match kind {
            "ball" => {
                let r = match take("r").as_deref() {
                    Some([r]) => *r,
                    _ => return Err(bad("key 'r' must be one number".into())),
                };
                let c = if take("c").is_some() { vector("c")? } else { vec![0.0; d] };
                Shape::ball(c, r)
            }
            _ => Shape::cuboid(vector("lo")?, vector("hi")?),
        }
    }
}

/// `λ(Ω) = |Ω| A_d κ_d / diam(Ω) + (Per(Ω)/π) (ln diam(Ω) + ∫_0^1 r^d (1+r^2)^{-(d+1)/2} dr)`,
/// with `A_d` the area of the unit sphere.
pub fn lambda_const(shape: &Shape) -> f64 {
    let d = shape.d();
    let diam = shape.diameter();
    shape.volume() * sphere_area(d) * kappa_const(d) / diam
        + shape.perimeter() / PI * (diam.ln() + lambda_inner_integral(d))
}

/// `∫_0^1 r^d / (1 + r^2)^{(d+1)/2} dr`.
pub fn lambda_inner_integral(d: usize) -> f64 {
    let e = (d as f64 + 1.0) / 2.0;
    quad::integrate(|r: f64| r.powi(d as i32) / (1.0 + r * r).powf(e), 0.0, 1.0, 1e-15, 1e-14)
        .expect("smooth integrand")
        .value
}

/// `γ_d(Ω) = (|Ω| + λ(Ω))/3! + 5 Per(Ω) / (36 π)`.
pub fn gamma_const(shape: &Shape) -> f64 {
    (shape.volume() + lambda_const(shape)) / 6.0 + 5.0 * shape.perimeter() / (36.0 * PI)
}

/// How to evaluate the α-perimeter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerimeterMethod {
    MonteCarlo { n_samples: u64, seed: u64 },
    /// balls in any dimension, boxes in the plane
    Quadrature,
}

/// `P_α(Ω) = ∫_Ω ∫_{Ω^c} |x - y|^{-d-α} dx dy` for `0 < α < 1`.
pub fn alpha_perimeter(shape: &Shape, alpha: f64, method: PerimeterMethod) -> Result<Estimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha-perimeter needs 0 < alpha < 1, got {alpha}")));
    }
    match method {
        PerimeterMethod::Quadrature => perimeter_quadrature(shape, alpha),
        PerimeterMethod::MonteCarlo { n_samples, seed } => Ok(perimeter_monte_carlo(shape, alpha, n_samples, seed)),
    }
}

/// Writing the double integral as `∫ |h|^{-d-α} (|Ω| - |Ω ∩ (Ω+h)|) dh`
/// leaves a one-dimensional radial integral for balls and a closed-form
/// radial integral for planar boxes.
fn perimeter_quadrature(shape: &Shape, alpha: f64) -> Result<Estimate> {
    let d = shape.d();
    let vol = shape.volume();
    match shape {
        Shape::Ball { radius, .. } => {
            let two_r = 2.0 * radius;
            let area = sphere_area(d);
            // r = 2R v^{1/(1-α)} removes the r^{-α} endpoint singularity
            let q = 1.0 / (1.0 - alpha);
            let inner = quad::integrate(
                |v: f64| {
                    if v == 0.0 {
                        return 0.0;
                    }
                    let r = two_r * v.powf(q);
                    shape.ball_deficit(r, *radius) * r.powf(-alpha) * q / v
                },
                0.0,
                1.0,
                1e-14,
                1e-12,
            )?;
            let tail = vol * two_r.powf(-alpha) / alpha;
            Ok(Estimate::deterministic(area * (inner.value + tail), area * inner.error))
        }
        Shape::Box { .. } if d == 2 => {
            let l = shape.side_lengths();
            let (lx, ly) = (l[0], l[1]);
            let corner = ly.atan2(lx);
            let g = |th: f64| {
                let (s, c) = th.sin_cos();
                let rm = (lx / c).min(ly / s);
                (lx * s + ly * c) * rm.powf(1.0 - alpha) / (1.0 - alpha) - c * s * rm.powf(2.0 - alpha) / (2.0 - alpha)
                    + vol * rm.powf(-alpha) / alpha
            };
            let res = quad::integrate_breaks(g, &[0.0, corner, PI / 2.0], 1e-14, 1e-13)?;
            Ok(Estimate::deterministic(4.0 * res.value, 4.0 * res.error))
        }
        Shape::Box { .. } => Err(Error::Unsupported(format!(
            "quadrature alpha-perimeter of a box is implemented for d = 2 only (got d = {d}); use Monte Carlo"
        ))),
    }
}

/// Weight of the uniform component in the boundary-layer proposal.
const UNIFORM_WEIGHT: f64 = 0.3;

/// For convex `Ω` the inner integral over `Ω^c` in polar coordinates around
/// `y` is `∫_{S^{d-1}} ρ(y, ω)^{-α} / α dω`, with `ρ` the exit distance. One
/// random direction per point estimates it. Points `y` come from a mixture
/// that puts density `∝ δ^{-α}` on the distance `δ` to the boundary, which
/// keeps the variance finite for every `α < 1`.
fn perimeter_monte_carlo(shape: &Shape, alpha: f64, n_samples: u64, seed: u64) -> Estimate {
    let d = shape.d();
    let area = sphere_area(d);
    let vol = shape.volume();
    let plan = SamplingPlan::new(seed, stream_base("alpha-perimeter", alpha.to_bits()), n_samples);
    let expo = 1.0 / (1.0 - alpha);
    // Distances to the boundary are carried exactly rather than recomputed
    // from coordinates, since the proposal puts mass within rounding error
    // of the boundary once α is close to 1.
    let m = plan.run(|rng: &mut ChaCha8Rng, out: &mut [f64; 1]| {
        let mut u = vec![0.0; d];
        let mut w = vec![0.0; d];
        let (density, s) = match shape {
            Shape::Ball { center, radius } => {
                let delta = if rng.random::<f64>() < UNIFORM_WEIGHT {
                    shape.sample_uniform_into(rng, &mut u);
                    u.iter_mut().zip(center).for_each(|(a, c)| *a -= c);
                    let rho = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                    u.iter_mut().for_each(|a| *a /= rho);
                    radius - rho
                } else {
                    unit_direction(rng, &mut u);
                    radius * rng.random::<f64>().powf(expo)
                }
                .max(f64::MIN_POSITIVE);
                let rho = radius - delta;
                let q_delta = (1.0 - alpha) * delta.powf(-alpha) / radius.powf(1.0 - alpha);
                let density = UNIFORM_WEIGHT / vol + (1.0 - UNIFORM_WEIGHT) * q_delta / (area * rho.powi(d as i32 - 1));
                unit_direction(rng, &mut w);
                let b = rho * u.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let c = delta * (2.0 * radius - delta);
                let root = (b * b + c).sqrt();
                (density, if b > 0.0 { c / (b + root) } else { root - b })
            }
            Shape::Box { lo, hi } => {
                let mut q = 1.0;
                // (distance to lower face, distance to upper face)
                let mut faces = Vec::with_capacity(d);
                for (a, b) in lo.iter().zip(hi) {
                    let len = b - a;
                    let half = 0.5 * len;
                    let (dlo, dhi) = if rng.random::<f64>() < UNIFORM_WEIGHT {
                        let x = len * rng.random::<f64>();
                        (x, len - x)
                    } else {
                        let m = (half * rng.random::<f64>().powf(expo)).max(f64::MIN_POSITIVE);
                        if rng.random::<bool>() { (m, len - m) } else { (len - m, m) }
                    };
                    let m = dlo.min(dhi).max(f64::MIN_POSITIVE);
                    let q_m = (1.0 - alpha) * m.powf(-alpha) / (2.0 * half.powf(1.0 - alpha));
                    q *= UNIFORM_WEIGHT / len + (1.0 - UNIFORM_WEIGHT) * q_m;
                    faces.push((dlo, dhi));
                }
                unit_direction(rng, &mut w);
                let s = faces
                    .iter()
                    .zip(&w)
                    .map(|(&(dlo, dhi), &wi)| if wi > 0.0 { dhi / wi } else { dlo / -wi })
                    .fold(f64::INFINITY, f64::min);
                (q, s.max(f64::MIN_POSITIVE))
            }
        };
        out[0] = area * s.powf(-alpha) / alpha / density;
    });
    m[0].estimate(seed)
}

/// Uniform point on the unit sphere.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
            s += *o * *o;
        }
        if s > 1e-300 {
            let inv = s.sqrt().recip();
            out.iter_mut().for_each(|o| *o *= inv);
            return;
        }
    }
}
