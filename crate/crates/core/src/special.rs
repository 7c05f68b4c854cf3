//! Bessel functions of the first kind for the orders a radial Fourier
//! inversion in `d` dimensions needs (`d/2 - 1` and `d/2`, i.e. integer or
//! half-integer), and their positive zeros.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Order of a Bessel function stored as twice its value, so both integer
/// and half-integer orders are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BesselOrder {
    twice: u32,
}

impl BesselOrder {
    pub fn from_twice(twice: u32) -> Self {
        Self { twice }
    }

    /// `J_{d/2-1}`, the order appearing in the `d`-dimensional radial transform.
    pub fn radial(d: usize) -> Self {
        assert!(d >= 2, "radial order needs d >= 2");
        Self { twice: (d - 2) as u32 }
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn next(self) -> Self {
        Self { twice: self.twice + 2 }
    }

    fn is_integer(self) -> bool {
        self.twice % 2 == 0
    }
}

/// `J_nu(x)` for `x >= 0`.
pub fn bessel_j(order: BesselOrder, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if order.is_integer() {
        bessel_j_int((order.twice / 2) as usize, x)
    } else {
        let n = ((order.twice - 1) / 2) as usize;
        if x == 0.0 {
            return 0.0;
        }
        (2.0 * x / PI).sqrt() * spherical_j(n, x)
    }
}

fn bessel_j_int(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 1.0 {
        return series_j(n as f64, x);
    }
    if x >= 25.0_f64.max((n * n) as f64) {
        return hankel_j(n as f64, x);
    }
    miller_j(n, x)
}

/// Power series, used where it has no cancellation (x < 1).
fn series_j(nu: f64, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = h.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    let h2 = h * h;
    for k in 1..60 {
        let kf = k as f64;
        term *= -h2 / (kf * (kf + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller's backward recurrence normalised by `J_0 + 2 sum J_{2k} = 1`.
fn miller_j(n: usize, x: f64) -> f64 {
    let start = {
        let base = n.max(x.ceil() as usize) + 20 + (10.0 * x).sqrt() as usize;
        base + base % 2
    };
    let mut j_next = 0.0_f64;
    let mut j_cur = 1e-300_f64;
    let mut result = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            result *= 1e-250;
            norm *= 1e-250;
        }
        let order = k - 1;
        if order == n {
            result = j_cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * j_cur;
        }
    }
    norm += j_cur;
    if n == 0 {
        result = j_cur;
    }
    result / norm
}

/// Hankel asymptotic expansion for large arguments.
fn hankel_j(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0_f64;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * z);
        if a.abs() > last || a.abs() < 1e-18 {
            break;
        }
        last = a.abs();
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Spherical Bessel `j_n(x)`.
fn spherical_j(n: usize, x: f64) -> f64 {
    if x < n as f64 + 2.0 {
        // j_n(x) = sqrt(pi / 2x) J_{n+1/2}(x), via the ordinary series
        return (PI / (2.0 * x)).sqrt() * series_j(n as f64 + 0.5, x);
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    if n == 0 {
        return j0;
    }
    let mut jm = j0;
    let mut j = (s / x - c) / x;
    for k in 1..n {
        let jn = (2 * k + 1) as f64 / x * j - jm;
        jm = j;
        j = jn;
    }
    j
}

/// Derivative `J_nu'(x) = (nu / x) J_nu(x) - J_{nu+1}(x)`.
pub fn bessel_j_prime(order: BesselOrder, x: f64) -> f64 {
    order.value() / x * bessel_j(order, x) - bessel_j(order.next(), x)
}

/// The `k`-th positive zero (1-based) of `J_nu`: McMahon's expansion refined
/// by Newton steps.
pub fn bessel_zero(order: BesselOrder, k: usize) -> f64 {
    assert!(k >= 1);
    let nu = order.value();
    let mu = 4.0 * nu * nu;
    let b = (k as f64 + 0.5 * nu - 0.25) * PI;
    let b8 = 8.0 * b;
    let mut x = b - (mu - 1.0) / b8
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8.powi(3))
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * b8.powi(5));
    if !order.is_integer() && order.twice == 1 {
        return k as f64 * PI;
    }
    if k <= 64 {
        for _ in 0..8 {
            let f = bessel_j(order, x);
            let df = bessel_j_prime(order, x);
            let dx = f / df;
            x -= dx;
            if dx.abs() < 1e-15 * x {
                break;
            }
        }
    }
    x
}

/// Lazily extended table of zeros of one order.
#[derive(Debug, Clone)]
pub struct ZeroTable {
    order: BesselOrder,
    zeros: Vec<f64>,
}

impl ZeroTable {
    pub fn new(order: BesselOrder) -> Self {
        Self { order, zeros: Vec::new() }
    }

    /// The `k`-th zero, 1-based.
    pub fn get(&mut self, k: usize) -> f64 {
        while self.zeros.len() < k {
            let next = self.zeros.len() + 1;
            self.zeros.push(bessel_zero(self.order, next));
        }
        self.zeros[k - 1]
    }
}
