//! Small-time limits extracted from estimator output, and reports that audit
//! each asymptotic statement and inequality on a grid of times.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::functionals::{
    heat_content, occupation_moments, spectral_heat_content, weighted_deficit_integral, FunctionalConfig,
};
use crate::geometry::{alpha_perimeter, gamma_const, lambda_const, PerimeterMethod, Shape};
use crate::kernel::{beta_const, c_star_const, fit_two_sided_constant, Kernel};
use crate::special::gamma;

/// Inequalities hold when the margin is at least `-SIGMAS` combined standard errors.
pub const SIGMAS: f64 = 3.0;

// ---------------------------------------------------------------------------
// time grid

/// Logarithmically spaced times, stored in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct TGrid {
    values: Vec<f64>,
}

impl TGrid {
    pub fn log(t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(Error::Domain(format!("time grid needs 0 < t_min < t_max, got {t_min}..{t_max}")));
        }
        if count < 5 {
            return Err(Error::Domain(format!("time grid needs at least 5 points, got {count}")));
        }
        let (a, b) = (t_max.ln(), t_min.ln());
        let values = (0..count)
            .map(|i| match i {
                0 => t_max,
                i if i + 1 == count => t_min,
                i => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
            })
            .collect();
        Ok(Self { values })
    }

    /// 8 points from 1e-1 down to 1e-4, or to 1e-3 when α < 1.
    pub fn default_for(alpha: f64) -> Self {
        let t_min = if alpha < 1.0 { 1e-3 } else { 1e-4 };
        Self::log(t_min, 1e-1, 8).expect("valid default grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.values[0]
    }

    pub fn t_min(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Reject the grid unless every time lies strictly below `bound`.
    pub fn require_below(&self, bound: f64, hypothesis: &str) -> Result<()> {
        if self.t_max() >= bound {
            return Err(Error::Hypothesis(format!(
                "t_max = {} violates the hypothesis {hypothesis} (bound {bound:.6})",
                self.t_max()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}:{:e}:{}:log", self.t_min(), self.t_max(), self.len())
    }
}

/// `t_min:t_max:count:log`, e.g. `1e-4:1e-1:8:log`.
impl FromStr for TGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("time grid must look like 1e-4:1e-1:8:log, got {s:?}"));
        if parts.len() != 4 || parts[3] != "log" {
            return Err(bad());
        }
        let t_min: f64 = parts[0].parse().map_err(|_| bad())?;
        let t_max: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        Self::log(t_min, t_max, count)
    }
}

// ---------------------------------------------------------------------------
// limit fitting

/// Next-order behaviour assumed when extrapolating to `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectionModel {
    Constant,
    /// `L + c t^γ`
    Power(f64),
    /// `L + c t^γ ln(1/t)`
    PowerLog(f64),
    /// `L + c / ln(1/t)`
    InverseLog,
}

impl CorrectionModel {
    fn basis(self, t: f64) -> f64 {
        match self {
            CorrectionModel::Constant => 0.0,
            CorrectionModel::Power(g) => t.powf(g),
            CorrectionModel::PowerLog(g) => t.powf(g) * (1.0 / t).ln(),
            CorrectionModel::InverseLog => 1.0 / (1.0 / t).ln(),
        }
    }

    pub fn describe(self) -> String {
        match self {
            CorrectionModel::Constant => "constant".into(),
            CorrectionModel::Power(g) => format!("t^{g:.4}"),
            CorrectionModel::PowerLog(g) => format!("t^{g:.4} ln(1/t)"),
            CorrectionModel::InverseLog => "1/ln(1/t)".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Regression,
    Richardson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub limit: f64,
    pub stderr: f64,
    /// coefficient of the correction term
    pub slope: f64,
    pub method: FitMethod,
    /// set when the regression was ill-conditioned and Richardson was used instead
    pub ill_conditioned: bool,
    /// χ² per degree of freedom of the regression (0 for Richardson)
    pub reduced_chi2: f64,
}

/// Weighted least squares of `v = L + c·g(t)`. The standard error of `L` is
/// inflated by the reduced χ² when the model misfits by more than the noise.
pub fn fit_limit(ts: &[f64], values: &[Estimate], model: CorrectionModel) -> Result<FitResult> {
    let n = ts.len();
    if n != values.len() {
        return Err(Error::DimensionMismatch { expected: n, got: values.len() });
    }
    if n < 3 {
        return Err(Error::Domain(format!("fitting a limit needs at least 3 points, got {n}")));
    }
    let scale = values.iter().map(|e| e.value.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let weights: Vec<f64> = values.iter().map(|e| 1.0 / (e.stderr.powi(2) + (1e-12 * scale).powi(2))).collect();
    if model == CorrectionModel::Constant {
        let sw: f64 = weights.iter().sum();
        let mean = values.iter().zip(&weights).map(|(e, w)| w * e.value).sum::<f64>() / sw;
        let chi2: f64 = values.iter().zip(&weights).map(|(e, w)| w * (e.value - mean).powi(2)).sum();
        let red = chi2 / (n - 1) as f64;
        return Ok(FitResult {
            limit: mean,
            stderr: (red.max(1.0) / sw).sqrt(),
            slope: 0.0,
            method: FitMethod::Regression,
            ill_conditioned: false,
            reduced_chi2: red,
        });
    }
    let g: Vec<f64> = ts.iter().map(|&t| model.basis(t)).collect();
    let (mut s0, mut s1, mut s2, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let w = weights[i];
        s0 += w;
        s1 += w * g[i];
        s2 += w * g[i] * g[i];
        b0 += w * values[i].value;
        b1 += w * g[i] * values[i].value;
    }
    let det = s0 * s2 - s1 * s1;
    // condition number of the normalised normal matrix
    let (a, c) = (1.0, s2 / s0);
    let b = s1 / s0;
    let tr = a + c;
    let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
    let cond = (tr + disc) / (tr - disc).max(f64::MIN_POSITIVE);
    if !(det > 0.0) || !cond.is_finite() || cond > 1e12 {
        return richardson(ts, values, model);
    }
    let limit = (s2 * b0 - s1 * b1) / det;
    let slope = (s0 * b1 - s1 * b0) / det;
    let chi2: f64 = (0..n).map(|i| weights[i] * (values[i].value - limit - slope * g[i]).powi(2)).sum();
    let red = chi2 / (n - 2) as f64;
    Ok(FitResult {
        limit,
        stderr: (s2 / det * red.max(1.0)).sqrt(),
        slope,
        method: FitMethod::Regression,
        ill_conditioned: false,
        reduced_chi2: red,
    })
}

/// Eliminate the correction term between the two smallest times.
fn richardson(ts: &[f64], values: &[Estimate], model: CorrectionModel) -> Result<FitResult> {
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    idx.sort_by(|&i, &j| ts[i].total_cmp(&ts[j]));
    let (i, j) = (idx[0], idx[1]);
    let (gi, gj) = (model.basis(ts[i]), model.basis(ts[j]));
    if gi == gj {
        return Err(Error::Domain("Richardson extrapolation needs distinct correction terms".into()));
    }
    let (vi, vj) = (values[i].value, values[j].value);
    let limit = (vi * gj - vj * gi) / (gj - gi);
    let stderr = ((gj / (gj - gi) * values[i].stderr).powi(2) + (gi / (gj - gi) * values[j].stderr).powi(2)).sqrt();
    Ok(FitResult {
        limit,
        stderr,
        slope: (vj - vi) / (gj - gi),
        method: FitMethod::Richardson,
        ill_conditioned: true,
        reduced_chi2: 0.0,
    })
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremId {
    /// heat content for 1 < α <= 2
    HcA,
    /// heat content for the Cauchy process
    HcB,
    /// heat content for 0 < α < 1
    HcC,
    /// Schrödinger heat content for 1 < α <= 2
    MainI,
    /// Schrödinger heat content for the Cauchy process
    MainII,
    /// Schrödinger heat content for 0 < α < 1
    MainIII,
    /// occupation moments
    Moments,
    /// third-order remainder
    Remainder,
    /// every inequality at once
    Audit,
}

impl TheoremId {
    pub const ALL: [TheoremId; 9] = [
        TheoremId::HcA,
        TheoremId::HcB,
        TheoremId::HcC,
        TheoremId::MainI,
        TheoremId::MainII,
        TheoremId::MainIII,
        TheoremId::Moments,
        TheoremId::Remainder,
        TheoremId::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TheoremId::HcA => "hc-a",
            TheoremId::HcB => "hc-b",
            TheoremId::HcC => "hc-c",
            TheoremId::MainI => "main-i",
            TheoremId::MainII => "main-ii",
            TheoremId::MainIII => "main-iii",
            TheoremId::Moments => "moments",
            TheoremId::Remainder => "remainder",
            TheoremId::Audit => "audit",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|id| id.name()).collect();
            Error::Parse(format!("unknown theorem {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

/// One audited quantity. `ratio` is the measured value (normalised for the
/// limit checks), `bound_margin` is `bound - value` on the same scale and
/// `stderr` applies to both.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub check: String,
    pub t: Option<f64>,
    pub ratio: f64,
    pub stderr: f64,
    pub bound_margin: Option<f64>,
    pub pass: bool,
}

impl ReportRow {
    fn value(check: &str, t: f64, ratio: Estimate) -> Self {
        Self { check: check.into(), t: Some(t), ratio: ratio.value, stderr: ratio.stderr, bound_margin: None, pass: true }
    }

    /// `value <= bound` on the scale of `value`, with a deterministic bound.
    fn below(check: &str, t: Option<f64>, value: Estimate, bound: f64) -> Self {
        Self::margin(check, t, value.value, bound - value.value, value.stderr)
    }

    /// `lo <= hi`, reported with `ratio = lo`.
    fn ordered(check: &str, t: Option<f64>, lo: Estimate, hi: Estimate) -> Self {
        Self::margin(check, t, lo.value, hi.value - lo.value, lo.stderr.hypot(hi.stderr))
    }

    fn margin(check: &str, t: Option<f64>, ratio: f64, margin: f64, stderr: f64) -> Self {
        Self {
            check: check.into(),
            t,
            ratio,
            stderr,
            bound_margin: Some(margin),
            pass: margin >= -SIGMAS * stderr,
        }
    }
}

/// A fitted small-time limit compared with its predicted constant.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCheck {
    pub name: String,
    pub model: CorrectionModel,
    pub fit: FitResult,
    pub paper_constant: f64,
    pub tolerance: f64,
    /// only `fitted <= (1 + tolerance) constant + 3σ` is asserted
    pub one_sided: bool,
    pub pass: bool,
}

impl LimitCheck {
    fn new(name: &str, model: CorrectionModel, fit: FitResult, constant: f64, tolerance: f64, one_sided: bool) -> Self {
        let pass = if one_sided {
            fit.limit <= constant * (1.0 + tolerance) + SIGMAS * fit.stderr
        } else {
            (fit.limit - constant).abs() <= tolerance * constant.abs()
        };
        Self { name: name.into(), model, fit, paper_constant: constant, tolerance, one_sided, pass }
    }

    pub fn relative_error(&self) -> f64 {
        (self.fit.limit - self.paper_constant) / self.paper_constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub theorem_id: TheoremId,
    pub alpha: f64,
    pub shape: String,
    pub grid: TGrid,
    pub rows: Vec<ReportRow>,
    pub limits: Vec<LimitCheck>,
    pub verdict: bool,
}

impl TheoremReport {
    fn new(theorem_id: TheoremId, kernel: &Kernel, shape: &Shape, grid: &TGrid, rows: Vec<ReportRow>, limits: Vec<LimitCheck>) -> Self {
        let verdict = rows.iter().all(|r| r.pass) && limits.iter().all(|l| l.pass);
        Self { theorem_id, alpha: kernel.alpha(), shape: shape.spec(), grid: grid.clone(), rows, limits, verdict }
    }

    pub fn failed_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// The limit check with the given name.
    pub fn limit(&self, name: &str) -> Option<&LimitCheck> {
        self.limits.iter().find(|l| l.name == name)
    }

    /// Rows of one check, in grid order.
    pub fn rows_for<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} alpha={} shape={} grid={} verdict={}",
            self.theorem_id,
            self.alpha,
            self.shape,
            self.grid,
            if self.verdict { "pass" } else { "FAIL" }
        );
        for l in &self.limits {
            s.push_str(&format!(
                "\n  {:<22} fitted {:.6} ± {:.2e} vs {:.6} ({}{:.0}%, {:+.2}%) {}",
                l.name,
                l.fit.limit,
                l.fit.stderr,
                l.paper_constant,
                if l.one_sided { "<= +" } else { "±" },
                100.0 * l.tolerance,
                100.0 * l.relative_error(),
                if l.pass { "pass" } else { "FAIL" }
            ));
        }
        let failed: Vec<_> = self.failed_rows().collect();
        if failed.is_empty() {
            s.push_str(&format!("\n  all {} rows within {SIGMAS}σ", self.rows.len()));
        }
        for r in failed {
            s.push_str(&format!(
                "\n  FAIL {} t={:?} value={:.6e} margin={:.3e} stderr={:.3e}",
                r.check,
                r.t,
                r.ratio,
                r.bound_margin.unwrap_or(f64::NAN),
                r.stderr
            ));
        }
        s
    }
}

/// Settings shared by the theorem reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub functional: FunctionalConfig,
    /// relative tolerance on fitted limits; `None` uses the per-theorem default
    pub tolerance: Option<f64>,
    /// added to every heat-content value in the audit, to check that violations are caught
    pub h_shift: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { functional: FunctionalConfig::default(), tolerance: None, h_shift: 0.0 }
    }
}

impl VerifyConfig {
    fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

/// Two-sided limits backed by deterministic quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 0.05;
/// Limits that go through path-discretised occupation times.
pub const PATH_TOLERANCE: f64 = 0.10;
/// Moment limits at the smallest time.
pub const MOMENT_TOLERANCE: f64 = 0.02;

fn check_pair(shape: &Shape, kernel: &Kernel) -> Result<()> {
    if shape.d() != kernel.d() {
        return Err(Error::DimensionMismatch { expected: kernel.d(), got: shape.d() });
    }
    Ok(())
}

fn require_alpha(kernel: &Kernel, ok: bool, range: &str) -> Result<()> {
    if !ok {
        return Err(Error::Hypothesis(format!("this statement needs alpha in {range}, got alpha = {}", kernel.alpha())));
    }
    Ok(())
}

/// The hypothesis `0 < t < min{diam(Ω), e^{-1}}` of the Cauchy statements.
pub fn require_cauchy_grid(shape: &Shape, grid: &TGrid) -> Result<()> {
    grid.require_below(shape.diameter().min((-1.0f64).exp()), "0 < t < min{diam(Ω), e^{-1}}")
}

fn per_t<T: Send, F>(grid: &TGrid, f: F) -> Result<Vec<T>>
where
    F: Fn(f64) -> Result<T> + Sync,
{
    grid.values().par_iter().map(|&t| f(t)).collect()
}

fn estimates(rows: &[ReportRow], check: &str) -> (Vec<f64>, Vec<Estimate>) {
    rows.iter()
        .filter(|r| r.check == check)
        .map(|r| (r.t.unwrap(), Estimate { value: r.ratio, stderr: r.stderr, n_samples: 0, seed: 0 }))
        .unzip()
}

fn fit_rows(rows: &[ReportRow], check: &str, model: CorrectionModel) -> Result<FitResult> {
    let (ts, vs) = estimates(rows, check);
    fit_limit(&ts, &vs, model)
}

/// Correction to the deficit ratio `(|Ω| - H)/t` for α < 1.
fn subcritical_model(alpha: f64) -> CorrectionModel {
    let g = (1.0 / alpha - 1.0).min(1.0);
    if (alpha - 0.5).abs() < 1e-12 {
        CorrectionModel::PowerLog(1.0)
    } else {
        CorrectionModel::Power(g)
    }
}

/// Correction to `T^(k)/t^k` and `R/t³`, set by the boundary layer `t^{1/α}`
/// against the interior `O(t)` term.
fn moment_model(alpha: f64) -> CorrectionModel {
    if alpha > 1.0 {
        CorrectionModel::Power(1.0 / alpha)
    } else if alpha == 1.0 {
        CorrectionModel::PowerLog(1.0)
    } else {
        CorrectionModel::Power(1.0)
    }
}

// ---------------------------------------------------------------------------
// heat content

/// `|Ω| - H(t) <= t^{1/α} Γ(1 - 1/α) Per/π` at every `t`, and the ratio tends to that constant.
pub fn verify_hc_a(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let alpha = kernel.alpha();
    require_alpha(kernel, alpha > 1.0 && alpha <= 2.0, "(1, 2]")?;
    let constant = gamma(1.0 - 1.0 / alpha) * shape.perimeter() / PI;
    let rows: Vec<ReportRow> = per_t(grid, |t| {
        let d = heat_content(shape, kernel, t, &cfg.functional)?.deficit;
        Ok(ReportRow::below("ratio", Some(t), d.scale(t.powf(-1.0 / alpha)), constant))
    })?;
    let model = if alpha == 2.0 { CorrectionModel::Power(1.0) } else { CorrectionModel::Power(1.0 - 1.0 / alpha) };
    let fit = fit_rows(&rows, "ratio", model)?;
    let limit = LimitCheck::new("deficit/t^(1/alpha)", model, fit, constant, cfg.tol(QUADRATURE_TOLERANCE), false);
    Ok(TheoremReport::new(TheoremId::HcA, kernel, shape, grid, rows, vec![limit]))
}

/// Cauchy process: `|Ω| - H <= λ(Ω) t + (Per/π) t ln(1/t)` and the one-sided lim sup.
pub fn verify_hc_b(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    require_alpha(kernel, kernel.alpha() == 1.0, "{1}")?;
    require_cauchy_grid(shape, grid)?;
    let lambda = lambda_const(shape);
    let per_pi = shape.perimeter() / PI;
    let deficits = per_t(grid, |t| Ok(heat_content(shape, kernel, t, &cfg.functional)?.deficit))?;
    let mut rows = Vec::new();
    for (&t, d) in grid.values().iter().zip(&deficits) {
        let l = (1.0 / t).ln();
        rows.push(ReportRow::below("ratio", Some(t), d.scale(1.0 / (t * l)), lambda / l + per_pi));
    }
    for (i, w) in deficits.windows(2).enumerate() {
        // times decrease along the grid, so the deficit must too
        rows.push(ReportRow::ordered("monotone", Some(grid.values()[i + 1]), w[1], w[0]));
    }
    let model = CorrectionModel::InverseLog;
    let fit = fit_rows(&rows, "ratio", model)?;
    let limit = LimitCheck::new("deficit/(t ln(1/t))", model, fit, per_pi, cfg.tol(QUADRATURE_TOLERANCE), true);
    Ok(TheoremReport::new(TheoremId::HcB, kernel, shape, grid, rows, vec![limit]))
}

/// `(|Ω| - H)/t → β_{α,d} P_α(Ω)` for α < 1, with `P_α` by quadrature when
/// the shape allows it. The Monte Carlo α-perimeter is reported alongside.
pub fn verify_hc_c(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let alpha = kernel.alpha();
    require_alpha(kernel, alpha > 0.0 && alpha < 1.0, "(0, 1)")?;
    let beta = beta_const(kernel.index());
    let mc = alpha_perimeter(
        shape,
        alpha,
        PerimeterMethod::MonteCarlo { n_samples: cfg.functional.n_samples, seed: cfg.functional.seed },
    )?;
    let reference = match alpha_perimeter(shape, alpha, PerimeterMethod::Quadrature) {
        Ok(p) => p,
        Err(Error::Unsupported(_)) => mc,
        Err(e) => return Err(e),
    };
    let constant = beta * reference.value;
    let mut rows: Vec<ReportRow> = per_t(grid, |t| {
        let d = heat_content(shape, kernel, t, &cfg.functional)?.deficit;
        Ok(ReportRow::value("ratio", t, d.scale(1.0 / t)))
    })?;
    let model = subcritical_model(alpha);
    let fit = fit_rows(&rows, "ratio", model)?;
    let diff = (mc.value - reference.value) * beta;
    rows.push(ReportRow::margin(
        "perimeter-consistency",
        None,
        beta * mc.value,
        -diff.abs(),
        beta * mc.stderr.hypot(reference.stderr),
    ));
    rows.push(ReportRow::margin("positive-limit", None, fit.limit, fit.limit, fit.stderr));
    let limit = LimitCheck::new("deficit/t", model, fit, constant, cfg.tol(QUADRATURE_TOLERANCE), false);
    Ok(TheoremReport::new(TheoremId::HcC, kernel, shape, grid, rows, vec![limit]))
}

// ---------------------------------------------------------------------------
// Schrödinger heat content

/// Per-time pieces of `Ψ + t(t/2 - 1)|Ω| = t² J(t) + R(t)`.
struct Excess {
    t: f64,
    /// `t² ∫(1-Δ)(|Ω| - H(tΔ)) dΔ + R`
    decomposed: Estimate,
    /// `Ψ_direct + t(t/2 - 1)|Ω|`
    direct: Estimate,
    /// `Ψ_direct` and `Ψ` from the decomposition with `R` at its bracket midpoint
    psi_direct: Estimate,
    psi_midpoint: Estimate,
    r_width: f64,
}

fn excess(shape: &Shape, kernel: &Kernel, t: f64, cfg: &FunctionalConfig) -> Result<Excess> {
    let vol = shape.volume();
    let j = weighted_deficit_integral(shape, kernel, t, cfg)?;
    let m = occupation_moments(shape, kernel, t, cfg)?;
    let main = j.scale(t * t);
    let decomposed = Estimate { value: main.value + m.remainder.value, stderr: main.stderr.hypot(m.remainder.stderr), ..m.remainder };
    let direct = m.psi.offset(t * (0.5 * t - 1.0) * vol);
    let r_lower = (-t).exp() * m.t3.value / 6.0;
    let r_upper = vol * t.powi(3) / 6.0;
    let mid = 0.5 * (r_lower + r_upper);
    let psi_midpoint = Estimate {
        value: t * vol - 0.5 * t * t * vol + main.value + mid,
        stderr: main.stderr.hypot((-t).exp() * m.t3.stderr / 12.0),
        ..m.psi
    };
    Ok(Excess { t, decomposed, direct, psi_direct: m.psi, psi_midpoint, r_width: r_upper - r_lower })
}

/// `Ψ + t(t/2-1)|Ω| <= |Ω| t³/3! + c*_α Per t^{2+1/α}`, ratio over `t^{2+1/α}` tends to `c*_α Per`.
pub fn verify_main_i(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let alpha = kernel.alpha();
    require_alpha(kernel, alpha > 1.0 && alpha <= 2.0, "(1, 2]")?;
    let vol = shape.volume();
    let constant = c_star_const(alpha)? * shape.perimeter();
    let p = 2.0 + 1.0 / alpha;
    let rows: Vec<ReportRow> = per_t(grid, |t| {
        let e = excess(shape, kernel, t, &cfg.functional)?;
        let bound = vol * t.powi(3) / 6.0 / t.powf(p) + constant;
        Ok(ReportRow::below("ratio", Some(t), e.decomposed.scale(t.powf(-p)), bound))
    })?;
    let model = CorrectionModel::Power(1.0 - 1.0 / alpha);
    let fit = fit_rows(&rows, "ratio", model)?;
    let limit = LimitCheck::new("excess/t^(2+1/alpha)", model, fit, constant, cfg.tol(PATH_TOLERANCE), false);
    Ok(TheoremReport::new(TheoremId::MainI, kernel, shape, grid, rows, vec![limit]))
}

/// Cauchy process: `Ψ + t(t/2-1)|Ω| <= γ_d t³ + Per/(3!π) t³ ln(1/t)` and the one-sided lim sup.
pub fn verify_main_ii(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    require_alpha(kernel, kernel.alpha() == 1.0, "{1}")?;
    require_cauchy_grid(shape, grid)?;
    let gamma_d = gamma_const(shape);
    let constant = shape.perimeter() / (6.0 * PI);
    let rows: Vec<ReportRow> = per_t(grid, |t| {
        let e = excess(shape, kernel, t, &cfg.functional)?;
        let l = (1.0 / t).ln();
        Ok(ReportRow::below("ratio", Some(t), e.decomposed.scale(1.0 / (t.powi(3) * l)), gamma_d / l + constant))
    })?;
    let model = CorrectionModel::InverseLog;
    let fit = fit_rows(&rows, "ratio", model)?;
    let limit = LimitCheck::new("excess/(t^3 ln(1/t))", model, fit, constant, cfg.tol(PATH_TOLERANCE), true);
    Ok(TheoremReport::new(TheoremId::MainII, kernel, shape, grid, rows, vec![limit]))
}

/// α < 1: ratio over `t³` tends to `(|Ω| + β P_α)/3!`; the upper bound uses the
/// fitted two-sided kernel constant. Both routes to `Ψ` are fitted and compared.
pub fn verify_main_iii(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let alpha = kernel.alpha();
    require_alpha(kernel, alpha > 0.0 && alpha < 1.0, "(0, 1)")?;
    let vol = shape.volume();
    let per = match alpha_perimeter(shape, alpha, PerimeterMethod::Quadrature) {
        Ok(p) => p.value,
        Err(Error::Unsupported(_)) => {
            alpha_perimeter(
                shape,
                alpha,
                PerimeterMethod::MonteCarlo { n_samples: cfg.functional.n_samples, seed: cfg.functional.seed },
            )?
            .value
        }
        Err(e) => return Err(e),
    };
    let constant = (vol + beta_const(kernel.index()) * per) / 6.0;
    let bound = (vol + fit_two_sided_constant(kernel)? * per) / 6.0;
    let parts = per_t(grid, |t| excess(shape, kernel, t, &cfg.functional))?;
    let mut rows = Vec::new();
    for e in &parts {
        let t3 = e.t.powi(3);
        rows.push(ReportRow::below("ratio", Some(e.t), e.decomposed.scale(1.0 / t3), bound));
    }
    for e in &parts {
        rows.push(ReportRow::value("direct-ratio", e.t, e.direct.scale(e.t.powi(-3))));
    }
    for e in &parts {
        let diff = e.psi_direct.value - e.psi_midpoint.value;
        rows.push(ReportRow::margin(
            "direct-vs-decomposed",
            Some(e.t),
            diff,
            e.r_width - diff.abs(),
            e.psi_direct.stderr.hypot(e.psi_midpoint.stderr),
        ));
    }
    let model = subcritical_model(alpha);
    let fit = fit_rows(&rows, "ratio", model)?;
    let direct_fit = fit_rows(&rows, "direct-ratio", model)?;
    rows.push(ReportRow::margin(
        "route-consistency",
        None,
        direct_fit.limit,
        -(direct_fit.limit - fit.limit).abs(),
        fit.stderr.hypot(direct_fit.stderr),
    ));
    rows.push(ReportRow::margin("limit-above-volume", None, fit.limit, fit.limit - vol / 6.0, fit.stderr));
    let tol = cfg.tol(PATH_TOLERANCE);
    let limits = vec![LimitCheck::new("excess/t^3", model, fit, constant, tol, false)];
    Ok(TheoremReport::new(TheoremId::MainIII, kernel, shape, grid, rows, limits))
}

// ---------------------------------------------------------------------------
// moments, remainder and the full audit

struct PointEstimates {
    t: f64,
    h: Estimate,
    q_coarse: Estimate,
    q_fine: Estimate,
    q_gap: Estimate,
    psi: Estimate,
    t2: Estimate,
    t3: Estimate,
    r: Estimate,
}

fn point_estimates(shape: &Shape, kernel: &Kernel, t: f64, cfg: &VerifyConfig) -> Result<PointEstimates> {
    let f = &cfg.functional;
    let h = heat_content(shape, kernel, t, f)?.h.offset(cfg.h_shift);
    let q = spectral_heat_content(shape, kernel, t, f)?;
    let m = occupation_moments(shape, kernel, t, f)?;
    let j = weighted_deficit_integral(shape, kernel, t, f)?;
    let vol = shape.volume();
    let t2 = Estimate { value: t * t * (vol - 2.0 * j.value), stderr: 2.0 * t * t * j.stderr, ..j };
    Ok(PointEstimates {
        t,
        h,
        q_coarse: q.coarse,
        q_fine: q.fine,
        q_gap: q.refinement_gap,
        psi: m.psi,
        t2,
        t3: m.t3,
        r: m.remainder,
    })
}

fn sandwich_rows(rows: &mut Vec<ReportRow>, shape: &Shape, p: &PointEstimates, normalise: bool) {
    let t = p.t;
    let vol = shape.volume();
    let t1 = Estimate::exact(t * vol);
    for (k, tk) in [(1, t1), (2, p.t2), (3, p.t3)] {
        let s = if normalise { t.powi(-k) } else { 1.0 };
        let tk_pow = t.powi(k);
        rows.push(ReportRow::ordered(&format!("t{k}-lower"), Some(t), p.q_fine.scale(tk_pow * s), tk.scale(s)));
        rows.push(ReportRow::below(&format!("t{k}-upper"), Some(t), tk.scale(s), tk_pow * vol * s));
    }
}

fn bracket_rows(rows: &mut Vec<ReportRow>, shape: &Shape, p: &PointEstimates, normalise: bool) {
    let t = p.t;
    let s = if normalise { t.powi(-3) } else { 1.0 };
    let lower = p.t3.scale((-t).exp() / 6.0 * s);
    rows.push(ReportRow::ordered("r-lower", Some(t), lower, p.r.scale(s)));
    rows.push(ReportRow::below("r-upper", Some(t), p.r.scale(s), shape.volume() * t.powi(3) / 6.0 * s));
}

/// `T^(k)/t^k → |Ω|` and `t^k Q <= T^(k) <= t^k |Ω|` on the grid.
pub fn verify_moments(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let points = per_t(grid, |t| point_estimates(shape, kernel, t, cfg))?;
    let vol = shape.volume();
    let mut rows = Vec::new();
    for p in &points {
        rows.push(ReportRow::value("t1-ratio", p.t, Estimate::exact(vol)));
        rows.push(ReportRow::value("t2-ratio", p.t, p.t2.scale(p.t.powi(-2))));
        rows.push(ReportRow::value("t3-ratio", p.t, p.t3.scale(p.t.powi(-3))));
    }
    for p in &points {
        sandwich_rows(&mut rows, shape, p, true);
    }
    let tol = cfg.tol(MOMENT_TOLERANCE);
    let mut limits = vec![LimitCheck::new(
        "T1/t",
        CorrectionModel::Constant,
        fit_rows(&rows, "t1-ratio", CorrectionModel::Constant)?,
        vol,
        tol,
        false,
    )];
    let model = moment_model(kernel.alpha());
    for k in [2, 3] {
        let fit = fit_rows(&rows, &format!("t{k}-ratio"), model)?;
        limits.push(LimitCheck::new(&format!("T{k}/t^{k}"), model, fit, vol, tol, false));
    }
    Ok(TheoremReport::new(TheoremId::Moments, kernel, shape, grid, rows, limits))
}

/// `R/t³ → |Ω|/3!` with `e^{-t} T^(3)/3! <= R <= |Ω| t³/3!` on the grid.
pub fn verify_remainder(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let f = &cfg.functional;
    let vol = shape.volume();
    let parts = per_t(grid, |t| Ok((t, occupation_moments(shape, kernel, t, f)?)))?;
    let mut rows = Vec::new();
    for (t, m) in &parts {
        rows.push(ReportRow::value("ratio", *t, m.remainder.scale(t.powi(-3))));
    }
    for (t, m) in &parts {
        let s = t.powi(-3);
        let lower = m.t3.scale((-t).exp() / 6.0 * s);
        rows.push(ReportRow::ordered("r-lower", Some(*t), lower, m.remainder.scale(s)));
        rows.push(ReportRow::below("r-upper", Some(*t), m.remainder.scale(s), vol / 6.0));
    }
    let model = moment_model(kernel.alpha());
    let fit = fit_rows(&rows, "ratio", model)?;
    let limit = LimitCheck::new("R/t^3", model, fit, vol / 6.0, cfg.tol(PATH_TOLERANCE), false);
    Ok(TheoremReport::new(TheoremId::Remainder, kernel, shape, grid, rows, vec![limit]))
}

/// Every inequality at every grid time: `0 <= H <= |Ω|`, `Q <= H` at both
/// grid resolutions, `0 <= Ψ <= t|Ω|`, `t^k Q <= T^(k) <= t^k|Ω|` and the
/// brackets on `R`. The Q refinement gap is logged as a bias row.
pub fn inequality_audit(shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    check_pair(shape, kernel)?;
    let points = per_t(grid, |t| point_estimates(shape, kernel, t, cfg))?;
    let vol = shape.volume();
    let mut rows = Vec::new();
    for p in &points {
        let t = Some(p.t);
        rows.push(ReportRow::ordered("h-nonnegative", t, Estimate::exact(0.0), p.h));
        rows.push(ReportRow::below("h-below-volume", t, p.h, vol));
        rows.push(ReportRow::ordered("q-below-h-coarse", t, p.q_coarse, p.h));
        rows.push(ReportRow::ordered("q-below-h-fine", t, p.q_fine, p.h));
        rows.push(ReportRow::margin("q-refinement-gap", t, p.q_gap.value, p.q_gap.value, p.q_gap.stderr));
        rows.push(ReportRow::ordered("psi-nonnegative", t, Estimate::exact(0.0), p.psi));
        rows.push(ReportRow::below("psi-below-t-volume", t, p.psi, p.t * vol));
        sandwich_rows(&mut rows, shape, p, false);
        bracket_rows(&mut rows, shape, p, false);
    }
    Ok(TheoremReport::new(TheoremId::Audit, kernel, shape, grid, rows, Vec::new()))
}

/// Run the named report.
pub fn verify(id: TheoremId, shape: &Shape, kernel: &Kernel, grid: &TGrid, cfg: &VerifyConfig) -> Result<TheoremReport> {
    match id {
        TheoremId::HcA => verify_hc_a(shape, kernel, grid, cfg),
        TheoremId::HcB => verify_hc_b(shape, kernel, grid, cfg),
        TheoremId::HcC => verify_hc_c(shape, kernel, grid, cfg),
        TheoremId::MainI => verify_main_i(shape, kernel, grid, cfg),
        TheoremId::MainII => verify_main_ii(shape, kernel, grid, cfg),
        TheoremId::MainIII => verify_main_iii(shape, kernel, grid, cfg),
        TheoremId::Moments => verify_moments(shape, kernel, grid, cfg),
        TheoremId::Remainder => verify_remainder(shape, kernel, grid, cfg),
        TheoremId::Audit => inequality_audit(shape, kernel, grid, cfg),
    }
}
