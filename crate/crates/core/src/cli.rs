//! Batch front-end behind the `fracheat` binary. [`run`] parses arguments,
//! runs the requested estimator or report over a time grid, prints a short
//! summary and writes CSV. Exit codes: 0 when every verdict passes, 1 when
//! one fails or a computation errors, 2 for usage and configuration errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::asymptotics::{verify, TGrid, TheoremId, TheoremReport, VerifyConfig};
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::functionals::{
    heat_content, psi, spectral_heat_content, t_moment, FunctionalConfig, HeatMethod, PsiMethod,
};
use crate::geometry::{alpha_perimeter, PerimeterMethod, Shape};
use crate::kernel::{
    build_profile, describe, fit_two_sided_constant, kernel_eval, GridConfig, Kernel, KernelProfile, StabilityIndex,
};
use crate::output::{write_estimator_csv, write_report_csv, write_summary_csv, EstimatorRow, Header};

pub const DEFAULT_SEED: u64 = 20240101;
pub const SEED_ENV: &str = "FRACHEAT_SEED";

#[derive(Debug, Parser)]
#[command(name = "fracheat", version, about = "Heat-content functionals of isotropic stable processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the unit-time transition density
    Kernel {
        #[command(flatten)]
        common: Common,
        /// radii at which to print p_t(r)
        #[arg(long, value_delimiter = ',')]
        r: Vec<f64>,
    },
    /// α-perimeter of the shape
    Perimeter {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = PerimeterChoice::Both)]
        method: PerimeterChoice,
    },
    /// Heat content H(t)
    HeatContent {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = HeatChoice::Auto)]
        heat_method: HeatChoice,
    },
    /// Spectral heat content Q(t) at two grid resolutions
    Shc {
        #[command(flatten)]
        common: Common,
    },
    /// Schrödinger heat content Ψ(t)
    Psi {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = PsiChoice::Direct)]
        psi_method: PsiChoice,
    },
    /// Occupation-time moments T^(k)(t)
    Moments {
        #[command(flatten)]
        common: Common,
        /// 1, 2 or 3; all three when omitted
        #[arg(long)]
        k: Option<u32>,
    },
    /// Fit one small-time limit and audit its inequality
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theorem: String,
        /// relative tolerance on the fitted limit
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Check every inequality on the grid
    Audit {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// stability index in (0, 2]
    #[arg(long)]
    alpha: Option<f64>,
    /// dimension, at least 2
    #[arg(long)]
    d: Option<usize>,
    /// `ball:d=2,r=1` or `box:d=2,lo=0,0,hi=1,1`; defaults to the unit ball
    #[arg(long)]
    shape: Option<String>,
    /// a single time instead of a grid
    #[arg(long, conflicts_with_all = ["t_grid", "t_min", "t_max", "t_count"])]
    t: Option<f64>,
    /// `t_min:t_max:count:log`
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_count: Option<usize>,
    #[arg(long, default_value_t = 200_000)]
    n_samples: u64,
    #[arg(long, default_value_t = 64)]
    n_steps: usize,
    /// overrides FRACHEAT_SEED
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; reports also write `<output>.summary.csv`
    #[arg(long)]
    output: Option<PathBuf>,
    /// kernel profile CSV to load instead of building one
    #[arg(long)]
    profile: Option<PathBuf>,
    /// worker threads; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PerimeterChoice {
    Quadrature,
    Mc,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HeatChoice {
    Indicator,
    Covariogram,
    Quadrature,
    Auto,
}

impl From<HeatChoice> for HeatMethod {
    fn from(c: HeatChoice) -> Self {
        match c {
            HeatChoice::Indicator => HeatMethod::Indicator,
            HeatChoice::Covariogram => HeatMethod::Covariogram,
            HeatChoice::Quadrature => HeatMethod::Quadrature,
            HeatChoice::Auto => HeatMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PsiChoice {
    Direct,
    Truncated,
    Decomposed,
}

impl From<PsiChoice> for PsiMethod {
    fn from(c: PsiChoice) -> Self {
        match c {
            PsiChoice::Direct => PsiMethod::Direct,
            PsiChoice::Truncated => PsiMethod::Truncated,
            PsiChoice::Decomposed => PsiMethod::Decomposed,
        }
    }
}

/// Everything a subcommand needs after resolution and validation.
struct Resolved {
    kernel: Kernel,
    shape: Shape,
    times: Vec<f64>,
    grid: Option<TGrid>,
    cfg: FunctionalConfig,
    output: Option<PathBuf>,
    header: Header,
}

/// Seed from the flag, then the environment, then the fixed default.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<u64> {
    match (flag, env) {
        (Some(s), _) => Ok(s),
        (None, Some(v)) => {
            v.trim().parse().map_err(|_| Error::Parse(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))
        }
        (None, None) => Ok(DEFAULT_SEED),
    }
}

fn resolve_grid(c: &Common, alpha: f64) -> Result<TGrid> {
    if let Some(spec) = &c.t_grid {
        if c.t_min.is_some() || c.t_max.is_some() || c.t_count.is_some() {
            return Err(Error::Parse("--t-grid cannot be combined with --t-min, --t-max or --t-count".into()));
        }
        return spec.parse();
    }
    let default = TGrid::default_for(alpha);
    TGrid::log(
        c.t_min.unwrap_or(default.t_min()),
        c.t_max.unwrap_or(default.t_max()),
        c.t_count.unwrap_or(default.len()),
    )
}

fn resolve(name: &str, c: &Common, env_seed: Option<&str>, needs_grid: bool) -> Result<Resolved> {
    let kernel = match &c.profile {
        Some(path) => {
            let p = KernelProfile::read_csv(BufReader::new(File::open(path)?))?;
            let k = Kernel::from_profile(p);
            if c.alpha.is_some_and(|a| a != k.alpha()) || c.d.is_some_and(|d| d != k.d()) {
                return Err(Error::Parse(format!(
                    "--alpha/--d disagree with the loaded profile ({})",
                    describe(&k)
                )));
            }
            k
        }
        None => {
            let alpha = c.alpha.ok_or_else(|| Error::Parse("--alpha is required without --profile".into()))?;
            Kernel::new(StabilityIndex::new(alpha, c.d.unwrap_or(2))?)?
        }
    };
    let d = kernel.d();
    let shape: Shape = match &c.shape {
        Some(s) => s.parse()?,
        None => Shape::unit_ball(d)?,
    };
    if shape.d() != d {
        return Err(Error::DimensionMismatch { expected: d, got: shape.d() });
    }
    let seed = resolve_seed(c.seed, env_seed)?;
    let cfg = FunctionalConfig { n_samples: c.n_samples, n_steps: c.n_steps, seed, ..FunctionalConfig::default() };
    cfg.validate()?;
    let (times, grid) = match (c.t, needs_grid) {
        (Some(_), true) => return Err(Error::Parse("this command needs a time grid, not --t".into())),
        (Some(t), false) => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Domain(format!("time must be positive, got t = {t}")));
            }
            (vec![t], None)
        }
        (None, _) => {
            let g = resolve_grid(c, kernel.alpha())?;
            (g.values().to_vec(), Some(g))
        }
    };
    let mut header = Header::new()
        .with("command", name)
        .with("kernel", describe(&kernel))
        .with("shape", shape.spec())
        .with("n_samples", c.n_samples)
        .with("n_steps", c.n_steps)
        .with("seed", seed);
    match &grid {
        Some(g) => header.push("t_grid", g),
        None => header.push("t", times[0]),
    }
    Ok(Resolved { kernel, shape, times, grid, cfg, output: c.output.clone(), header })
}

fn base_row(r: &Resolved) -> EstimatorRow {
    EstimatorRow {
        alpha: r.kernel.alpha(),
        d: r.kernel.d(),
        shape: r.shape.spec(),
        t: 0.0,
        quantity: String::new(),
        method: String::new(),
        value: 0.0,
        stderr: 0.0,
        n_samples: 0,
        n_steps: r.cfg.n_steps,
        seed: r.cfg.seed,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn summary_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary.csv");
    PathBuf::from(s)
}

fn emit_rows(r: &Resolved, rows: &[EstimatorRow], out: &mut dyn Write) -> Result<()> {
    for row in rows {
        writeln!(
            out,
            "{:<16} t={:<12e} {:<12} {:.10e} ± {:.2e}",
            row.quantity, row.t, row.method, row.value, row.stderr
        )?;
    }
    if let Some(path) = &r.output {
        write_estimator_csv(create(path)?, &r.header, rows)?;
    }
    Ok(())
}

fn emit_reports(r: &Resolved, reports: &[TheoremReport], out: &mut dyn Write) -> Result<bool> {
    for rep in reports {
        writeln!(out, "{}", rep.summary())?;
    }
    if let Some(path) = &r.output {
        write_report_csv(create(path)?, &r.header, reports)?;
        write_summary_csv(create(&summary_path(path))?, &r.header, reports)?;
    }
    Ok(reports.iter().all(|rep| rep.verdict))
}

fn execute(cmd: Command, env_seed: Option<&str>, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Kernel { common, r } => {
            let res = resolve("kernel", &common, env_seed, false)?;
            let index = res.kernel.index();
            writeln!(out, "{}", describe(&res.kernel))?;
            if !index.is_gaussian() {
                writeln!(out, "two-sided constant c = {:.6}", fit_two_sided_constant(&res.kernel)?)?;
            }
            let t = common.t.unwrap_or(1.0);
            for &radius in &r {
                writeln!(out, "p_{t}({radius}) = {:.15e}", kernel_eval(&res.kernel, t, radius)?)?;
            }
            if let Some(path) = &res.output {
                let profile = match &res.kernel {
                    Kernel::Profile(p) => (**p).clone(),
                    _ => build_profile(index, &GridConfig::default())?,
                };
                writeln!(
                    out,
                    "profile: {} nodes, tail constant {:.6e}, switch radius {:.4}, mass {:.9}",
                    profile.radii().len(),
                    profile.tail_constant(),
                    profile.switch_radius(),
                    profile.total_mass()
                )?;
                profile.write_csv(create(path)?)?;
            }
            Ok(true)
        }
        Command::Perimeter { common, method } => {
            let res = resolve("perimeter", &common, env_seed, false)?;
            let base = base_row(&res);
            let alpha = res.kernel.alpha();
            let mut rows = Vec::new();
            if matches!(method, PerimeterChoice::Quadrature | PerimeterChoice::Both) {
                let p = alpha_perimeter(&res.shape, alpha, PerimeterMethod::Quadrature)?;
                rows.push(EstimatorRow::from_estimate(&base, 0.0, "alpha_perimeter", "quadrature", &p));
            }
            if matches!(method, PerimeterChoice::Mc | PerimeterChoice::Both) {
                let m = PerimeterMethod::MonteCarlo { n_samples: res.cfg.n_samples, seed: res.cfg.seed };
                let p = alpha_perimeter(&res.shape, alpha, m)?;
                rows.push(EstimatorRow::from_estimate(&base, 0.0, "alpha_perimeter", "monte_carlo", &p));
            }
            emit_rows(&res, &rows, out)?;
            Ok(true)
        }
        Command::HeatContent { common, heat_method } => {
            let mut res = resolve("heat-content", &common, env_seed, false)?;
            res.cfg.heat_method = heat_method.into();
            res.header.push("heat_method", res.cfg.heat_method.name());
            let base = base_row(&res);
            let mut rows = Vec::new();
            for &t in &res.times {
                let h = heat_content(&res.shape, &res.kernel, t, &res.cfg)?;
                rows.push(EstimatorRow::from_estimate(&base, t, "H", h.method.name(), &h.h));
                rows.push(EstimatorRow::from_estimate(&base, t, "H_deficit", h.method.name(), &h.deficit));
            }
            emit_rows(&res, &rows, out)?;
            Ok(true)
        }
        Command::Shc { common } => {
            let res = resolve("shc", &common, env_seed, false)?;
            let base = base_row(&res);
            let mut rows = Vec::new();
            for &t in &res.times {
                let q = spectral_heat_content(&res.shape, &res.kernel, t, &res.cfg)?;
                let n = q.n_steps;
                let mut push = |name: &str, method: String, e| {
                    rows.push(EstimatorRow { n_steps: n, ..EstimatorRow::from_estimate(&base, t, name, &method, e) })
                };
                push("Q", format!("grid_{n}"), &q.coarse);
                push("Q", format!("grid_{}", 2 * n), &q.fine);
                push("Q_refinement_gap", "bias".into(), &q.refinement_gap);
            }
            emit_rows(&res, &rows, out)?;
            Ok(true)
        }
        Command::Psi { common, psi_method } => {
            let mut res = resolve("psi", &common, env_seed, false)?;
            let method: PsiMethod = psi_method.into();
            res.header.push("psi_method", method.name());
            let base = base_row(&res);
            let mut rows = Vec::new();
            for &t in &res.times {
                let p = psi(&res.shape, &res.kernel, t, method, &res.cfg)?;
                rows.push(EstimatorRow::from_estimate(&base, t, "Psi", method.name(), &p.psi));
                rows.push(EstimatorRow::from_estimate(&base, t, "R_lower", "bracket", &Estimate::exact(p.r_lower)));
                rows.push(EstimatorRow::from_estimate(&base, t, "R_upper", "bracket", &Estimate::exact(p.r_upper)));
            }
            emit_rows(&res, &rows, out)?;
            Ok(true)
        }
        Command::Moments { common, k } => {
            let res = resolve("moments", &common, env_seed, false)?;
            let ks = match k {
                Some(k) if (1..=3).contains(&k) => vec![k],
                Some(k) => return Err(Error::Parse(format!("--k must be 1, 2 or 3, got {k}"))),
                None => vec![1, 2, 3],
            };
            let base = base_row(&res);
            let mut rows = Vec::new();
            for &t in &res.times {
                for &k in &ks {
                    let e = t_moment(&res.shape, &res.kernel, t, k, &res.cfg)?;
                    let method = ["exact", "quadrature", "palm"][k as usize - 1];
                    rows.push(EstimatorRow::from_estimate(&base, t, &format!("T{k}"), method, &e));
                }
            }
            emit_rows(&res, &rows, out)?;
            Ok(true)
        }
        Command::Verify { common, theorem, tolerance } => {
            let id: TheoremId = theorem.parse()?;
            let mut res = resolve("verify", &common, env_seed, true)?;
            res.header.push("theorem", id);
            if let Some(tol) = tolerance {
                if !(tol > 0.0) {
                    return Err(Error::Parse(format!("--tolerance must be positive, got {tol}")));
                }
                res.header.push("tolerance", tol);
            }
            let cfg = VerifyConfig { functional: res.cfg, tolerance, h_shift: 0.0 };
            let rep = verify(id, &res.shape, &res.kernel, res.grid.as_ref().unwrap(), &cfg)?;
            emit_reports(&res, &[rep], out)
        }
        Command::Audit { common } => {
            let res = resolve("audit", &common, env_seed, true)?;
            let cfg = VerifyConfig { functional: res.cfg, ..VerifyConfig::default() };
            let rep = verify(TheoremId::Audit, &res.shape, &res.kernel, res.grid.as_ref().unwrap(), &cfg)?;
            emit_reports(&res, &[rep], out)
        }
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Kernel { common, .. }
        | Command::Perimeter { common, .. }
        | Command::HeatContent { common, .. }
        | Command::Shc { common }
        | Command::Psi { common, .. }
        | Command::Moments { common, .. }
        | Command::Verify { common, .. }
        | Command::Audit { common } => common,
    }
}

/// Configuration problems exit with 2, computational failures with 1.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidIndex(_)
        | Error::InvalidShape(_)
        | Error::DimensionMismatch { .. }
        | Error::Domain(_)
        | Error::Hypothesis(_)
        | Error::Unsupported(_)
        | Error::Parse(_) => 2,
        _ => 1,
    }
}

/// Run with explicit arguments, seed environment value and output stream.
pub fn run_with<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let threads = common(&cli.command).threads;
    // summaries are buffered so the job can run inside a dedicated pool
    let mut buf = Vec::new();
    let job = || execute(cli.command, env_seed, &mut buf);
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(job),
            Err(e) => Err(Error::Parse(format!("cannot start {n} threads: {e}"))),
        },
        None => job(),
    };
    let _ = out.write_all(&buf);
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary: process arguments, `FRACHEAT_SEED`, stdout and stderr.
pub fn run() -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), env_seed.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("fracheat").chain(args.iter().copied()), None, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn seed_resolution_order() {
        assert_eq!(resolve_seed(Some(1), Some("2")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("2")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None).unwrap(), DEFAULT_SEED);
        assert!(resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn first_moment_is_exact() {
        let (code, out, _) = run_args(&["moments", "--k", "1", "--alpha", "1.5", "--t", "0.01"]);
        assert_eq!(code, 0);
        assert!(out.contains(&format!("{:.10e}", 0.01 * std::f64::consts::PI)), "{out}");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        assert_eq!(run_args(&["heat-content", "--alpha", "2", "--shape", "ball:d=2,q=1"]).0, 2);
        assert_eq!(run_args(&["heat-content", "--alpha", "3"]).0, 2);
        let (code, _, err) =
            run_args(&["verify", "--theorem", "main-ii", "--alpha", "1", "--t-max", "0.5", "--n-samples", "10"]);
        assert_eq!(code, 2);
        assert!(err.contains("0 < t < min{diam(Ω), e^{-1}}"), "{err}");
        assert_eq!(run_args(&["verify", "--theorem", "main-i", "--alpha", "2", "--t", "0.1"]).0, 2);
    }
}
