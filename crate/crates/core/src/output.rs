//! CSV output. Every file starts with `#` comment lines that record the
//! crate version and the resolved configuration; the rest is plain CSV.

use std::io::Write;

use crate::asymptotics::TheoremReport;
use crate::error::Result;
use crate::estimate::Estimate;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ordered `key=value` pairs echoed at the top of every output file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# fracheat {VERSION}")?;
        for (k, v) in &self.entries {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }
}

/// One estimator evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub alpha: f64,
    pub d: usize,
    pub shape: String,
    pub t: f64,
    pub quantity: String,
    pub method: String,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub n_steps: usize,
    pub seed: u64,
}

impl EstimatorRow {
    /// Row for `estimate`, with the run-level fields taken from `base`.
    pub fn from_estimate(base: &EstimatorRow, t: f64, quantity: &str, method: &str, e: &Estimate) -> Self {
        Self {
            t,
            quantity: quantity.into(),
            method: method.into(),
            value: e.value,
            stderr: e.stderr,
            n_samples: e.n_samples,
            ..base.clone()
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_estimator_csv<W: Write>(mut w: W, header: &Header, rows: &[EstimatorRow]) -> Result<()> {
    header.write(&mut w)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["alpha", "d", "shape", "t", "quantity", "method", "value", "stderr", "n_samples", "n_steps", "seed"])?;
    for r in rows {
        c.write_record([
            r.alpha.to_string(),
            r.d.to_string(),
            r.shape.clone(),
            r.t.to_string(),
            r.quantity.clone(),
            r.method.clone(),
            r.value.to_string(),
            r.stderr.to_string(),
            r.n_samples.to_string(),
            r.n_steps.to_string(),
            r.seed.to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

/// Per-time rows of one or more reports.
pub fn write_report_csv<W: Write>(mut w: W, header: &Header, reports: &[TheoremReport]) -> Result<()> {
    header.write(&mut w)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["theorem_id", "check", "t", "ratio", "stderr", "bound_margin", "pass"])?;
    for rep in reports {
        for r in &rep.rows {
            c.write_record([
                rep.theorem_id.name().to_string(),
                r.check.clone(),
                fmt_opt(r.t),
                r.ratio.to_string(),
                r.stderr.to_string(),
                fmt_opt(r.bound_margin),
                r.pass.to_string(),
            ])?;
        }
    }
    c.flush()?;
    Ok(())
}

/// One row per fitted limit, plus a verdict row for reports without limits.
pub fn write_summary_csv<W: Write>(mut w: W, header: &Header, reports: &[TheoremReport]) -> Result<()> {
    header.write(&mut w)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["theorem_id", "limit", "fitted_limit", "fit_stderr", "paper_constant", "tolerance", "verdict"])?;
    for rep in reports {
        let verdict = if rep.verdict { "pass" } else { "fail" };
        if rep.limits.is_empty() {
            c.write_record([rep.theorem_id.name(), "", "", "", "", "", verdict])?;
        }
        for l in &rep.limits {
            c.write_record([
                rep.theorem_id.name().to_string(),
                l.name.clone(),
                l.fit.limit.to_string(),
                l.fit.stderr.to_string(),
                l.paper_constant.to_string(),
                l.tolerance.to_string(),
                verdict.to_string(),
            ])?;
        }
    }
    c.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_csv() {
        let base = EstimatorRow {
            alpha: 1.5,
            d: 2,
            shape: "ball:d=2,r=1".into(),
            t: 0.0,
            quantity: String::new(),
            method: String::new(),
            value: 0.0,
            stderr: 0.0,
            n_samples: 0,
            n_steps: 64,
            seed: 7,
        };
        let row = EstimatorRow::from_estimate(&base, 0.01, "T1", "exact", &Estimate::exact(0.5));
        let mut buf = Vec::new();
        write_estimator_csv(&mut buf, &Header::new().with("seed", 7), &[row]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# fracheat "));
        assert_eq!(lines[1], "# seed=7");
        assert_eq!(lines[2], "alpha,d,shape,t,quantity,method,value,stderr,n_samples,n_steps,seed");
        assert_eq!(lines[3], "1.5,2,\"ball:d=2,r=1\",0.01,T1,exact,0.5,0,0,64,7");
    }
}
