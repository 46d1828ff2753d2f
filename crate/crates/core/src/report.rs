//! Measured constants with their mesh provenance, and CSV output.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Unbounded,
    Decaying,
    NotDecaying,
    Regular,
    NotRegular,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::Unbounded => "unbounded",
            Verdict::Decaying => "decaying",
            Verdict::NotDecaying => "not_decaying",
            Verdict::Regular => "regular",
            Verdict::NotRegular => "not_regular",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One measurement: `mesh` is the spatial resolution, `param` the sweep variable (time, λ, ...).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRow {
    pub mesh: usize,
    pub param: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub quantity: String,
    pub rows: Vec<EstimateRow>,
    /// Time horizon the constants refer to.
    pub horizon: f64,
    pub verdict: Verdict,
    /// The ratio or fraction the verdict was decided against.
    pub threshold: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    quantity: &'a str,
    mesh: usize,
    param: f64,
    value: f64,
    verdict: &'a str,
}

impl EstimateReport {
    pub fn new(
        quantity: impl Into<String>,
        rows: Vec<EstimateRow>,
        horizon: f64,
        verdict: Verdict,
        threshold: f64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("an estimate needs at least one row".into()));
        }
        if let Some(r) = rows.iter().find(|r| !(r.value >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "measured constants must be nonnegative, got {}",
                r.value
            )));
        }
        Ok(Self {
            quantity: quantity.into(),
            rows,
            horizon,
            verdict,
            threshold,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Ratios of consecutive values.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].value / w[0].value).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_reports_csv(std::slice::from_ref(self), w)
    }
}

/// Writes several reports into one CSV with columns `quantity,mesh,param,value,verdict`.
pub fn write_reports_csv<W: Write>(reports: &[EstimateReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for rep in reports {
        for row in &rep.rows {
            wr.serialize(CsvRow {
                quantity: &rep.quantity,
                mesh: row.mesh,
                param: row.param,
                value: row.value,
                verdict: rep.verdict.as_str(),
            })?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Verdict for a mesh-refinement sequence: bounded when every consecutive ratio is at most `threshold`.
pub fn refinement_verdict(values: &[f64], threshold: f64) -> Verdict {
    if values.len() < 2 {
        return Verdict::Inconclusive;
    }
    let bounded = values.windows(2).all(|w| {
        if w[0] == 0.0 {
            w[1] == 0.0
        } else {
            w[1] / w[0] <= threshold
        }
    });
    if bounded {
        Verdict::Bounded
    } else {
        Verdict::Unbounded
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs matching samples, at least two".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
