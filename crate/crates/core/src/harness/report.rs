//! Report types and their JSON / CSV renderings.

use std::io::{self, Write};

use serde::Serialize;

use super::stats::LineFit;
use super::ExperimentPlan;
use crate::error::{Error, Result};
use crate::limits::{Functional, RegionVerdict};

pub const SCHEMA: &str = "powvar-report/1";

/// Error statistics at one step size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungStats {
    pub delta_n: f64,
    pub replicates: usize,
    pub mean_statistic: f64,
    pub mean_limit: f64,
    pub mean_error: f64,
    pub rmse: f64,
    pub sd_error: f64,
    pub mean_abs_error: f64,
    /// `|mean error| / |mean limit|`.
    pub rel_mean_error: f64,
    /// `Σ|error| / Σ|limit|` over replicates.
    pub mean_abs_rel_error: f64,
}

/// Fitted `log₂RMSE` against `log₂(1/Δn)`: an error of order `Δn^{1/2}` has slope `−1/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub log2_delta_n: Vec<f64>,
    pub log2_rmse: Vec<f64>,
    pub fit: Option<LineFit>,
    /// The errors carry no Monte Carlo spread (or vanish), so the slope
    /// reflects discretisation only and is not a rate estimate.
    pub degenerate: bool,
    pub note: Option<String>,
}

/// Standardised CLT errors at one step size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltBlock {
    pub delta_n: f64,
    pub replicates: usize,
    pub scale: String,
    pub mean_theoretical_variance: f64,
    pub mean: f64,
    pub variance: f64,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    /// Standardisation used estimated integrated quarticity (experimental).
    pub feasible: bool,
}

/// One acceptance band and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCheck {
    pub name: String,
    pub value: f64,
    pub band: String,
    pub pass: bool,
}

/// Why the functional was admitted: the model's hypotheses and, for the
/// CLTs with a region condition, the region verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub activity_index: f64,
    pub hypotheses: String,
    pub region: Option<RegionVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub functional: Functional,
    pub admissibility: Admissibility,
    pub rungs: Vec<RungStats>,
    pub rate: Option<RateFit>,
    pub clt: Option<CltBlock>,
    pub checks: Vec<BandCheck>,
}

impl TheoremReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub pair: [Functional; 2],
    pub delta_n: f64,
    pub replicates: usize,
    pub empirical: f64,
    pub theoretical: f64,
    pub standard_error: f64,
    /// Empirical 2×2 covariance matrix of the scaled errors.
    pub empirical_matrix: [[f64; 2]; 2],
    /// Mean theoretical diagonal entries.
    pub theoretical_diagonal: [f64; 2],
    /// Largest relative gap between the pair diagonal and the one-dimensional CLT variance.
    pub diagonal_consistency_gap: f64,
    pub checks: Vec<BandCheck>,
}

impl CovarianceReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Why a run was refused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refusal {
    pub message: String,
    pub region: Option<RegionVerdict>,
}

/// Self-describing output of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub plan: ExperimentPlan,
    pub theorems: Vec<TheoremReport>,
    pub covariance: Option<CovarianceReport>,
    pub refusal: Option<Refusal>,
    pub pass: bool,
}

impl Report {
    pub fn new(command: &str, plan: ExperimentPlan) -> Self {
        Report {
            schema: SCHEMA,
            command: command.to_string(),
            plan,
            theorems: Vec::new(),
            covariance: None,
            refusal: None,
            pass: false,
        }
    }

    pub fn finalize(mut self) -> Self {
        self.pass = self.refusal.is_none()
            && self.theorems.iter().all(TheoremReport::pass)
            && self.covariance.as_ref().is_none_or(CovarianceReport::pass);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    /// Flat per-rung table.
    pub fn write_rungs_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "functional,delta_n,log2_delta_n,replicates,mean_statistic,mean_limit,mean_error,rmse,log2_rmse"
        )?;
        for t in &self.theorems {
            for r in &t.rungs {
                writeln!(
                    w,
                    "\"{}\",{},{},{},{},{},{},{},{}",
                    t.functional,
                    r.delta_n,
                    r.delta_n.log2(),
                    r.replicates,
                    r.mean_statistic,
                    r.mean_limit,
                    r.mean_error,
                    r.rmse,
                    r.rmse.log2()
                )?;
            }
        }
        Ok(())
    }
}

/// Rate-plot rows `(log₂Δn, log₂RMSE, fitted)` from the JSON of a report;
/// `fitted` evaluates the regression line at `log₂(1/Δn) = −log₂Δn`.
pub fn rate_plot_rows(report: &serde_json::Value) -> Result<Vec<(String, f64, f64, f64)>> {
    let theorems = report
        .get("theorems")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Parse("report has no theorem section".to_string()))?;
    let mut rows = Vec::new();
    for t in theorems {
        let Some(rate) = t.get("rate").filter(|r| !r.is_null()) else {
            continue;
        };
        let label = t
            .get("functional")
            .and_then(|f| serde_json::from_value::<Functional>(f.clone()).ok())
            .map(|f| f.to_string())
            .unwrap_or_else(|| "?".to_string());
        let xs = float_array(&rate["log2_delta_n"])?;
        let ys = float_array(&rate["log2_rmse"])?;
        if xs.len() < 2 {
            return Err(Error::InvalidArgument("≥ 2 rungs required".to_string()));
        }
        let slope = rate["fit"]["slope"]
            .as_f64()
            .ok_or_else(|| Error::Parse("rate section lacks a fitted slope".to_string()))?;
        let intercept = rate["fit"]["intercept"]
            .as_f64()
            .ok_or_else(|| Error::Parse("rate section lacks a fitted intercept".to_string()))?;
        for (x, y) in xs.iter().zip(&ys) {
            rows.push((label.clone(), *x, *y, intercept - slope * x));
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("report contains no rate section".to_string()));
    }
    Ok(rows)
}

fn float_array(v: &serde_json::Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Parse("expected an array of numbers".to_string()))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::Parse("non-numeric rate entry".to_string()))
        })
        .collect()
}

pub fn write_rate_plot_csv(rows: &[(String, f64, f64, f64)], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "functional,log2_delta_n,log2_rmse,fitted")?;
    for (label, x, y, fit) in rows {
        writeln!(w, "\"{label}\",{x},{y},{fit}")?;
    }
    Ok(())
}
