//! Monte Carlo experiments: LLN error curves and rate slopes, studentised
//! CLT checks, pairwise covariance checks, and report assembly.
//!
//! Paths are simulated in parallel but always collected in replicate order
//! and aggregated sequentially, so reports do not depend on the thread count.

pub mod report;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals;
use crate::functions::TestFunction;
use crate::limits::{
    check_pair, clt_region_check, covariance_target, Functional, PreparedFunctional, RegionVerdict, Target, Theorem,
};
use crate::model::{activity_index, hypothesis_profile, ModelSpec, SamplingSpec};
use crate::simulate::{derive_seed, map_batch, restrict_to_observations};

pub use report::{Admissibility, BandCheck, CltBlock, CovarianceReport, RateFit, Report, RungStats, TheoremReport};

/// Fewest replicates accepted by the KS-based CLT check.
pub const MIN_CLT_REPLICATES: usize = 100;

/// Acceptance bands; absent bands are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceBands {
    /// Upper bound on `|mean error| / |mean limit|` at the finest step.
    pub rel_mean_error: Option<f64>,
    /// Upper bound on `Σ|error| / Σ|limit|` at the finest step.
    pub mean_abs_rel_error: Option<f64>,
    /// Interval for the fitted slope of `log₂RMSE` against `log₂(1/Δn)`.
    pub slope: Option<[f64; 2]>,
    /// Interval for the variance of the standardised errors.
    pub variance: Option<[f64; 2]>,
    /// Lower bound for the KS p-value.
    pub ks_p_min: Option<f64>,
    /// Allowed distance, in standard errors, between empirical and theoretical covariance.
    pub cov_max_se: Option<f64>,
}

/// A Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub model: ModelSpec,
    pub functionals: Vec<Functional>,
    /// Strictly decreasing step sizes.
    pub delta_ladder: Vec<f64>,
    pub horizon: f64,
    /// Fine substeps per observation step.
    pub refine: usize,
    pub replicates: usize,
    pub base_seed: u64,
    /// Evaluation time `≤ horizon`.
    pub t_eval: f64,
    #[serde(default)]
    pub bands: AcceptanceBands,
    /// Standardise T6' errors by an estimated quarticity (experimental).
    #[serde(default)]
    pub feasible: bool,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.functionals.is_empty() {
            return Err(Error::InvalidArgument("plan lists no functionals".to_string()));
        }
        if self.delta_ladder.is_empty() {
            return Err(Error::InvalidArgument("Δn ladder is empty".to_string()));
        }
        if self.delta_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(
                "Δn ladder must be strictly decreasing".to_string(),
            ));
        }
        for &dn in &self.delta_ladder {
            SamplingSpec::new(self.horizon, dn, self.refine)?;
        }
        if self.replicates < 2 {
            return Err(Error::TooFewSamples {
                got: self.replicates,
                need: 2,
            });
        }
        if !(self.t_eval > 0.0 && self.t_eval <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "evaluation time {} must lie in (0, T = {}]",
                self.t_eval, self.horizon
            )));
        }
        Ok(())
    }

    fn sampling(&self, delta_n: f64) -> Result<SamplingSpec> {
        SamplingSpec::new(self.horizon, delta_n, self.refine)
    }

    /// Base seed of ladder rung `k`.
    pub fn rung_seed(&self, k: usize) -> u64 {
        derive_seed(self.base_seed, k as u64 + 1)
    }

    fn finest(&self) -> f64 {
        *self.delta_ladder.last().expect("validated ladder")
    }
}

/// Per-replicate evaluation of one functional: statistic, limit and variance.
#[derive(Debug, Clone, Copy)]
struct Eval {
    statistic: f64,
    limit: f64,
    variance: f64,
    feasible_variance: f64,
}

fn prepare_all(plan: &ExperimentPlan, delta_n: f64) -> Result<Vec<PreparedFunctional>> {
    plan.functionals
        .iter()
        .map(|f| PreparedFunctional::new(*f, &plan.model, delta_n))
        .collect()
}

/// Quarticity estimate `(2/(3Δn))·Σ|Δ|⁴1{|Δ| ≤ αΔn^ϖ}` of `2∫c²`.
fn feasible_truncated_variance(target: &Target, increments: &[f64], delta_n: f64) -> f64 {
    let Some(tr) = target.truncation() else {
        return f64::NAN;
    };
    let u = tr.threshold(delta_n);
    let q = stats::sum(increments.iter().filter(|d| d.abs() <= u).map(|d| d.powi(4)));
    2.0 * q / (3.0 * delta_n)
}

/// Simulate `replicates` paths at `delta_n` and evaluate every prepared functional.
fn evaluate_rung(
    plan: &ExperimentPlan,
    prepared: &[PreparedFunctional],
    delta_n: f64,
    seed: u64,
    replicates: usize,
    with_variance: bool,
) -> Result<Vec<Vec<Eval>>> {
    let sampling = plan.sampling(delta_n)?;
    let t = plan.t_eval;
    map_batch(&plan.model, &sampling, seed, replicates, |path| {
        let inc = restrict_to_observations(path, &sampling)?;
        prepared
            .iter()
            .map(|p| {
                let statistic = p.statistic(&inc).value_at(t);
                let limit = p.limit(path)?.value_at(t);
                let (variance, feasible_variance) = if with_variance {
                    let v = p.variance(path, t)?;
                    let fv = if p.theorem() == Theorem::T6p {
                        feasible_truncated_variance(&p.functional.target, &inc, delta_n)
                    } else {
                        f64::NAN
                    };
                    (v, fv)
                } else {
                    (f64::NAN, f64::NAN)
                };
                Ok(Eval {
                    statistic,
                    limit,
                    variance,
                    feasible_variance,
                })
            })
            .collect()
    })
}

fn column(evals: &[Vec<Eval>], j: usize) -> Vec<Eval> {
    evals.iter().map(|row| row[j]).collect()
}

fn rung_stats(delta_n: f64, evals: &[Eval]) -> RungStats {
    let stat: Vec<f64> = evals.iter().map(|e| e.statistic).collect();
    let lim: Vec<f64> = evals.iter().map(|e| e.limit).collect();
    let err: Vec<f64> = evals.iter().map(|e| e.statistic - e.limit).collect();
    let n = err.len() as f64;
    let mean_error = stats::mean(&err);
    let rmse = (stats::sum(err.iter().map(|e| e * e)) / n).sqrt();
    let mean_abs_error = stats::mean(&err.iter().map(|e| e.abs()).collect::<Vec<_>>());
    let mean_limit = stats::mean(&lim);
    let abs_lim = stats::sum(lim.iter().map(|l| l.abs()));
    RungStats {
        delta_n,
        replicates: evals.len(),
        mean_statistic: stats::mean(&stat),
        mean_limit,
        mean_error,
        rmse,
        sd_error: stats::variance(&err).max(0.0).sqrt(),
        mean_abs_error,
        rel_mean_error: mean_error.abs() / mean_limit.abs(),
        mean_abs_rel_error: stats::sum(err.iter().map(|e| e.abs())) / abs_lim,
    }
}

fn rate_fit(rungs: &[RungStats]) -> RateFit {
    let xs: Vec<f64> = rungs.iter().map(|r| r.delta_n.log2()).collect();
    let ys: Vec<f64> = rungs.iter().map(|r| r.rmse.log2()).collect();
    let spreadless = rungs
        .iter()
        .all(|r| r.sd_error <= 1e-12 * r.rmse.max(f64::MIN_POSITIVE));
    let vanishing = rungs.iter().any(|r| r.rmse == 0.0);
    // regress on log₂(1/Δn) so that a rate Δn^{1/2} reads as slope −1/2
    let inv: Vec<f64> = xs.iter().map(|x| -x).collect();
    let fit = if xs.len() >= 2 && !vanishing {
        stats::ols(&inv, &ys).ok()
    } else {
        None
    };
    let (degenerate, note) = if vanishing {
        (
            true,
            Some("RMSE is exactly zero on some rung; no rate can be fitted".to_string()),
        )
    } else if spreadless {
        (
            true,
            Some(
                "errors are deterministic (no Monte Carlo spread); the slope reflects discretisation only".to_string(),
            ),
        )
    } else {
        (false, None)
    };
    RateFit {
        log2_delta_n: xs,
        log2_rmse: ys,
        fit,
        degenerate,
        note,
    }
}

fn check_upper(name: &str, value: f64, bound: f64) -> BandCheck {
    BandCheck {
        name: name.to_string(),
        value,
        band: format!("≤ {bound}"),
        pass: value.is_finite() && value <= bound,
    }
}

fn check_interval(name: &str, value: f64, band: [f64; 2]) -> BandCheck {
    BandCheck {
        name: name.to_string(),
        value,
        band: format!("[{}, {}]", band[0], band[1]),
        pass: value.is_finite() && value >= band[0] && value <= band[1],
    }
}

/// LLN error curves over the ladder with a `log₂RMSE` slope fit.
pub fn run_lln(plan: &ExperimentPlan) -> Result<Vec<TheoremReport>> {
    plan.validate()?;
    let mut per_functional: Vec<Vec<RungStats>> = vec![Vec::new(); plan.functionals.len()];
    for (k, &dn) in plan.delta_ladder.iter().enumerate() {
        let prepared = prepare_all(plan, dn)?;
        let evals = evaluate_rung(plan, &prepared, dn, plan.rung_seed(k), plan.replicates, false)?;
        for (j, rungs) in per_functional.iter_mut().enumerate() {
            rungs.push(rung_stats(dn, &column(&evals, j)));
        }
    }
    Ok(plan
        .functionals
        .iter()
        .zip(per_functional)
        .map(|(f, rungs)| {
            let rate = (rungs.len() >= 2).then(|| rate_fit(&rungs));
            let finest = rungs.last().expect("non-empty ladder");
            let mut checks = Vec::new();
            if let Some(b) = plan.bands.rel_mean_error {
                checks.push(check_upper("rel_mean_error", finest.rel_mean_error, b));
            }
            if let Some(b) = plan.bands.mean_abs_rel_error {
                checks.push(check_upper("mean_abs_rel_error", finest.mean_abs_rel_error, b));
            }
            if let Some(band) = plan.bands.slope {
                let (value, usable) = match &rate {
                    Some(RateFit {
                        fit: Some(fit),
                        degenerate,
                        ..
                    }) => (fit.slope, !degenerate),
                    _ => (f64::NAN, false),
                };
                let mut c = check_interval("slope", value, band);
                c.pass &= usable;
                checks.push(c);
            }
            TheoremReport {
                functional: *f,
                admissibility: admissibility(f, &plan.model),
                rungs,
                rate,
                clt: None,
                checks,
            }
        })
        .collect())
}

/// Studentised CLT check at the finest step of the ladder.
pub fn run_clt(plan: &ExperimentPlan) -> Result<Vec<TheoremReport>> {
    plan.validate()?;
    if let Some(f) = plan.functionals.iter().find(|f| !f.theorem.has_clt()) {
        return Err(Error::InvalidArgument(format!("{f} has no central limit theorem")));
    }
    if plan.replicates < MIN_CLT_REPLICATES {
        return Err(Error::TooFewSamples {
            got: plan.replicates,
            need: MIN_CLT_REPLICATES,
        });
    }
    let dn = plan.finest();
    let k = plan.delta_ladder.len() - 1;
    let prepared = prepare_all(plan, dn)?;
    let evals = evaluate_rung(plan, &prepared, dn, plan.rung_seed(k), plan.replicates, true)?;
    let mut out = Vec::new();
    for (j, p) in prepared.iter().enumerate() {
        let col = column(&evals, j);
        let th = p.theorem();
        let scale = th.clt_scale(dn);
        let feasible = plan.feasible && th == Theorem::T6p;
        if let Some(e) = col.iter().find(|e| !(e.variance > 0.0)) {
            return Err(Error::DegenerateVariance(format!(
                "{}: conditional variance {} on a path; standardisation is impossible",
                p.functional, e.variance
            )));
        }
        let z: Vec<f64> = col
            .iter()
            .map(|e| {
                let v = if feasible { e.feasible_variance } else { e.variance };
                (e.statistic - e.limit) / (scale * v.sqrt())
            })
            .collect();
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateVariance(format!(
                "{}: estimated variance vanished on a path",
                p.functional
            )));
        }
        let (d, pval) = stats::ks_distance(&z)?;
        let block = CltBlock {
            delta_n: dn,
            replicates: z.len(),
            scale: if th == Theorem::T4 {
                "1".to_string()
            } else {
                "sqrt(delta_n)".to_string()
            },
            mean_theoretical_variance: stats::mean(&col.iter().map(|e| e.variance).collect::<Vec<_>>()),
            mean: stats::mean(&z),
            variance: stats::variance(&z),
            ks_distance: d,
            ks_p_value: pval,
            feasible,
        };
        let mut checks = Vec::new();
        if let Some(band) = plan.bands.variance {
            checks.push(check_interval("standardized_variance", block.variance, band));
        }
        if let Some(p_min) = plan.bands.ks_p_min {
            checks.push(BandCheck {
                name: "ks_p_value".to_string(),
                value: pval,
                band: format!("> {p_min}"),
                pass: pval > p_min,
            });
        }
        out.push(TheoremReport {
            functional: p.functional,
            admissibility: admissibility(&p.functional, &plan.model),
            rungs: vec![rung_stats(dn, &col)],
            rate: None,
            clt: Some(block),
            checks,
        });
    }
    Ok(out)
}

/// Empirical covariance of two `1/√Δn`-scaled errors against the joint-CLT value.
pub fn run_covariance_pair(plan: &ExperimentPlan) -> Result<CovarianceReport> {
    plan.validate()?;
    if plan.functionals.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "a covariance plan needs exactly two functionals, got {}",
            plan.functionals.len()
        )));
    }
    let dn = plan.finest();
    let k = plan.delta_ladder.len() - 1;
    let prepared = prepare_all(plan, dn)?;
    let (ca, cb) = check_pair(&prepared[0], &prepared[1])?;
    let sampling = plan.sampling(dn)?;
    let t = plan.t_eval;
    let rows = map_batch(&plan.model, &sampling, plan.rung_seed(k), plan.replicates, |path| {
        let inc = restrict_to_observations(path, &sampling)?;
        let mut errs = [0.0; 2];
        let mut vars = [0.0; 2];
        for (j, p) in prepared.iter().enumerate() {
            errs[j] = (p.statistic(&inc).value_at(t) - p.limit(path)?.value_at(t)) / dn.sqrt();
            vars[j] = p.variance(path, t)?;
        }
        let cross = covariance_target(&ca, &cb, path, t)?;
        let diag = [
            covariance_target(&ca, &ca, path, t)?,
            covariance_target(&cb, &cb, path, t)?,
        ];
        Ok((errs, cross, diag, vars))
    })?;
    let ea: Vec<f64> = rows.iter().map(|r| r.0[0]).collect();
    let eb: Vec<f64> = rows.iter().map(|r| r.0[1]).collect();
    let empirical = stats::covariance(&ea, &eb);
    let se = stats::covariance_se(&ea, &eb);
    let theoretical = stats::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let theoretical_diagonal = [
        stats::mean(&rows.iter().map(|r| r.2[0]).collect::<Vec<_>>()),
        stats::mean(&rows.iter().map(|r| r.2[1]).collect::<Vec<_>>()),
    ];
    let gap = rows
        .iter()
        .flat_map(|r| (0..2).map(move |j| (r.2[j] - r.3[j]).abs() / r.3[j].abs().max(f64::MIN_POSITIVE)))
        .fold(0.0, f64::max);
    let va = stats::variance(&ea);
    let vb = stats::variance(&eb);
    let mut checks = Vec::new();
    if let Some(kse) = plan.bands.cov_max_se {
        checks.push(BandCheck {
            name: "covariance_vs_target".to_string(),
            value: (empirical - theoretical).abs() / se,
            band: format!("≤ {kse} SE"),
            pass: (empirical - theoretical).abs() <= kse * se,
        });
    }
    checks.push(BandCheck {
        name: "diagonal_consistency".to_string(),
        value: gap,
        band: "≤ 1e-12".to_string(),
        pass: gap <= 1e-12,
    });
    checks.push(BandCheck {
        name: "empirical_psd".to_string(),
        value: va * vb - empirical * empirical,
        band: "≥ 0".to_string(),
        pass: va >= 0.0 && vb >= 0.0 && va * vb - empirical * empirical >= -1e-12 * va * vb,
    });
    Ok(CovarianceReport {
        pair: [prepared[0].functional, prepared[1].functional],
        delta_n: dn,
        replicates: rows.len(),
        empirical,
        theoretical,
        standard_error: se,
        empirical_matrix: [[va, empirical], [empirical, vb]],
        theoretical_diagonal,
        diagonal_consistency_gap: gap,
        checks,
    })
}

/// One rung of the exploratory `2 < r ≤ 3` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupRow {
    pub delta_n: f64,
    /// Standard deviation of `(V^n(h_r) − h_r⋆μ)/√Δn` across replicates.
    pub sd_normalized_error: f64,
    pub mean_normalized_error: f64,
}

/// Exploratory: for `2 < r ≤ 3` the natural `√Δn` normalisation of
/// `V^n(h_r) − h_r⋆μ` has no limit; this tabulates its spread over the ladder.
/// There is no acceptance criterion.
pub fn run_blowup(plan: &ExperimentPlan, r: f64) -> Result<Vec<BlowupRow>> {
    plan.validate()?;
    if !(r > 2.0 && r <= 3.0) {
        return Err(Error::InvalidArgument(format!("blow-up mode needs 2 < r ≤ 3, got {r}")));
    }
    let f = TestFunction::Power { r };
    let mut rows = Vec::new();
    for (k, &dn) in plan.delta_ladder.iter().enumerate() {
        let sampling = plan.sampling(dn)?;
        let t = plan.t_eval;
        let errs = map_batch(&plan.model, &sampling, plan.rung_seed(k), plan.replicates, |path| {
            let inc = restrict_to_observations(path, &sampling)?;
            let v = functionals::v_n(&f, &inc, dn).value_at(t);
            let j = functionals::jump_functional(&f, path, dn).value_at(t);
            Ok((v - j) / dn.sqrt())
        })?;
        rows.push(BlowupRow {
            delta_n: dn,
            sd_normalized_error: stats::variance(&errs).sqrt(),
            mean_normalized_error: stats::mean(&errs),
        });
    }
    Ok(rows)
}

/// Region verdict of the CLTs that have one (T5, T6, T6') on a model with jumps.
pub fn region_verdict(functional: &Functional, model: &ModelSpec) -> Option<RegionVerdict> {
    if model.is_continuous() {
        return None;
    }
    let s = activity_index(model).ok()?;
    let param = match (functional.theorem, functional.target) {
        (Theorem::T6p, Target::Truncation { varpi, .. }) => varpi,
        (Theorem::T6, Target::Function { f }) => f.power_exponent()?,
        (Theorem::T5, _) => 0.0,
        _ => return None,
    };
    clt_region_check(functional.theorem, s, param).ok()
}

/// The violated region, if any, for a refusal report.
pub fn refusal_region(functional: &Functional, model: &ModelSpec) -> Option<RegionVerdict> {
    region_verdict(functional, model).filter(|v| !v.holds())
}

fn admissibility(functional: &Functional, model: &ModelSpec) -> Admissibility {
    Admissibility {
        activity_index: activity_index(model).unwrap_or(f64::NAN),
        hypotheses: hypothesis_profile(model).map(|h| h.to_string()).unwrap_or_default(),
        region: region_verdict(functional, model),
    }
}
