//! Limit values, asymptotic variances, CLT regions and the jump-CLT law `Z(g)`.
//!
//! Every functional checked by the harness is a [`Functional`]: a theorem tag
//! plus its target (a test function, truncation parameters, or a function with
//! a compensating cutoff). [`PreparedFunctional`] checks admissibility once per
//! model and step size, then evaluates statistics, limits and variances along
//! individual paths.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{self, jump_size_expectation, lln_power_scale, FunctionalSeries, LevyExpectation, T1Case};
use crate::functions::{abs_moment, class_membership, rho, rho_product, CutoffPsi, TestFunction};
use crate::model::{activity_index, hypothesis_profile, JumpSpec, ModelSpec, TruncationSpec};
use crate::simulate::PathBundle;

/// Relative accuracy requested from the compensator quadrature.
const COMPENSATOR_PRECISION: f64 = 1e-12;

/// The limit theorems the lab can check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Theorem {
    T1a,
    T1b,
    T1c,
    T2,
    T3i,
    T3ii,
    T3iii,
    T4,
    T5,
    T6,
    T6p,
    T7i,
    T7ii,
    T8pair,
}

impl Theorem {
    pub const ALL: [Theorem; 14] = [
        Theorem::T1a,
        Theorem::T1b,
        Theorem::T1c,
        Theorem::T2,
        Theorem::T3i,
        Theorem::T3ii,
        Theorem::T3iii,
        Theorem::T4,
        Theorem::T5,
        Theorem::T6,
        Theorem::T6p,
        Theorem::T7i,
        Theorem::T7ii,
        Theorem::T8pair,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Theorem::T1a => "T1a",
            Theorem::T1b => "T1b",
            Theorem::T1c => "T1c",
            Theorem::T2 => "T2",
            Theorem::T3i => "T3i",
            Theorem::T3ii => "T3ii",
            Theorem::T3iii => "T3iii",
            Theorem::T4 => "T4",
            Theorem::T5 => "T5",
            Theorem::T6 => "T6",
            Theorem::T6p => "T6p",
            Theorem::T7i => "T7i",
            Theorem::T7ii => "T7ii",
            Theorem::T8pair => "T8pair",
        }
    }

    /// Statistic and limit in one line.
    pub fn describe(&self) -> &'static str {
        match self {
            Theorem::T1a => "V^n(f) → f⋆μ  (f = o(x²), or C = 0 cases)",
            Theorem::T1b => "V^n(f) → f⋆μ + C  (f ~ x²)",
            Theorem::T1c => "V^n(f) → f⋆μ + ∫|b|  (f ~ |x|, C = 0)",
            Theorem::T2 => "V^n(f) − H̄^n(fψ_η) → Σ(f,ψ_η)  (Lévy only)",
            Theorem::T3i => "Δn·V'^n(g) → ∫ρ_σu(g)du",
            Theorem::T3ii => "Δn^{1−r/2}·V^n(f) → m_r∫c^{r/2}du  (f ~ |x|^r, r < 2)",
            Theorem::T3iii => "V''^n(ϖ,α) → C",
            Theorem::T4 => "V^n(f) − H̄^n(fψ_η) − Σ(f,ψ_η) → N(0, (1−2/π)∫c)  (Lévy only, no scaling)",
            Theorem::T5 => "(Δn·V'^n(g) − ∫ρ(g))/√Δn → N(0, ∫ρ(g²)−ρ(g)²)",
            Theorem::T6 => "(Δn^{1−r/2}V^n(f) − m_r∫c^{r/2})/√Δn → N(0, (m_2r−m_r²)∫c^r)",
            Theorem::T6p => "(V''^n(ϖ,α) − C)/√Δn → N(0, 2∫c²)",
            Theorem::T7i => "(V^n(f) − f⋆μ)/√Δn → Z(f')  (f = |x|^r, r > 3)",
            Theorem::T7ii => "(V^n(f) − C − f⋆μ)/√Δn → Z(f') + N(0, 2∫c²)  (f ∈ E_2 ∩ C¹)",
            Theorem::T8pair => "pairwise covariance of the joint CLT",
        }
    }

    /// Whether the theorem is a central limit theorem (has a variance).
    pub fn has_clt(&self) -> bool {
        matches!(
            self,
            Theorem::T4 | Theorem::T5 | Theorem::T6 | Theorem::T6p | Theorem::T7i | Theorem::T7ii
        )
    }

    /// Normalisation of the error in the CLT: `√Δn`, or 1 for T4.
    pub fn clt_scale(&self, delta_n: f64) -> f64 {
        if *self == Theorem::T4 {
            1.0
        } else {
            delta_n.sqrt()
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('\'', "p");
        Theorem::ALL
            .iter()
            .copied()
            .find(|t| t.tag().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| Error::Parse(format!("unknown theorem '{s}'")))
    }
}

impl Serialize for Theorem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Theorem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a theorem is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Function {
        f: TestFunction,
    },
    Truncation {
        varpi: f64,
        alpha: f64,
    },
    /// `f` with the compensator cutoff `ψ_η`; `eta = None` stands for `η = ∞`.
    Compensated {
        f: TestFunction,
        eta: Option<f64>,
    },
}

impl Target {
    pub fn function(&self) -> Option<&TestFunction> {
        match self {
            Target::Function { f } | Target::Compensated { f, .. } => Some(f),
            Target::Truncation { .. } => None,
        }
    }

    pub fn truncation(&self) -> Option<TruncationSpec> {
        match *self {
            Target::Truncation { varpi, alpha } => Some(TruncationSpec { varpi, alpha }),
            _ => None,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Function { f: g } => write!(f, "{g}"),
            Target::Truncation { varpi, alpha } => write!(f, "truncation:varpi={varpi},alpha={alpha}"),
            Target::Compensated { f: g, eta: Some(e) } => write!(f, "{g} with ψ_η, η={e}"),
            Target::Compensated { f: g, eta: None } => write!(f, "{g} with η=∞"),
        }
    }
}

/// A theorem applied to a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub theorem: Theorem,
    pub target: Target,
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.theorem, self.target)
    }
}

/// Limit and conditional variance of a functional along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremTarget {
    pub theorem: Theorem,
    pub limit_series: FunctionalSeries,
    pub variance_t: Option<f64>,
}

/// Outcome of a CLT region check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RegionVerdict {
    CltHolds,
    /// Only a rate `o(Δn^exponent)` is available; `condition` is the violated inequality.
    Degenerate {
        exponent: f64,
        condition: String,
    },
}

impl RegionVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, RegionVerdict::CltHolds)
    }
}

/// Rate exponent `η_s(r) = (2−s)(1+r)(2−r)/(4+2s(1−r))`.
pub fn eta_s(s: f64, r: f64) -> f64 {
    (2.0 - s) * (1.0 + r) * (2.0 - r) / (4.0 + 2.0 * s * (1.0 - r))
}

/// Lower end `(1−√(3s²−8s+5))/(2−s)` of the power-variation CLT region.
pub fn r_lower_bound(s: f64) -> f64 {
    (1.0 - (3.0 * s * s - 8.0 * s + 5.0).max(0.0).sqrt()) / (2.0 - s)
}

/// `(4ϖ−1)/(2ϖ)`, the largest activity index for the truncated-variance CLT.
pub fn truncation_s_bound(varpi: f64) -> f64 {
    (4.0 * varpi - 1.0) / (2.0 * varpi)
}

pub const T6_CONDITION: &str = "r ≤ (1−√(3s²−8s+5))/(2−s)";
pub const T6P_CONDITION: &str = "s ≤ (4ϖ−1)/(2ϖ)";

/// CLT region for T5 (`param` unused), T6 (`param = r`) and T6' (`param = ϖ`).
pub fn clt_region_check(theorem: Theorem, s: f64, param: f64) -> Result<RegionVerdict> {
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "activity index s = {s} must lie in [0, 2]"
        )));
    }
    match theorem {
        Theorem::T5 => Ok(if s <= 1.0 {
            RegionVerdict::CltHolds
        } else {
            RegionVerdict::Degenerate {
                exponent: 1.0 - s / 2.0,
                condition: "s ≤ 1".to_string(),
            }
        }),
        Theorem::T6 => {
            let r = param;
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidArgument(format!("power r = {r} must lie in (0, 1]")));
            }
            let holds = (s <= 2.0 / 3.0 && r < 1.0) || (s > 2.0 / 3.0 && s < 1.0 && r > r_lower_bound(s) && r < 1.0);
            if holds {
                return Ok(RegionVerdict::CltHolds);
            }
            let condition = if r >= 1.0 {
                "r < 1".to_string()
            } else if s >= 1.0 {
                "s < 1".to_string()
            } else {
                T6_CONDITION.to_string()
            };
            Ok(RegionVerdict::Degenerate {
                exponent: eta_s(s, r),
                condition,
            })
        }
        Theorem::T6p => {
            let varpi = param;
            if !(varpi > 0.0 && varpi < 0.5) {
                return Err(Error::InvalidArgument(format!("ϖ = {varpi} must lie in (0, 1/2)")));
            }
            Ok(if s <= truncation_s_bound(varpi) {
                RegionVerdict::CltHolds
            } else {
                RegionVerdict::Degenerate {
                    exponent: (2.0 - s) * varpi,
                    condition: T6P_CONDITION.to_string(),
                }
            })
        }
        Theorem::T4 | Theorem::T7i | Theorem::T7ii => Ok(RegionVerdict::CltHolds),
        other => Err(Error::InvalidArgument(format!("{other} has no CLT region"))),
    }
}

fn refuse(functional: &Functional, why: impl fmt::Display) -> Error {
    Error::Inadmissible(format!("{functional}: {why}"))
}

fn region_refusal(functional: &Functional, s: f64, verdict: &RegionVerdict) -> Option<Error> {
    match verdict {
        RegionVerdict::CltHolds => None,
        RegionVerdict::Degenerate { exponent, condition } => Some(refuse(
            functional,
            format!("CLT requires {condition}, violated at s = {s}; only the rate o(Δn^{exponent:.6}) is available"),
        )),
    }
}

/// `ρ_σ(g)` as a function of `σ` on `[lo, hi]`, by Chebyshev interpolation.
pub struct SigmaTable {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl SigmaTable {
    const NODES: usize = 48;

    pub fn new(lo: f64, hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        if hi - lo <= 1e-14 * hi.abs().max(1e-300) {
            let v = f(hi)?;
            return Ok(SigmaTable {
                lo: hi,
                hi,
                nodes: vec![hi],
                values: vec![v],
            });
        }
        let n = Self::NODES;
        let nodes: Vec<f64> = (0..n)
            .map(|j| {
                let x = ((2 * j + 1) as f64 * PI / (2 * n) as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            })
            .collect();
        let values = nodes.iter().map(|&s| f(s)).collect::<Result<Vec<_>>>()?;
        Ok(SigmaTable { lo, hi, nodes, values })
    }

    pub fn eval(&self, sigma: f64) -> f64 {
        if self.nodes.len() == 1 {
            return self.values[0];
        }
        let s = sigma.clamp(self.lo, self.hi);
        // barycentric formula for Chebyshev points of the first kind
        let n = self.nodes.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let d = s - self.nodes[j];
            if d == 0.0 {
                return self.values[j];
            }
            let theta = (2 * j + 1) as f64 * PI / (2 * n) as f64;
            let w = if j % 2 == 0 { 1.0 } else { -1.0 } * theta.sin() / d;
            num += w * self.values[j];
            den += w;
        }
        num / den
    }
}

fn sigma_range(path: &PathBundle) -> (f64, f64) {
    let (lo, hi) = path
        .c
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    (lo.max(0.0).sqrt(), hi.max(0.0).sqrt())
}

/// `∫₀ᵗ F(σ_u) du` for a smooth `F` evaluated through a Chebyshev table.
fn integrate_sigma_fn(path: &PathBundle, t: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (lo, hi) = sigma_range(path);
    let table = SigmaTable::new(lo, hi, f)?;
    Ok(path.integrate_c(t, |c| table.eval(c.sqrt())))
}

/// One draw of the jump-CLT limit `Z(g)_T = Σ g(ΔX_p)(√κ_p U_p σ_{T_p−} + √(1−κ_p) U'_p σ_{T_p})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZLawSample {
    pub value: f64,
    pub terms: Vec<(f64, f64)>,
}

fn require_full_record(path: &PathBundle) -> Result<()> {
    if !path.is_exhaustive() {
        return Err(Error::MissingJumpRecord(
            "Z(g) needs every jump; the record stops at a simulation cutoff".to_string(),
        ));
    }
    if path
        .jumps
        .iter()
        .any(|j| !(j.c_left.is_finite() && j.c_right.is_finite() && j.c_left >= 0.0 && j.c_right >= 0.0))
    {
        return Err(Error::MissingJumpRecord("jump record lacks c_left/c_right".to_string()));
    }
    Ok(())
}

/// One draw of `Z(g)_t` given the path, using `rng` for `(κ_p, U_p, U'_p)`.
pub fn sample_z_law_with(g: impl Fn(f64) -> f64, path: &PathBundle, t: f64, rng: &mut impl Rng) -> Result<ZLawSample> {
    require_full_record(path)?;
    let mut value = 0.0;
    let mut terms = Vec::new();
    for j in path.jumps_until(t) {
        let kappa: f64 = rng.random();
        let u: f64 = rng.sample(StandardNormal);
        let u2: f64 = rng.sample(StandardNormal);
        let term = g(j.size) * (kappa.sqrt() * u * j.c_left.sqrt() + (1.0 - kappa).sqrt() * u2 * j.c_right.sqrt());
        value += term;
        terms.push((j.time, term));
    }
    Ok(ZLawSample { value, terms })
}

/// One draw of `Z(g)_t` with its own seeded stream.
pub fn sample_z_law(g: impl Fn(f64) -> f64, path: &PathBundle, t: f64, seed: u64) -> Result<ZLawSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_z_law_with(g, path, t, &mut rng)
}

/// `C(g)_t = Σ g(ΔX_p)² (c_{T_p−} + ½Δc_{T_p})`, the conditional variance of `Z(g)_t`.
pub fn z_law_variance(g: impl Fn(f64) -> f64, path: &PathBundle, t: f64) -> Result<f64> {
    z_law_covariance(&g, &g, path, t)
}

/// `Σ g(ΔX_p) h(ΔX_p) (c_{T_p−} + ½Δc_{T_p})`.
pub fn z_law_covariance(g: impl Fn(f64) -> f64, h: impl Fn(f64) -> f64, path: &PathBundle, t: f64) -> Result<f64> {
    require_full_record(path)?;
    Ok(path
        .jumps_until(t)
        .map(|j| g(j.size) * h(j.size) * 0.5 * (j.c_left + j.c_right))
        .sum())
}

/// Compensated jump sum `Σ f(ΔX) − λt·E[(fψ_η)(J)]` of a compound-Poisson model.
pub fn t2_limit_compound_poisson(
    f: &TestFunction,
    eta: Option<f64>,
    path: &PathBundle,
    model: &ModelSpec,
    delta_n: f64,
) -> Result<FunctionalSeries> {
    let rate_term = compensator_rate(f, eta, model)?;
    let mut s = functionals::jump_functional(f, path, delta_n);
    for (v, t) in s.values.iter_mut().zip(&s.times) {
        *v -= t * rate_term;
    }
    s.meta.kind = "Sigma(f,psi)".to_string();
    Ok(s)
}

/// `λ·E[(fψ_η)(J)]` for compound-Poisson jumps, 0 without jumps.
fn compensator_rate(f: &TestFunction, eta: Option<f64>, model: &ModelSpec) -> Result<f64> {
    match &model.jumps {
        JumpSpec::None => Ok(0.0),
        JumpSpec::CompoundPoisson { rate, sizes } => {
            let psi = CutoffPsi::new(eta.unwrap_or(f64::INFINITY))?;
            let mut kinks: Vec<f64> = f.kinks().iter().flat_map(|&k| [k, -k]).collect();
            if let Some(e) = eta {
                kinks.extend([e, -e, 2.0 * e, -2.0 * e]);
            }
            Ok(rate * jump_size_expectation(sizes, |x| f.eval(x) * psi.eval(x), &kinks)?)
        }
        JumpSpec::StableLike { .. } => Err(Error::NotLevy(
            "the compensated jump sum is only computed for finite-activity jumps".to_string(),
        )),
    }
}

/// The bounded function `fψ_η` as a catalog member, when it is one.
fn compensated_catalog(f: &TestFunction, eta: Option<f64>) -> Option<TestFunction> {
    match (f, eta) {
        (TestFunction::Power { r }, Some(e)) => Some(TestFunction::PowerCutoff { r: *r, eta: e }),
        (g, None) if g.is_bounded() => Some(*g),
        _ => None,
    }
}

/// Joint-CLT component class of a functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class")]
pub enum Component {
    /// `Δn V'^n(f)` with `f` even `C²_b`.
    J1 { f: TestFunction },
    /// `Δn^{1−r/2} V^n(f)`, `f ∈ E_r`.
    J2 { r: f64 },
    /// Truncated variance; `r = 2`.
    J3 { varpi: f64 },
    /// `V^n(f) − f⋆μ`.
    J4 { f: TestFunction },
    /// `V^n(f) − C − f⋆μ`, `f ∈ E_2 ∩ C¹`; `r = 2`.
    J5 { f: TestFunction },
}

impl Component {
    fn power(&self) -> Option<f64> {
        match *self {
            Component::J2 { r } => Some(r),
            Component::J3 { .. } | Component::J5 { .. } => Some(2.0),
            _ => None,
        }
    }
}

/// A functional checked for admissibility on a model, ready for evaluation along paths.
#[derive(Debug, Clone)]
pub struct PreparedFunctional {
    pub functional: Functional,
    pub model: ModelSpec,
    pub delta_n: f64,
    /// Activity index used for the region checks.
    pub activity: f64,
    /// Per-step compensator `H(fψ_η)` for T2/T4.
    pub compensator: Option<LevyExpectation>,
    /// `λ·E[(fψ_η)(J)]` for T2/T4.
    compensator_rate: f64,
    t1_case: Option<T1Case>,
}

impl PreparedFunctional {
    /// Check `(functional, model)` against the theorem's hypotheses.
    pub fn new(functional: Functional, model: &ModelSpec, delta_n: f64) -> Result<Self> {
        model.validate()?;
        if !(delta_n > 0.0) {
            return Err(Error::InvalidArgument(format!("Δn = {delta_n} must be > 0")));
        }
        let hp = hypothesis_profile(model)?;
        let s = activity_index(model)?;
        let continuous = hp.continuous;
        let th = functional.theorem;
        let target = functional.target;
        if let Some(f) = target.function() {
            f.validate()?;
        }
        if let Some(tr) = target.truncation() {
            tr.validate()?;
        }
        let mut prepared = PreparedFunctional {
            functional,
            model: model.clone(),
            delta_n,
            activity: s,
            compensator: None,
            compensator_rate: 0.0,
            t1_case: None,
        };
        let wrong_target = || refuse(&functional, "target kind does not match the theorem");

        match th {
            Theorem::T1a | Theorem::T1b | Theorem::T1c => {
                let Target::Function { f } = target else {
                    return Err(wrong_target());
                };
                let case = functionals::t1_case(&f, model)?;
                let expected = match case {
                    T1Case::B => Theorem::T1b,
                    T1Case::C => Theorem::T1c,
                    _ => Theorem::T1a,
                };
                if expected != th {
                    return Err(refuse(
                        &functional,
                        format!("(f, model) falls under {expected}, not {th}"),
                    ));
                }
                prepared.t1_case = Some(case);
            }
            Theorem::T2 | Theorem::T4 => {
                let Target::Compensated { f, eta } = target else {
                    return Err(wrong_target());
                };
                if !model.is_compound_poisson_levy() {
                    return Err(Error::NotLevy(format!(
                        "{functional}: the compensator H̄^n is computed only for Lévy models \
                         (constant drift and σ, compound-Poisson or no jumps)"
                    )));
                }
                let cls = class_membership(&f);
                if th == Theorem::T2 && !(cls.order > 1.0 && cls.order.min(2.0) > 1.0) {
                    return Err(refuse(&functional, "f must be O(|x|^r) at 0 for some r ∈ (1,2)"));
                }
                if th == Theorem::T4 && !cls.in_e_prime(1.0) {
                    return Err(refuse(&functional, "f must satisfy f(x) ~ |x| at 0"));
                }
                if !f.is_continuous() {
                    return Err(refuse(&functional, "f must be continuous"));
                }
                let Some(fpsi) = compensated_catalog(&f, eta) else {
                    return Err(Error::UnboundedFunction(format!(
                        "{functional}: needs a power with finite η, or a bounded f with η = ∞"
                    )));
                };
                prepared.compensator = Some(functionals::levy_increment_expectation(
                    model,
                    &fpsi,
                    delta_n,
                    COMPENSATOR_PRECISION,
                )?);
                prepared.compensator_rate = compensator_rate(&f, eta, model)?;
                if th == Theorem::T4 && hp.c_zero {
                    return Err(Error::DegenerateVariance(format!(
                        "{functional}: σ ≡ 0 gives a zero variance"
                    )));
                }
            }
            Theorem::T3i | Theorem::T5 => {
                let Target::Function { f } = target else {
                    return Err(wrong_target());
                };
                if !f.is_continuous() {
                    return Err(refuse(&functional, "g must be continuous"));
                }
                let cls = class_membership(&f);
                if !continuous && !f.is_bounded() && cls.order >= 2.0 {
                    return Err(refuse(&functional, "with jumps, g(x)/x² must vanish at infinity"));
                }
                if th == Theorem::T5 {
                    let smooth_enough = f.is_c2_bounded() || (continuous && f.is_c1());
                    if !smooth_enough {
                        return Err(refuse(
                            &functional,
                            "g must be even and C²_b (C¹ with g' ∈ E when X is continuous)",
                        ));
                    }
                    if !continuous {
                        let verdict = clt_region_check(Theorem::T5, s, 0.0)?;
                        if let Some(e) = region_refusal(&functional, s, &verdict) {
                            return Err(e);
                        }
                    }
                }
            }
            Theorem::T3ii | Theorem::T6 => {
                let Target::Function { f } = target else {
                    return Err(wrong_target());
                };
                let cls = class_membership(&f);
                let r = cls.order;
                if th == Theorem::T3ii && !(cls.in_e_prime(r) && r > 0.0 && r < 2.0) {
                    return Err(refuse(&functional, "f must satisfy f(x) ~ |x|^r at 0 with r ∈ (0,2)"));
                }
                if th == Theorem::T6 {
                    if !cls.in_e(r) {
                        return Err(refuse(&functional, "f must equal |x|^r near 0"));
                    }
                    if continuous {
                        if r <= 1.0 && !hp.h_prime {
                            return Err(refuse(&functional, "(H') fails: c vanishes"));
                        }
                    } else {
                        if !hp.h_prime {
                            return Err(refuse(&functional, "(H') fails: c vanishes"));
                        }
                        if r > 1.0 {
                            return Err(refuse(&functional, "with jumps the power must satisfy r ≤ 1"));
                        }
                        let verdict = clt_region_check(Theorem::T6, s, r)?;
                        if let Some(e) = region_refusal(&functional, s, &verdict) {
                            return Err(e);
                        }
                    }
                }
            }
            Theorem::T3iii | Theorem::T6p => {
                let Target::Truncation { varpi, .. } = target else {
                    return Err(wrong_target());
                };
                if th == Theorem::T6p {
                    let verdict = clt_region_check(Theorem::T6p, s, varpi)?;
                    if let Some(e) = region_refusal(&functional, s, &verdict) {
                        return Err(e);
                    }
                }
            }
            Theorem::T7i => {
                let Target::Function { f } = target else {
                    return Err(wrong_target());
                };
                let ok = match f.power_exponent() {
                    Some(r) => r > 3.0,
                    None => false,
                };
                if !ok {
                    return Err(refuse(
                        &functional,
                        "f must be C¹, C² near 0 with f(0) = f'(0) = 0 and f'' = o(|x|): a power with r > 3",
                    ));
                }
                if !hp.k {
                    return Err(refuse(&functional, "hypothesis (K) fails"));
                }
                require_exhaustive_model(&functional, model)?;
            }
            Theorem::T7ii => {
                let Target::Function { f } = target else {
                    return Err(wrong_target());
                };
                if !(class_membership(&f).in_e(2.0) && f.is_c1()) {
                    return Err(refuse(&functional, "f must lie in E_2 ∩ C¹"));
                }
                if !hp.satisfies_l(2.0) {
                    return Err(refuse(&functional, "hypothesis (L-2) fails"));
                }
                require_exhaustive_model(&functional, model)?;
            }
            Theorem::T8pair => {
                return Err(refuse(
                    &functional,
                    "pair covariances are checked through covariance_target",
                ));
            }
        }
        Ok(prepared)
    }

    pub fn theorem(&self) -> Theorem {
        self.functional.theorem
    }

    /// Joint-CLT class of the functional.
    pub fn component(&self) -> Result<Component> {
        let target = self.functional.target;
        Ok(match (self.theorem(), target) {
            (Theorem::T5, Target::Function { f }) => Component::J1 { f },
            (Theorem::T6, Target::Function { f }) => Component::J2 {
                r: class_membership(&f).order,
            },
            (Theorem::T6p, Target::Truncation { varpi, .. }) => Component::J3 { varpi },
            (Theorem::T7i, Target::Function { f }) => Component::J4 { f },
            (Theorem::T7ii, Target::Function { f }) => Component::J5 { f },
            _ => {
                return Err(refuse(
                    &self.functional,
                    "only T5, T6, T6', T7(i) and T7(ii) components enter the joint CLT",
                ))
            }
        })
    }

    /// The realized statistic along the observation grid.
    pub fn statistic(&self, increments: &[f64]) -> FunctionalSeries {
        let dn = self.delta_n;
        match (self.theorem(), self.functional.target) {
            (Theorem::T3i | Theorem::T5, Target::Function { f }) => {
                let mut s = functionals::v_prime_n(&f, increments, dn);
                for v in &mut s.values {
                    *v *= dn;
                }
                s
            }
            (Theorem::T3ii | Theorem::T6, Target::Function { f }) => {
                let r = class_membership(&f).order;
                let scale = lln_power_scale(dn, r);
                let mut s = functionals::v_n(&f, increments, dn);
                for v in &mut s.values {
                    *v *= scale;
                }
                s
            }
            (_, Target::Truncation { varpi, alpha }) => {
                functionals::v_trunc_n(&TruncationSpec { varpi, alpha }, increments, dn)
            }
            (Theorem::T2 | Theorem::T4, Target::Compensated { f, .. }) => {
                let h = self.compensator.map(|c| c.value).unwrap_or(0.0);
                let mut s = functionals::v_n(&f, increments, dn);
                for (i, v) in s.values.iter_mut().enumerate() {
                    *v -= i as f64 * h;
                }
                s
            }
            (_, Target::Function { f }) | (_, Target::Compensated { f, .. }) => functionals::v_n(&f, increments, dn),
        }
    }

    /// The limit process along the path, sampled at the observation times.
    pub fn limit(&self, path: &PathBundle) -> Result<FunctionalSeries> {
        let dn = self.delta_n;
        match (self.theorem(), self.functional.target) {
            (Theorem::T1a | Theorem::T1b | Theorem::T1c, Target::Function { f }) => {
                Ok(functionals::limit_target_t1(&f, &self.model, path, dn)?.1)
            }
            (Theorem::T2 | Theorem::T4, Target::Compensated { f, .. }) => {
                let mut s = functionals::jump_functional(&f, path, dn);
                for (v, t) in s.values.iter_mut().zip(&s.times) {
                    *v -= t * self.compensator_rate;
                }
                s.meta.kind = "Sigma(f,psi)".to_string();
                Ok(s)
            }
            (Theorem::T3i | Theorem::T5, Target::Function { f }) => {
                let (lo, hi) = sigma_range(path);
                let table = SigmaTable::new(lo, hi, |s| rho(&f, s))?;
                let mut s = functionals::path_integral(path, dn, |c| table.eval(c.sqrt()));
                s.meta.kind = "int rho(g)".to_string();
                Ok(s)
            }
            (Theorem::T3ii | Theorem::T6, Target::Function { f }) => {
                let r = class_membership(&f).order;
                let m = abs_moment(r)?;
                let mut s = functionals::path_integral(path, dn, |c| c.powf(0.5 * r));
                for v in &mut s.values {
                    *v *= m;
                }
                s.meta.kind = "m_r int c^{r/2}".to_string();
                Ok(s)
            }
            (Theorem::T3iii | Theorem::T6p, _) => Ok(functionals::integrated_variance(path, dn)),
            (Theorem::T7i, Target::Function { f }) => {
                require_full_record(path)?;
                Ok(functionals::jump_functional(&f, path, dn))
            }
            (Theorem::T7ii, Target::Function { f }) => {
                require_full_record(path)?;
                let mut s = functionals::jump_functional(&f, path, dn);
                let c = functionals::integrated_variance(path, dn);
                for (v, ci) in s.values.iter_mut().zip(&c.values) {
                    *v += ci;
                }
                Ok(s)
            }
            _ => Err(refuse(&self.functional, "no limit process")),
        }
    }

    /// Conditional asymptotic variance at time `t` of the CLT-normalised error.
    pub fn variance(&self, path: &PathBundle, t: f64) -> Result<f64> {
        let c_int = |q: f64| path.integrate_c(t, |c| c.powf(q));
        match (self.theorem(), self.functional.target) {
            (Theorem::T4, _) => Ok((1.0 - 2.0 / PI) * path.integrate_c(t, |c| c.sqrt())),
            (Theorem::T5, Target::Function { f }) => integrate_sigma_fn(path, t, |s| {
                let a = rho_product(&f, &f, s)?;
                let b = rho(&f, s)?;
                Ok((a - b * b).max(0.0))
            }),
            (Theorem::T6, Target::Function { f }) => {
                let r = class_membership(&f).order;
                let m = abs_moment(r)?;
                Ok((abs_moment(2.0 * r)? - m * m) * c_int(r))
            }
            (Theorem::T6p, _) => Ok(2.0 * c_int(2.0)),
            (Theorem::T7i, Target::Function { f }) => z_law_variance(|x| f.derivative(x).unwrap_or(f64::NAN), path, t),
            (Theorem::T7ii, Target::Function { f }) => {
                let z = z_law_variance(|x| f.derivative(x).unwrap_or(f64::NAN), path, t)?;
                Ok(z + 2.0 * c_int(2.0))
            }
            _ => Err(refuse(&self.functional, "the theorem has no CLT")),
        }
    }

    /// Limit series and (for CLTs) the variance at the horizon.
    pub fn target(&self, path: &PathBundle, t: f64) -> Result<TheoremTarget> {
        Ok(TheoremTarget {
            theorem: self.theorem(),
            limit_series: self.limit(path)?,
            variance_t: if self.theorem().has_clt() {
                Some(self.variance(path, t)?)
            } else {
                None
            },
        })
    }
}

fn require_exhaustive_model(functional: &Functional, model: &ModelSpec) -> Result<()> {
    if matches!(model.jumps, JumpSpec::StableLike { .. }) {
        return Err(Error::MissingJumpRecord(format!(
            "{functional}: the jump CLT needs every jump, but stable-like paths are recorded above a cutoff only"
        )));
    }
    Ok(())
}

/// LLN limit of a functional along a path.
pub fn lln_limit(
    functional: &Functional,
    model: &ModelSpec,
    path: &PathBundle,
    delta_n: f64,
) -> Result<FunctionalSeries> {
    PreparedFunctional::new(*functional, model, delta_n)?.limit(path)
}

/// Conditional asymptotic variance of a CLT functional at time `t`.
pub fn clt_variance(
    functional: &Functional,
    model: &ModelSpec,
    path: &PathBundle,
    t: f64,
    delta_n: f64,
) -> Result<f64> {
    PreparedFunctional::new(*functional, model, delta_n)?.variance(path, t)
}

/// Admissibility of a pair for the joint CLT: (H') with a J2 member,
/// `s < 1` with a J1 member, the J2 region, and `s < (4ϖ−1)/(2ϖ)` strictly for J3.
pub fn check_pair(a: &PreparedFunctional, b: &PreparedFunctional) -> Result<(Component, Component)> {
    let ca = a.component()?;
    let cb = b.component()?;
    let model = &a.model;
    let hp = hypothesis_profile(model)?;
    let s = a.activity;
    let label = format!("pair ({}, {})", a.functional, b.functional);
    if !hp.continuous {
        for c in [&ca, &cb] {
            match *c {
                Component::J1 { .. } if s >= 1.0 => {
                    return Err(Error::Inadmissible(format!("{label}: a T5 component requires s < 1")));
                }
                Component::J2 { r } => {
                    if !hp.h_prime {
                        return Err(Error::Inadmissible(format!("{label}: (H') fails")));
                    }
                    if !(s <= 2.0 / 3.0 || (s < 1.0 && r > r_lower_bound(s))) {
                        return Err(Error::Inadmissible(format!("{label}: requires not {T6_CONDITION}")));
                    }
                }
                Component::J3 { varpi } if s >= truncation_s_bound(varpi) => {
                    return Err(Error::Inadmissible(format!(
                        "{label}: requires s < (4ϖ−1)/(2ϖ) strictly for the truncated component"
                    )));
                }
                _ => {}
            }
        }
    }
    Ok((ca, cb))
}

/// `∫₀ᵗ (θθ*)^{jk} du`, plus the `Z` covariance when both components carry one.
pub fn covariance_target(ca: &Component, cb: &Component, path: &PathBundle, t: f64) -> Result<f64> {
    use Component::*;
    let z_part = |f: &TestFunction, g: &TestFunction| -> Result<f64> {
        z_law_covariance(
            |x| f.derivative(x).unwrap_or(f64::NAN),
            |x| g.derivative(x).unwrap_or(f64::NAN),
            path,
            t,
        )
    };
    let w_part = match (ca, cb) {
        (J1 { f }, J1 { f: g }) => {
            let (f, g) = (*f, *g);
            integrate_sigma_fn(path, t, |s| Ok(rho_product(&f, &g, s)? - rho(&f, s)? * rho(&g, s)?))?
        }
        (J1 { f }, other) | (other, J1 { f }) => match other.power() {
            Some(r) => {
                let h = TestFunction::Power { r };
                let f = *f;
                integrate_sigma_fn(path, t, |s| Ok(rho_product(&h, &f, s)? - rho(&h, s)? * rho(&f, s)?))?
            }
            None => 0.0,
        },
        (a, b) => match (a.power(), b.power()) {
            (Some(ra), Some(rb)) => {
                let coef = abs_moment(ra + rb)? - abs_moment(ra)? * abs_moment(rb)?;
                coef * path.integrate_c(t, |c| c.powf(0.5 * (ra + rb)))
            }
            _ => 0.0,
        },
    };
    let z = match (ca, cb) {
        (J4 { f } | J5 { f }, J4 { f: g } | J5 { f: g }) => z_part(f, g)?,
        _ => 0.0,
    };
    Ok(w_part + z)
}
