//! Test functions, the smooth cutoff ψ_η, Gaussian absolute moments `m_r`
//! and Gaussian functionals `ρ_σ(g) = ∫ g dN(0, σ²)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quadrature::{self, normal_cdf, normal_pdf};

const RHO_REL_TOL: f64 = 1e-9;

/// `t ↦ e^{−1/t}` for `t > 0`, zero otherwise.
fn bump_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn bump_exp_deriv(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp() / (t * t)
    } else {
        0.0
    }
}

/// Smooth step `S(t) = e(t)/(e(t)+e(1−t))`: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = bump_exp(t);
        let b = bump_exp(1.0 - t);
        a / (a + b)
    }
}

fn smooth_step_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let a = bump_exp(t);
        let b = bump_exp(1.0 - t);
        (bump_exp_deriv(t) * b + a * bump_exp_deriv(1.0 - t)) / ((a + b) * (a + b))
    }
}

/// The C^∞ cutoff ψ_η: 1 on `[−η, η]`, 0 outside `(−2η, 2η)`; `η = ∞` gives ψ ≡ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffPsi {
    pub eta: f64,
}

impl CutoffPsi {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("cutoff scale η = {eta} must be > 0")));
        }
        Ok(CutoffPsi { eta })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.eta.is_infinite() {
            return 1.0;
        }
        1.0 - smooth_step(x.abs() / self.eta - 1.0)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if self.eta.is_infinite() {
            return 0.0;
        }
        -smooth_step_deriv(x.abs() / self.eta - 1.0) * x.signum() / self.eta
    }
}

/// Named members of the function classes used by the limit theorems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `h_r(x) = |x|^r`
    Power { r: f64 },
    /// `h_r·ψ_η`
    PowerCutoff { r: f64, eta: f64 },
    /// `(1 − cos x)/2`
    CosBump,
    /// `x²/(1 + x²)`
    RationalSquare,
    /// `x²·1{|x| ≤ u}`
    SquareIndicator { u: f64 },
}

impl TestFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TestFunction::Power { r } if !(r > 0.0 && r.is_finite()) => {
                Err(Error::InvalidArgument(format!("power exponent r = {r} must be > 0")))
            }
            TestFunction::PowerCutoff { r, eta } => {
                if !(r > 0.0 && r.is_finite()) {
                    Err(Error::InvalidArgument(format!("power exponent r = {r} must be > 0")))
                } else if !(eta > 0.0 && eta.is_finite()) {
                    Err(Error::InvalidArgument(format!(
                        "cutoff η = {eta} must be finite and > 0"
                    )))
                } else {
                    Ok(())
                }
            }
            TestFunction::SquareIndicator { u } if !(u > 0.0 && u.is_finite()) => Err(Error::InvalidArgument(format!(
                "indicator threshold u = {u} must be > 0"
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Power { r } => x.abs().powf(r),
            TestFunction::PowerCutoff { r, eta } => {
                let psi = CutoffPsi { eta }.eval(x);
                if psi == 0.0 {
                    0.0
                } else {
                    x.abs().powf(r) * psi
                }
            }
            TestFunction::CosBump => 0.5 * (1.0 - x.cos()),
            TestFunction::RationalSquare => {
                let x2 = x * x;
                x2 / (1.0 + x2)
            }
            TestFunction::SquareIndicator { u } => {
                if x.abs() <= u {
                    x * x
                } else {
                    0.0
                }
            }
        }
    }

    /// `f'(x)` where `f` is C¹; `None` otherwise.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        if !self.is_c1() {
            return None;
        }
        Some(match *self {
            TestFunction::Power { r } => r * x.signum() * x.abs().powf(r - 1.0),
            TestFunction::PowerCutoff { r, eta } => {
                let psi = CutoffPsi { eta };
                r * x.signum() * x.abs().powf(r - 1.0) * psi.eval(x) + x.abs().powf(r) * psi.derivative(x)
            }
            TestFunction::CosBump => 0.5 * x.sin(),
            TestFunction::RationalSquare => {
                let d = 1.0 + x * x;
                2.0 * x / (d * d)
            }
            TestFunction::SquareIndicator { .. } => unreachable!(),
        })
    }

    /// Exponent `r` of a power-type function, if any.
    pub fn power_exponent(&self) -> Option<f64> {
        match *self {
            TestFunction::Power { r } | TestFunction::PowerCutoff { r, .. } => Some(r),
            _ => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, TestFunction::Power { .. })
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, TestFunction::SquareIndicator { .. })
    }

    pub fn is_c1(&self) -> bool {
        match *self {
            TestFunction::Power { r } | TestFunction::PowerCutoff { r, .. } => r > 1.0,
            TestFunction::CosBump | TestFunction::RationalSquare => true,
            TestFunction::SquareIndicator { .. } => false,
        }
    }

    /// Twice continuously differentiable on a neighbourhood of 0.
    pub fn is_c2_near_zero(&self) -> bool {
        match *self {
            TestFunction::Power { r } | TestFunction::PowerCutoff { r, .. } => r >= 2.0,
            TestFunction::CosBump | TestFunction::RationalSquare => true,
            TestFunction::SquareIndicator { .. } => true,
        }
    }

    /// Even, C², with bounded value and first two derivatives.
    pub fn is_c2_bounded(&self) -> bool {
        match *self {
            TestFunction::PowerCutoff { r, .. } => r >= 2.0,
            TestFunction::CosBump | TestFunction::RationalSquare => true,
            _ => false,
        }
    }

    /// Smooth enough for Gauss–Hermite to converge geometrically.
    fn is_smooth(&self) -> bool {
        match *self {
            TestFunction::Power { r } | TestFunction::PowerCutoff { r, .. } => is_even_integer(r),
            TestFunction::CosBump | TestFunction::RationalSquare => true,
            TestFunction::SquareIndicator { .. } => false,
        }
    }

    /// Non-negative locations where the function is not analytic.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            TestFunction::Power { r } => {
                if is_even_integer(r) {
                    vec![]
                } else {
                    vec![0.0]
                }
            }
            TestFunction::PowerCutoff { r, eta } => {
                let mut k = vec![eta, 2.0 * eta];
                if !is_even_integer(r) {
                    k.insert(0, 0.0);
                }
                k
            }
            TestFunction::CosBump | TestFunction::RationalSquare => vec![],
            TestFunction::SquareIndicator { u } => vec![u],
        }
    }

    /// `sup |f|`, infinite for unbounded functions.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            TestFunction::Power { .. } => f64::INFINITY,
            TestFunction::PowerCutoff { r, eta } => (2.0 * eta).powf(r),
            TestFunction::CosBump | TestFunction::RationalSquare => 1.0,
            TestFunction::SquareIndicator { u } => u * u,
        }
    }
}

fn is_even_integer(r: f64) -> bool {
    r.fract() == 0.0 && (r as i64) % 2 == 0
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TestFunction::Power { r } => write!(f, "power:r={}", fmt_num(r)),
            TestFunction::PowerCutoff { r, eta } => {
                write!(f, "power_cutoff:r={},eta={}", fmt_num(r), fmt_num(eta))
            }
            TestFunction::CosBump => write!(f, "cos_bump"),
            TestFunction::RationalSquare => write!(f, "rational_square"),
            TestFunction::SquareIndicator { u } => write!(f, "square_indicator:u={}", fmt_num(u)),
        }
    }
}

fn parse_params(s: &str) -> Result<Vec<(String, f64)>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{kv}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("'{}' is not a number", v.trim())))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn take(params: &[(String, f64)], key: &str, spec: &str) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("'{spec}': missing parameter {key}")))
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Parses `kind[:k=v,...]`, e.g. `power:r=1.5` or `power_cutoff:r=1,eta=0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(rest)?;
        let allowed: &[&str] = match kind {
            "power" => &["r"],
            "power_cutoff" => &["r", "eta"],
            "square_indicator" => &["u"],
            "cos_bump" | "rational_square" => &[],
            other => return Err(Error::Parse(format!("unknown test function '{other}'"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Parse(format!("'{s}': unexpected parameter {k}")));
        }
        let f = match kind {
            "power" => TestFunction::Power {
                r: take(&params, "r", s)?,
            },
            "power_cutoff" => TestFunction::PowerCutoff {
                r: take(&params, "r", s)?,
                eta: take(&params, "eta", s)?,
            },
            "square_indicator" => TestFunction::SquareIndicator {
                u: take(&params, "u", s)?,
            },
            "cos_bump" => TestFunction::CosBump,
            _ => TestFunction::RationalSquare,
        };
        f.validate()?;
        Ok(f)
    }
}

impl Serialize for TestFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TestFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `m_r = E|U|^r = 2^{r/2} Γ((r+1)/2) / √π` for a standard normal `U`.
pub fn abs_moment(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("moment order r = {r} must be ≥ 0")));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let log_m = 0.5 * r * std::f64::consts::LN_2 + libm::lgamma(0.5 * (r + 1.0)) - 0.5 * std::f64::consts::PI.ln();
    if r <= 100.0 {
        Ok(2f64.powf(0.5 * r) * libm::tgamma(0.5 * (r + 1.0)) / std::f64::consts::PI.sqrt())
    } else {
        Ok(log_m.exp())
    }
}

/// `ρ_σ(g) = E g(σU)`.
pub fn rho(g: &TestFunction, sigma: f64) -> Result<f64> {
    g.validate()?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("σ = {sigma} must be ≥ 0")));
    }
    if sigma == 0.0 {
        return Ok(g.eval(0.0));
    }
    match *g {
        TestFunction::Power { r } => Ok(abs_moment(r)? * sigma.powf(r)),
        TestFunction::SquareIndicator { u } => {
            let a = u / sigma;
            Ok(sigma * sigma * ((2.0 * normal_cdf(a) - 1.0) - 2.0 * a * normal_pdf(a)))
        }
        _ => gaussian_expectation(|x| g.eval(x), sigma, g.is_smooth(), &g.kinks()),
    }
}

/// `ρ_σ(f·g)`, the Gaussian mixed moment entering the joint covariances.
pub fn rho_product(f: &TestFunction, g: &TestFunction, sigma: f64) -> Result<f64> {
    f.validate()?;
    g.validate()?;
    if sigma == 0.0 {
        return Ok(f.eval(0.0) * g.eval(0.0));
    }
    if let (TestFunction::Power { r: a }, TestFunction::Power { r: b }) = (f, g) {
        return Ok(abs_moment(a + b)? * sigma.powf(a + b));
    }
    let mut kinks = f.kinks();
    kinks.extend(g.kinks());
    gaussian_expectation(|x| f.eval(x) * g.eval(x), sigma, f.is_smooth() && g.is_smooth(), &kinks)
}

/// `ρ_σ(h_r·g)` with a bare power `h_r` (possibly not a catalog member on its own).
pub fn rho_power_product(r: f64, g: &TestFunction, sigma: f64) -> Result<f64> {
    rho_product(&TestFunction::Power { r }, g, sigma)
}

/// `E g(σU)` for an even `g`. Smooth integrands go through doubling
/// Gauss–Hermite; anything else, or a Hermite run that fails to settle, falls
/// back to adaptive Gauss–Kronrod on the half line.
pub(crate) fn gaussian_expectation(g: impl Fn(f64) -> f64, sigma: f64, smooth: bool, kinks: &[f64]) -> Result<f64> {
    if smooth {
        if let Some(v) = quadrature::gauss_hermite_adaptive(&g, sigma, RHO_REL_TOL * 1e-2) {
            return Ok(v);
        }
    }
    let v = quadrature::normal_expectation_even(&g, sigma, kinks, 1e-300, RHO_REL_TOL * 1e-3)?;
    Ok(v.value)
}

/// Function classes a test function belongs to.
///
/// With `f ~ a|x|^q` at the origin: `E_q` needs `f = |x|^q` near 0, `E'_q`
/// needs `a = 1`, `E''_p` holds for `p ≤ q` and `E'''_p` for `p < q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassProfile {
    /// `r` such that `f = |x|^r` on a neighbourhood of 0.
    pub exact_power: Option<f64>,
    /// Leading order `q` and coefficient `a` of `f(x) ~ a|x|^q` as `x → 0`.
    pub order: f64,
    pub coefficient: f64,
    pub bounded: bool,
    pub continuous: bool,
    pub c1: bool,
    pub c2_bounded: bool,
    pub even: bool,
}

impl ClassProfile {
    pub fn in_e(&self, r: f64) -> bool {
        self.exact_power == Some(r)
    }
    pub fn in_e_prime(&self, r: f64) -> bool {
        self.order == r && self.coefficient == 1.0
    }
    pub fn in_e_double_prime(&self, r: f64) -> bool {
        r <= self.order
    }
    pub fn in_e_triple_prime(&self, r: f64) -> bool {
        r < self.order
    }

    /// Human-readable canonical memberships.
    pub fn labels(&self) -> Vec<String> {
        let b = if self.bounded { "^b" } else { "" };
        let q = self.order;
        let mut out = Vec::new();
        if let Some(r) = self.exact_power {
            out.push(format!("E_{r}{b}"));
        }
        if self.in_e_prime(q) {
            out.push(format!("E'_{q}{b}"));
        }
        out.push(format!("E''_p{b} for p ≤ {q}"));
        out.push(format!("E'''_p{b} for p < {q}"));
        if !self.continuous {
            out.push("discontinuous".to_string());
        }
        out
    }
}

pub fn class_membership(f: &TestFunction) -> ClassProfile {
    let (exact_power, order, coefficient) = match *f {
        TestFunction::Power { r } | TestFunction::PowerCutoff { r, .. } => (Some(r), r, 1.0),
        TestFunction::CosBump => (None, 2.0, 0.25),
        TestFunction::RationalSquare => (None, 2.0, 1.0),
        TestFunction::SquareIndicator { .. } => (Some(2.0), 2.0, 1.0),
    };
    ClassProfile {
        exact_power,
        order,
        coefficient,
        bounded: f.is_bounded(),
        continuous: f.is_continuous(),
        c1: f.is_c1(),
        c2_bounded: f.is_c2_bounded(),
        even: true,
    }
}
