//! Declarative model specifications and their hypothesis profile.
//!
//! A [`ModelSpec`] fixes the drift, the volatility dynamics and the jump
//! component of a one-dimensional Itô semimartingale. Everything here is a
//! plain value type; the simulator in [`crate::simulate`] interprets it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation grid: horizon `T`, step `delta_n`, and fine substeps per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub horizon: f64,
    pub delta_n: f64,
    pub refine: usize,
}

impl SamplingSpec {
    pub fn new(horizon: f64, delta_n: f64, refine: usize) -> Result<Self> {
        let s = SamplingSpec {
            horizon,
            delta_n,
            refine,
        };
        let problems = s.violations();
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(Error::InvalidSampling(problems.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            out.push("horizon T must be > 0".to_string());
        }
        if !(self.delta_n.is_finite() && self.delta_n > 0.0) {
            out.push("Δn must be > 0".to_string());
        } else if self.delta_n > self.horizon * (1.0 + 1e-12) {
            out.push("Δn must be ≤ T".to_string());
        }
        if self.refine == 0 {
            out.push("refine must be ≥ 1".to_string());
        }
        out
    }

    /// Number of complete observation steps, `[T/Δn]`.
    pub fn observations(&self) -> usize {
        floor_ratio(self.horizon, self.delta_n)
    }

    pub fn fine_step(&self) -> f64 {
        self.delta_n / self.refine as f64
    }

    /// Number of fine steps covering `[0, T]`; the last one may be shorter.
    pub fn fine_steps(&self) -> usize {
        let h = self.fine_step();
        let n = self.horizon / h;
        let rounded = n.round();
        if (n - rounded).abs() <= 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// `[a/b]` robust to representation error when `a/b` is an integer in exact arithmetic.
pub(crate) fn floor_ratio(a: f64, b: f64) -> usize {
    let q = a / b;
    let rounded = q.round();
    if (q - rounded).abs() <= 1e-9 * q.abs().max(1.0) {
        rounded.max(0.0) as usize
    } else {
        q.floor().max(0.0) as usize
    }
}

/// Drift `b_t` of the continuous finite-variation part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Constant {
        value: f64,
    },
    /// Piecewise-linear interpolation of `(t, b)` knots, held flat outside the knot range.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec::Constant { value: 0.0 }
    }
}

impl DriftSpec {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            DriftSpec::Constant { value } => *value,
            DriftSpec::PiecewiseLinear { knots } => {
                let first = knots[0];
                if t <= first[0] {
                    return first[1];
                }
                for w in knots.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if t <= b[0] {
                        let span = b[0] - a[0];
                        if span <= 0.0 {
                            return b[1];
                        }
                        return a[1] + (b[1] - a[1]) * (t - a[0]) / span;
                    }
                }
                knots[knots.len() - 1][1]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            DriftSpec::Constant { .. } => true,
            DriftSpec::PiecewiseLinear { knots } => knots.iter().all(|k| k[1] == knots[0][1]),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DriftSpec::Constant { value } => *value == 0.0,
            DriftSpec::PiecewiseLinear { knots } => knots.iter().all(|k| k[1] == 0.0),
        }
    }
}

/// Exponential-OU volatility: `σ_t = σ₀·exp(Y_t)`, `dY = −λ̃Y dt + σ̃(ρ̃ dW + √(1−ρ̃²) dW')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuVol {
    pub sigma0: f64,
    pub mean_reversion: f64,
    pub vol_of_vol: f64,
    #[serde(default)]
    pub leverage: f64,
}

/// Volatility dynamics of the continuous martingale part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolSpec {
    /// `σ ≡ 0`: no continuous martingale part, `C ≡ 0`.
    None,
    Constant {
        sigma0: f64,
    },
    OuVol(OuVol),
    /// Exponential-OU volatility whose log jumps by `cojump` at every jump of `X`.
    JumpVol {
        #[serde(flatten)]
        base: OuVol,
        cojump: f64,
    },
}

impl Default for VolSpec {
    fn default() -> Self {
        VolSpec::Constant { sigma0: 1.0 }
    }
}

impl VolSpec {
    pub fn sigma0(&self) -> f64 {
        match self {
            VolSpec::None => 0.0,
            VolSpec::Constant { sigma0 } => *sigma0,
            VolSpec::OuVol(ou) | VolSpec::JumpVol { base: ou, .. } => ou.sigma0,
        }
    }

    /// True when `c_t` cannot move: constant or identically zero volatility.
    pub fn is_constant(&self) -> bool {
        matches!(self, VolSpec::None | VolSpec::Constant { .. })
    }
}

/// Law of the jump sizes of a compound-Poisson component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum JumpSizeLaw {
    Fixed {
        value: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Symmetric-weight double exponential: `+Exp(η₊)` or `−Exp(η₋)` with probability 1/2 each.
    DoubleExponential {
        eta_up: f64,
        eta_down: f64,
    },
}

impl JumpSizeLaw {
    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpSizeLaw::Fixed { value } => value * value,
            JumpSizeLaw::Gaussian { mean, variance } => variance + mean * mean,
            JumpSizeLaw::DoubleExponential { eta_up, eta_down } => {
                1.0 / (eta_up * eta_up) + 1.0 / (eta_down * eta_down)
            }
        }
    }
}

/// Treatment of stable-like jumps below the simulation cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpPolicy {
    /// Drop them; the symmetric density makes this unbiased in mean.
    #[default]
    Discard,
    /// Replace them by a Gaussian with the matched variance.
    Gaussian,
}

/// Jump component of `X`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpSpec {
    #[default]
    None,
    CompoundPoisson {
        rate: f64,
        sizes: JumpSizeLaw,
    },
    /// Symmetric Lévy density `scale·β/|x|^{1+β}` on `0 < |x| ≤ 1`.
    StableLike {
        beta: f64,
        scale: f64,
        #[serde(default)]
        policy: SmallJumpPolicy,
    },
}

/// Full description of a simulable Itô semimartingale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub vol: VolSpec,
    #[serde(default)]
    pub jumps: JumpSpec,
    #[serde(default)]
    pub x0: f64,
}

/// Threshold parameters of the truncated realized variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub varpi: f64,
    pub alpha: f64,
}

impl TruncationSpec {
    pub fn new(varpi: f64, alpha: f64) -> Result<Self> {
        let t = TruncationSpec { varpi, alpha };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.varpi > 0.0 && self.varpi < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "truncation exponent ϖ = {} must lie in (0, 1/2)",
                self.varpi
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation level α = {} must be > 0",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Threshold `α·Δn^ϖ`.
    pub fn threshold(&self, delta_n: f64) -> f64 {
        self.alpha * delta_n.powf(self.varpi)
    }
}

/// Violated invariants of a model; empty when the model is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }
}

fn check_ou(ou: &OuVol, out: &mut Vec<String>) {
    if !(ou.sigma0.is_finite() && ou.sigma0 > 0.0) {
        out.push("σ₀ must be > 0".to_string());
    }
    if !(ou.mean_reversion.is_finite() && ou.mean_reversion >= 0.0) {
        out.push("mean reversion λ̃ must be finite and ≥ 0".to_string());
    }
    if !(ou.vol_of_vol.is_finite() && ou.vol_of_vol >= 0.0) {
        out.push("vol-of-vol σ̃ must be finite and ≥ 0".to_string());
    }
    if !(-1.0..=1.0).contains(&ou.leverage) {
        out.push("leverage ρ̃ ∈ [−1, 1] required".to_string());
    }
}

pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut v = Vec::new();

    if !spec.x0.is_finite() {
        v.push("x0 must be finite".to_string());
    }

    match &spec.drift {
        DriftSpec::Constant { value } => {
            if !value.is_finite() {
                v.push("constant drift must be finite".to_string());
            }
        }
        DriftSpec::PiecewiseLinear { knots } => {
            if knots.is_empty() {
                v.push("piecewise-linear drift needs at least one knot".to_string());
            }
            if knots.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
                v.push("drift knots must be finite (bounded drift)".to_string());
            }
            if knots.windows(2).any(|w| w[1][0] < w[0][0]) {
                v.push("drift knot times must be non-decreasing".to_string());
            }
        }
    }

    match &spec.vol {
        VolSpec::None => {}
        VolSpec::Constant { sigma0 } => {
            if !(sigma0.is_finite() && *sigma0 > 0.0) {
                v.push("σ₀ must be > 0".to_string());
            }
        }
        VolSpec::OuVol(ou) => check_ou(ou, &mut v),
        VolSpec::JumpVol { base, cojump } => {
            check_ou(base, &mut v);
            if !cojump.is_finite() {
                v.push("co-jump factor ζ must be finite".to_string());
            }
            if !matches!(spec.jumps, JumpSpec::CompoundPoisson { .. }) {
                v.push("jump_vol requires compound_poisson jumps".to_string());
            }
        }
    }

    match &spec.jumps {
        JumpSpec::None => {}
        JumpSpec::CompoundPoisson { rate, sizes } => {
            if !(rate.is_finite() && *rate > 0.0) {
                v.push("compound Poisson rate λ must be > 0".to_string());
            }
            match *sizes {
                JumpSizeLaw::Fixed { value } => {
                    if !value.is_finite() {
                        v.push("fixed jump size must be finite".to_string());
                    }
                }
                JumpSizeLaw::Gaussian { mean, variance } => {
                    if !mean.is_finite() || !(variance.is_finite() && variance >= 0.0) {
                        v.push("gaussian jump law needs finite mean and variance ≥ 0".to_string());
                    }
                }
                JumpSizeLaw::DoubleExponential { eta_up, eta_down } => {
                    if !(eta_up > 0.0 && eta_down > 0.0 && eta_up.is_finite() && eta_down.is_finite()) {
                        v.push("double-exponential rates η₊, η₋ must be > 0".to_string());
                    }
                }
            }
        }
        JumpSpec::StableLike { beta, scale, .. } => {
            if !(*beta > 0.0 && *beta < 2.0) {
                v.push("stable-like index β ∈ (0,2) required".to_string());
            }
            if !(scale.is_finite() && *scale > 0.0) {
                v.push("stable-like scale must be > 0".to_string());
            }
        }
    }

    ValidationReport { violations: v }
}

fn ensure_valid(spec: &ModelSpec) -> Result<()> {
    let report = validate_model(spec);
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(report.violations))
    }
}

/// Blumenthal–Getoor-type activity index of the jump component.
pub fn activity_index(spec: &ModelSpec) -> Result<f64> {
    ensure_valid(spec)?;
    Ok(match spec.jumps {
        JumpSpec::None | JumpSpec::CompoundPoisson { .. } => 0.0,
        JumpSpec::StableLike { beta, .. } => beta,
    })
}

/// Lower end of an interval of exponents `[min, 2]` or `(min, 2]` (or `[min, ∞)` for `I`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub min: f64,
    pub attained: bool,
}

impl LowerBound {
    pub fn admits(&self, s: f64) -> bool {
        if self.attained {
            s >= self.min
        } else {
            s > self.min
        }
    }
}

/// Hypotheses of the (H) ⇐ (K) ⇐ (L-s) ⇐ (L-s') chain satisfied by a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisProfile {
    pub h: bool,
    pub k: bool,
    /// (L-s) holds exactly for `s ∈ levy_s ∩ [0, 2]`.
    pub levy_s: LowerBound,
    /// (H'): `c_t` and `c_{t−}` never vanish.
    pub h_prime: bool,
    /// The index set `I = {r ≥ 0 : φ_r ⋆ ν_t < ∞}`.
    pub index_set: LowerBound,
    pub continuous: bool,
    /// `C ≡ 0` (no continuous martingale part).
    pub c_zero: bool,
}

impl HypothesisProfile {
    pub fn satisfies_l(&self, s: f64) -> bool {
        (0.0..=2.0).contains(&s) && self.levy_s.admits(s)
    }

    pub fn in_index_set(&self, r: f64) -> bool {
        r >= 0.0 && self.index_set.admits(r)
    }
}

impl fmt::Display for HypothesisProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.h {
            parts.push("H".to_string());
        }
        if self.k {
            parts.push("K".to_string());
        }
        let open = if self.levy_s.attained { '[' } else { '(' };
        parts.push(format!("L-s for s ∈ {open}{}, 2]", self.levy_s.min));
        if self.h_prime {
            parts.push("H'".to_string());
        }
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// φ_r of the hypothesis statements: `1 ∧ |x|^r`, or `1{x ≠ 0}` for `r = 0`.
#[cfg(test)]
pub(crate) fn phi(r: f64, x: f64) -> f64 {
    if r == 0.0 {
        if x != 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        x.abs().powf(r).min(1.0)
    }
}

/// Analytic hypothesis profile of a valid model.
///
/// For stable-like jumps written as `δ(x) = sign(x)·(scale/|x|)^{1/β} ∧ 1`,
/// `∫ φ_s∘δ(x) dx` behaves like `∫ |x|^{−s/β} dx` at infinity, which is finite
/// iff `s > β`; the boundary `s = β` fails logarithmically.
pub fn hypothesis_profile(spec: &ModelSpec) -> Result<HypothesisProfile> {
    ensure_valid(spec)?;
    let (levy_s, index_set, continuous) = match spec.jumps {
        JumpSpec::None => (
            LowerBound {
                min: 0.0,
                attained: true,
            },
            LowerBound {
                min: 0.0,
                attained: true,
            },
            true,
        ),
        JumpSpec::CompoundPoisson { .. } => (
            LowerBound {
                min: 0.0,
                attained: true,
            },
            LowerBound {
                min: 0.0,
                attained: true,
            },
            false,
        ),
        JumpSpec::StableLike { beta, .. } => (
            LowerBound {
                min: beta,
                attained: false,
            },
            LowerBound {
                min: beta,
                attained: false,
            },
            false,
        ),
    };
    let h_prime = matches!(
        spec.vol,
        VolSpec::Constant { .. } | VolSpec::OuVol(_) | VolSpec::JumpVol { .. }
    );
    Ok(HypothesisProfile {
        h: true,
        k: true,
        levy_s,
        h_prime,
        index_set,
        continuous,
        c_zero: matches!(spec.vol, VolSpec::None),
    })
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_valid(self)
    }

    /// Constant drift, constant (or zero) volatility, finite-activity jumps.
    pub fn is_compound_poisson_levy(&self) -> bool {
        matches!(self.drift, DriftSpec::Constant { .. })
            && matches!(self.vol, VolSpec::None | VolSpec::Constant { .. })
            && matches!(self.jumps, JumpSpec::None | JumpSpec::CompoundPoisson { .. })
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.jumps, JumpSpec::None)
    }

    pub fn label(&self) -> String {
        let vol = match &self.vol {
            VolSpec::None => "σ=0".to_string(),
            VolSpec::Constant { sigma0 } => format!("σ={sigma0}"),
            VolSpec::OuVol(ou) => format!("expOU(σ₀={})", ou.sigma0),
            VolSpec::JumpVol { base, cojump } => format!("expOU(σ₀={})+cojump({cojump})", base.sigma0),
        };
        let jumps = match &self.jumps {
            JumpSpec::None => "no jumps".to_string(),
            JumpSpec::CompoundPoisson { rate, .. } => format!("CP(λ={rate})"),
            JumpSpec::StableLike { beta, .. } => format!("stable-like(β={beta})"),
        };
        format!("{vol}, {jumps}")
    }
}
