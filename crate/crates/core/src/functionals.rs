//! Realized functionals of observed increments and the pathwise LLN targets.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{class_membership, TestFunction};
use crate::model::{hypothesis_profile, JumpSizeLaw, JumpSpec, ModelSpec, TruncationSpec, VolSpec};
use crate::quadrature;
use crate::simulate::{JumpRecord, PathBundle};

/// What a [`FunctionalSeries`] measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesMeta {
    pub kind: String,
    pub label: String,
    pub delta_n: f64,
    /// Jumps below a simulation cutoff are missing from the sum.
    pub biased_below_cutoff: bool,
}

/// A process evaluated at the observation times `0, Δn, 2Δn, …`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: SeriesMeta,
}

impl FunctionalSeries {
    fn running(kind: &str, label: String, delta_n: f64, terms: impl Iterator<Item = f64>) -> Self {
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        let mut acc = 0.0;
        for (i, term) in terms.enumerate() {
            acc += term;
            times.push((i + 1) as f64 * delta_n);
            values.push(acc);
        }
        FunctionalSeries {
            times,
            values,
            meta: SeriesMeta {
                kind: kind.to_string(),
                label,
                delta_n,
                biased_below_cutoff: false,
            },
        }
    }

    /// Value at the last observation time `≤ t` (the discretized process).
    pub fn value_at(&self, t: f64) -> f64 {
        let tol = 1e-9 * self.meta.delta_n;
        let idx = self.times.partition_point(|&s| s <= t + tol);
        self.values[idx.saturating_sub(1)]
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("series always holds time 0")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `time,value`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "time,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// `Δn^{-r/2}`: scale turning `V^n(h_r)` into `V'^n(h_r)`.
pub fn power_scale(delta_n: f64, r: f64) -> f64 {
    delta_n.powf(-0.5 * r)
}

/// `Δn^{1−r/2}`, computed as `Δn·Δn^{−r/2}` so that it matches `Δn·V'^n(h_r)`
/// to the last bit whenever `Δn` is a power of two.
pub fn lln_power_scale(delta_n: f64, r: f64) -> f64 {
    delta_n * power_scale(delta_n, r)
}

/// `V^n(f)_t = Σ f(Δⁿᵢ X)`.
pub fn v_n(f: &TestFunction, increments: &[f64], delta_n: f64) -> FunctionalSeries {
    FunctionalSeries::running("V", f.to_string(), delta_n, increments.iter().map(|&d| f.eval(d)))
}

/// `V'^n(f)_t = Σ f(Δⁿᵢ X/√Δn)`. For `f = h_r` this is `Δn^{−r/2}·V^n(h_r)` exactly.
pub fn v_prime_n(f: &TestFunction, increments: &[f64], delta_n: f64) -> FunctionalSeries {
    if let TestFunction::Power { r } = *f {
        let scale = power_scale(delta_n, r);
        let mut s = v_n(f, increments, delta_n);
        for v in &mut s.values {
            *v *= scale;
        }
        s.meta.kind = "V'".to_string();
        return s;
    }
    let inv = 1.0 / delta_n.sqrt();
    FunctionalSeries::running(
        "V'",
        f.to_string(),
        delta_n,
        increments.iter().map(|&d| f.eval(d * inv)),
    )
}

/// `V''^n(ϖ,α)_t = Σ (Δⁿᵢ X)²·1{|Δⁿᵢ X| ≤ αΔn^ϖ}`.
pub fn v_trunc_n(trunc: &TruncationSpec, increments: &[f64], delta_n: f64) -> FunctionalSeries {
    let u = trunc.threshold(delta_n);
    FunctionalSeries::running(
        "V''",
        format!("varpi={},alpha={}", trunc.varpi, trunc.alpha),
        delta_n,
        increments.iter().map(|&d| if d.abs() <= u { d * d } else { 0.0 }),
    )
}

fn observation_count(path: &PathBundle, delta_n: f64) -> usize {
    crate::model::floor_ratio(path.horizon(), delta_n)
}

/// `f⋆μ_t = Σ_{s≤t} f(ΔX_s)` over the recorded jumps, sampled at `iΔn`.
pub fn jump_functional(f: &TestFunction, path: &PathBundle, delta_n: f64) -> FunctionalSeries {
    let n = observation_count(path, delta_n);
    let mut s = sampled_jump_sum(path, delta_n, n, |x| f.eval(x));
    s.meta.kind = "jumps".to_string();
    s.meta.label = f.to_string();
    s
}

fn sampled_jump_sum(path: &PathBundle, delta_n: f64, n: usize, g: impl Fn(f64) -> f64) -> FunctionalSeries {
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut next = 0;
    let tol = 1e-9 * delta_n;
    for i in 0..=n {
        let t = i as f64 * delta_n;
        while next < path.jumps.len() && path.jumps[next].time <= t + tol {
            acc += g(path.jumps[next].size);
            next += 1;
        }
        times.push(t);
        values.push(acc);
    }
    FunctionalSeries {
        times,
        values,
        meta: SeriesMeta {
            kind: String::new(),
            label: String::new(),
            delta_n,
            biased_below_cutoff: !matches!(path.record, JumpRecord::Exhaustive),
        },
    }
}

/// Running trapezoid integral `∫₀^{iΔn} g(c_u) du` on the fine grid, one pass.
pub fn path_integral(path: &PathBundle, delta_n: f64, g: impl Fn(f64) -> f64) -> FunctionalSeries {
    grid_integral(path, delta_n, |k| g(path.c[k]))
}

/// Running trapezoid integral of the grid values `v(k)`, sampled at `iΔn`.
fn grid_integral(path: &PathBundle, delta_n: f64, v: impl Fn(usize) -> f64) -> FunctionalSeries {
    let n = observation_count(path, delta_n);
    let tol = 1e-9 * delta_n;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut acc = 0.0;
    let mut prev = v(0);
    let mut k = 1;
    for i in 1..=n {
        let t = i as f64 * delta_n;
        while k < path.grid.len() && path.grid[k] <= t + tol {
            let cur = v(k);
            acc += 0.5 * (prev + cur) * (path.grid[k] - path.grid[k - 1]);
            prev = cur;
            k += 1;
        }
        values.push(acc);
    }
    FunctionalSeries {
        times: (0..=n).map(|i| i as f64 * delta_n).collect(),
        values,
        meta: SeriesMeta {
            kind: "integral".to_string(),
            label: String::new(),
            delta_n,
            biased_below_cutoff: false,
        },
    }
}

/// `∫₀ᵗ |b_s| ds` sampled at `iΔn`.
fn drift_variation(model: &ModelSpec, path: &PathBundle, delta_n: f64) -> FunctionalSeries {
    grid_integral(path, delta_n, |k| model.drift.value_at(path.grid[k]).abs())
}

/// Which law of large numbers supplies the target of `V^n(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum T1Case {
    /// `f = o(x²)` at 0: target `f⋆μ`.
    A1,
    /// `f = O(|x|^r)`, `r ∈ I ∩ (1,2)`, `C = 0`: target `f⋆μ`.
    A2,
    /// `f = o(|x|)`, `1 ∈ I`, `C = 0`: target `f⋆μ`.
    A3,
    /// `f = O(|x|^r)`, `r ∈ I ∩ (0,1]`, `C = 0` and no drift: target `f⋆μ`.
    A4,
    /// `f ~ x²`: target `f⋆μ + C`.
    B,
    /// `f ~ |x|`, `C = 0`, `1 ∈ I`: target `f⋆μ + ∫|b|`.
    C,
}

/// Whether the jump law charges a point where `f` is discontinuous.
fn charges_discontinuity(f: &TestFunction, model: &ModelSpec) -> bool {
    match (f, &model.jumps) {
        (
            TestFunction::SquareIndicator { u },
            JumpSpec::CompoundPoisson {
                sizes: JumpSizeLaw::Fixed { value },
                ..
            },
        ) => value.abs() == *u,
        _ => false,
    }
}

/// Select the T1 case for `(f, model)`, or explain why none applies.
pub fn t1_case(f: &TestFunction, model: &ModelSpec) -> Result<T1Case> {
    f.validate()?;
    let hp = hypothesis_profile(model)?;
    if charges_discontinuity(f, model) {
        return Err(Error::NoLlnTarget(format!(
            "{f} is discontinuous at a jump size charged by ν (f ∉ C^{{0,ν}})"
        )));
    }
    let cls = class_membership(f);
    let q = cls.order;
    let c_zero = hp.c_zero;
    if cls.in_e_triple_prime(2.0) {
        return Ok(T1Case::A1);
    }
    if cls.in_e_prime(2.0) {
        return Ok(T1Case::B);
    }
    if c_zero {
        // r ∈ I ∩ (1,2) with r ≤ q
        let lo = hp.index_set.min.max(1.0);
        let hi = q.min(2.0);
        let a2 = (lo < hi && hi > 1.0) || (hp.index_set.attained && hp.index_set.min > 1.0 && hp.index_set.min <= q);
        if a2 && q > 1.0 {
            return Ok(T1Case::A2);
        }
        if cls.in_e_triple_prime(1.0) && hp.in_index_set(1.0) {
            return Ok(T1Case::A3);
        }
        let a4 = hp.in_index_set(q.min(1.0)) && model.drift.is_zero();
        if a4 {
            return Ok(T1Case::A4);
        }
        if cls.in_e_prime(1.0) && hp.in_index_set(1.0) {
            return Ok(T1Case::C);
        }
    }
    Err(Error::NoLlnTarget(format!(
        "no law of large numbers covers {f} on this model ({}; f ~ {}|x|^{q} at 0)",
        hp, cls.coefficient
    )))
}

/// The T1 limit `V(f)` along a path.
pub fn limit_target_t1(
    f: &TestFunction,
    model: &ModelSpec,
    path: &PathBundle,
    delta_n: f64,
) -> Result<(T1Case, FunctionalSeries)> {
    let case = t1_case(f, model)?;
    if !path.is_exhaustive() && f.power_exponent().is_none() {
        return Err(Error::MissingJumpRecord(
            "jump targets on a truncated jump record need a power function".to_string(),
        ));
    }
    let mut s = jump_functional(f, path, delta_n);
    s.meta.kind = "V(f)".to_string();
    match case {
        T1Case::B => {
            let c = path_integral(path, delta_n, |c| c);
            for (v, ci) in s.values.iter_mut().zip(&c.values) {
                *v += ci;
            }
        }
        T1Case::C => {
            let b = drift_variation(model, path, delta_n);
            for (v, bi) in s.values.iter_mut().zip(&b.values) {
                *v += bi;
            }
        }
        _ => {}
    }
    Ok((case, s))
}

/// `C_t` sampled at the observation times.
pub fn integrated_variance(path: &PathBundle, delta_n: f64) -> FunctionalSeries {
    let mut s = path_integral(path, delta_n, |c| c);
    s.meta.kind = "C".to_string();
    s
}

/// `E f(X_Δn − X₀)` for a Lévy model, with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyExpectation {
    pub value: f64,
    /// Quadrature error plus the Poisson tail.
    pub error_bound: f64,
    /// `sup|f|·P(N ≥ 3)`, the part dropped by truncating the jump count.
    pub tail_bound: f64,
}

/// Density of `J₁ + J₂` for i.i.d. double-exponential jumps with equal side weights.
fn double_exp_pair_density(eta_up: f64, eta_down: f64, y: f64) -> f64 {
    let cross = eta_up * eta_down / (eta_up + eta_down);
    if y > 0.0 {
        0.25 * eta_up * eta_up * y * (-eta_up * y).exp() + 0.5 * cross * (-eta_up * y).exp()
    } else if y < 0.0 {
        0.25 * eta_down * eta_down * (-y) * (eta_down * y).exp() + 0.5 * cross * (eta_down * y).exp()
    } else {
        0.5 * cross
    }
}

fn double_exp_density(eta_up: f64, eta_down: f64, y: f64) -> f64 {
    if y >= 0.0 {
        0.5 * eta_up * (-eta_up * y).exp()
    } else {
        0.5 * eta_down * (eta_down * y).exp()
    }
}

/// `H(f) = E f(X_Δn − X₀)` by conditioning on 0, 1 or 2 jumps in the step.
pub fn levy_increment_expectation(
    model: &ModelSpec,
    f: &TestFunction,
    delta_n: f64,
    precision: f64,
) -> Result<LevyExpectation> {
    model.validate()?;
    f.validate()?;
    if !model.is_compound_poisson_levy() {
        return Err(Error::NotLevy(
            "the increment law is step-independent only for constant drift, constant σ and compound-Poisson jumps"
                .to_string(),
        ));
    }
    if !f.is_bounded() {
        return Err(Error::UnboundedFunction(format!("{f} is unbounded")));
    }
    if !(delta_n > 0.0 && precision > 0.0) {
        return Err(Error::InvalidArgument("Δn and precision must be > 0".to_string()));
    }
    let b = model.drift.value_at(0.0);
    let sd = match model.vol {
        VolSpec::Constant { sigma0 } => sigma0 * delta_n.sqrt(),
        _ => 0.0,
    };
    let mu = b * delta_n;
    let kinks: Vec<f64> = f.kinks().iter().flat_map(|&k| [k, -k]).collect();
    let tol = precision / 8.0;

    // E f(μ + y + sd·Z)
    let shifted =
        |y: f64| -> Result<f64> { Ok(quadrature::normal_expectation(|x| f.eval(x), mu + y, sd, &kinks, tol)?.value) };
    let gaussian = |mean: f64, var: f64| -> Result<quadrature::Integral> {
        quadrature::normal_expectation(|x| f.eval(x), mu + mean, (sd * sd + var).sqrt(), &kinks, tol)
    };

    let p0 = gaussian(0.0, 0.0)?;
    let (rate, law) = match model.jumps {
        JumpSpec::CompoundPoisson { rate, sizes } => (rate, Some(sizes)),
        _ => (0.0, None),
    };
    let Some(law) = law else {
        return Ok(LevyExpectation {
            value: p0.value,
            error_bound: p0.error,
            tail_bound: 0.0,
        });
    };

    let m = rate * delta_n;
    let w0 = (-m).exp();
    let w1 = m * w0;
    let w2 = 0.5 * m * m * w0;
    let tail = (1.0 - w0 - w1 - w2).max(0.0);
    let tail_bound = f.sup_abs() * tail;

    let (e1, e2) = match law {
        JumpSizeLaw::Fixed { value } => {
            let a = gaussian(value, 0.0)?;
            let b2 = gaussian(2.0 * value, 0.0)?;
            (a, b2)
        }
        JumpSizeLaw::Gaussian { mean, variance } => (gaussian(mean, variance)?, gaussian(2.0 * mean, 2.0 * variance)?),
        JumpSizeLaw::DoubleExponential { eta_up, eta_down } => {
            let cut = 45.0 / eta_up.min(eta_down);
            let inner = |y: f64| shifted(y).unwrap_or(f64::NAN);
            let e1 = quadrature::integrate(
                |y| inner(y) * double_exp_density(eta_up, eta_down, y),
                -cut,
                cut,
                &[0.0],
                tol,
                1e-10,
            )?;
            let e2 = quadrature::integrate(
                |y| inner(y) * double_exp_pair_density(eta_up, eta_down, y),
                -cut,
                cut,
                &[0.0],
                tol,
                1e-10,
            )?;
            if !(e1.value.is_finite() && e2.value.is_finite()) {
                return Err(Error::Quadrature("nested jump-size quadrature failed".to_string()));
            }
            (e1, e2)
        }
    };
    let value = w0 * p0.value + w1 * e1.value + w2 * e2.value;
    let quad_err = w0 * p0.error + w1 * e1.error + w2 * e2.error;
    Ok(LevyExpectation {
        value,
        error_bound: quad_err + tail_bound,
        tail_bound,
    })
}

/// `E g(J)` for one jump size drawn from `law`.
pub fn jump_size_expectation(law: &JumpSizeLaw, g: impl Fn(f64) -> f64, kinks: &[f64]) -> Result<f64> {
    match *law {
        JumpSizeLaw::Fixed { value } => Ok(g(value)),
        JumpSizeLaw::Gaussian { mean, variance } => {
            Ok(quadrature::normal_expectation(g, mean, variance.sqrt(), kinks, 1e-14)?.value)
        }
        JumpSizeLaw::DoubleExponential { eta_up, eta_down } => {
            let cut = 45.0 / eta_up.min(eta_down);
            let mut bp = kinks.to_vec();
            bp.push(0.0);
            Ok(quadrature::integrate(
                |y| g(y) * double_exp_density(eta_up, eta_down, y),
                -cut,
                cut,
                &bp,
                1e-14,
                1e-12,
            )?
            .value)
        }
    }
}
