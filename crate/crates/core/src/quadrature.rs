//! Numerical integration used by the Gaussian functionals.
//!
//! Two tools: Gauss–Hermite rules (for smooth integrands against a normal
//! law) and an adaptive Gauss–Kronrod 7/15 integrator with user breakpoints
//! (for kinks, cutoffs and integrable endpoint singularities).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Beyond this many standard deviations the normal density is below 1e-313.
pub const NORMAL_TAIL_CUT: f64 = 38.0;

/// Initial partition of the standardised axis, so that a first Kronrod
/// pass over a wide range cannot step over the bulk of the density.
const Z_PARTITION: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Nodes and weights for `∫ f(x) e^{−x²} dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots are bracketed by a sign scan of the orthonormal Hermite
    /// recurrence and polished by safeguarded Newton steps.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let xmax = (2.0 * nf + 1.0).sqrt() + 0.5;
        let step = PI / (8.0 * (2.0 * nf + 1.0).sqrt());
        let mut positive = Vec::with_capacity(n / 2);
        let mut a = 0.5 * step;
        let mut pa = hermite_pair(n, a).0;
        while a < xmax && positive.len() < n / 2 {
            let b = a + step;
            let pb = hermite_pair(n, b).0;
            if pa == 0.0 || pa.signum() != pb.signum() {
                positive.push(polish_root(n, a, b));
            }
            a = b;
            pa = pb;
        }
        assert_eq!(
            positive.len(),
            n / 2,
            "Gauss–Hermite root scan missed roots for n = {n}"
        );
        let mut nodes = Vec::with_capacity(n);
        nodes.extend(positive.iter().rev());
        if n % 2 == 1 {
            nodes.push(0.0);
        }
        nodes.extend(positive.iter().map(|x| -x));
        let weights = nodes
            .iter()
            .map(|&x| {
                let d = hermite_pair(n, x).1;
                2.0 / (d * d)
            })
            .collect();
        GaussHermite { nodes, weights }
    }

    /// `E f(σZ)` for `Z ~ N(0,1)`.
    pub fn normal_expectation(&self, f: impl Fn(f64) -> f64, sigma: f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sigma;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            if *w != 0.0 {
                acc += w * f(scale * x);
            }
        }
        acc / PI.sqrt()
    }
}

/// Orthonormal Hermite value `h̃_n(x)` and derivative `√(2n)·h̃_{n−1}(x)`.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

fn polish_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = hermite_pair(n, lo).0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p, d) = hermite_pair(n, x);
        if p == 0.0 {
            return x;
        }
        if p.signum() == flo.signum() {
            lo = x;
            flo = p;
        } else {
            hi = x;
        }
        let newton = x - p / d;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

const GH_ORDERS: [usize; 5] = [32, 64, 128, 256, 512];

fn gh_rule(idx: usize) -> &'static GaussHermite {
    static RULES: OnceLock<Vec<GaussHermite>> = OnceLock::new();
    &RULES.get_or_init(|| GH_ORDERS.iter().map(|&n| GaussHermite::new(n)).collect())[idx]
}

/// `E f(σZ)` by Gauss–Hermite, doubling the order from 32 until two successive
/// estimates agree to `rel_tol` (512 nodes at most). `None` if not converged.
pub fn gauss_hermite_adaptive(f: impl Fn(f64) -> f64, sigma: f64, rel_tol: f64) -> Option<f64> {
    let mut prev = gh_rule(0).normal_expectation(&f, sigma);
    for idx in 1..GH_ORDERS.len() {
        let cur = gh_rule(idx).normal_expectation(&f, sigma);
        if (cur - prev).abs() <= rel_tol * cur.abs() + 1e-300 {
            return Some(cur);
        }
        prev = cur;
    }
    None
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss–Kronrod on `[a, b]`, splitting first at every breakpoint in `(a, b)`.
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts);
    edges.push(hi);

    let mut heap = BinaryHeap::new();
    for w in edges.windows(2) {
        let (value, error) = gk15(&f, w[0], w[1]);
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    const MAX_PIECES: usize = 20_000;
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    let mut total: f64 = heap.iter().map(|p| p.value).sum();
    loop {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if heap.len() >= MAX_PIECES {
            return Err(Error::Quadrature(format!(
                "adaptive Gauss–Kronrod exhausted {MAX_PIECES} subintervals (error {err:.3e})"
            )));
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; accept it as is
            heap.push(worst);
            break;
        }
        total -= worst.value;
        err -= worst.error;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&f, a, b);
            total += value;
            err += error;
            heap.push(Piece { a, b, value, error });
        }
    }
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(Integral {
        value: sign * value,
        error,
    })
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `E f(mean + sd·Z)` by adaptive quadrature; `kinks` are x-locations where `f`
/// is not smooth.
pub fn normal_expectation(f: impl Fn(f64) -> f64, mean: f64, sd: f64, kinks: &[f64], abs_tol: f64) -> Result<Integral> {
    if sd == 0.0 {
        return Ok(Integral {
            value: f(mean),
            error: 0.0,
        });
    }
    let mut zb: Vec<f64> = kinks.iter().map(|k| (k - mean) / sd).collect();
    zb.extend(Z_PARTITION.iter().flat_map(|&z| [z, -z]));
    zb.push(0.0);
    integrate(
        |z| f(mean + sd * z) * normal_pdf(z),
        -NORMAL_TAIL_CUT,
        NORMAL_TAIL_CUT,
        &zb,
        abs_tol,
        1e-13,
    )
}

/// `E f(σZ)` for even `f`, integrating over the half line; `kinks` are the
/// non-negative non-smooth points of `f`.
pub fn normal_expectation_even(
    f: impl Fn(f64) -> f64,
    sigma: f64,
    kinks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    if sigma == 0.0 {
        return Ok(Integral {
            value: f(0.0),
            error: 0.0,
        });
    }
    let mut zb: Vec<f64> = kinks.iter().map(|k| k / sigma).collect();
    zb.extend(Z_PARTITION);
    let half = integrate(
        |z| f(sigma * z) * normal_pdf(z),
        0.0,
        NORMAL_TAIL_CUT,
        &zb,
        abs_tol / 2.0,
        rel_tol,
    )?;
    Ok(Integral {
        value: 2.0 * half.value,
        error: 2.0 * half.error,
    })
}
