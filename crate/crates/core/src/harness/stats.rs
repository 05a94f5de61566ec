//! Summary statistics, rate regression and the Kolmogorov–Smirnov test.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::normal_cdf;

/// Compensated (Neumaier) sum in slice order.
pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            comp += (s - t) + x;
        } else {
            comp += (x - t) + s;
        }
        s = t;
    }
    s + comp
}

pub fn mean(xs: &[f64]) -> f64 {
    sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() as f64 - 1.0)
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample covariance, from the spread of centred products.
pub fn covariance_se(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    (variance(&prods) / prods.len() as f64).sqrt()
}

/// Standard error of the sample variance, from the spread of squared deviations.
pub fn variance_se(xs: &[f64]) -> f64 {
    covariance_se(xs, xs)
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` with fewer than three points.
    pub slope_se: Option<f64>,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::TooFewSamples { got: xs.len(), need: 2 });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("regression data must be finite".to_string()));
    }
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx = sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("regression abscissae are all equal".to_string()));
    }
    let sxy = sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if xs.len() > 2 {
        let ssr = sum(xs.iter().zip(ys).map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        }));
        Some((ssr / (n - 2.0) / sxx).sqrt())
    } else {
        None
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
    })
}

/// Asymptotic Kolmogorov tail `P(K > λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`, 100 terms.
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda <= 0.05 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// One-sample KS distance to `N(0,1)` and its asymptotic p-value.
pub fn ks_distance(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 8 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 8,
        });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("KS samples contain NaN".to_string()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal_cdf(x);
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    Ok((d, kolmogorov_pvalue(n.sqrt() * d)))
}

/// Standard normal quantile by bisection on the distribution function.
pub fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
