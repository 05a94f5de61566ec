//! Fine-grid simulation of `(X, c)` with an exact jump record.
//!
//! The continuous part is stepped by Euler–Maruyama with `σ` frozen at the
//! left end of each fine step. Jumps are drawn up front (count, times, sizes)
//! and applied inside their fine step after the diffusion move.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{JumpSizeLaw, JumpSpec, ModelSpec, OuVol, SamplingSpec, SmallJumpPolicy, VolSpec};

/// Expected jumps per fine step above which isolation is considered lost.
pub const MAX_JUMPS_PER_FINE_STEP: f64 = 0.1;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One jump of `X`, with the spot variance just before and just after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub size: f64,
    pub c_left: f64,
    pub c_right: f64,
}

/// Completeness of the jump record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpRecord {
    /// Every jump of `X` is listed.
    Exhaustive,
    /// Only jumps with `|ΔX| > cutoff` are listed.
    AboveCutoff { cutoff: f64 },
}

/// A simulated trajectory on the fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: Vec<f64>,
    pub x: Vec<f64>,
    /// Spot variance `c_t = σ_t²` at the grid points.
    pub c: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub record: JumpRecord,
    pub seed: u64,
    pub sampling: SamplingSpec,
}

impl PathBundle {
    pub fn horizon(&self) -> f64 {
        self.sampling.horizon
    }

    /// `∫₀ᵗ g(c_u) du` by the trapezoid rule on the fine grid.
    pub fn integrate_c(&self, t: f64, g: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = g(self.c[0]);
        for k in 1..self.grid.len() {
            let (a, b) = (self.grid[k - 1], self.grid[k]);
            if a >= t {
                break;
            }
            let cur = g(self.c[k]);
            if b <= t {
                acc += 0.5 * (prev + cur) * (b - a);
            } else {
                let w = (t - a) / (b - a);
                let mid = prev + w * (cur - prev);
                acc += 0.5 * (prev + mid) * (t - a);
            }
            prev = cur;
        }
        acc
    }

    /// Recorded jumps with `time ≤ t`.
    pub fn jumps_until(&self, t: f64) -> impl Iterator<Item = &JumpEvent> {
        self.jumps.iter().take_while(move |j| j.time <= t)
    }

    pub fn is_exhaustive(&self) -> bool {
        matches!(self.record, JumpRecord::Exhaustive)
    }
}

/// The splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `k`: `mix64(base ⊕ k·γ)` with `γ` the 64-bit golden ratio.
pub fn derive_seed(base: u64, k: u64) -> u64 {
    mix64(base ^ k.wrapping_mul(GOLDEN_GAMMA))
}

/// Cutoff below which stable-like jumps are not simulated individually: `h^{1/β}`, capped at 1.
pub fn stable_cutoff(beta: f64, fine_step: f64) -> f64 {
    fine_step.powf(1.0 / beta).min(1.0)
}

/// Intensity of stable-like jumps with `ε < |x| ≤ 1`.
fn stable_rate_above(beta: f64, scale: f64, eps: f64) -> f64 {
    2.0 * scale * (eps.powf(-beta) - 1.0)
}

/// Variance per unit time of the stable-like jumps with `|x| ≤ ε`.
pub fn stable_small_jump_variance(beta: f64, scale: f64, eps: f64) -> f64 {
    2.0 * scale * beta * eps.powf(2.0 - beta) / (2.0 - beta)
}

fn sample_size(law: &JumpSizeLaw, rng: &mut ChaCha8Rng) -> f64 {
    match *law {
        JumpSizeLaw::Fixed { value } => value,
        JumpSizeLaw::Gaussian { mean, variance } => {
            let z: f64 = rng.sample(StandardNormal);
            mean + variance.sqrt() * z
        }
        JumpSizeLaw::DoubleExponential { eta_up, eta_down } => {
            if rng.random::<f64>() < 0.5 {
                Exp::new(eta_up).expect("η₊ > 0").sample(rng)
            } else {
                -Exp::new(eta_down).expect("η₋ > 0").sample(rng)
            }
        }
    }
}

fn sample_stable_size(beta: f64, eps: f64, rng: &mut ChaCha8Rng) -> f64 {
    // inverse CDF of the density ∝ |x|^{−1−β} on ε < |x| ≤ 1
    let u: f64 = rng.random();
    let a = eps.powf(-beta);
    let mag = (a - u * (a - 1.0)).powf(-1.0 / beta);
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive Poisson mean").sample(rng);
    draw as usize
}

type SizeSampler = Box<dyn Fn(&mut ChaCha8Rng) -> f64>;

/// Jump times (sorted, in `(0, T]`) and sizes above the simulation cutoff.
fn draw_jumps(spec: &ModelSpec, sampling: &SamplingSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let t_end = sampling.horizon;
    let (rate, size_fn): (f64, SizeSampler) = match spec.jumps {
        JumpSpec::None => return Vec::new(),
        JumpSpec::CompoundPoisson { rate, sizes } => (rate, Box::new(move |r| sample_size(&sizes, r))),
        JumpSpec::StableLike { beta, scale, .. } => {
            let eps = stable_cutoff(beta, sampling.fine_step());
            (
                stable_rate_above(beta, scale, eps),
                Box::new(move |r| sample_stable_size(beta, eps, r)),
            )
        }
    };
    let count = poisson_count(rate * t_end, rng);
    let mut times: Vec<f64> = (0..count).map(|_| t_end * (1.0 - rng.random::<f64>())).collect();
    times.sort_by(f64::total_cmp);
    times.into_iter().map(|t| (t, size_fn(rng))).collect()
}

fn check_isolation(spec: &ModelSpec, sampling: &SamplingSpec) -> Result<()> {
    if let JumpSpec::CompoundPoisson { rate, .. } = spec.jumps {
        let expected = rate * sampling.fine_step();
        if expected > MAX_JUMPS_PER_FINE_STEP {
            return Err(Error::GridTooCoarse { expected });
        }
    }
    Ok(())
}

struct VolState {
    sigma0: f64,
    ou: Option<OuVol>,
    cojump: f64,
    y: f64,
}

impl VolState {
    fn new(vol: &VolSpec) -> Self {
        let (ou, cojump) = match vol {
            VolSpec::OuVol(ou) => (Some(*ou), 0.0),
            VolSpec::JumpVol { base, cojump } => (Some(*base), *cojump),
            _ => (None, 0.0),
        };
        VolState {
            sigma0: vol.sigma0(),
            ou,
            cojump,
            y: 0.0,
        }
    }

    fn sigma(&self) -> f64 {
        if self.ou.is_some() {
            self.sigma0 * self.y.exp()
        } else {
            self.sigma0
        }
    }
}

/// Simulate one path. Deterministic in `(spec, sampling, seed)`.
pub fn simulate_path(spec: &ModelSpec, sampling: &SamplingSpec, seed: u64) -> Result<PathBundle> {
    spec.validate()?;
    let sampling = SamplingSpec::new(sampling.horizon, sampling.delta_n, sampling.refine)?;
    check_isolation(spec, &sampling)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = sampling.fine_step();
    let n = sampling.fine_steps();
    let t_end = sampling.horizon;

    let raw_jumps = draw_jumps(spec, &sampling, &mut rng);

    let (record, small_var) = match spec.jumps {
        JumpSpec::StableLike { beta, scale, policy } => {
            let eps = stable_cutoff(beta, h);
            let v = match policy {
                SmallJumpPolicy::Discard => 0.0,
                SmallJumpPolicy::Gaussian => stable_small_jump_variance(beta, scale, eps),
            };
            (JumpRecord::AboveCutoff { cutoff: eps }, v)
        }
        _ => (JumpRecord::Exhaustive, 0.0),
    };

    let mut grid = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut cs = Vec::with_capacity(n + 1);
    let mut jumps = Vec::with_capacity(raw_jumps.len());

    let mut vol = VolState::new(&spec.vol);
    let mut x = spec.x0;
    grid.push(0.0);
    xs.push(x);
    cs.push(vol.sigma().powi(2));

    let mut next_jump = 0;
    for k in 0..n {
        let t0 = k as f64 * h;
        let t1 = if k + 1 == n { t_end } else { (k + 1) as f64 * h };
        let dt = t1 - t0;
        let sd = dt.sqrt();

        let sigma = vol.sigma();
        let z1: f64 = rng.sample(StandardNormal);
        x += spec.drift.value_at(t0) * dt + sigma * sd * z1;
        if small_var > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x += (small_var * dt).sqrt() * z;
        }
        if let Some(ou) = vol.ou {
            let mut shock = ou.leverage * z1;
            if ou.leverage.abs() < 1.0 {
                let z2: f64 = rng.sample(StandardNormal);
                shock += (1.0 - ou.leverage * ou.leverage).sqrt() * z2;
            }
            vol.y += -ou.mean_reversion * vol.y * dt + ou.vol_of_vol * sd * shock;
        }

        while next_jump < raw_jumps.len() && (raw_jumps[next_jump].0 <= t1 || k + 1 == n) {
            let (time, size) = raw_jumps[next_jump];
            let c_left = vol.sigma().powi(2);
            x += size;
            vol.y += vol.cojump;
            let c_right = vol.sigma().powi(2);
            jumps.push(JumpEvent {
                time,
                size,
                c_left,
                c_right,
            });
            next_jump += 1;
        }

        grid.push(t1);
        xs.push(x);
        cs.push(vol.sigma().powi(2));
    }

    Ok(PathBundle {
        grid,
        x: xs,
        c: cs,
        jumps,
        record,
        seed,
        sampling,
    })
}

/// Lazily simulate replicates `0..m` with derived seeds.
pub fn simulate_batch<'a>(
    spec: &'a ModelSpec,
    sampling: &'a SamplingSpec,
    base_seed: u64,
    replicates: usize,
) -> impl Iterator<Item = Result<PathBundle>> + 'a {
    (0..replicates as u64).map(move |k| simulate_path(spec, sampling, derive_seed(base_seed, k)))
}

/// Simulate replicates `0..m` in parallel and map each path through `f`,
/// returning the results in replicate order. Paths are dropped as soon as
/// they are mapped.
pub fn map_batch<T, F>(
    spec: &ModelSpec,
    sampling: &SamplingSpec,
    base_seed: u64,
    replicates: usize,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PathBundle) -> Result<T> + Sync,
{
    (0..replicates as u64)
        .into_par_iter()
        .map(|k| {
            let path = simulate_path(spec, sampling, derive_seed(base_seed, k))?;
            f(&path)
        })
        .collect()
}

/// Observed increments `Δⁿᵢ X`, `i = 1…[T/Δn]`.
pub fn restrict_to_observations(path: &PathBundle, sampling: &SamplingSpec) -> Result<Vec<f64>> {
    if !(sampling.delta_n > 0.0) {
        return Err(Error::GridMismatch(format!("Δn = {} must be > 0", sampling.delta_n)));
    }
    let h = path.sampling.fine_step();
    let ratio = sampling.delta_n / h;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
        return Err(Error::GridMismatch(format!(
            "Δn = {} is not an integer multiple of the fine step {h}",
            sampling.delta_n
        )));
    }
    let stride = stride as usize;
    let horizon = sampling.horizon.min(path.horizon());
    let count = crate::model::floor_ratio(horizon, sampling.delta_n);
    let last = count * stride;
    if last >= path.x.len() {
        return Err(Error::GridMismatch(format!(
            "{count} observations of step {} exceed the simulated horizon",
            sampling.delta_n
        )));
    }
    Ok((1..=count)
        .map(|i| path.x[i * stride] - path.x[(i - 1) * stride])
        .collect())
}

/// Path dump with header `t,x,c`.
pub fn write_path_csv(path: &PathBundle, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,x,c")?;
    for k in 0..path.grid.len() {
        writeln!(w, "{},{},{}", path.grid[k], path.x[k], path.c[k])?;
    }
    Ok(())
}

/// Jump record dump with header `t,dx,c_left,c_right`.
pub fn write_jumps_csv(path: &PathBundle, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,dx,c_left,c_right")?;
    for j in &path.jumps {
        writeln!(w, "{},{},{},{}", j.time, j.size, j.c_left, j.c_right)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DriftSpec;

    fn sampling(t: f64, dn: f64, refine: usize) -> SamplingSpec {
        SamplingSpec::new(t, dn, refine).unwrap()
    }

    fn cp(rate: f64, sizes: JumpSizeLaw) -> JumpSpec {
        JumpSpec::CompoundPoisson { rate, sizes }
    }

    #[test]
    fn drift_only_is_a_line() {
        let spec = ModelSpec {
            drift: DriftSpec::Constant { value: 1.0 },
            vol: VolSpec::None,
            ..Default::default()
        };
        let p = simulate_path(&spec, &sampling(1.0, 0.125, 4), 7).unwrap();
        assert!(p.jumps.is_empty());
        for (t, x) in p.grid.iter().zip(&p.x) {
            assert!((t - x).abs() < 1e-14);
        }
        assert_eq!(p.grid[0], 0.0);
        assert_eq!(*p.grid.last().unwrap(), 1.0);
        assert!(p.grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pure_counting_path() {
        let spec = ModelSpec {
            vol: VolSpec::None,
            jumps: cp(3.0, JumpSizeLaw::Fixed { value: 1.0 }),
            ..Default::default()
        };
        for seed in 0..20 {
            let p = simulate_path(&spec, &sampling(1.0, 1.0 / 64.0, 8), seed).unwrap();
            assert_eq!(*p.x.last().unwrap(), p.jumps.len() as f64);
            assert!(p.jumps.iter().all(|j| j.time > 0.0 && j.time <= 1.0));
        }
    }

    #[test]
    fn jump_lands_in_its_fine_step() {
        let spec = ModelSpec {
            vol: VolSpec::Constant { sigma0: 0.3 },
            jumps: cp(5.0, JumpSizeLaw::Fixed { value: 10.0 }),
            ..Default::default()
        };
        let p = simulate_path(&spec, &sampling(1.0, 1.0 / 32.0, 8), 11).unwrap();
        for j in &p.jumps {
            let k = p.grid.iter().position(|&t| t >= j.time).unwrap();
            assert!(p.grid[k - 1] < j.time);
            assert!(p.x[k] - p.x[k - 1] > 8.0);
        }
    }

    #[test]
    fn grid_too_coarse_is_rejected() {
        let spec = ModelSpec {
            jumps: cp(100.0, JumpSizeLaw::Fixed { value: 1.0 }),
            ..Default::default()
        };
        let err = simulate_path(&spec, &sampling(1.0, 0.01, 1), 0).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse { .. }));
    }

    #[test]
    fn determinism_and_singleton_batch() {
        let spec = ModelSpec {
            vol: VolSpec::OuVol(OuVol {
                sigma0: 0.4,
                mean_reversion: 2.0,
                vol_of_vol: 0.5,
                leverage: -0.3,
            }),
            jumps: cp(
                2.0,
                JumpSizeLaw::Gaussian {
                    mean: 0.0,
                    variance: 0.25,
                },
            ),
            ..Default::default()
        };
        let s = sampling(1.0, 1.0 / 256.0, 4);
        let a = simulate_path(&spec, &s, 99).unwrap();
        let b = simulate_path(&spec, &s, 99).unwrap();
        assert_eq!(a, b);
        let batch: Vec<_> = simulate_batch(&spec, &s, 5, 1).collect::<Result<_>>().unwrap();
        assert_eq!(batch[0], simulate_path(&spec, &s, derive_seed(5, 0)).unwrap());
        let par = map_batch(&spec, &s, 5, 3, |p| Ok(p.clone())).unwrap();
        let seq: Vec<_> = simulate_batch(&spec, &s, 5, 3).collect::<Result<_>>().unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen: Vec<u64> = (0..10_000).map(|k| derive_seed(42, k)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn cojump_multiplies_sigma() {
        let zeta = 0.2;
        let spec = ModelSpec {
            vol: VolSpec::JumpVol {
                base: OuVol {
                    sigma0: 0.5,
                    mean_reversion: 1.0,
                    vol_of_vol: 0.3,
                    leverage: 0.0,
                },
                cojump: zeta,
            },
            jumps: cp(4.0, JumpSizeLaw::Fixed { value: 0.5 }),
            ..Default::default()
        };
        let p = simulate_path(&spec, &sampling(1.0, 1.0 / 64.0, 8), 3).unwrap();
        assert!(!p.jumps.is_empty());
        for j in &p.jumps {
            assert!((j.c_right / j.c_left - (2.0 * zeta).exp()).abs() < 1e-12);
        }
        assert!(p.c.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn stable_like_record_respects_cutoff() {
        let spec = ModelSpec {
            jumps: JumpSpec::StableLike {
                beta: 1.2,
                scale: 0.5,
                policy: SmallJumpPolicy::Discard,
            },
            ..Default::default()
        };
        let s = sampling(1.0, 1.0 / 64.0, 4);
        let p = simulate_path(&spec, &s, 1).unwrap();
        let JumpRecord::AboveCutoff { cutoff } = p.record else {
            panic!("expected a cutoff record")
        };
        assert!((cutoff - stable_cutoff(1.2, s.fine_step())).abs() < 1e-15);
        assert!(p.jumps.iter().all(|j| j.size.abs() > cutoff && j.size.abs() <= 1.0));
    }

    #[test]
    fn increments_examples() {
        let line = ModelSpec {
            drift: DriftSpec::Constant { value: 1.0 },
            vol: VolSpec::None,
            ..Default::default()
        };
        let s = sampling(1.0, 0.25, 2);
        let p = simulate_path(&line, &s, 0).unwrap();
        let inc = restrict_to_observations(&p, &s).unwrap();
        assert_eq!(inc.len(), 4);
        for d in inc {
            assert!((d - 0.25).abs() < 1e-15);
        }
        let bad = SamplingSpec::new(1.0, 0.3, 1).unwrap();
        assert!(matches!(
            restrict_to_observations(&p, &bad),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn increments_telescope() {
        let spec = ModelSpec {
            vol: VolSpec::Constant { sigma0: 1.0 },
            jumps: cp(2.0, JumpSizeLaw::Fixed { value: 1.0 }),
            ..Default::default()
        };
        let s = sampling(1.0, 1.0 / 128.0, 4);
        let p = simulate_path(&spec, &s, 17).unwrap();
        let inc = restrict_to_observations(&p, &s).unwrap();
        let mut acc = p.x[0];
        for d in &inc {
            acc += d;
        }
        assert!((acc - p.x[inc.len() * 4]).abs() < 1e-12);
    }

    #[test]
    fn csv_headers() {
        let spec = ModelSpec::default();
        let p = simulate_path(&spec, &sampling(1.0, 0.5, 1), 0).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,c\n"));
        assert_eq!(text.lines().count(), 4);
        let mut buf = Vec::new();
        write_jumps_csv(&p, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,dx,c_left,c_right\n");
    }

    #[test]
    fn integrate_c_constant() {
        let spec = ModelSpec {
            vol: VolSpec::Constant { sigma0: 0.5 },
            ..Default::default()
        };
        let p = simulate_path(&spec, &sampling(1.0, 0.125, 2), 0).unwrap();
        assert!((p.integrate_c(1.0, |c| c) - 0.25).abs() < 1e-14);
        assert!((p.integrate_c(0.3, |c| c) - 0.075).abs() < 1e-14);
    }
}
