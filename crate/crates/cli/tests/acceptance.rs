//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always printed;
//! the process exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use powvar::functionals::{lln_power_scale, v_n, v_prime_n};
use powvar::functions::{abs_moment, rho, CutoffPsi};
use powvar::harness::{self, AcceptanceBands, ExperimentPlan, TheoremReport};
use powvar::limits::{
    clt_region_check, covariance_target, eta_s, sample_z_law, z_law_variance, Component, PreparedFunctional,
    RegionVerdict, T6P_CONDITION, T6_CONDITION,
};
use powvar::model::{JumpSizeLaw, JumpSpec, OuVol, VolSpec};
use powvar::quadrature::normal_expectation_even;
use powvar::simulate::{derive_seed, restrict_to_observations, simulate_path};
use powvar::{Error, Functional, ModelSpec, SamplingSpec, Target, TestFunction, Theorem};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn power(r: f64) -> TestFunction {
    TestFunction::Power { r }
}

fn func(theorem: Theorem, f: TestFunction) -> Functional {
    Functional {
        theorem,
        target: Target::Function { f },
    }
}

fn trunc(theorem: Theorem, varpi: f64, alpha: f64) -> Functional {
    Functional {
        theorem,
        target: Target::Truncation { varpi, alpha },
    }
}

fn bm(sigma0: f64) -> ModelSpec {
    ModelSpec {
        vol: VolSpec::Constant { sigma0 },
        ..Default::default()
    }
}

fn plan(model: ModelSpec, functionals: Vec<Functional>, ladder: Vec<f64>, m: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        model,
        functionals,
        delta_ladder: ladder,
        horizon: 1.0,
        refine: 8,
        replicates: m,
        base_seed: seed,
        t_eval: 1.0,
        bands: AcceptanceBands::default(),
        feasible: false,
    }
}

fn dyadic(k: i32) -> f64 {
    2f64.powi(-k)
}

fn within_runtime(start: Instant, limit_s: f64) -> (bool, String) {
    let s = start.elapsed().as_secs_f64();
    (s < limit_s, format!("runtime {s:.2}s (< {limit_s}s)"))
}

/// 1. Exact identities.
fn exact_identities() -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    let dn = dyadic(10);
    let sampling = SamplingSpec::new(1.0, dn, 1).unwrap();
    let path = simulate_path(&bm(0.7), &sampling, 99).unwrap();
    let inc = restrict_to_observations(&path, &sampling).unwrap();
    for r in [0.5, 1.0, 1.5] {
        let a: Vec<u64> = v_n(&power(r), &inc, dn)
            .values
            .iter()
            .map(|v| (lln_power_scale(dn, r) * v).to_bits())
            .collect();
        let b: Vec<u64> = v_prime_n(&power(r), &inc, dn)
            .values
            .iter()
            .map(|v| (dn * v).to_bits())
            .collect();
        if a != b {
            ok = false;
            notes.push(format!("scaling identity broken at r = {r}"));
        }
    }

    let psi = CutoffPsi::new(0.5).unwrap();
    let sandwich = (0..=4000).all(|i| {
        let x = -2.0 + i as f64 * 1e-3;
        let lo = if x.abs() <= 0.5 { 1.0 } else { 0.0 };
        let hi = if x.abs() <= 1.0 { 1.0 } else { 0.0 };
        let p = psi.eval(x);
        lo <= p && p <= hi
    });
    if !sandwich {
        ok = false;
        notes.push("ψ_η sandwich violated".to_string());
    }

    let mut worst_rho: f64 = 0.0;
    for r in [0.5, 1.0, 1.5, 2.0, 3.0] {
        for sigma in [0.3f64, 1.0, 2.5] {
            let closed = abs_moment(r).unwrap() * sigma.powf(r);
            let via_rho = rho(&power(r), sigma).unwrap();
            let quad = normal_expectation_even(|x| x.abs().powf(r), sigma, &[0.0], 1e-16, 1e-13)
                .unwrap()
                .value;
            worst_rho = worst_rho
                .max((via_rho - closed).abs() / closed)
                .max((quad - closed).abs() / closed);
        }
    }
    if worst_rho > 1e-9 {
        ok = false;
    }
    notes.push(format!("max rel |ρ_σ(h_r) − m_r σ^r| = {worst_rho:.2e}"));

    let gap = (abs_moment(2.0).unwrap() - abs_moment(1.0).unwrap().powi(2) - (1.0 - 2.0 / std::f64::consts::PI)).abs();
    if gap > 1e-12 {
        ok = false;
    }
    notes.push(format!("|m₂ − m₁² − (1 − 2/π)| = {gap:.1e}"));

    let (fast, rt) = within_runtime(start, 1.0);
    notes.push(rt);
    verdict(ok && fast, notes.join("; "))
}

/// 2. LLN for power variations on Brownian motion.
fn lln_power_variation() -> Verdict {
    let start = Instant::now();
    let p = plan(
        bm(0.5),
        [0.5, 1.0, 1.5].iter().map(|&r| func(Theorem::T3ii, power(r))).collect(),
        vec![dyadic(14)],
        200,
        202,
    );
    let reports = harness::run_lln(&p).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (rep, r) in reports.iter().zip([0.5, 1.0, 1.5]) {
        let rung = &rep.rungs[0];
        let target = abs_moment(r).unwrap() * 0.5f64.powf(r);
        let rel = (rung.mean_statistic - target).abs() / target;
        ok &= rel < 0.01;
        notes.push(format!("r={r}: rel {rel:.2e}"));
    }
    let (fast, rt) = within_runtime(start, 30.0);
    notes.push(rt);
    verdict(ok && fast, notes.join("; "))
}

/// 3. Separation of jumps and volatility.
fn jump_separation() -> Verdict {
    let start = Instant::now();
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.5 },
        jumps: JumpSpec::CompoundPoisson {
            rate: 2.0,
            sizes: JumpSizeLaw::Fixed { value: 1.0 },
        },
        ..Default::default()
    };
    let p = plan(
        model,
        vec![func(Theorem::T1a, power(3.0)), trunc(Theorem::T3iii, 0.49, 3.0)],
        vec![dyadic(14)],
        200,
        303,
    );
    let reports = harness::run_lln(&p).unwrap();
    let cubic = &reports[0].rungs[0];
    let tv = &reports[1].rungs[0];
    let tv_rel = (tv.mean_statistic - 0.25).abs() / 0.25;
    let ok = cubic.mean_abs_rel_error < 0.02 && tv_rel < 0.02;
    let (fast, rt) = within_runtime(start, 60.0);
    verdict(
        ok && fast,
        format!(
            "V(h₃) Σ|err|/Σ|target| = {:.2e}; mean V'' rel to σ²t = {tv_rel:.2e}; {rt}",
            cubic.mean_abs_rel_error
        ),
    )
}

/// 4. Convergence rate of the truncated variance under stochastic volatility.
fn rate_slope() -> Verdict {
    let start = Instant::now();
    let model = ModelSpec {
        vol: VolSpec::OuVol(OuVol {
            sigma0: 0.3,
            mean_reversion: 2.0,
            vol_of_vol: 0.5,
            leverage: 0.0,
        }),
        ..Default::default()
    };
    let p = plan(
        model,
        vec![trunc(Theorem::T6p, 0.49, 3.0)],
        (8..=14).map(dyadic).collect(),
        200,
        404,
    );
    let rep = &harness::run_lln(&p).unwrap()[0];
    let rate = rep.rate.as_ref().unwrap();
    let slope = rate.fit.map_or(f64::NAN, |f| f.slope);
    let ok = (-0.65..=-0.35).contains(&slope) && !rate.degenerate;
    let (fast, rt) = within_runtime(start, 180.0);
    verdict(ok && fast, format!("slope {slope:.4} in [−0.65, −0.35]; {rt}"))
}

fn clt_line(rep: &TheoremReport, var_band: [f64; 2], p_min: f64) -> (bool, String) {
    let c = rep.clt.as_ref().unwrap();
    let ok = c.variance >= var_band[0] && c.variance <= var_band[1] && c.ks_p_value > p_min;
    (
        ok,
        format!(
            "{}: var {:.4}, mean {:.4}, KS D {:.4} p {:.2e}",
            rep.functional.theorem, c.variance, c.mean, c.ks_distance, c.ks_p_value
        ),
    )
}

/// 5. Studentised CLTs for T5 and T6'.
fn clt_gaussian() -> Verdict {
    let p = plan(
        bm(1.0),
        vec![
            func(Theorem::T5, TestFunction::RationalSquare),
            trunc(Theorem::T6p, 0.49, 3.0),
        ],
        vec![dyadic(12)],
        1000,
        505,
    );
    let reports = harness::run_clt(&p).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for rep in &reports {
        let (pass, line) = clt_line(rep, [0.85, 1.15], 0.001);
        ok &= pass;
        notes.push(line);
    }

    // theoretical T6' variance 2σ⁴t on a sample path
    let dn = dyadic(12);
    let sampling = SamplingSpec::new(1.0, dn, 8).unwrap();
    let path = simulate_path(&bm(1.0), &sampling, 1).unwrap();
    let prepared = PreparedFunctional::new(trunc(Theorem::T6p, 0.49, 3.0), &bm(1.0), dn).unwrap();
    let v = prepared.variance(&path, 1.0).unwrap();
    let exact = (v - 2.0).abs() <= 4.0 * f64::EPSILON;
    ok &= exact;
    notes.push(format!("T6' variance {v:.17}"));
    verdict(ok, notes.join("; "))
}

/// 6. CLT region refusals.
fn region_refusal() -> Verdict {
    let stable = |beta: f64| ModelSpec {
        vol: VolSpec::Constant { sigma0: 1.0 },
        jumps: JumpSpec::StableLike {
            beta,
            scale: 0.2,
            policy: Default::default(),
        },
        ..Default::default()
    };
    let mut ok = true;
    let mut notes = Vec::new();

    let t6p = PreparedFunctional::new(trunc(Theorem::T6p, 0.3, 3.0), &stable(0.5), dyadic(10));
    match t6p {
        Err(Error::Inadmissible(m)) if m.contains(T6P_CONDITION) => notes.push("T6' refused".to_string()),
        other => {
            ok = false;
            notes.push(format!("T6' not refused as expected: {other:?}"));
        }
    }
    match clt_region_check(Theorem::T6p, 0.5, 0.3) {
        Ok(RegionVerdict::Degenerate { exponent, .. }) => {
            let good = (exponent - 1.5 * 0.3).abs() < 1e-9;
            ok &= good;
            notes.push(format!("T6' exponent {exponent:.12} vs (2−s)ϖ = 0.45"));
        }
        other => {
            ok = false;
            notes.push(format!("T6' region: {other:?}"));
        }
    }

    let t6 = PreparedFunctional::new(func(Theorem::T6, power(0.2)), &stable(0.9), dyadic(10));
    match t6 {
        Err(Error::Inadmissible(m)) if m.contains(T6_CONDITION) => notes.push("T6 refused".to_string()),
        other => {
            ok = false;
            notes.push(format!("T6 not refused as expected: {other:?}"));
        }
    }
    match clt_region_check(Theorem::T6, 0.9, 0.2) {
        Ok(RegionVerdict::Degenerate { exponent, .. }) => {
            let want = eta_s(0.9, 0.2);
            let closed = (2.0 - 0.9) * 1.2 * 1.8 / (4.0 + 2.0 * 0.9 * 0.8);
            let good = (exponent - want).abs() < 1e-9 && (want - closed).abs() < 1e-9;
            ok &= good;
            notes.push(format!("T6 exponent {exponent:.12} vs η_s(r) {closed:.12}"));
        }
        other => {
            ok = false;
            notes.push(format!("T6 region: {other:?}"));
        }
    }
    verdict(ok, notes.join("; "))
}

/// 7. Jump CLT for the realized quadratic variation and the law of `Z(g)`.
fn jump_clt() -> Verdict {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.5 },
        jumps: JumpSpec::CompoundPoisson {
            rate: 1.0,
            sizes: JumpSizeLaw::Gaussian {
                mean: 0.0,
                variance: 0.25,
            },
        },
        ..Default::default()
    };
    let p = plan(
        model.clone(),
        vec![func(Theorem::T7ii, power(2.0))],
        vec![dyadic(13)],
        1000,
        707,
    );
    let rep = &harness::run_clt(&p).unwrap()[0];
    let (mut ok, line) = clt_line(rep, [0.8, 1.2], 0.001);
    let mut notes = vec![line];

    // Z(2x) against C(2x)_T on ten fixed paths that carry jumps
    let sampling = SamplingSpec::new(1.0, dyadic(13), 8).unwrap();
    let g = |x: f64| 2.0 * x;
    let draws = 100_000;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut k = 0u64;
    while checked < 10 {
        let path = simulate_path(&model, &sampling, derive_seed(77, k)).unwrap();
        k += 1;
        if path.jumps.is_empty() {
            continue;
        }
        let target = z_law_variance(g, &path, 1.0).unwrap();
        let z: Vec<f64> = (0..draws)
            .map(|i| sample_z_law(g, &path, 1.0, derive_seed(k, i)).unwrap().value)
            .collect();
        let m2: Vec<f64> = z.iter().map(|v| v * v).collect();
        // E Z = 0 is known, so E Z² estimates the variance directly
        let est = harness::stats::mean(&m2);
        let se = (harness::stats::variance(&m2) / draws as f64).sqrt();
        let dev = (est - target).abs() / se;
        worst = worst.max(dev);
        ok &= dev <= 4.0;
        checked += 1;
    }
    notes.push(format!("Z-law worst |Ê Z² − C(g)|/SE = {worst:.2} over 10 paths"));
    verdict(ok, notes.join("; "))
}

/// 8. Pairwise covariance of the joint CLT.
fn pair_covariance() -> Verdict {
    let dn = dyadic(12);
    let mut p = plan(
        bm(0.5),
        vec![func(Theorem::T6, power(0.5)), trunc(Theorem::T6p, 0.49, 3.0)],
        vec![dn],
        1000,
        808,
    );
    p.bands.cov_max_se = Some(4.0);
    let rep = harness::run_covariance_pair(&p).unwrap();
    let c: f64 = 0.25;
    let m = |r: f64| abs_moment(r).unwrap();
    let closed = (m(2.5) - m(0.5) * m(2.0)) * c.powf(1.25);
    let target_ok = (rep.theoretical - closed).abs() <= 1e-12 * closed.abs();
    let within = (rep.empirical - rep.theoretical).abs() <= 4.0 * rep.standard_error;

    // diagonal consistency against the one-dimensional variances
    let sampling = SamplingSpec::new(1.0, dn, 8).unwrap();
    let path = simulate_path(&bm(0.5), &sampling, 3).unwrap();
    let a = PreparedFunctional::new(p.functionals[0], &bm(0.5), dn).unwrap();
    let ca: Component = a.component().unwrap();
    let diag = covariance_target(&ca, &ca, &path, 1.0).unwrap();
    let one_d = a.variance(&path, 1.0).unwrap();
    let gap = ((diag - one_d) / one_d).abs().max(rep.diagonal_consistency_gap);
    let ok = target_ok && within && gap <= 1e-12;
    verdict(
        ok,
        format!(
            "empirical {:.6} vs target {:.6} (closed form {closed:.6}), SE {:.6}; diagonal gap {gap:.1e}",
            rep.empirical, rep.theoretical, rep.standard_error
        ),
    )
}

fn bundled_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

fn run_cli(cmd: &str, config: &Path, out: &Path, jobs: usize) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_powvar"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--jobs", &jobs.to_string()])
        .output()
        .expect("run powvar")
        .status
        .code()
        .unwrap_or(-1)
}

/// 9. Report bytes do not depend on the worker count.
fn determinism() -> Verdict {
    let root = std::env::temp_dir().join(format!("powvar-acceptance-{}", std::process::id()));
    let mut ok = true;
    let mut compared = 0;
    let mut notes = Vec::new();
    for cfg in bundled_configs() {
        let text = std::fs::read_to_string(&cfg).unwrap();
        for cmd in ["lln", "clt", "cov"] {
            if !text.contains(&format!("[[{cmd}]]")) {
                continue;
            }
            let name = cfg.file_stem().unwrap().to_string_lossy().to_string();
            let a = root.join(format!("{name}-{cmd}-1"));
            let b = root.join(format!("{name}-{cmd}-8"));
            let ca = run_cli(cmd, &cfg, &a, 1);
            let cb = run_cli(cmd, &cfg, &b, 8);
            if ca != cb || !(0..=2).contains(&ca) {
                ok = false;
                notes.push(format!("{name} {cmd}: exit codes {ca} / {cb}"));
            }
            for entry in std::fs::read_dir(&a).unwrap() {
                let pa = entry.unwrap().path();
                if pa.extension().is_some_and(|x| x == "json") {
                    let pb = b.join(pa.file_name().unwrap());
                    let same = std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap_or_default();
                    if !same {
                        ok = false;
                        notes.push(format!("{} differs", pa.display()));
                    }
                    compared += 1;
                }
            }
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    ok &= compared > 0;
    notes.insert(0, format!("{compared} report(s) compared across --jobs 1 / 8"));
    verdict(ok, notes.join("; "))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 exact identities", exact_identities),
        ("2 LLN T3(ii) power variation", lln_power_variation),
        ("3 LLN jump separation", jump_separation),
        ("4 rate slope T6'", rate_slope),
        ("5 CLT T5/T6'", clt_gaussian),
        ("6 CLT region refusal", region_refusal),
        ("7 jump CLT T7(ii)", jump_clt),
        ("8 T8 pairwise covariance", pair_covariance),
        ("9 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {name} [{:.1}s]: {}",
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
