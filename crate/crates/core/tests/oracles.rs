//! Independent oracles for simulation, Gaussian moments and Lévy expectations.

use powvar::functionals::levy_increment_expectation;
use powvar::functions::{abs_moment, rho, TestFunction};
use powvar::model::{DriftSpec, JumpSizeLaw, JumpSpec, VolSpec};
use powvar::quadrature::{integrate, normal_pdf};
use powvar::simulate::{derive_seed, simulate_batch, simulate_path};
use powvar::{ModelSpec, SamplingSpec};

fn cp(rate: f64, sizes: JumpSizeLaw, sigma0: f64) -> ModelSpec {
    ModelSpec {
        vol: if sigma0 > 0.0 {
            VolSpec::Constant { sigma0 }
        } else {
            VolSpec::None
        },
        jumps: JumpSpec::CompoundPoisson { rate, sizes },
        ..Default::default()
    }
}

#[test]
fn poisson_jump_count_mean() {
    let model = cp(2.0, JumpSizeLaw::Fixed { value: 1.0 }, 0.0);
    let sampling = SamplingSpec::new(1.0, 1.0 / 64.0, 1).unwrap();
    let n = 10_000;
    let total: usize = (0..n)
        .map(|k| {
            simulate_path(&model, &sampling, derive_seed(123, k))
                .unwrap()
                .jumps
                .len()
        })
        .sum();
    let mean = total as f64 / n as f64;
    let se = (2.0 / n as f64).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * se, "mean jump count {mean}");
}

#[test]
fn gaussian_terminal_mean() {
    let model = ModelSpec {
        drift: DriftSpec::Constant { value: 0.7 },
        vol: VolSpec::Constant { sigma0: 0.2 },
        ..Default::default()
    };
    let sampling = SamplingSpec::new(1.0, 1.0 / 256.0, 4).unwrap();
    let xs: Vec<f64> = simulate_batch(&model, &sampling, 9, 100)
        .map(|p| *p.unwrap().x.last().unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean - 0.7).abs() < 3.0 * 0.2 / 10.0, "mean x(T) {mean}");
}

#[test]
fn pure_counting_path_ends_at_jump_count() {
    let model = cp(3.0, JumpSizeLaw::Fixed { value: 1.0 }, 0.0);
    let sampling = SamplingSpec::new(1.0, 1.0 / 128.0, 2).unwrap();
    for seed in 0..20 {
        let p = simulate_path(&model, &sampling, seed).unwrap();
        assert_eq!(*p.x.last().unwrap(), p.jumps.len() as f64);
    }
}

#[test]
fn absolute_moments_against_quadrature() {
    for i in 0..50 {
        let r = 0.1 * i as f64;
        let quad = 2.0
            * integrate(
                |x| x.powf(r) * normal_pdf(x),
                0.0,
                40.0,
                &[1.0, 2.0, 4.0, 8.0, 16.0],
                1e-15,
                1e-13,
            )
            .unwrap()
            .value;
        let m = abs_moment(r).unwrap();
        assert!((m - quad).abs() <= 1e-10 * m, "r={r}: {m} vs {quad}");
    }
    assert!((abs_moment(4.0).unwrap() - 3.0).abs() < 1e-13);
    assert!((abs_moment(1.0).unwrap() - 0.797_884_560_802_865_4).abs() < 1e-15);
}

#[test]
fn rho_of_powers_matches_closed_form() {
    for i in 1..=20 {
        let r = 0.25 * i as f64;
        for sigma in [0.05, 0.5, 1.0, 3.0] {
            let closed = abs_moment(r).unwrap() * f64::powf(sigma, r);
            // route through the generic quadrature path via a cutoff far in the tail
            let far = TestFunction::PowerCutoff { r, eta: 60.0 * sigma };
            let q = rho(&far, sigma).unwrap();
            assert!((q - closed).abs() <= 1e-9 * closed, "r={r} σ={sigma}: {q} vs {closed}");
        }
    }
    assert!((rho(&TestFunction::Power { r: 2.0 }, 1.3).unwrap() - 1.69).abs() < 1e-14);
    assert_eq!(rho(&TestFunction::RationalSquare, 0.0).unwrap(), 0.0);
}

#[test]
fn levy_expectation_gaussian_second_moment() {
    let bm = ModelSpec {
        vol: VolSpec::Constant { sigma0: 1.0 },
        ..Default::default()
    };
    let f = TestFunction::PowerCutoff { r: 2.0, eta: 1.0 };
    let h = levy_increment_expectation(&bm, &f, 0.01, 1e-12).unwrap();
    assert!((h.value - 0.01).abs() < 1e-6, "{h:?}");
}

#[test]
fn levy_expectation_two_term_poisson_expansion() {
    let law = JumpSizeLaw::Gaussian {
        mean: 0.0,
        variance: 0.01,
    };
    for lam in [0.5, 1.0, 2.0] {
        let dn = 0.01 / lam;
        let model = cp(lam, law, 0.0);
        let f = TestFunction::PowerCutoff { r: 2.0, eta: 10.0 };
        let h = levy_increment_expectation(&model, &f, dn, 1e-13).unwrap();
        let lead = lam * dn * law.second_moment();
        assert!(((h.value - lead) / lead).abs() < 3.0 * lam * dn, "{h:?}");
    }
}
