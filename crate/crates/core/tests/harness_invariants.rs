//! Report-level invariants of the Monte Carlo harness.

use powvar::functions::{abs_moment, TestFunction};
use powvar::harness::{run_clt, run_covariance_pair, run_lln, AcceptanceBands, ExperimentPlan};
use powvar::model::{JumpSizeLaw, JumpSpec, VolSpec};
use powvar::{Functional, ModelSpec, Target, Theorem};
use proptest::prelude::*;

fn plan(model: ModelSpec, functionals: Vec<Functional>, ladder: Vec<f64>, m: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        model,
        functionals,
        delta_ladder: ladder,
        horizon: 1.0,
        refine: 2,
        replicates: m,
        base_seed: seed,
        t_eval: 1.0,
        bands: AcceptanceBands::default(),
        feasible: false,
    }
}

fn t3ii(r: f64) -> Functional {
    Functional {
        theorem: Theorem::T3ii,
        target: Target::Function {
            f: TestFunction::Power { r },
        },
    }
}

#[test]
fn constant_sigma_rmse_decreases_along_ladder() {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.5 },
        ..Default::default()
    };
    let ladder: Vec<f64> = (6..=14).map(|k| 2f64.powi(-k)).collect();
    let rep = &run_lln(&plan(model, vec![t3ii(1.0)], ladder, 100, 17)).unwrap()[0];
    for w in rep.rungs.windows(2) {
        assert!(w[1].rmse < w[0].rmse);
    }
    // RMSE² ≈ (m₂ − m₁²)σ²Δn for i.i.d. folded normals
    for r in &rep.rungs {
        let oracle = ((1.0 - 2.0 / std::f64::consts::PI) * 0.25 * r.delta_n).sqrt();
        assert!(
            (r.rmse / oracle - 1.0).abs() < 0.25,
            "Δn={}: {} vs {oracle}",
            r.delta_n,
            r.rmse
        );
    }
    let slope = rep.rate.as_ref().unwrap().fit.unwrap().slope;
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}

#[test]
fn t3ii_target_value() {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.5 },
        ..Default::default()
    };
    let rep = &run_lln(&plan(model, vec![t3ii(1.0)], vec![1.0 / 256.0], 4, 1)).unwrap()[0];
    let want = abs_moment(1.0).unwrap() * 0.5;
    assert!((rep.rungs[0].mean_limit - want).abs() < 1e-12);
    assert!((want - 0.398_942).abs() < 1e-6);
}

#[test]
fn covariance_pair_with_itself_recovers_clt_variance() {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.7 },
        ..Default::default()
    };
    let f = Functional {
        theorem: Theorem::T5,
        target: Target::Function {
            f: TestFunction::RationalSquare,
        },
    };
    let p = plan(model, vec![f, f], vec![1.0 / 256.0], 100, 5);
    let cov = run_covariance_pair(&p).unwrap();
    assert!(cov.diagonal_consistency_gap <= 1e-12);
    assert!((cov.empirical_matrix[0][1] - cov.empirical_matrix[0][0]).abs() < 1e-12);
    let clt = &run_clt(&p).unwrap()[0];
    let mean_var = clt.clt.as_ref().unwrap().mean_theoretical_variance;
    assert!((cov.theoretical - mean_var).abs() <= 1e-12 * mean_var);
}

#[test]
fn jump_clt_pair_target_is_zero_against_continuous_components() {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.5 },
        jumps: JumpSpec::CompoundPoisson {
            rate: 2.0,
            sizes: JumpSizeLaw::Gaussian {
                mean: 0.0,
                variance: 0.3,
            },
        },
        ..Default::default()
    };
    let t7 = Functional {
        theorem: Theorem::T7i,
        target: Target::Function {
            f: TestFunction::Power { r: 4.0 },
        },
    };
    let t5 = Functional {
        theorem: Theorem::T5,
        target: Target::Function {
            f: TestFunction::CosBump,
        },
    };
    let cov = run_covariance_pair(&plan(model, vec![t7, t5], vec![1.0 / 512.0], 50, 8)).unwrap();
    assert_eq!(cov.theoretical, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rung_statistics_are_coherent(seed in any::<u64>(), sigma in 0.1f64..2.0, rate in 0.0f64..4.0) {
        let jumps = if rate > 0.0 {
            JumpSpec::CompoundPoisson { rate, sizes: JumpSizeLaw::Gaussian { mean: 0.1, variance: 0.2 } }
        } else {
            JumpSpec::None
        };
        let model = ModelSpec { vol: VolSpec::Constant { sigma0: sigma }, jumps, ..Default::default() };
        let fs = vec![
            t3ii(1.0),
            Functional { theorem: Theorem::T3iii, target: Target::Truncation { varpi: 0.45, alpha: 4.0 } },
        ];
        let reports = run_lln(&plan(model, fs, vec![1.0 / 64.0, 1.0 / 128.0], 8, seed)).unwrap();
        for rep in reports {
            for r in &rep.rungs {
                prop_assert!(r.rmse + 1e-15 >= r.mean_error.abs());
                prop_assert!(r.rmse.is_finite() && r.mean_statistic.is_finite());
            }
        }
    }
}

#[test]
fn feasible_truncated_variance_standardisation() {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.6 },
        ..Default::default()
    };
    let f = Functional {
        theorem: Theorem::T6p,
        target: Target::Truncation {
            varpi: 0.49,
            alpha: 6.0,
        },
    };
    let mut p = plan(model, vec![f], vec![1.0 / 1024.0], 400, 12);
    p.feasible = true;
    let rep = &run_clt(&p).unwrap()[0];
    let clt = rep.clt.as_ref().unwrap();
    assert!(clt.feasible);
    assert!((clt.variance - 1.0).abs() < 0.25, "{clt:?}");
}

#[test]
fn blowup_mode_grows_for_powers_between_two_and_three() {
    let model = ModelSpec {
        vol: VolSpec::Constant { sigma0: 0.5 },
        jumps: JumpSpec::CompoundPoisson {
            rate: 1.0,
            sizes: JumpSizeLaw::Fixed { value: 1.0 },
        },
        ..Default::default()
    };
    let ladder: Vec<f64> = (6..=12).step_by(3).map(|k| 2f64.powi(-k)).collect();
    let p = plan(model, vec![t3ii(1.0)], ladder, 400, 3);
    let rows = powvar::harness::run_blowup(&p, 2.5).unwrap();
    // the continuous part contributes Δn^{r/2−1}/√Δn = Δn^{(r−3)/2} to the normalised error
    for w in rows.windows(2) {
        assert!(w[1].mean_normalized_error > w[0].mean_normalized_error);
    }
    assert!(powvar::harness::run_blowup(&p, 3.5).is_err());
}
