use std::f64::consts::PI;

use hbf_isac::altmin::StopRule;
use hbf_isac::config::{ScenarioConfig, SinrDb};
use hbf_isac::exec::Execution;
use hbf_isac::experiment::{execute, run_sweep};
use hbf_isac::factorize::{factorize, ManifoldSettings};
use hbf_isac::model::{complex_normal, generate_channels, stage_rng, steering_vector, RngStage, Scenario};
use hbf_isac::pattern::{beam_pattern, sampling_matrix, build_grid};
use hbf_isac::C64;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn steering_vectors_have_unit_norm(n in 1usize..512, theta in -1.0f64..=1.0) {
        let a = steering_vector(n, theta).unwrap();
        prop_assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_ignores_a_global_phase(seed in 0u64..1000, rot in 0.0f64..(2.0 * PI)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = sampling_matrix(12, &build_grid(30).unwrap()).unwrap();
        let f = DVector::from_fn(12, |_, _| complex_normal(&mut rng, 1.0));
        let rotated = &f * C64::from_polar(1.0, rot);
        let a = beam_pattern(&phi, &f).unwrap();
        let b = beam_pattern(&phi, &rotated).unwrap();
        prop_assert!((a - b).amax() < 1e-12 * (1.0 + f.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn factorization_keeps_unit_modulus_and_power(
        seed in 0u64..10_000,
        n_bs in 2usize..24,
        n_rf in 1usize..4,
        p_t in 0.1f64..200.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_hat = DMatrix::from_fn(n_bs, n_rf, |_, _| complex_normal(&mut rng, 1.0));
        let out = factorize(&f_hat, p_t, &StopRule::factorization_default(), &ManifoldSettings::default(), &mut rng).unwrap();
        prop_assert!(out.f_rf.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-9));
        prop_assert!(((&out.f_rf * &out.f_bb).norm_squared() - p_t).abs() <= 1e-9 * p_t.max(1.0));
        prop_assert!(out.residual_trace.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    }
}

#[test]
fn steering_entry_by_direct_evaluation() {
    let a = steering_vector(8, 0.5).unwrap();
    // exp(j pi * 2 * 0.5) / sqrt(8) = -1 / sqrt(8)
    assert!((a[2] - C64::new(-1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
}

#[test]
fn channels_rebuild_from_their_paths() {
    let sc = Scenario::baseline();
    let ch = generate_channels(&sc, &mut stage_rng(11, RngStage::Channels));
    assert_eq!(ch.paths.len(), 3);
    for (n, user) in ch.paths.iter().enumerate() {
        assert_eq!(user.len(), 1 + sc.nlos_paths_per_user);
        assert!((user[0].aod - sc.user_angles_deg[n].to_radians().sin()).abs() < 1e-15);
        let scale = 1.0 / (user.len() as f64).sqrt();
        let rebuilt: Vec<C64> = (0..sc.n_bs)
            .map(|k| {
                user.iter()
                    .map(|p| p.gain * C64::from_polar(scale, -PI * k as f64 * p.aod))
                    .sum()
            })
            .collect();
        let row = ch.h.row(n);
        let err: f64 = rebuilt.iter().zip(row.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-12 * row.norm(), "user {n}: {err}");
    }
}

#[test]
fn line_of_sight_channels_carry_array_gain() {
    let mut sc = Scenario::baseline();
    sc.n_bs = 16;
    sc.nlos_paths_per_user = 0;
    let draws = 2000;
    let mut total = 0.0;
    for seed in 0..draws {
        let ch = generate_channels(&sc, &mut stage_rng(seed, RngStage::Channels));
        total += ch.h.row(0).norm_squared();
    }
    let mean = total / draws as f64;
    assert!((mean / 16.0 - 1.0).abs() < 0.1, "mean {mean}");
}

#[test]
fn runs_are_pure_functions_of_config() {
    let mut cfg = ScenarioConfig::baseline();
    cfg.n_bs = 16;
    cfg.grid_size = 50;
    cfg.seed = 4;
    cfg.sinr_db = SinrDb::Uniform(5.0);
    cfg.design_stop = StopRule {
        max_iters: 6,
        ..StopRule::design_default()
    };
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert_eq!(a.design.beams, b.design.beams);
    assert_eq!(a.design.trace, b.design.trace);
    assert_eq!(a.factors.as_ref().unwrap().f_bb, b.factors.as_ref().unwrap().f_bb);
    assert_eq!(a.record.report, b.record.report);
}

#[test]
fn sweep_rows_match_single_runs() {
    let mut base = ScenarioConfig::baseline();
    base.grid_size = 40;
    base.design_stop = StopRule {
        max_iters: 4,
        ..StopRule::design_default()
    };
    let sweep = hbf_isac::config::SweepConfig {
        gamma_db: vec![0.0, 200.0],
        n_bs: vec![8],
        seeds: vec![2],
        base,
    };
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_sweep(&sweep, dir.path(), Execution::Sequential).unwrap();
    assert_eq!(outcome.summary.len(), 2);
    let points = sweep.points();
    let direct = execute(&points[0].config).unwrap();
    let report = direct.record.report.unwrap();
    assert_eq!(outcome.summary[0].mse_no_hbf, Some(report.mse_no_hbf));
    assert_eq!(outcome.summary[0].iterations, direct.design.iterations());
    assert_eq!(outcome.summary[1].status, "infeasible");
    assert_eq!(outcome.summary[1].mse_no_hbf, None);
    assert_eq!(outcome.aggregate.len(), 2);
    assert_eq!(outcome.aggregate[1].designed, 0);
}
