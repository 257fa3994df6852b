//! Monte Carlo harness invariants: determinism across thread counts,
//! stability across master seeds, and coverage of the whole study grid.

use eiv::montecarlo::{presets, rejection_study};
use eiv::Family;

#[test]
fn report_is_identical_across_thread_counts() {
    let config = presets::sim_config(
        presets::CaseKind::LambdaXKnown,
        Family::Normal,
        None,
        2,
        10,
        5,
        60,
        424_242,
    );
    let serial = rejection_study(&config, 1).unwrap();
    let parallel = rejection_study(&config, 8).unwrap();
    // Wall clock is skipped by the serializer; everything else must agree
    // bit for bit.
    let a = serde_json::to_string(&serial).unwrap();
    let b = serde_json::to_string(&parallel).unwrap();
    assert_eq!(a, b);

    let again = rejection_study(&config, 8).unwrap();
    assert_eq!(b, serde_json::to_string(&again).unwrap());
}

#[test]
fn rates_are_stable_across_master_seeds() {
    let mut reports = Vec::new();
    for seed in [1u64, 2] {
        let config = presets::sim_config(
            presets::CaseKind::LambdaXKnown,
            Family::Normal,
            None,
            2,
            10,
            5,
            400,
            seed,
        );
        reports.push(rejection_study(&config, 0).unwrap());
    }
    let r = 400.0f64;
    for (a, b) in reports[0].rates.iter().zip(&reports[1].rates) {
        for (x, y) in [
            (a.lr, b.lr),
            (a.lr_star, b.lr_star),
            (a.lr_star_star, b.lr_star_star),
        ] {
            let p = (x / 100.0).max(0.005);
            let se = 100.0 * (p * (1.0 - p) / r).sqrt();
            assert!(
                (x - y).abs() <= 4.0 * se * std::f64::consts::SQRT_2,
                "level {}: {x} vs {y} beyond 4 joint SEs",
                a.level
            );
        }
    }
}

#[test]
fn every_table_cell_runs_end_to_end() {
    // Two replications of every grid cell; failures are tallied, never
    // panicked, and the report shape is complete.
    for kind in [
        presets::CaseKind::LambdaXKnown,
        presets::CaseKind::LambdaEKnown,
        presets::CaseKind::NullIntercept,
    ] {
        for (family, dof) in [(Family::Normal, None), (Family::StudentT, Some(3.0))] {
            for q in [2usize, 5] {
                for n_k in [10usize, 40] {
                    let config = presets::sim_config(kind, family, dof, q, n_k, 5, 2, 7);
                    let report = rejection_study(&config, 0).unwrap();
                    assert_eq!(report.replications_requested, 2);
                    assert_eq!(report.rates.len(), 3);
                    assert!(report.converged <= 2);
                }
            }
        }
    }
}
