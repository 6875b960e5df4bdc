mod common;

use std::sync::OnceLock;

use common::{random_matrix, rng};
use impedance_synth::linearize::PoseLinearization;
use impedance_synth::lmi::{build_lmi2, DEFAULT_EPSILON};
use impedance_synth::synthesis::{diagonal_gain_matrix, synthesize, SynthesisReport};
use impedance_synth::verify::{frequency_gain, hinf_norm, hinf_norm_grid, hurwitz_check, revalidate_lmi, storage_decrement_check, ClosedLoopSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

struct Fixture {
    lins: Vec<PoseLinearization>,
    report: SynthesisReport,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut p = common::two_link_config().problem;
        p.grid_points = 0;
        Fixture {
            lins: p.linearize().unwrap(),
            report: synthesize(&p).unwrap(),
        }
    })
}

fn random_diagonal_gain(seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let k = DVector::from_fn(2, |_, _| rand::Rng::random_range(&mut r, 1.0..500.0));
    let b = DVector::from_fn(2, |_, _| rand::Rng::random_range(&mut r, 0.5..50.0));
    diagonal_gain_matrix(&k, &b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_invariant_under_similarity(seed in 0u64..10_000, pose in 0usize..3) {
        let sys = ClosedLoopSystem::from_feedback(&fixture().lins[pose], &random_diagonal_gain(seed)).unwrap();
        let mut r = rng(seed + 1);
        let t = DMatrix::<f64>::identity(4, 4) + random_matrix(&mut r, 4, 4, 0.4);
        let t_inv = t.clone().try_inverse().unwrap();
        let moved = ClosedLoopSystem::new(&t * &sys.a_cl * &t_inv, &t * &sys.b2, &sys.c * &t_inv).unwrap();
        let a = hinf_norm(&sys, 1e-12).unwrap();
        let b = hinf_norm(&moved, 1e-12).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
    }

    #[test]
    fn hamiltonian_and_grid_agree(seed in 0u64..10_000, pose in 0usize..3) {
        let sys = ClosedLoopSystem::from_feedback(&fixture().lins[pose], &random_diagonal_gain(seed)).unwrap();
        let h = hinf_norm(&sys, 1e-6).unwrap();
        let g = hinf_norm_grid(&sys, 20_000);
        prop_assert!((h - g).abs() <= 0.01 * h, "{h} vs {g}");
        prop_assert!(g <= h * (1.0 + 1e-6));
    }

    // A storage certificate, when it holds, must imply the norm bound.
    #[test]
    fn storage_certificate_implies_norm_bound(seed in 0u64..10_000, size in 0.0..3.0f64) {
        let f = fixture();
        let gains = f.report.gains.as_ref().unwrap();
        let p = f.report.p.as_ref().unwrap();
        let mut r = rng(seed);
        let noise = random_matrix(&mut r, 2, 4, 1.0).component_mul(&gains.k_matrix.map(|x| x.abs())) * size;
        let k = &gains.k_matrix + noise;
        for lin in &f.lins {
            let sys = ClosedLoopSystem::from_feedback(lin, &k).unwrap();
            if !hurwitz_check(&sys.a_cl).stable {
                prop_assert!(!storage_decrement_check(lin, &k, p, 10.0).unwrap().holds);
                continue;
            }
            let h = hinf_norm(&sys, 1e-9).unwrap();
            if storage_decrement_check(lin, &k, p, 10.0).unwrap().holds {
                prop_assert!(h <= 10.0 * (1.0 + 1e-6), "storage holds but norm {h}");
            }
        }
    }
}

#[test]
fn first_order_lag_has_unit_norm() {
    let sys = ClosedLoopSystem::new(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
    assert!((hinf_norm(&sys, 1e-9).unwrap() - 1.0).abs() < 1e-8);
    assert!((hinf_norm_grid(&sys, 100_000) - 1.0).abs() < 1e-8);
}

#[test]
fn damped_double_integrator_peak() {
    let sys = ClosedLoopSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap();
    let expected = 2.0 / 3f64.sqrt();
    assert!((hinf_norm(&sys, 1e-9).unwrap() - expected).abs() < 1e-8);
    assert!((hinf_norm_grid(&sys, 100_000) - expected).abs() < 1e-8);
    assert!((frequency_gain(&sys, 0.5f64.sqrt()) - expected).abs() < 1e-12);
}

#[test]
fn non_hurwitz_norm_is_an_error() {
    let sys = ClosedLoopSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap();
    assert!(hinf_norm(&sys, 1e-6).is_err());
}

#[test]
fn hurwitz_examples() {
    let stable = hurwitz_check(&-DMatrix::<f64>::identity(3, 3));
    assert!(stable.stable);
    assert!((stable.spectral_abscissa + 1.0).abs() < 1e-15);
    let di = hurwitz_check(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    assert!(!di.stable);
    assert_eq!(di.spectral_abscissa, 0.0);
    for pose in &fixture().report.poses {
        assert!(pose.spectral_abscissa < 0.0);
    }
}

#[test]
fn solver_point_revalidates_and_perturbations_break_it() {
    let f = fixture();
    let sys = build_lmi2(&f.lins, 10.0, DEFAULT_EPSILON).unwrap();
    let layout = sys.layout.unwrap();
    let x = layout.encode(f.report.q.as_ref().unwrap(), f.report.l.as_ref().unwrap());
    assert!(revalidate_lmi(&sys, &x).unwrap().iter().all(|s| s.is_satisfied()));
    let mut r = rng(99);
    for _ in 0..20 {
        let noise = DVector::from_fn(x.len(), |_, _| rand::Rng::random_range(&mut r, -1.0..1.0)) * (10.0 * x.amax());
        let slacks = revalidate_lmi(&sys, &(&x + noise)).unwrap();
        assert!(slacks.iter().any(|s| s.slack < 0.0));
    }
    let zero = revalidate_lmi(&sys, &DVector::zeros(x.len())).unwrap();
    assert_eq!(zero[0].name, "Q");
    assert!(zero[0].slack < 0.0);
    assert!(revalidate_lmi(&sys, &DVector::zeros(x.len() + 1)).is_err());
}

#[test]
fn storage_check_examples() {
    let f = fixture();
    let gains = f.report.gains.as_ref().unwrap();
    let p = f.report.p.as_ref().unwrap();
    for lin in &f.lins {
        assert!(storage_decrement_check(lin, &gains.k_matrix, p, 10.0).unwrap().holds);
        assert!(!storage_decrement_check(lin, &DMatrix::zeros(2, 4), &DMatrix::identity(4, 4), 10.0).unwrap().holds);
    }
}
