mod common;

use common::{random_matrix, rng};
use impedance_synth::lmi::{build_lmi1, build_lmi2, build_mbar, mbar_value, AffineSymMatrix, BlockShape, LmiConstraintSystem, LmiVariableLayout, Sense, DEFAULT_EPSILON};
use impedance_synth::sdp::{solve_feasibility, solve_max_margin, SdpOptions, SdpStatus};
use impedance_synth::verify::revalidate_lmi;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn two_link_lins() -> Vec<impedance_synth::linearize::PoseLinearization> {
    common::two_link_config().problem.linearize().unwrap()
}

fn scalar(c: f64, a: f64) -> AffineSymMatrix {
    AffineSymMatrix {
        constant: DMatrix::from_element(1, 1, c),
        coefficients: vec![DMatrix::from_element(1, 1, a)],
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constraint_matrices_are_affine(seed in 0u64..10_000, t in -2.0..2.0f64, lmi1 in any::<bool>()) {
        let lins = two_link_lins();
        let sys = if lmi1 { build_lmi1(&lins, 10.0, DEFAULT_EPSILON) } else { build_lmi2(&lins, 10.0, DEFAULT_EPSILON) }.unwrap();
        let mut r = rng(seed);
        let a = DVector::from_fn(sys.var_count, |_, _| rand::Rng::random_range(&mut r, -5.0..5.0));
        let b = DVector::from_fn(sys.var_count, |_, _| rand::Rng::random_range(&mut r, -5.0..5.0));
        let mix = &a * t + &b * (1.0 - t);
        for block in &sys.blocks {
            let lhs = block.expr.eval(&mix);
            let rhs = block.expr.eval(&a) * t + block.expr.eval(&b) * (1.0 - t);
            let scale = lhs.amax().max(1.0);
            prop_assert!((lhs - rhs).amax() <= 1e-12 * scale * 10.0);
        }
    }

    #[test]
    fn sparse_decode_is_structurally_diagonal(seed in 0u64..10_000) {
        let layout = LmiVariableLayout::sparse_passive(3);
        let mut r = rng(seed);
        let x = DVector::from_fn(layout.var_count(), |_, _| rand::Rng::random_range(&mut r, -5.0..5.0));
        let (q, l) = layout.decode(&x);
        let n = 3;
        for (rb, cb) in [(0, 0), (0, n), (n, 0), (n, n)] {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        prop_assert_eq!(q[(rb + i, cb + j)], 0.0);
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..2 * n {
                if j != i && j != n + i {
                    prop_assert_eq!(l[(i, j)], 0.0);
                }
            }
        }
    }

    // Random dense toy systems: any verdict the solver gives must survive independent checks.
    #[test]
    fn solver_verdicts_are_sound(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let vars = 2;
        let mut sys = LmiConstraintSystem::new(vars, DEFAULT_EPSILON);
        for b in 0..3 {
            let dim = 1 + (b % 3);
            let expr = AffineSymMatrix {
                constant: sym(random_matrix(&mut r, dim, dim, 2.0)),
                coefficients: (0..vars).map(|_| sym(random_matrix(&mut r, dim, dim, 2.0))).collect(),
            };
            sys.push(format!("b{b}"), expr, Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
        }
        let res = solve_feasibility(&sys, &SdpOptions::default());
        match res.status {
            SdpStatus::Feasible => {
                let x = res.assignment.clone().unwrap();
                for s in revalidate_lmi(&sys, &x).unwrap() {
                    prop_assert!(s.is_satisfied(), "block {} slack {}", s.name, s.slack);
                }
            }
            SdpStatus::InfeasibleCertificate => {
                prop_assert!(res.certificate.as_ref().unwrap().is_valid(&sys));
            }
            SdpStatus::NumericalFailure => {}
        }
    }
}

#[test]
fn every_coefficient_is_symmetric() {
    let lins = two_link_lins();
    for sys in [build_lmi1(&lins, 0.1, DEFAULT_EPSILON).unwrap(), build_lmi2(&lins, 0.1, DEFAULT_EPSILON).unwrap()] {
        for b in &sys.blocks {
            for f in std::iter::once(&b.expr.constant).chain(&b.expr.coefficients) {
                assert!((f - f.transpose()).amax() <= f64::EPSILON * f.amax());
            }
        }
    }
}

#[test]
fn block_counts_for_three_poses() {
    let lins = two_link_lins();
    let l1 = build_lmi1(&lins, 10.0, DEFAULT_EPSILON).unwrap();
    let l2 = build_lmi2(&lins, 10.0, DEFAULT_EPSILON).unwrap();
    assert_eq!(l1.blocks.len(), 4);
    assert_eq!(l2.blocks.len(), 7);
    assert_eq!(l1.var_count, 2 * 5 + 8);
    assert_eq!(l2.var_count, 10);
    assert_eq!(l1.blocks[0].expr.dim(), 4);
    for b in &l1.blocks[1..] {
        assert_eq!(b.expr.dim(), 4 + 2 + 4);
    }
}

#[test]
fn expression_matches_direct_evaluation() {
    let lins = two_link_lins();
    let layout = LmiVariableLayout::full(2);
    let mut r = rng(5);
    let x = DVector::from_fn(layout.var_count(), |_, _| rand::Rng::random_range(&mut r, -3.0..3.0));
    let (q, l) = layout.decode(&x);
    for lin in &lins {
        let expr = build_mbar(lin, 0.7, &layout).unwrap();
        let direct = mbar_value(lin, 0.7, &q, &l);
        assert!((expr.eval(&x) - direct).amax() < 1e-12);
    }
}

#[test]
fn sparse_solution_satisfies_dense_problem() {
    let lins = two_link_lins();
    let sparse = build_lmi2(&lins, 10.0, DEFAULT_EPSILON).unwrap();
    let res = solve_feasibility(&sparse, &SdpOptions::default());
    assert!(res.is_feasible());
    let (q, l) = sparse.layout.unwrap().decode(res.assignment.as_ref().unwrap());
    let dense = build_lmi1(&lins, 10.0, DEFAULT_EPSILON).unwrap();
    let x = dense.layout.unwrap().encode(&q, &l);
    for s in revalidate_lmi(&dense, &x).unwrap() {
        assert!(s.slack > 0.0, "{} slack {}", s.name, s.slack);
    }
}

#[test]
fn trivial_and_contradictory_scalars() {
    let mut ok = LmiConstraintSystem::new(1, DEFAULT_EPSILON);
    ok.push("q", scalar(0.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
    let res = solve_feasibility(&ok, &SdpOptions::default());
    assert!(res.is_feasible());
    assert!(res.assignment.unwrap()[0] >= DEFAULT_EPSILON);

    let mut bad = LmiConstraintSystem::new(1, DEFAULT_EPSILON);
    bad.push("q > 1", scalar(-1.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
    bad.push("-q > 1", scalar(-1.0, -1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
    let res = solve_feasibility(&bad, &SdpOptions::default());
    assert_eq!(res.status, SdpStatus::InfeasibleCertificate);
    assert!(res.certificate.as_ref().unwrap().is_valid(&bad));
    let mm = solve_max_margin(&bad, &SdpOptions::default());
    assert!(mm.margin_upper_bound <= 0.0);
}

#[test]
fn interval_margin_is_one() {
    let mut sys = LmiConstraintSystem::new(1, 0.0);
    sys.push("q > 0", scalar(0.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
    sys.push("q < 2", scalar(-2.0, 1.0), Sense::NegativeDefinite, BlockShape::Matrix).unwrap();
    let res = solve_max_margin(&sys, &SdpOptions::default());
    assert!(res.is_feasible());
    assert!((res.margin - 1.0).abs() < 1e-6);
    assert!((res.assignment.unwrap()[0] - 1.0).abs() < 1e-6);
    let achieved = res.achieved_margins.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(achieved >= res.margin * (1.0 - 1e-6));
}

#[test]
fn max_margin_attains_reported_slack_on_two_link() {
    let lins = two_link_lins();
    let sys = build_lmi2(&lins, 0.1, DEFAULT_EPSILON).unwrap();
    let res = solve_max_margin(&sys, &SdpOptions::default());
    assert!(res.is_feasible());
    assert!(res.margin > 0.0);
    let achieved = res.achieved_margins.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(achieved >= res.margin * (1.0 - 1e-6), "{achieved} vs {}", res.margin);
}

#[test]
fn scaling_preserves_feasibility() {
    let lins = two_link_lins();
    for gamma in [10.0, 1e-6] {
        let sys = build_lmi2(&lins, gamma, DEFAULT_EPSILON).unwrap();
        let mut scaled = LmiConstraintSystem::new(sys.var_count, sys.epsilon);
        for b in &sys.blocks {
            let expr = AffineSymMatrix {
                constant: &b.expr.constant * 1e3,
                coefficients: b.expr.coefficients.iter().map(|f| f * 1e3).collect(),
            };
            scaled.push(b.name.clone(), expr, b.sense, b.shape).unwrap();
        }
        let opts = SdpOptions { stop_when_feasible: true, ..SdpOptions::default() };
        let a = solve_feasibility(&sys, &opts);
        let b = solve_feasibility(&scaled, &opts);
        assert_eq!(a.status, b.status, "gamma {gamma}");
    }
}

#[test]
fn solves_are_deterministic() {
    let lins = two_link_lins();
    let sys = build_lmi2(&lins, 0.1, DEFAULT_EPSILON).unwrap();
    let a = solve_max_margin(&sys, &SdpOptions::default());
    let b = solve_max_margin(&sys, &SdpOptions::default());
    assert_eq!(a, b);
}
