use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_rational::BigRational;
use sdecert::poly::{rat, Monomial, QPoly};
use sdecert::sdp::SdpStatus;
use sdecert::sos::{
    build_parametric_sos, build_sos_feasibility, localized_sos, prove_sos, solve_sos, MonomialBasis, SosError,
    SosOptions, StructuralConstraint,
};

fn p(n: usize, t: &[(Vec<u32>, i64)]) -> QPoly {
    QPoly::from_int_terms(n, t)
}

fn motzkin() -> QPoly {
    p(2, &[(vec![4, 2], 1), (vec![2, 4], 1), (vec![2, 2], -3), (vec![0, 0], 1)])
}

#[test]
fn perfect_square_tight_residual() {
    let q = p(2, &[(vec![2, 0], 1), (vec![1, 1], 1), (vec![0, 2], 1)]);
    let out = prove_sos(&q.pow(2), &SosOptions::default()).unwrap();
    assert!(out.certified());
    let cert = out.certificate.unwrap();
    assert!(cert.residual <= 1e-9, "residual {}", cert.residual);
    assert!(cert.min_eig >= -1e-8);
}

#[test]
fn odd_degree_rejected() {
    let q = p(1, &[(vec![3], 1)]);
    assert_eq!(build_sos_feasibility(&q).unwrap_err(), SosError::OddDegree(3));
}

#[test]
fn motzkin_is_not_sos_with_moment_witness() {
    let n = motzkin();
    let prob = build_sos_feasibility(&n).unwrap();
    let out = solve_sos(&prob, &SosOptions::default());
    assert_eq!(out.status(), SdpStatus::Infeasible);
    assert!(!out.certified());
    let y = out.solution.farkas.clone().expect("witness");

    // Rows are the monomials of z zᵀ and of the target, in increasing order.
    let z = prob.blocks[0].basis.monomials().to_vec();
    let mut mons: BTreeSet<Monomial> = n.terms().map(|(m, _)| m.clone()).collect();
    for a in &z {
        for b in &z {
            mons.insert(a.mul(b));
        }
    }
    let mons: Vec<Monomial> = mons.into_iter().collect();
    assert_eq!(mons.len(), y.len());
    let moment = |m: &Monomial| -> f64 { -y[mons.iter().position(|k| k == m).unwrap()] };
    let mut mm = DMatrix::zeros(z.len(), z.len());
    for (r, a) in z.iter().enumerate() {
        for (c, b) in z.iter().enumerate() {
            mm[(r, c)] = moment(&a.mul(b));
        }
    }
    let lmin = mm.clone().symmetric_eigen().eigenvalues.min();
    let scale = mm.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(lmin >= -1e-6 * scale, "moment matrix min eigenvalue {lmin}");
    let ln: f64 = n.terms().map(|(m, c)| sdecert::poly::rat_to_f64(c) * moment(m)).sum();
    assert!(ln < 0.0, "L(N) = {ln}");
}

#[test]
fn cleared_sextic_is_sos() {
    let n = QPoly::from_terms(
        2,
        vec![
            (vec![0, 6], rat(3, 10)),
            (vec![1, 5], rat(1, 10)),
            (vec![2, 4], rat(7, 10)),
            (vec![3, 3], rat(1, 5)),
            (vec![4, 2], rat(1, 2)),
            (vec![5, 1], rat(1, 10)),
            (vec![6, 0], rat(1, 10)),
        ],
    );
    let out = prove_sos(&n, &SosOptions::default()).unwrap();
    assert!(out.certified(), "{:?}", out.status());
    let cert = out.certificate.unwrap();
    // Reconstruct N from the explicit squares and compare pointwise.
    let sq = cert.squares(0);
    for &(x, yv) in &[(0.3, -1.2), (1.0, 1.0), (-2.0, 0.5)] {
        let lhs = n.evaluate(&[x, yv]).unwrap();
        let rhs: f64 = sq.iter().map(|(w, q)| w * q.evaluate(&[x, yv]).powi(2)).sum();
        assert!((lhs - rhs).abs() < 1e-6 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn larger_basis_keeps_feasibility() {
    let q = p(2, &[(vec![2, 0], 1), (vec![0, 2], 1)]).pow(2);
    let small = MonomialBasis::for_polynomial(&q);
    let big = small.union(&MonomialBasis::dense(2, 0, 2));
    assert!(big.len() > small.len());
    for basis in [small, big] {
        let prob = sdecert::sos::build_sos_with_basis(&q, basis).unwrap();
        assert!(solve_sos(&prob, &SosOptions::default()).certified());
    }
}

#[test]
fn parametric_finds_positive_multiplier() {
    // -x² + y⁴ + θ·x² SOS needs θ ≥ 1
    let n0 = p(2, &[(vec![2, 0], -1), (vec![0, 4], 1)]);
    let n1 = p(2, &[(vec![2, 0], 1)]);
    let prob = build_parametric_sos(&n0, &[n1], Vec::new()).unwrap();
    let out = solve_sos(&prob, &SosOptions::default());
    assert!(out.certified());
    assert!(out.certificate.unwrap().params[0] >= 1.0 - 1e-6);
}

#[test]
fn parametric_negative_constant_infeasible() {
    let n0 = QPoly::constant(1, rat(-1, 1));
    let n1 = p(1, &[(vec![2], 1)]);
    let prob = build_parametric_sos(&n0, &[n1], Vec::new()).unwrap();
    let out = solve_sos(&prob, &SosOptions::default());
    assert_eq!(out.status(), SdpStatus::Infeasible);
}

#[test]
fn structural_pins_parameter() {
    let n0 = p(1, &[(vec![2], -1)]);
    let n1 = p(1, &[(vec![2], 1)]);
    let sc = StructuralConstraint { label: "pin".into(), coeffs: vec![(0, rat(1, 1))], rhs: rat(1, 2) };
    let prob = build_parametric_sos(&n0, &[n1], vec![sc]).unwrap();
    assert_eq!(solve_sos(&prob, &SosOptions::default()).status(), SdpStatus::Infeasible);
}

#[test]
fn inconsistent_structural_rejected() {
    let n0 = p(1, &[(vec![2], 1)]);
    let n1 = p(1, &[(vec![2], 1)]);
    let a = StructuralConstraint { label: "a".into(), coeffs: vec![(0, rat(1, 1))], rhs: rat(1, 1) };
    let b = StructuralConstraint {
        label: "b".into(),
        coeffs: vec![(0, rat(2, 1))],
        rhs: BigRational::from_integer(3.into()),
    };
    assert_eq!(build_parametric_sos(&n0, &[n1], vec![a, b]).unwrap_err(), SosError::InconsistentStructural);
}

#[test]
fn localized_on_interval() {
    // 1 - x² ≥ 0 on [-1, 1] via g = 1 - x²: σ₀ = 0, σ₁ = 1
    let n = p(1, &[(vec![0], 1), (vec![2], -1)]);
    let g = p(1, &[(vec![0], 1), (vec![2], -1)]);
    let prob = localized_sos(&n, std::slice::from_ref(&g), &[0], 4).unwrap();
    assert!(solve_sos(&prob, &SosOptions::default()).certified());
    // x on [-1,1] is not non-negative, so no certificate of any degree
    let n = p(1, &[(vec![1], 1), (vec![0], 1), (vec![2], -2)]);
    let prob = localized_sos(&n, &[g], &[1], 4).unwrap();
    assert!(!solve_sos(&prob, &SosOptions::default()).certified());
}

#[test]
fn localized_degree_cap() {
    let n = p(1, &[(vec![0], 1)]);
    let g = p(1, &[(vec![4], 1)]);
    assert_eq!(localized_sos(&n, &[g], &[2], 6).unwrap_err(), SosError::DegreeOverflow { degree: 8, cap: 6 });
    assert_eq!(localized_sos(&n, &[], &[], 6).unwrap_err(), SosError::NoConstraints);
}
