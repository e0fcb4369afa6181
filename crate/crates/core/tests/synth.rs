mod common;

use common::*;
use sdecert::ops::{DensityCandidate, Verdict};
use sdecert::poly::{rat, BExpr, QPoly};
use sdecert::synth::{
    soundness_margin, synthesize_controller, verify_density, verify_on_invariant_set, CertVerdict, Mode, SynthesisSpec,
    VerifyOptions,
};

fn opts() -> VerifyOptions {
    VerifyOptions::default()
}

#[test]
fn example1_certified_with_marginal_route() {
    let (sys, d) = example1();
    let r = verify_density(&sys, &d, &Mode::Stabilize, &opts()).unwrap();
    assert_eq!(r.verdict, CertVerdict::Certified);
    assert_eq!(r.target, QPoly::constant(2, rat(3, 1)));
    assert_eq!(r.condition("integrability").unwrap().verdict, Verdict::Holds);
    assert_eq!(r.condition("lipschitz_route").unwrap().verdict, Verdict::Marginal);
    assert!(soundness_margin(&r, 1000, 3, 4.0) >= -1e-6);

    let strict = VerifyOptions { strict: true, ..opts() };
    assert_eq!(verify_density(&sys, &d, &Mode::Stabilize, &strict).unwrap().verdict, CertVerdict::Marginal);
}

#[test]
fn example1_sign_flip_rejected() {
    let (sys, d) = example1();
    let flipped = DensityCandidate::new(-&d.numerator, d.base.clone(), d.gamma.clone());
    assert_eq!(verify_density(&sys, &flipped, &Mode::Stabilize, &opts()).unwrap().verdict, CertVerdict::NotCertified);
}

#[test]
fn example2_on_invariant_ellipsoid() {
    let (sys, d, g) = example2();
    let r = verify_on_invariant_set(&sys, &d, std::slice::from_ref(&g), &opts()).unwrap();
    assert_eq!(r.verdict, CertVerdict::Certified, "{:?}", r.notes);
    assert_eq!(r.target, poly(3, &[(12, 1, &[2, 0, 0])]));
    let inv = r.condition("invariant_set").unwrap();
    assert_eq!(inv.verdict, Verdict::Holds);

    let wrong = DensityCandidate::new(-&d.numerator, d.base.clone(), d.gamma.clone());
    assert_eq!(verify_on_invariant_set(&sys, &wrong, &[g], &opts()).unwrap().verdict, CertVerdict::NotCertified);
}

#[test]
fn invariant_set_without_constraints_is_global() {
    let (sys, d) = example1();
    let a = verify_on_invariant_set(&sys, &d, &[], &opts()).unwrap();
    let b = verify_density(&sys, &d, &Mode::Stabilize, &opts()).unwrap();
    assert_eq!(a.verdict, b.verdict);
    assert_eq!(a.mode, "stabilize");
    assert_eq!(a.target, b.target);
}

#[test]
fn example3_escape() {
    let (sys, d) = example3();
    let r = verify_density(&sys, &d, &Mode::Escape, &opts()).unwrap();
    assert_eq!(r.verdict, CertVerdict::Certified, "{:?}", r.notes);
    assert_eq!(r.target, QPoly::constant(1, rat(42, 1)));
    assert_eq!(r.shift, rat(-3, 2));
    assert_eq!(r.condition("non_integrability").unwrap().verdict, Verdict::Holds);
    // The same density cannot certify convergence.
    let s = verify_density(&sys, &d, &Mode::Stabilize, &opts()).unwrap();
    assert_eq!(s.verdict, CertVerdict::NotCertified);
}

fn spec8() -> SynthesisSpec {
    SynthesisSpec {
        base: poly(2, &[(1, 1, &[2, 0]), (1, 1, &[0, 2])]),
        gamma: rat(5, 2),
        deg_a: 0,
        deg_c: 3,
        lambda: rat(1, 1),
        mode: Mode::Stabilize,
    }
}

#[test]
fn planar_plant_synthesis_feasible() {
    let sys = planar_plant();
    let r = synthesize_controller(&sys, &spec8(), &opts()).unwrap();
    assert_eq!(r.verdict, CertVerdict::Certified, "{:?}", r.notes);
    let ctrl = r.controller.clone().unwrap();
    let zero = vec![rat(0, 1), rat(0, 1)];
    assert_eq!(ctrl.denominator, QPoly::one(2));
    assert_eq!(ctrl.numerator.eval_exact(&zero), rat(0, 1));
    assert!(soundness_margin(&r, 1000, 5, 2.0) >= -1e-6);
}

#[test]
fn planar_plant_reference_controller_is_a_feasible_point() {
    let sys = planar_plant();
    let closed = sys.close_with_polynomial(&reference_controller()).unwrap();
    let d = DensityCandidate::new(QPoly::one(2), closed.base().clone(), rat(5, 2));
    let r = verify_density(&closed, &d, &Mode::Stabilize, &opts()).unwrap();
    assert_eq!(r.verdict, CertVerdict::Certified);
    // The cleared sextic carries a factor b², which the normal form absorbs.
    assert_eq!(r.shift, rat(-5, 2));
    let sextic = -r.generator.clear_with_shift(&rat(-9, 2)).unwrap();
    let b = poly(2, &[(1, 1, &[2, 0]), (1, 1, &[0, 2])]);
    assert_eq!(sextic, &b.pow(2) * &r.target);
}

#[test]
fn convex_combinations_stay_feasible() {
    // Synthesized c and the reference c, both with a = 1: every mix of the
    // cleared targets stays nonnegative.
    let sys = planar_plant();
    let syn = synthesize_controller(&sys, &spec8(), &opts()).unwrap();
    let c1 = syn.controller.unwrap().numerator;
    let c2 = reference_controller();
    let target = |c: &QPoly| {
        let closed = sys.close_with_polynomial(c).unwrap();
        let d = DensityCandidate::new(QPoly::one(2), closed.base().clone(), rat(5, 2));
        verify_density(&closed, &d, &Mode::Stabilize, &opts()).unwrap()
    };
    for k in 0..=4 {
        let t = rat(k, 4);
        let mix = &c1.scale(&t) + &c2.scale(&(rat(1, 1) - &t));
        let r = target(&mix);
        assert_eq!(r.verdict, CertVerdict::Certified, "t = {t}");
        assert!(soundness_margin(&r, 500, k as u64, 2.0) >= -1e-6);
    }
}

#[test]
fn escape_density_shape_enforced() {
    let (sys, d) = example1();
    let r = verify_density(&sys, &d, &Mode::Escape, &opts()).unwrap();
    assert_eq!(r.condition("global_c2").unwrap().verdict, Verdict::Fails);
    assert_eq!(r.verdict, CertVerdict::NotCertified);
}

#[test]
fn rational_drift_needs_shared_base() {
    let (sys, _) = example3();
    let other = DensityCandidate::new(QPoly::one(1), std::sync::Arc::new(QPoly::var(1, 0).pow(2)), rat(1, 1));
    assert!(verify_density(&sys, &other, &Mode::Stabilize, &opts()).is_err());
    let _ = BExpr::zero(sys.base());
}
