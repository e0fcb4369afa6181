use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mc::unit;
use crate::ops::{
    adjoint_generator, check_growth, check_integrability, divergence_condition, positivity_on_sphere, ConditionReport,
    DensityCandidate, OpsError, SdeSystem, SphereOptions, SpherePositivity, Verdict,
};
use crate::poly::{BExpr, FloatBExpr, PolyError, QPoly};
use crate::sos::{build_sos_feasibility, localized_sos, norm_power, solve_sos, SosError, SosOutcome, SosProblem};

use super::{decide, CertificateResult, Mode, SideCondition, SynthError, VerifyOptions};

/// The system with every field re-expressed over `base`. Fields that are not
/// plain polynomials cannot change base.
pub(crate) fn rebase(sys: &SdeSystem, base: &Arc<QPoly>) -> Result<SdeSystem, SynthError> {
    if **sys.base() == **base {
        return Ok(sys.clone());
    }
    let conv = |e: &BExpr| -> Result<BExpr, SynthError> {
        let p = e.as_polynomial().ok_or(PolyError::BaseMismatch)?;
        Ok(BExpr::from_poly(p, base)?)
    };
    let drift = sys.drift().iter().map(conv).collect::<Result<Vec<_>, _>>()?;
    let diffusion = sys
        .diffusion()
        .iter()
        .map(|col| col.iter().map(conv).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SdeSystem::new(base.clone(), drift, diffusion)?)
}

pub(crate) fn mandatory(report: ConditionReport) -> SideCondition {
    SideCondition { mandatory: true, report }
}

pub(crate) fn advisory(report: ConditionReport) -> SideCondition {
    SideCondition { mandatory: false, report }
}

fn single(name: &str, detail: &str, values: &[(&str, String)], outcome: Verdict) -> ConditionReport {
    let mut r = ConditionReport::new(name);
    r.push(detail, values, outcome);
    r.settle(1);
    r
}

pub(crate) fn equilibrium_condition(sys: &SdeSystem) -> Result<ConditionReport, SynthError> {
    let ok = sys.fields_vanish_at_origin()?;
    Ok(single("equilibrium", "fields_vanish_at_origin", &[], if ok { Verdict::Holds } else { Verdict::Fails }))
}

/// Integrability outside the unit ball; a base vanishing off the origin
/// makes `D` singular on a whole set and fails the condition.
pub(crate) fn integrability_condition(d: &DensityCandidate) -> Result<ConditionReport, SynthError> {
    match check_integrability(d, None) {
        Ok(r) => Ok(r),
        Err(OpsError::BaseVanishesOffOrigin(pt)) => {
            Ok(single("integrability", "base_zero_set", &[("point", format!("{pt:?}"))], Verdict::Fails))
        }
        Err(e) => Err(e.into()),
    }
}

fn field_degrees(sys: &SdeSystem) -> Option<(u32, u32)> {
    let deg = |e: &BExpr| e.as_polynomial().map(|p| p.degree().unwrap_or(0));
    let mut drift = 0;
    for e in sys.drift() {
        drift = drift.max(deg(e)?);
    }
    let mut noise = 0;
    for col in sys.diffusion() {
        for e in col {
            noise = noise.max(deg(e)?);
        }
    }
    Some((drift, noise))
}

/// How the global Lipschitz hypothesis is met: directly for affine fields,
/// otherwise through the polynomial-growth time change with the smallest
/// admissible exponent `p`, which also asks for `(1+|x|^p)²·D` integrable.
pub(crate) fn lipschitz_route(sys: &SdeSystem, d: Option<&DensityCandidate>) -> Result<ConditionReport, SynthError> {
    let mut r = ConditionReport::new("lipschitz_route");
    let Some((dd, nd)) = field_degrees(sys) else {
        r.push("fields", &[("kind", "non-polynomial".into())], Verdict::Inconclusive);
        r.settle(1);
        return Ok(r);
    };
    if dd.max(nd) <= 1 {
        r.push("global_lipschitz", &[("max_degree", dd.max(nd).to_string())], Verdict::Holds);
        r.settle(1);
        return Ok(r);
    }
    let Some(d) = d else {
        r.push(
            "global_lipschitz",
            &[("max_degree", dd.max(nd).to_string()), ("route", "requires time change".into())],
            Verdict::Inconclusive,
        );
        r.settle(1);
        return Ok(r);
    };
    let p = 1u32.max(dd.saturating_sub(1).div_ceil(2)).max(nd.saturating_sub(1));
    let growth = check_growth(sys, p)?;
    r.push("growth", &[("p", p.to_string())], growth.verdict);
    let weighted = match check_integrability(d, Some(p)) {
        Ok(w) => w.verdict,
        Err(OpsError::BaseVanishesOffOrigin(_)) => Verdict::Fails,
        Err(e) => return Err(e.into()),
    };
    r.push("weighted_integrability", &[("p", p.to_string())], weighted);
    r.settle(2);
    Ok(r)
}

fn at_origin(p: &QPoly) -> BigRational {
    p.eval_exact(&vec![BigRational::zero(); p.nvars()])
}

fn stabilize_shape(d: &DensityCandidate) -> ConditionReport {
    let b0 = at_origin(&d.base);
    let a0 = at_origin(&d.numerator);
    let singular = b0.is_zero() && d.gamma.is_positive() && a0.is_positive();
    single(
        "density_shape",
        "singular_at_origin",
        &[("base_at_origin", b0.to_string()), ("numerator_at_origin", a0.to_string())],
        if singular { Verdict::Holds } else { Verdict::Fails },
    )
}

fn escape_conditions(d: &DensityCandidate) -> Result<Vec<SideCondition>, SynthError> {
    let b0 = at_origin(&d.base);
    let neg = -d.gamma.clone();
    let smooth_power = !neg.is_negative() && (neg.is_integer() || neg >= BigRational::from_integer(2.into()));
    let c2 = if !b0.is_zero() || smooth_power {
        Verdict::Holds
    } else if d.gamma.is_positive() {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };
    let shape = single(
        "global_c2",
        "density_regular_everywhere",
        &[("base_at_origin", b0.to_string()), ("gamma", d.gamma.to_string())],
        c2,
    );
    let integ = match check_integrability(d, None) {
        Ok(r) => r.verdict,
        Err(OpsError::BaseVanishesOffOrigin(_)) => Verdict::Inconclusive,
        Err(e) => return Err(e.into()),
    };
    let non_integrable = match integ {
        Verdict::Fails | Verdict::Marginal => Verdict::Holds,
        Verdict::Holds => Verdict::Fails,
        Verdict::Inconclusive => Verdict::Inconclusive,
    };
    let ni = single("non_integrability", "radial_degree", &[("integrability", format!("{integ:?}"))], non_integrable);
    Ok(vec![mandatory(shape), advisory(ni)])
}

fn invariant_set_condition(gs: &[QPoly]) -> ConditionReport {
    let opts = SphereOptions::default();
    let bounded = gs.iter().any(|g| {
        let top = -g.top_form();
        g.degree().unwrap_or(0) > 0 && positivity_on_sphere(&top, &opts) == SpherePositivity::Positive
    });
    let origin_ok = gs.iter().all(|g| !at_origin(g).is_negative());
    let mut r = ConditionReport::new("invariant_set");
    r.push("bounded", &[], if bounded { Verdict::Holds } else { Verdict::Inconclusive });
    r.push("origin_in_closure", &[], if origin_ok { Verdict::Holds } else { Verdict::Fails });
    r.push("backward_invariance", &[("status", "user asserted".into())], Verdict::Inconclusive);
    r.settle(2);
    r
}

/// `target − ε(Σx²)^{deg/2}` when a margin is requested.
fn with_margin(target: &QPoly, eps: Option<&BigRational>) -> Result<QPoly, SosError> {
    let Some(eps) = eps else { return Ok(target.clone()) };
    let deg = target.degree().unwrap_or(0);
    if deg % 2 == 1 {
        return Err(SosError::OddDegree(deg));
    }
    Ok(target - &norm_power(target.nvars(), deg / 2, eps))
}

type SosRun = (Option<SosProblem>, Option<SosOutcome>, Vec<String>);

/// SOS test of `target ≥ 0`, globally or on `{g_i ≥ 0}`. Errors that only
/// mean "no certificate of this shape" become notes.
pub(crate) fn certify_nonnegative(target: &QPoly, mode: &Mode, opts: &VerifyOptions) -> Result<SosRun, SynthError> {
    let mut notes = Vec::new();
    if target.is_zero() {
        notes.push("target is identically zero, so it is not positive almost everywhere".into());
        return Ok((None, None, notes));
    }
    let t = match with_margin(target, opts.eps_pos.as_ref()) {
        Ok(t) => t,
        Err(e) => {
            notes.push(format!("positivity margin not applicable: {e}"));
            return Ok((None, None, notes));
        }
    };
    let built = match mode {
        Mode::InvariantSet(gs) if !gs.is_empty() => {
            let deg = t.degree().unwrap_or(0);
            let half: Vec<u32> = gs
                .iter()
                .map(|g| opts.multiplier_half_degree.unwrap_or(deg.saturating_sub(g.degree().unwrap_or(0)) / 2))
                .collect();
            localized_sos(&t, gs, &half, opts.degree_cap)
        }
        _ => build_sos_feasibility(&t),
    };
    let prob = match built {
        Ok(p) => p,
        Err(e @ SosError::OddDegree(_)) => {
            notes.push(format!("no SOS certificate possible: {e}"));
            return Ok((None, None, notes));
        }
        Err(e) => return Err(e.into()),
    };
    let outcome = solve_sos(&prob, &opts.sos);
    if !outcome.certified() {
        notes.push(format!("SDP status {:?}", outcome.status()));
    }
    Ok((Some(prob), Some(outcome), notes))
}

/// Checks `ℒ*D < 0` almost everywhere by clearing the base power and asking
/// for an SOS certificate of the negated polynomial part, then attaches the
/// side conditions of the chosen mode.
pub fn verify_density(
    sys: &SdeSystem,
    d: &DensityCandidate,
    mode: &Mode,
    opts: &VerifyOptions,
) -> Result<CertificateResult, SynthError> {
    if let Mode::InvariantSet(gs) = mode {
        if gs.is_empty() {
            return verify_density(sys, d, &Mode::Stabilize, opts);
        }
    }
    let sys = rebase(sys, &d.base)?;
    let density = d.to_bexpr()?;
    let generator = adjoint_generator(&sys, &density)?;
    let (p, shift) = generator.clear_base()?;
    let target = -&p;

    let mut conditions = Vec::new();
    match mode {
        Mode::Stabilize => {
            conditions.push(mandatory(equilibrium_condition(&sys)?));
            conditions.push(mandatory(integrability_condition(d)?));
            conditions.push(advisory(stabilize_shape(d)));
            conditions.push(advisory(lipschitz_route(&sys, Some(d))?));
        }
        Mode::Escape => {
            conditions.extend(escape_conditions(d)?);
            conditions.push(advisory(lipschitz_route(&sys, None)?));
        }
        Mode::InvariantSet(gs) => {
            conditions.push(mandatory(equilibrium_condition(&sys)?));
            conditions.push(mandatory(invariant_set_condition(gs)));
        }
    }

    let (sos_problem, outcome, notes) = certify_nonnegative(&target, mode, opts)?;
    let sos_ok = outcome.as_ref().is_some_and(|o| o.certified());
    Ok(CertificateResult {
        verdict: decide(sos_ok, &conditions, opts.strict),
        mode: mode.name().into(),
        density,
        controller: None,
        generator,
        target,
        shift,
        sign: -1,
        sos_problem,
        outcome,
        search: None,
        search_status: None,
        conditions,
        notes,
    })
}

/// [`verify_density`] on `K = {g_i ≥ 0}`; with no `g_i` this is the
/// whole-space check.
pub fn verify_on_invariant_set(
    sys: &SdeSystem,
    d: &DensityCandidate,
    gs: &[QPoly],
    opts: &VerifyOptions,
) -> Result<CertificateResult, SynthError> {
    verify_density(sys, d, &Mode::InvariantSet(gs.to_vec()), opts)
}

/// Deterministic criterion `∇·(fD) > 0` almost everywhere for `ẋ = f(x)`.
pub fn verify_deterministic(
    f: &[QPoly],
    d: &DensityCandidate,
    opts: &VerifyOptions,
) -> Result<CertificateResult, SynthError> {
    let density = d.to_bexpr()?;
    let generator = divergence_condition(f, &density).map_err(SynthError::from)?;
    let (target, shift) = generator.clear_base()?;

    let zero = vec![BigRational::zero(); d.nvars()];
    let eq = f.iter().all(|fi| fi.eval_exact(&zero).is_zero());
    let max_deg = f.iter().map(|fi| fi.degree().unwrap_or(0)).max().unwrap_or(0);
    let lip = single(
        "lipschitz_route",
        "global_lipschitz",
        &[("max_degree", max_deg.to_string())],
        if max_deg <= 1 { Verdict::Holds } else { Verdict::Inconclusive },
    );
    let conditions = vec![
        mandatory(single(
            "equilibrium",
            "field_vanishes_at_origin",
            &[],
            if eq { Verdict::Holds } else { Verdict::Fails },
        )),
        mandatory(integrability_condition(d)?),
        advisory(stabilize_shape(d)),
        advisory(lip),
    ];
    let (sos_problem, outcome, notes) = certify_nonnegative(&target, &Mode::Stabilize, opts)?;
    let sos_ok = outcome.as_ref().is_some_and(|o| o.certified());
    Ok(CertificateResult {
        verdict: decide(sos_ok, &conditions, opts.strict),
        mode: "deterministic".into(),
        density,
        controller: None,
        generator,
        target,
        shift,
        sign: 1,
        sos_problem,
        outcome,
        search: None,
        search_status: None,
        conditions,
        notes,
    })
}

/// Smallest value of `sign·generator·b^{-shift}`, divided by the largest
/// target coefficient, over `samples` uniform points of `[-radius, radius]^n`
/// where the base is positive. Certified results should stay above `-1e-6`.
pub fn soundness_margin(result: &CertificateResult, samples: usize, seed: u64, radius: f64) -> f64 {
    let n = result.generator.nvars();
    let gen = FloatBExpr::from_exact(&result.generator);
    let base = result.generator.base().to_f64();
    let shift = crate::poly::rat_to_f64(&result.shift);
    let scale = result.target.to_f64().max_abs_coeff().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut taken = 0;
    let mut tries = 0;
    while taken < samples && tries < 100 * samples {
        tries += 1;
        let x: Vec<f64> = (0..n).map(|_| radius * (2.0 * unit(&mut rng) - 1.0)).collect();
        let b = base.evaluate(&x);
        if b <= 0.0 {
            continue;
        }
        let v = f64::from(result.sign) * gen.eval(&x) * b.powf(-shift) / scale;
        if v.is_finite() {
            worst = worst.min(v);
            taken += 1;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;
    use crate::synth::CertVerdict;

    fn p(n: usize, t: &[(Vec<u32>, i64)]) -> QPoly {
        QPoly::from_int_terms(n, t)
    }

    #[test]
    fn one_dimensional_multiplicative_noise() {
        let b = Arc::new(p(1, &[(vec![2], 1)]));
        let x = QPoly::var(1, 0);
        let sys = SdeSystem::from_polys(b.clone(), vec![-&x], vec![vec![x]]).unwrap();
        let d = DensityCandidate::new(QPoly::one(1), b, rat(1, 1));
        let r = verify_density(&sys, &d, &Mode::Stabilize, &VerifyOptions::default()).unwrap();
        assert_eq!(r.verdict, CertVerdict::Certified);
        assert_eq!(r.target, QPoly::one(1));
        assert!(soundness_margin(&r, 200, 1, 3.0) >= -1e-6);
    }

    #[test]
    fn deterministic_examples() {
        let b = Arc::new(p(1, &[(vec![2], 1)]));
        let x = QPoly::var(1, 0);
        let d = DensityCandidate::new(QPoly::one(1), b, rat(1, 1));
        let opts = VerifyOptions::default();
        let stable = verify_deterministic(&[-&x], &d, &opts).unwrap();
        assert_eq!(stable.verdict, CertVerdict::Certified);
        assert_eq!(stable.target, QPoly::one(1));
        let unstable = verify_deterministic(std::slice::from_ref(&x), &d, &opts).unwrap();
        assert_eq!(unstable.verdict, CertVerdict::NotCertified);
        assert_eq!(unstable.target, QPoly::constant(1, rat(-1, 1)));
        let zero = verify_deterministic(&[QPoly::zero(1)], &d, &opts).unwrap();
        assert_eq!(zero.verdict, CertVerdict::NotCertified);
        assert!(zero.outcome.is_none());
    }

    #[test]
    fn base_vanishing_off_origin_fails_integrability() {
        let b = Arc::new(p(2, &[(vec![0, 2], 1)]));
        let d = DensityCandidate::new(QPoly::one(2), b, rat(1, 1));
        let r = integrability_condition(&d).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
    }

    #[test]
    fn strict_mode_blocks_marginal() {
        let mut r = ConditionReport::new("x");
        r.push("y", &[], Verdict::Marginal);
        r.settle(1);
        let conds = vec![advisory(r)];
        assert_eq!(decide(true, &conds, false), CertVerdict::Certified);
        assert_eq!(decide(true, &conds, true), CertVerdict::Marginal);
        assert_eq!(decide(false, &conds, false), CertVerdict::NotCertified);
    }
}
