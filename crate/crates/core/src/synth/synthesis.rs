use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::mc::unit;
use crate::ops::{
    adjoint_generator, divergence_condition, positivity_on_sphere, ConditionReport, OpsError, SdeSystem, SphereOptions,
    SpherePositivity, Verdict,
};
use crate::poly::{monomials_up_to, BExpr, Monomial, QPoly};
use crate::sdp::SdpStatus;
use crate::sos::{norm_power, solve_sos, GramBlock, MonomialBasis, SosError, SosIdentity, SosProblem};

use super::verify::{
    advisory, certify_nonnegative, equilibrium_condition, integrability_condition, lipschitz_route, mandatory, rebase,
};
use super::{decide, CertVerdict, CertificateResult, Mode, SideCondition, SynthError, VerifyOptions};

/// Drift `X₀ + u·Ỹ` with a scalar input `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledSdeSystem {
    system: SdeSystem,
    control: Vec<BExpr>,
}

impl ControlledSdeSystem {
    pub fn new(system: SdeSystem, control: Vec<BExpr>) -> Result<Self, OpsError> {
        if control.len() != system.nvars() {
            return Err(OpsError::Shape(format!(
                "control channel has {} entries for {} variables",
                control.len(),
                system.nvars()
            )));
        }
        if control.iter().any(|e| e.nvars() != system.nvars() || **e.base() != **system.base()) {
            return Err(OpsError::Shape("control channel must share the system's variables and base".into()));
        }
        Ok(ControlledSdeSystem { system, control })
    }

    pub fn from_polys(
        base: Arc<QPoly>,
        drift: Vec<QPoly>,
        diffusion: Vec<Vec<QPoly>>,
        control: Vec<QPoly>,
    ) -> Result<Self, OpsError> {
        let system = SdeSystem::from_polys(base.clone(), drift, diffusion)?;
        let control = control.into_iter().map(|p| BExpr::from_poly(p, &base)).collect::<Result<Vec<_>, _>>()?;
        Self::new(system, control)
    }

    pub fn system(&self) -> &SdeSystem {
        &self.system
    }

    pub fn control(&self) -> &[BExpr] {
        &self.control
    }

    /// The uncontrolled system with `u` fixed to the polynomial `c/λ`.
    pub fn close_with_polynomial(&self, u: &QPoly) -> Result<SdeSystem, SynthError> {
        let drift = self
            .system
            .drift()
            .iter()
            .zip(&self.control)
            .map(|(x0, y)| x0.try_add(&y.mul_poly(u)?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.system.with_drift(drift)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisSpec {
    pub base: QPoly,
    pub gamma: BigRational,
    pub deg_a: u32,
    pub deg_c: u32,
    /// `a(0)`; must be positive.
    pub lambda: BigRational,
    pub mode: Mode,
}

/// Feedback `u = c/a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    pub numerator: QPoly,
    pub denominator: QPoly,
}

impl Controller {
    /// `c/a` as a polynomial when `a` is constant.
    pub fn as_polynomial(&self) -> Option<QPoly> {
        if !self.denominator.is_constant() {
            return None;
        }
        let a0 = self.denominator.constant_term();
        Some(self.numerator.scale(&(BigRational::from_integer(1.into()) / a0)))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.numerator.to_f64().evaluate(x) / self.denominator.to_f64().evaluate(x)
    }

    pub fn render(&self, names: &[String]) -> String {
        match self.as_polynomial() {
            Some(p) => p.render(names),
            None => format!("({}) / ({})", self.numerator.render(names), self.denominator.render(names)),
        }
    }

    /// Display form with `digits` significant figures per coefficient.
    pub fn render_rounded(&self, names: &[String], digits: usize) -> String {
        use crate::sos::render_float;
        match self.as_polynomial() {
            Some(p) => render_float(&p.to_f64(), names, digits),
            None => format!(
                "({}) / ({})",
                render_float(&self.numerator.to_f64(), names, digits),
                render_float(&self.denominator.to_f64(), names, digits)
            ),
        }
    }
}

/// Rounds every value to a common decimal grid, `digits` significant
/// figures of the largest magnitude. Values below `1e-6` of the largest are
/// taken as solver noise around an exact zero: SOS feasible sets often sit
/// on a face of the cone where some coefficients must vanish exactly.
pub(crate) fn quantize(values: &[f64], digits: i32) -> Vec<BigRational> {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return vec![BigRational::zero(); values.len()];
    }
    let e = m.log10().floor() as i32 - (digits - 1);
    let ten = BigInt::from(10);
    let unit = if e >= 0 {
        BigRational::from_integer(num_traits::pow(ten, e as usize))
    } else {
        BigRational::new(BigInt::from(1), num_traits::pow(ten, (-e) as usize))
    };
    values
        .iter()
        .map(|&v| {
            if v.abs() < 1e-6 * m {
                return BigRational::zero();
            }
            let k = (v / 10f64.powi(e)).round();
            BigRational::from_integer(BigInt::from(k as i64)) * &unit
        })
        .collect()
}

fn at_origin(p: &QPoly) -> BigRational {
    p.eval_exact(&vec![BigRational::zero(); p.nvars()])
}

struct Layout {
    a_monos: Vec<Monomial>,
    c_monos: Vec<Monomial>,
    /// Indices into `c_monos` that enter the target.
    c_kept: Vec<usize>,
}

/// Searches `a = λ + p` (`p` SOS, `p(0) = 0`) and `c` (`c(0) = 0`) with
/// `−b^{γ+2}ℒ*(a·b^{-γ})` SOS, where the control contributes
/// `∇·(Ỹ c b^{-γ})`. The program is affine in the coefficients of `a`, `c`.
pub fn synthesize_controller(
    sys: &ControlledSdeSystem,
    spec: &SynthesisSpec,
    opts: &VerifyOptions,
) -> Result<CertificateResult, SynthError> {
    let n = sys.system().nvars();
    if spec.base.nvars() != n {
        return Err(SynthError::Spec(format!("base has {} variables, system has {n}", spec.base.nvars())));
    }
    if !spec.lambda.is_positive() {
        return Err(SynthError::Spec("lambda must be positive".into()));
    }
    let mut notes = Vec::new();
    if !matches!(spec.mode, Mode::Escape) && !at_origin(&spec.base).is_zero() {
        return Err(SynthError::Spec("base must vanish at the origin".into()));
    }
    if spec.base.degree().unwrap_or(0) > 0 {
        match positivity_on_sphere(&spec.base.top_form(), &SphereOptions::default()) {
            SpherePositivity::Positive => {}
            SpherePositivity::FoundZero(pt) => return Err(OpsError::BaseVanishesOffOrigin(pt).into()),
            SpherePositivity::Unknown => notes.push("positivity of the base's leading form is unproven".into()),
        }
    }

    let base = Arc::new(spec.base.clone());
    let plant = rebase(sys.system(), &base)?;
    let control: Vec<QPoly> = sys
        .control()
        .iter()
        .map(|e| e.as_polynomial().ok_or_else(|| SynthError::Spec(format!("control entry {e} is not polynomial"))))
        .collect::<Result<_, _>>()?;

    let neg_gamma = -spec.gamma.clone();
    let shift = &neg_gamma - BigRational::from_integer(2.into());
    let gen_a = |m: QPoly| -> Result<QPoly, SynthError> {
        let g = adjoint_generator(&plant, &BExpr::term(m, neg_gamma.clone(), &base)?)?;
        Ok(-g.clear_with_shift(&shift)?)
    };
    let gen_c = |m: QPoly| -> Result<QPoly, SynthError> {
        let g = divergence_condition(&control, &BExpr::term(m, neg_gamma.clone(), &base)?)?;
        Ok(g.clear_with_shift(&shift)?)
    };

    let half_a = spec.deg_a / 2;
    if spec.deg_a % 2 == 1 {
        notes.push(format!("deg_a = {} is odd; the SOS part of a uses degree {}", spec.deg_a, 2 * half_a));
    }
    let a_monos = if half_a > 0 { monomials_up_to(n, 1, 2 * half_a) } else { Vec::new() };
    let c_monos = if spec.deg_c > 0 { monomials_up_to(n, 1, spec.deg_c) } else { Vec::new() };

    let mut n0 = gen_a(QPoly::constant(n, spec.lambda.clone()))?;
    let mut params: Vec<(usize, QPoly)> = Vec::new();
    let mut labels = Vec::new();
    let names = crate::poly::default_names(n);
    for m in &a_monos {
        params.push((params.len(), gen_a(QPoly::monomial(m.clone(), BigRational::from_integer(1.into())))?));
        labels.push(format!("a[{}]", m.render(&names)));
    }
    let mut c_kept = Vec::new();
    for (k, m) in c_monos.iter().enumerate() {
        let nj = gen_c(QPoly::monomial(m.clone(), BigRational::from_integer(1.into())))?;
        if nj.is_zero() {
            continue;
        }
        c_kept.push(k);
        params.push((params.len(), nj));
        labels.push(format!("c[{}]", m.render(&names)));
    }
    let layout = Layout { a_monos, c_monos, c_kept };

    let top = params.iter().map(|(_, p)| p.degree().unwrap_or(0)).chain([n0.degree().unwrap_or(0)]).max().unwrap_or(0);
    if top > opts.degree_cap {
        return Err(SosError::DegreeOverflow { degree: top, cap: opts.degree_cap }.into());
    }
    let local = matches!(&spec.mode, Mode::InvariantSet(gs) if !gs.is_empty());
    if top % 2 == 1 && !local {
        return Err(SosError::OddDegree(top).into());
    }
    if let Some(eps) = &opts.eps_pos {
        n0 = &n0 - &norm_power(n, top.div_ceil(2), eps);
    }

    let mut blocks = Vec::new();
    match &spec.mode {
        Mode::InvariantSet(gs) if !gs.is_empty() => {
            let d0 = top.div_ceil(2);
            blocks.push(GramBlock {
                label: "sigma0".into(),
                basis: MonomialBasis::dense(n, 0, d0),
                identity: 0,
                multiplier: QPoly::one(n),
            });
            for (i, g) in gs.iter().enumerate() {
                let h = opts.multiplier_half_degree.unwrap_or(top.saturating_sub(g.degree().unwrap_or(0)) / 2);
                blocks.push(GramBlock {
                    label: format!("sigma{}", i + 1),
                    basis: MonomialBasis::dense(n, 0, h),
                    identity: 0,
                    multiplier: g.clone(),
                });
            }
        }
        _ => {
            let support: Vec<Monomial> = n0
                .terms()
                .map(|(m, _)| m.clone())
                .chain(params.iter().flat_map(|(_, p)| p.terms().map(|(m, _)| m.clone())))
                .collect();
            blocks.push(GramBlock {
                label: "target".into(),
                basis: MonomialBasis::half_newton(n, support.iter()),
                identity: 0,
                multiplier: QPoly::one(n),
            });
        }
    }
    let mut identities = vec![SosIdentity { label: "target".into(), constant: n0.clone(), params: params.clone() }];
    if !layout.a_monos.is_empty() {
        identities.push(SosIdentity {
            label: "a_sos_part".into(),
            constant: QPoly::zero(n),
            params: layout
                .a_monos
                .iter()
                .enumerate()
                .map(|(j, m)| (j, QPoly::monomial(m.clone(), BigRational::from_integer(1.into()))))
                .collect(),
        });
        blocks.push(GramBlock {
            label: "a_sos_part".into(),
            basis: MonomialBasis::new(monomials_up_to(n, 1, half_a)),
            identity: 1,
            multiplier: QPoly::one(n),
        });
    }
    let prob = SosProblem::assemble(n, blocks, labels, identities, Vec::new())?;
    let outcome = solve_sos(&prob, &opts.sos);

    let theta: Vec<BigRational> = match outcome.certificate.as_ref().filter(|_| outcome.certified()) {
        Some(cert) => quantize(&cert.params, 12),
        None => {
            notes.push(format!(
                "no certificate for gamma = {}, deg_a = {}, deg_c = {} (SDP status {:?})",
                spec.gamma,
                spec.deg_a,
                spec.deg_c,
                outcome.status()
            ));
            vec![BigRational::zero(); prob.param_labels.len()]
        }
    };
    let searched = outcome.certified();
    let search_status = outcome.status();

    let mut a = QPoly::constant(n, spec.lambda.clone());
    for (j, m) in layout.a_monos.iter().enumerate() {
        a = &a + &QPoly::monomial(m.clone(), theta[j].clone());
    }
    let mut c = QPoly::zero(n);
    for (slot, &k) in layout.c_kept.iter().enumerate() {
        c = &c + &QPoly::monomial(layout.c_monos[k].clone(), theta[layout.a_monos.len() + slot].clone());
    }
    let density = BExpr::term(a.clone(), neg_gamma.clone(), &base)?;
    let generator = adjoint_generator(&plant, &density)?
        .try_sub(&divergence_condition(&control, &BExpr::term(c.clone(), neg_gamma.clone(), &base)?)?)?;
    let target = -generator.clear_with_shift(&shift)?;
    let controller = Controller { numerator: c, denominator: a.clone() };

    let dc = crate::ops::DensityCandidate::new(a.clone(), base.clone(), spec.gamma.clone());
    let mut conditions: Vec<SideCondition> = vec![mandatory(controller_condition(&controller, spec))];
    match &spec.mode {
        Mode::Stabilize => {
            conditions.push(mandatory(equilibrium_condition(&plant)?));
            conditions.push(mandatory(integrability_condition(&dc)?));
        }
        Mode::Escape => {}
        Mode::InvariantSet(_) => conditions.push(mandatory(equilibrium_condition(&plant)?)),
    }
    if let Some(u) = controller.as_polynomial() {
        let channel = control.iter().map(|p| BExpr::from_poly(p.clone(), &base)).collect::<Result<Vec<_>, _>>()?;
        let closed = ControlledSdeSystem::new(plant.clone(), channel)?.close_with_polynomial(&u)?;
        let route = if matches!(spec.mode, Mode::Stabilize) {
            lipschitz_route(&closed, Some(&dc))?
        } else {
            lipschitz_route(&closed, None)?
        };
        conditions.push(advisory(route));
    }
    conditions.push(advisory(positivity_sample(&a)));

    // The certificate reported is for the exact rounded controller, not the
    // solver's floating-point point.
    let (check_problem, check, check_notes) =
        if searched { certify_nonnegative(&target, &spec.mode, opts)? } else { (None, None, Vec::new()) };
    notes.extend(check_notes);
    let sos_ok = check.as_ref().is_some_and(|o| o.certified());

    Ok(CertificateResult {
        verdict: if sos_ok { decide(true, &conditions, opts.strict) } else { CertVerdict::NotCertified },
        mode: spec.mode.name().into(),
        density,
        controller: Some(controller),
        generator,
        target,
        shift,
        sign: -1,
        sos_problem: check_problem,
        outcome: check,
        search: Some(prob),
        search_status: Some(search_status),
        conditions,
        notes,
    })
}

fn controller_condition(ctrl: &Controller, spec: &SynthesisSpec) -> ConditionReport {
    let a0 = at_origin(&ctrl.denominator);
    let c0 = at_origin(&ctrl.numerator);
    let mut r = ConditionReport::new("controller");
    r.push(
        "a_at_origin",
        &[("value", a0.to_string())],
        if a0 == spec.lambda && a0.is_positive() { Verdict::Holds } else { Verdict::Fails },
    );
    r.push(
        "u_at_origin",
        &[("c_at_origin", c0.to_string())],
        if c0.is_zero() { Verdict::Holds } else { Verdict::Fails },
    );
    r.settle(2);
    r
}

/// `a > 0` on 1000 deterministic samples of `[-1, 1]^n`.
fn positivity_sample(a: &QPoly) -> ConditionReport {
    let n = a.nvars();
    let af = a.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut min = f64::INFINITY;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..n).map(|_| 2.0 * unit(&mut rng) - 1.0).collect();
        min = min.min(af.evaluate(&x));
    }
    let mut r = ConditionReport::new("denominator_positive");
    r.push(
        "box_sample",
        &[("box", "[-1, 1]^n".into()), ("min", format!("{min}"))],
        if min > 0.0 { Verdict::Holds } else { Verdict::Fails },
    );
    r.settle(1);
    r
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub gamma: String,
    pub deg_c: u32,
    pub verdict: Option<CertVerdict>,
    /// Status of the search SDP; the re-verification status is in `status`.
    pub search_status: Option<SdpStatus>,
    pub status: Option<SdpStatus>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

/// Runs the synthesis over a `(γ, deg c)` grid, rows in grid order.
pub fn sweep(
    sys: &ControlledSdeSystem,
    spec: &SynthesisSpec,
    gammas: &[BigRational],
    deg_cs: &[u32],
    opts: &VerifyOptions,
) -> Vec<SweepRow> {
    let grid: Vec<(BigRational, u32)> =
        gammas.iter().flat_map(|g| deg_cs.iter().map(move |&d| (g.clone(), d))).collect();
    grid.par_iter()
        .map(|(g, d)| {
            let s = SynthesisSpec { gamma: g.clone(), deg_c: *d, ..spec.clone() };
            match synthesize_controller(sys, &s, opts) {
                Ok(r) => SweepRow {
                    gamma: g.to_string(),
                    deg_c: *d,
                    verdict: Some(r.verdict),
                    search_status: r.search_status,
                    status: r.outcome.as_ref().map(|o| o.status()),
                    notes: r.notes,
                    error: None,
                },
                Err(e) => SweepRow {
                    gamma: g.to_string(),
                    deg_c: *d,
                    verdict: None,
                    search_status: None,
                    status: None,
                    notes: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
