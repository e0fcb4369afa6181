//! Finite sums `Σ p_j · b^{q_j}` over one shared base polynomial `b`.
//!
//! The normal form keeps at most one term per residue class of the power
//! modulo 1, with the power raised until the coefficient polynomial is no
//! longer divisible by `b`. Two expressions denote the same function on
//! `{b > 0}` exactly when their normal forms are equal, so identities can be
//! checked with `==`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::monomial::default_names;
use super::polynomial::{exact_point, rat_to_f64, QPoly};
use super::PolyError;

#[derive(Clone, Debug)]
pub struct BExpr {
    base: Arc<QPoly>,
    terms: Vec<(QPoly, BigRational)>,
}

impl PartialEq for BExpr {
    fn eq(&self, other: &Self) -> bool {
        same_base(&self.base, &other.base) && self.terms == other.terms
    }
}

fn same_base(a: &Arc<QPoly>, b: &Arc<QPoly>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn frac(q: &BigRational) -> BigRational {
    q - q.floor()
}

fn int_exponent(q: &BigRational) -> Option<i64> {
    if q.is_integer() {
        q.to_integer().to_i64()
    } else {
        None
    }
}

impl BExpr {
    /// Builds an expression from raw `(coefficient, power)` terms and brings
    /// it to normal form.
    pub fn new(base: Arc<QPoly>, terms: Vec<(QPoly, BigRational)>) -> Result<Self, PolyError> {
        if base.is_zero() {
            return Err(PolyError::ZeroBase);
        }
        for (p, _) in &terms {
            if p.nvars() != base.nvars() {
                return Err(PolyError::DimensionMismatch { left: base.nvars(), right: p.nvars() });
            }
        }
        let terms = normalize(&base, terms);
        Ok(BExpr { base, terms })
    }

    pub fn zero(base: &Arc<QPoly>) -> Self {
        BExpr { base: base.clone(), terms: Vec::new() }
    }

    pub fn from_poly(p: QPoly, base: &Arc<QPoly>) -> Result<Self, PolyError> {
        Self::new(base.clone(), vec![(p, BigRational::zero())])
    }

    pub fn constant(c: BigRational, base: &Arc<QPoly>) -> Self {
        Self::new(base.clone(), vec![(QPoly::constant(base.nvars(), c), BigRational::zero())])
            .expect("base already validated")
    }

    /// `b^q`.
    pub fn power(base: &Arc<QPoly>, q: BigRational) -> Result<Self, PolyError> {
        Self::new(base.clone(), vec![(QPoly::one(base.nvars()), q)])
    }

    /// `p · b^q`.
    pub fn term(p: QPoly, q: BigRational, base: &Arc<QPoly>) -> Result<Self, PolyError> {
        Self::new(base.clone(), vec![(p, q)])
    }

    pub fn base(&self) -> &Arc<QPoly> {
        &self.base
    }

    pub fn nvars(&self) -> usize {
        self.base.nvars()
    }

    /// Normal-form terms, sorted by power.
    pub fn terms(&self) -> &[(QPoly, BigRational)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn check_base(&self, other: &Self) -> Result<(), PolyError> {
        if self.nvars() != other.nvars() {
            return Err(PolyError::DimensionMismatch { left: self.nvars(), right: other.nvars() });
        }
        if !same_base(&self.base, &other.base) {
            return Err(PolyError::BaseMismatch);
        }
        Ok(())
    }

    fn rebuild(&self, raw: Vec<(QPoly, BigRational)>) -> Self {
        BExpr { base: self.base.clone(), terms: normalize(&self.base, raw) }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_base(other)?;
        let mut raw = self.terms.clone();
        raw.extend(other.terms.iter().cloned());
        Ok(self.rebuild(raw))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.try_add(&other.neg())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_base(other)?;
        let mut raw = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (p1, q1) in &self.terms {
            for (p2, q2) in &other.terms {
                raw.push((p1 * p2, q1 + q2));
            }
        }
        Ok(self.rebuild(raw))
    }

    pub fn mul_poly(&self, p: &QPoly) -> Result<Self, PolyError> {
        if p.nvars() != self.nvars() {
            return Err(PolyError::DimensionMismatch { left: self.nvars(), right: p.nvars() });
        }
        Ok(self.rebuild(self.terms.iter().map(|(c, q)| (c * p, q.clone())).collect()))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        self.rebuild(self.terms.iter().map(|(p, q)| (p.scale(c), q.clone())).collect())
    }

    pub fn neg(&self) -> Self {
        BExpr { base: self.base.clone(), terms: self.terms.iter().map(|(p, q)| (-p, q.clone())).collect() }
    }

    /// ∂/∂x_i via `∂(p·b^q) = p'·b^q + q·p·b'·b^{q-1}`.
    pub fn partial_derivative(&self, i: usize) -> Self {
        let db = self.base.partial_derivative(i);
        let mut raw = Vec::with_capacity(2 * self.terms.len());
        for (p, q) in &self.terms {
            raw.push((p.partial_derivative(i), q.clone()));
            if !q.is_zero() && !db.is_zero() {
                raw.push((&p.scale(q) * &db, q - BigRational::one()));
            }
        }
        self.rebuild(raw)
    }

    /// Evaluates at a binary64 point. Integer-power terms are summed exactly
    /// and rounded once; fractional powers are finished in binary64.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        let x = exact_point(point, self.nvars())?;
        let b = self.base.eval_exact(&x);
        let mut exact = BigRational::zero();
        let mut float_part = 0.0;
        for (p, q) in &self.terms {
            let pv = p.eval_exact(&x);
            match int_exponent(q) {
                Some(k) => {
                    if k < 0 && b.is_zero() {
                        return Err(PolyError::BaseVanishes);
                    }
                    exact += pv * pow_rat(&b, k);
                }
                None => {
                    if b.is_zero() {
                        return Err(PolyError::BaseVanishes);
                    }
                    if b.is_negative() {
                        return Err(PolyError::NegativeBase { power: q.to_string() });
                    }
                    float_part += rat_to_f64(&pv) * rat_to_f64(&b).powf(rat_to_f64(q));
                }
            }
        }
        Ok(rat_to_f64(&exact) + float_part)
    }

    /// Splits the expression as `p · b^shift` with `shift` the smallest power.
    pub fn clear_base(&self) -> Result<(QPoly, BigRational), PolyError> {
        let Some((_, qmin)) = self.terms.first() else {
            return Ok((QPoly::zero(self.nvars()), BigRational::zero()));
        };
        let qmin = qmin.clone();
        if self.terms.iter().any(|(_, q)| !(q - &qmin).is_integer()) {
            return Err(PolyError::NonIntegerGap { powers: self.terms.iter().map(|(_, q)| q.to_string()).collect() });
        }
        let p = self.clear_with_shift(&qmin)?;
        Ok((p, qmin))
    }

    /// The polynomial `P` with `self = P · b^shift`; every power must sit a
    /// nonnegative integer above `shift`.
    pub fn clear_with_shift(&self, shift: &BigRational) -> Result<QPoly, PolyError> {
        let mut acc = QPoly::zero(self.nvars());
        for (p, q) in &self.terms {
            let gap = q - shift;
            if !gap.is_integer() || gap.is_negative() {
                return Err(PolyError::InvalidShift { shift: shift.to_string() });
            }
            let k = gap.to_integer().to_u32().ok_or(PolyError::InvalidShift { shift: shift.to_string() })?;
            acc = &acc + &(p * &self.base.pow(k));
        }
        Ok(acc)
    }

    /// The expression as a plain polynomial, when it is one.
    pub fn as_polynomial(&self) -> Option<QPoly> {
        self.clear_with_shift(&BigRational::zero()).ok()
    }

    /// Whether the expression is exactly zero at the origin.
    pub fn vanishes_at_origin(&self) -> Result<bool, PolyError> {
        let zero = vec![BigRational::zero(); self.nvars()];
        let b = self.base.eval_exact(&zero);
        let mut exact = BigRational::zero();
        let mut float_part = 0.0;
        for (p, q) in &self.terms {
            let pv = p.eval_exact(&zero);
            if b.is_zero() {
                if q.is_negative() {
                    return Err(PolyError::BaseVanishes);
                }
                if q.is_zero() {
                    exact += pv;
                }
                continue;
            }
            if pv.is_zero() {
                continue;
            }
            match int_exponent(q) {
                Some(k) => exact += pv * pow_rat(&b, k),
                None if b.is_negative() => return Err(PolyError::NegativeBase { power: q.to_string() }),
                None => float_part += rat_to_f64(&pv) * rat_to_f64(&b).powf(rat_to_f64(q)),
            }
        }
        Ok(exact.is_zero() && float_part == 0.0)
    }

    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        self.terms
            .iter()
            .map(|(p, q)| {
                if q.is_zero() {
                    p.render(names)
                } else if p.len() == 1 && p.is_constant() {
                    format!("{}*base^({})", p.render(names), q)
                } else {
                    format!("({})*base^({})", p.render(names), q)
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

impl fmt::Display for BExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&default_names(self.nvars())))
    }
}

fn pow_rat(b: &BigRational, k: i64) -> BigRational {
    if k >= 0 {
        num_traits::pow::pow(b.clone(), k as usize)
    } else {
        num_traits::pow::pow(b.recip(), (-k) as usize)
    }
}

fn normalize(base: &QPoly, raw: Vec<(QPoly, BigRational)>) -> Vec<(QPoly, BigRational)> {
    if base.is_constant() {
        return normalize_constant_base(base, raw);
    }
    let mut classes: BTreeMap<BigRational, Vec<(QPoly, BigRational)>> = BTreeMap::new();
    for (p, q) in raw {
        if p.is_zero() {
            continue;
        }
        classes.entry(frac(&q)).or_default().push((p, q));
    }
    let mut out = Vec::with_capacity(classes.len());
    let mut powers: Vec<QPoly> = vec![QPoly::one(base.nvars())];
    for (_, group) in classes {
        let qmin = group.iter().map(|(_, q)| q).min().cloned().expect("nonempty class");
        let mut acc = QPoly::zero(base.nvars());
        for (p, q) in group {
            let k = (q - &qmin).to_integer().to_usize().expect("small power gap");
            while powers.len() <= k {
                let next = powers.last().expect("nonempty") * base;
                powers.push(next);
            }
            acc = &acc + &(&p * &powers[k]);
        }
        if acc.is_zero() {
            continue;
        }
        let mut q = qmin;
        let bdeg = base.degree().unwrap_or(0);
        while acc.degree().unwrap_or(0) >= bdeg {
            match acc.div_exact(base) {
                Some(r) => {
                    acc = r;
                    q += BigRational::one();
                }
                None => break,
            }
        }
        out.push((acc, q));
    }
    out.sort_by(|a, b| a.1.cmp(&b.1));
    out
}

// A constant base c folds integer parts of powers into the coefficients,
// leaving one term per class with power in [0, 1).
fn normalize_constant_base(base: &QPoly, raw: Vec<(QPoly, BigRational)>) -> Vec<(QPoly, BigRational)> {
    let c = base.constant_term();
    let mut classes: BTreeMap<BigRational, QPoly> = BTreeMap::new();
    for (p, q) in raw {
        if p.is_zero() {
            continue;
        }
        let fl = q.floor().to_integer().to_i64().expect("small power");
        let f = frac(&q);
        let scaled = p.scale(&pow_rat(&c, fl));
        let slot = classes.entry(f).or_insert_with(|| QPoly::zero(base.nvars()));
        *slot = &*slot + &scaled;
    }
    classes.into_iter().filter(|(_, p)| !p.is_zero()).map(|(q, p)| (p, q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn xz_base() -> Arc<QPoly> {
        let x = QPoly::var(2, 0);
        let z = QPoly::var(2, 1);
        Arc::new(&x.pow(2) + &z.pow(2))
    }

    #[test]
    fn power_rule() {
        let b = xz_base();
        let e = BExpr::power(&b, rat(-2, 1)).unwrap();
        let d = e.partial_derivative(0);
        let expected = BExpr::term(QPoly::var(2, 0).scale(&rat(-4, 1)), rat(-3, 1), &b).unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn chain_rule_half_power() {
        let p = QPoly::var(1, 0);
        let b = Arc::new(&QPoly::constant(1, rat(2, 1)) + &p.pow(2));
        let e = BExpr::power(&b, rat(1, 2)).unwrap();
        let expected = BExpr::term(p, rat(-1, 2), &b).unwrap();
        assert_eq!(e.partial_derivative(0), expected);
    }

    #[test]
    fn evaluation_examples() {
        let b = xz_base();
        let e = BExpr::power(&b, rat(-2, 1)).unwrap();
        assert_eq!(e.evaluate(&[1.0, 1.0]).unwrap(), 0.25);
        assert_eq!(e.evaluate(&[0.0, 0.0]), Err(PolyError::BaseVanishes));

        let p = QPoly::var(1, 0);
        let b1 = Arc::new(&QPoly::constant(1, rat(2, 1)) + &p.pow(2));
        let s = BExpr::power(&b1, rat(1, 2)).unwrap();
        assert!((s.evaluate(&[0.0]).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn negative_base_with_fractional_power() {
        let x = QPoly::var(1, 0);
        let b = Arc::new(x);
        let e = BExpr::power(&b, rat(1, 2)).unwrap();
        assert!(matches!(e.evaluate(&[-1.0]), Err(PolyError::NegativeBase { .. })));
    }

    #[test]
    fn clear_base_examples() {
        let b = xz_base();
        let e = BExpr::power(&b, rat(-2, 1)).unwrap().scale(&rat(-3, 1));
        let (p, shift) = e.clear_base().unwrap();
        assert_eq!(p, QPoly::constant(2, rat(-3, 1)));
        assert_eq!(shift, rat(-2, 1));

        let e = BExpr::new(b.clone(), vec![(QPoly::one(2), rat(1, 1)), (QPoly::constant(2, rat(2, 1)), rat(0, 1))])
            .unwrap();
        let (p, shift) = e.clear_base().unwrap();
        assert_eq!(p, &*b + &QPoly::constant(2, rat(2, 1)));
        assert_eq!(shift, rat(0, 1));
    }

    #[test]
    fn clear_base_rejects_non_integer_gap() {
        let b = xz_base();
        let e = BExpr::new(b.clone(), vec![(QPoly::one(2), rat(-1, 2)), (QPoly::var(2, 0), rat(-1, 1))]).unwrap();
        assert!(matches!(e.clear_base(), Err(PolyError::NonIntegerGap { .. })));
    }

    #[test]
    fn normal_form_absorbs_base_factors() {
        let b = xz_base();
        // (x^2+z^2)·b^{-3} == b^{-2}
        let e = BExpr::term((*b).clone(), rat(-3, 1), &b).unwrap();
        assert_eq!(e, BExpr::power(&b, rat(-2, 1)).unwrap());
        // b^{1/2}·b^{1/2} == b
        let h = BExpr::power(&b, rat(1, 2)).unwrap();
        assert_eq!(h.try_mul(&h).unwrap(), BExpr::from_poly((*b).clone(), &b).unwrap());
    }

    #[test]
    fn base_mismatch() {
        let b1 = xz_base();
        let b2 = Arc::new(QPoly::var(2, 0));
        let e1 = BExpr::power(&b1, rat(1, 1)).unwrap();
        let e2 = BExpr::power(&b2, rat(1, 1)).unwrap();
        assert_eq!(e1.try_add(&e2), Err(PolyError::BaseMismatch));
    }

    #[test]
    fn constant_base_folds_integer_powers() {
        let b = Arc::new(QPoly::constant(1, rat(4, 1)));
        let e = BExpr::power(&b, rat(-3, 2)).unwrap();
        // 4^{-3/2} = 4^{-2} · 4^{1/2}
        assert_eq!(e.terms()[0].1, rat(1, 2));
        assert_eq!(e.terms()[0].0, QPoly::constant(1, rat(1, 16)));
        assert!((e.evaluate(&[3.0]).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn render_form() {
        let b = xz_base();
        let e = BExpr::power(&b, rat(-2, 1)).unwrap().scale(&rat(-3, 1));
        assert_eq!(e.render(&names(&["x", "z"])), "-3*base^(-2)");
    }
}
