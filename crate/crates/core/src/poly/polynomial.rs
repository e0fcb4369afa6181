use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};

use super::monomial::{default_names, Monomial};
use super::{Coeff, PolyError};

/// Sparse multivariate polynomial with coefficients in `C`.
///
/// Zero coefficients are never stored, and every monomial has exactly
/// `nvars` exponents. Terms iterate in ascending graded-lex order.
#[derive(Clone, PartialEq, Debug)]
pub struct Polynomial<C: Coeff> {
    nvars: usize,
    terms: BTreeMap<Monomial, C>,
}

/// Exact polynomial over arbitrary-precision rationals.
pub type QPoly = Polynomial<BigRational>;
/// Binary64 polynomial used by the numeric layers.
pub type FPoly = Polynomial<f64>;

impl<C: Coeff> Polynomial<C> {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, C::one())
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::var(nvars, i), C::one());
        p
    }

    pub fn monomial(m: Monomial, c: C) -> Self {
        let mut p = Self::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, combining
    /// repeated monomials.
    ///
    /// # Panics
    /// If an exponent vector does not have `nvars` entries.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, C)>,
    {
        let mut p = Self::zero(nvars);
        for (exps, c) in terms {
            assert_eq!(exps.len(), nvars, "monomial arity does not match polynomial");
            p.add_term(Monomial::new(exps), c);
        }
        p
    }

    pub(crate) fn add_term(&mut self, m: Monomial, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &C)> + '_ {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    /// Smallest total degree among the stored terms.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).min()
    }

    pub fn is_constant(&self) -> bool {
        self.degree().unwrap_or(0) == 0
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&Monomial::one(self.nvars))
    }

    /// Leading term in graded-lex order.
    pub fn leading(&self) -> Option<(&Monomial, &C)> {
        self.terms.iter().next_back()
    }

    pub fn homogeneous_part(&self, d: u32) -> Self {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().filter(|(m, _)| m.degree() == d).map(|(m, c)| (m.clone(), c.clone())).collect(),
        }
    }

    /// Highest-degree homogeneous component.
    pub fn top_form(&self) -> Self {
        match self.degree() {
            Some(d) => self.homogeneous_part(d),
            None => self.clone(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match (self.min_degree(), self.degree()) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }

    /// Componentwise maximum exponent over the support (zeros if empty).
    pub fn max_exponents(&self) -> Vec<u32> {
        let mut out = vec![0; self.nvars];
        for m in self.terms.keys() {
            for (o, &e) in out.iter_mut().zip(m.exps()) {
                *o = (*o).max(e);
            }
        }
        out
    }

    /// Componentwise minimum exponent over the support (zeros if empty).
    pub fn min_exponents(&self) -> Vec<u32> {
        let mut iter = self.terms.keys();
        let mut out = match iter.next() {
            Some(m) => m.exps().to_vec(),
            None => return vec![0; self.nvars],
        };
        for m in iter {
            for (o, &e) in out.iter_mut().zip(m.exps()) {
                *o = (*o).min(e);
            }
        }
        out
    }

    fn check_dims(&self, other: &Self) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { left: self.nvars, right: other.nvars });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = Self::zero(self.nvars);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1.clone() * c2.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, v)| (m.clone(), v.clone() * c.clone()))
                .filter(|(_, v)| !v.is_zero())
                .collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &C) -> Self {
        let mut out = Self::zero(self.nvars);
        for (k, v) in &self.terms {
            out.add_term(k.mul(m), v.clone() * c.clone());
        }
        out
    }

    /// ∂/∂x_i.
    pub fn partial_derivative(&self, i: usize) -> Self {
        assert!(i < self.nvars, "axis {i} out of range for {} variables", self.nvars);
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            if let Some((k, dm)) = m.derivative(i) {
                let k = C::from_u32(k).expect("exponent fits coefficient type");
                out.add_term(dm, c.clone() * k);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Horner-free evaluation in the coefficient ring.
    pub fn eval_in(&self, point: &[C]) -> C {
        assert_eq!(point.len(), self.nvars);
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (x, &e) in point.iter().zip(m.exps()) {
                for _ in 0..e {
                    t = t * x.clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Polynomial<D> {
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    /// Canonical text: graded-lex descending, explicit signs, `*` and `^`.
    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (idx, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if idx == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            if m.is_one() {
                s.push_str(&mag.to_string());
            } else if mag.is_one() {
                s.push_str(&m.render(names));
            } else {
                s.push_str(&format!("{}*{}", mag, m.render(names)));
            }
        }
        s
    }
}

impl QPoly {
    pub fn from_int_terms(nvars: usize, terms: &[(Vec<u32>, i64)]) -> Self {
        Self::from_terms(nvars, terms.iter().map(|(e, c)| (e.clone(), BigRational::from_integer(BigInt::from(*c)))))
    }

    /// Exact evaluation at a rational point.
    pub fn eval_exact(&self, point: &[BigRational]) -> BigRational {
        self.eval_in(point)
    }

    /// Evaluates exactly at the binary64 point and rounds once.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        let q = exact_point(point, self.nvars)?;
        Ok(rat_to_f64(&self.eval_exact(&q)))
    }

    /// One-way conversion to binary64 coefficients.
    pub fn to_f64(&self) -> FPoly {
        self.map_coeffs(rat_to_f64)
    }

    /// Exact quotient `self / d`, or `None` if `d` does not divide `self`.
    pub fn div_exact(&self, d: &QPoly) -> Option<QPoly> {
        if d.is_zero() || self.nvars != d.nvars {
            return None;
        }
        let (lm_d, lc_d) = d.leading().map(|(m, c)| (m.clone(), c.clone()))?;
        let mut r = self.clone();
        let mut q = QPoly::zero(self.nvars);
        while let Some((lm, lc)) = r.leading().map(|(m, c)| (m.clone(), c.clone())) {
            if !lm_d.divides(&lm) {
                return None;
            }
            let tm = lm_d.quotient_of(&lm);
            let tc = lc / lc_d.clone();
            r = &r - &d.mul_monomial(&tm, &tc);
            q.add_term(tm, tc);
        }
        Some(q)
    }

    /// Exact square root `s` with `s*s == self` and positive leading
    /// coefficient, if one exists.
    pub fn sqrt_exact(&self) -> Option<QPoly> {
        if self.is_zero() {
            return Some(self.clone());
        }
        let (lm, lc) = self.leading()?;
        if lm.exps().iter().any(|e| e % 2 == 1) {
            return None;
        }
        let c0 = rational_sqrt(lc)?;
        let m0 = Monomial::new(lm.exps().iter().map(|e| e / 2).collect());
        let lead_m = m0.clone();
        let two_lead = c0.clone() * BigRational::from_integer(BigInt::from(2));
        let mut s = QPoly::monomial(m0.clone(), c0);
        let mut last = m0;
        loop {
            let r = self - &(&s * &s);
            let Some((rm, rc)) = r.leading().map(|(m, c)| (m.clone(), c.clone())) else {
                return Some(s);
            };
            if !lead_m.divides(&rm) {
                return None;
            }
            let tm = lead_m.quotient_of(&rm);
            if tm >= last {
                return None;
            }
            let tc = rc / two_lead.clone();
            s.add_term(tm.clone(), tc);
            last = tm;
        }
    }
}

impl FPoly {
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.eval_in(point)
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

pub(crate) fn exact_point(point: &[f64], nvars: usize) -> Result<Vec<BigRational>, PolyError> {
    if point.len() != nvars {
        return Err(PolyError::PointDimension { expected: nvars, got: point.len() });
    }
    point.iter().map(|&x| BigRational::from_float(x).ok_or(PolyError::NonFinitePoint)).collect()
}

pub fn rat_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

impl<C: Coeff> fmt::Display for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&default_names(self.nvars)))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl<C: Coeff> $trait<&Polynomial<C>> for &Polynomial<C> {
            type Output = Polynomial<C>;
            fn $method(self, rhs: &Polynomial<C>) -> Polynomial<C> {
                self.$checked(rhs).expect("polynomial dimension mismatch")
            }
        }
        impl<C: Coeff> $trait<Polynomial<C>> for Polynomial<C> {
            type Output = Polynomial<C>;
            fn $method(self, rhs: Polynomial<C>) -> Polynomial<C> {
                (&self).$method(&rhs)
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl<C: Coeff> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        Polynomial { nvars: self.nvars, terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

impl<C: Coeff> Neg for Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        -&self
    }
}
