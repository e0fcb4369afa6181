//! Binary64 evaluators for hot loops (simulation, sampling).

use super::bexpr::BExpr;
use super::polynomial::{rat_to_f64, FPoly};

/// Flattened polynomial for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct PolyEval {
    nvars: usize,
    coeffs: Vec<f64>,
    exps: Vec<u32>,
}

impl PolyEval {
    pub fn new(p: &FPoly) -> Self {
        let mut coeffs = Vec::with_capacity(p.len());
        let mut exps = Vec::with_capacity(p.len() * p.nvars());
        for (m, c) in p.terms() {
            coeffs.push(*c);
            exps.extend_from_slice(m.exps());
        }
        PolyEval { nvars: p.nvars(), coeffs, exps }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.nvars;
        let mut acc = 0.0;
        for (t, c) in self.coeffs.iter().enumerate() {
            let mut v = *c;
            for (xi, &e) in x.iter().zip(&self.exps[t * n..(t + 1) * n]) {
                match e {
                    0 => {}
                    1 => v *= xi,
                    2 => v *= xi * xi,
                    _ => v *= xi.powi(e as i32),
                }
            }
            acc += v;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

#[derive(Clone, Debug)]
struct FloatTerm {
    coeff: FPoly,
    eval: PolyEval,
    power: f64,
}

/// Binary64 image of a [`BExpr`]. Evaluation never fails; a vanishing or
/// negative base under a negative or fractional power yields a non-finite
/// value that callers detect.
#[derive(Clone, Debug)]
pub struct FloatBExpr {
    base: FPoly,
    base_eval: PolyEval,
    terms: Vec<FloatTerm>,
}

impl FloatBExpr {
    pub fn from_exact(e: &BExpr) -> Self {
        let base = e.base().to_f64();
        let terms = e
            .terms()
            .iter()
            .map(|(p, q)| {
                let coeff = p.to_f64();
                FloatTerm { eval: PolyEval::new(&coeff), coeff, power: rat_to_f64(q) }
            })
            .collect();
        FloatBExpr { base_eval: PolyEval::new(&base), base, terms }
    }

    /// A plain polynomial (unit base, power 0).
    pub fn from_poly(p: &FPoly) -> Self {
        let base = FPoly::one(p.nvars());
        let terms = if p.is_zero() {
            Vec::new()
        } else {
            vec![FloatTerm { coeff: p.clone(), eval: PolyEval::new(p), power: 0.0 }]
        };
        FloatBExpr { base_eval: PolyEval::new(&base), base, terms }
    }

    pub fn zero(nvars: usize) -> Self {
        Self::from_poly(&FPoly::zero(nvars))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut b = f64::NAN;
        let mut acc = 0.0;
        for t in &self.terms {
            let pv = t.eval.eval(x);
            if t.power == 0.0 {
                acc += pv;
                continue;
            }
            if b.is_nan() {
                b = self.base_eval.eval(x);
            }
            let bp =
                if t.power.fract() == 0.0 && t.power.abs() < 64.0 { b.powi(t.power as i32) } else { b.powf(t.power) };
            acc += pv * bp;
        }
        acc
    }

    pub fn partial(&self, i: usize) -> Self {
        let db = self.base.partial_derivative(i);
        let mut terms = Vec::new();
        for t in &self.terms {
            let dp = t.coeff.partial_derivative(i);
            if !dp.is_zero() {
                terms.push(FloatTerm { eval: PolyEval::new(&dp), coeff: dp, power: t.power });
            }
            if t.power != 0.0 && !db.is_zero() {
                let c = &t.coeff.scale(&t.power) * &db;
                if !c.is_zero() {
                    terms.push(FloatTerm { eval: PolyEval::new(&c), coeff: c, power: t.power - 1.0 });
                }
            }
        }
        FloatBExpr { base: self.base.clone(), base_eval: self.base_eval.clone(), terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::bexpr::rat;
    use crate::poly::QPoly;
    use std::sync::Arc;

    #[test]
    fn matches_exact_evaluation() {
        let x = QPoly::var(2, 0);
        let y = QPoly::var(2, 1);
        let b = Arc::new(&(&x.pow(2) + &y.pow(2)) + &QPoly::constant(2, rat(1, 3)));
        let e = BExpr::new(b.clone(), vec![(&x * &y, rat(-5, 2)), (x.pow(3), rat(1, 1))]).unwrap();
        let f = FloatBExpr::from_exact(&e);
        for pt in [[0.3, -1.2], [2.0, 0.5], [-0.7, 0.1]] {
            let exact = e.evaluate(&pt).unwrap();
            assert!((f.eval(&pt) - exact).abs() <= 1e-12 * exact.abs().max(1.0));
            for i in 0..2 {
                let de = e.partial_derivative(i).evaluate(&pt).unwrap();
                let df = f.partial(i).eval(&pt);
                assert!((de - df).abs() <= 1e-11 * de.abs().max(1.0), "{de} vs {df}");
            }
        }
    }

    #[test]
    fn vanishing_base_is_non_finite() {
        let x = QPoly::var(1, 0);
        let b = Arc::new(x.pow(2));
        let e = BExpr::power(&b, rat(-1, 1)).unwrap();
        assert!(!FloatBExpr::from_exact(&e).eval(&[0.0]).is_finite());
    }
}
