use crate::poly::{monomials_up_to, Coeff, Monomial, Polynomial};

/// Candidate monomials `z(x)` for a Gram representation `zᵀQz`, in
/// ascending graded-lex order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    monomials: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn new(mut monomials: Vec<Monomial>) -> Self {
        monomials.sort();
        monomials.dedup();
        MonomialBasis { monomials }
    }

    /// All monomials of total degree in `lo..=hi`.
    pub fn dense(nvars: usize, lo: u32, hi: u32) -> Self {
        MonomialBasis { monomials: monomials_up_to(nvars, lo, hi) }
    }

    /// Box-bounded half-Newton-polytope basis for a polynomial with the
    /// given support: each exponent of `x_i` lies in
    /// `⌈min_i/2⌉..=⌈max_i/2⌉` and the total degree in
    /// `⌈mindeg/2⌉..=⌈deg/2⌉`, where the extremes are taken over the support.
    pub fn half_newton<'a>(nvars: usize, support: impl IntoIterator<Item = &'a Monomial>) -> Self {
        let mut lo = vec![u32::MAX; nvars];
        let mut hi = vec![0u32; nvars];
        let mut dlo = u32::MAX;
        let mut dhi = 0;
        let mut any = false;
        for m in support {
            any = true;
            for (i, &e) in m.exps().iter().enumerate() {
                lo[i] = lo[i].min(e);
                hi[i] = hi[i].max(e);
            }
            dlo = dlo.min(m.degree());
            dhi = dhi.max(m.degree());
        }
        if !any {
            return MonomialBasis { monomials: vec![Monomial::one(nvars)] };
        }
        let monomials = monomials_up_to(nvars, dlo.div_ceil(2), dhi.div_ceil(2))
            .into_iter()
            .filter(|m| m.exps().iter().enumerate().all(|(i, &e)| e >= lo[i].div_ceil(2) && e <= hi[i].div_ceil(2)))
            .collect::<Vec<_>>();
        if monomials.is_empty() {
            return MonomialBasis { monomials: vec![Monomial::one(nvars)] };
        }
        MonomialBasis { monomials }
    }

    pub fn for_polynomial<C: Coeff>(p: &Polynomial<C>) -> Self {
        Self::half_newton(p.nvars(), p.terms().map(|(m, _)| m))
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn contains(&self, m: &Monomial) -> bool {
        self.monomials.binary_search(m).is_ok()
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all = self.monomials.clone();
        all.extend(other.monomials.iter().cloned());
        Self::new(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::QPoly;

    #[test]
    fn quartic_basis() {
        // x⁴ + 2x²y² + y⁴ → {y², xy, x²}
        let p = QPoly::from_int_terms(2, &[(vec![4, 0], 1), (vec![2, 2], 2), (vec![0, 4], 1)]);
        let b = MonomialBasis::for_polynomial(&p);
        assert_eq!(b.monomials(), &[Monomial::new(vec![0, 2]), Monomial::new(vec![1, 1]), Monomial::new(vec![2, 0])]);
    }

    #[test]
    fn box_bound_prunes() {
        // Motzkin: no x³ or y³ can appear in a square
        let p = QPoly::from_int_terms(2, &[(vec![4, 2], 1), (vec![2, 4], 1), (vec![2, 2], -3), (vec![0, 0], 1)]);
        let b = MonomialBasis::for_polynomial(&p);
        assert!(!b.contains(&Monomial::new(vec![3, 0])));
        assert!(b.contains(&Monomial::new(vec![2, 1])));
        assert_eq!(b.len(), 8);
    }
}
