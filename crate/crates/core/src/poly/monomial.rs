use std::cmp::Ordering;
use std::fmt;

/// Exponent vector of a monomial in a fixed number of variables.
///
/// Ordered graded-lexicographically: total degree first, then exponents
/// compared from the first variable onward, so `x > y > 1` in two variables.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    pub fn one(nvars: usize) -> Self {
        Monomial { exps: vec![0; nvars] }
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        Monomial { exps }
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.nvars(), other.nvars());
        Monomial { exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect() }
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.exps.iter().zip(&other.exps).all(|(a, b)| a <= b)
    }

    /// `other / self`, assuming `self.divides(other)`.
    pub fn quotient_of(&self, other: &Monomial) -> Monomial {
        Monomial { exps: other.exps.iter().zip(&self.exps).map(|(a, b)| a - b).collect() }
    }

    /// Derivative with respect to variable `i`: the multiplicity and the
    /// reduced monomial, or `None` when the variable does not occur.
    pub fn derivative(&self, i: usize) -> Option<(u32, Monomial)> {
        let e = self.exps[i];
        if e == 0 {
            return None;
        }
        let mut exps = self.exps.clone();
        exps[i] -= 1;
        Some((e, Monomial { exps }))
    }

    /// Render with the given variable names, e.g. `x^2*y`. Returns `"1"`
    /// for the unit monomial.
    pub fn render(&self, names: &[String]) -> String {
        let mut parts = Vec::new();
        for (i, &e) in self.exps.iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(names[i].clone()),
                _ => parts.push(format!("{}^{}", names[i], e)),
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.exps.cmp(&other.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&default_names(self.nvars())))
    }
}

/// `x1, x2, ...` used when no variable names are supplied.
pub fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// All monomials in `nvars` variables with total degree in `lo..=hi`,
/// in ascending graded-lex order.
pub fn monomials_up_to(nvars: usize, lo: u32, hi: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for d in lo..=hi {
        let mut exps = vec![0u32; nvars];
        collect_degree(nvars, d, 0, &mut exps, &mut out);
    }
    out.sort();
    out
}

fn collect_degree(nvars: usize, remaining: u32, pos: usize, exps: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if nvars == 0 {
        if remaining == 0 {
            out.push(Monomial::new(Vec::new()));
        }
        return;
    }
    if pos == nvars - 1 {
        exps[pos] = remaining;
        out.push(Monomial::new(exps.clone()));
        exps[pos] = 0;
        return;
    }
    for e in 0..=remaining {
        exps[pos] = e;
        collect_degree(nvars, remaining - e, pos + 1, exps, out);
    }
    exps[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grlex_order() {
        let x = Monomial::new(vec![1, 0]);
        let y = Monomial::new(vec![0, 1]);
        let one = Monomial::one(2);
        let x2 = Monomial::new(vec![2, 0]);
        let xy = Monomial::new(vec![1, 1]);
        assert!(x > y);
        assert!(y > one);
        assert!(x2 > xy);
        assert!(xy > x);
    }

    #[test]
    fn enumerate_counts() {
        // C(n+d, d) monomials of degree <= d
        assert_eq!(monomials_up_to(2, 0, 3).len(), 10);
        assert_eq!(monomials_up_to(3, 0, 2).len(), 10);
        assert_eq!(monomials_up_to(2, 3, 3).len(), 4);
        let ms = monomials_up_to(2, 0, 2);
        assert!(ms.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn derivative_of_monomial() {
        let m = Monomial::new(vec![3, 1]);
        let (k, d) = m.derivative(0).unwrap();
        assert_eq!(k, 3);
        assert_eq!(d, Monomial::new(vec![2, 1]));
        assert!(Monomial::new(vec![0, 2]).derivative(0).is_none());
    }
}
