#![allow(dead_code)]

use std::sync::Arc;

use num_rational::BigRational;
use sdecert::ops::{DensityCandidate, SdeSystem};
use sdecert::poly::{rat, BExpr, QPoly};
use sdecert::synth::ControlledSdeSystem;

/// Polynomial from `(numerator, denominator, exponents)` triples.
pub fn poly(n: usize, terms: &[(i64, i64, &[u32])]) -> QPoly {
    QPoly::from_terms(n, terms.iter().map(|&(a, b, e)| (e.to_vec(), rat(a, b))))
}

pub fn example1() -> (SdeSystem, DensityCandidate) {
    let b = Arc::new(poly(2, &[(1, 1, &[2, 0]), (1, 1, &[0, 2])]));
    let drift = vec![
        poly(2, &[(1, 1, &[2, 0]), (-2, 1, &[1, 0]), (-1, 1, &[0, 2])]),
        poly(2, &[(2, 1, &[1, 1]), (-2, 1, &[0, 1])]),
    ];
    let noise = vec![vec![poly(2, &[(1, 1, &[1, 0])]), poly(2, &[(1, 1, &[0, 1])])]];
    let sys = SdeSystem::from_polys(b.clone(), drift, noise).unwrap();
    (sys, DensityCandidate::new(QPoly::one(2), b, rat(2, 1)))
}

pub fn example2() -> (SdeSystem, DensityCandidate, QPoly) {
    let b = Arc::new(poly(3, &[(1, 1, &[0, 0, 2])]));
    let drift = vec![
        poly(3, &[(24, 1, &[1, 0, 2]), (-12, 1, &[1, 0, 1]), (-1, 2, &[1, 0, 0])]),
        poly(3, &[(-1, 2, &[0, 1, 0])]),
        poly(3, &[(-12, 1, &[2, 0, 1])]),
    ];
    let noise = vec![vec![
        poly(3, &[(1, 1, &[1, 0, 0]), (-2, 1, &[1, 0, 1])]),
        poly(3, &[(1, 1, &[0, 1, 0]), (-2, 1, &[0, 1, 1])]),
        poly(3, &[(2, 1, &[0, 0, 1]), (-2, 1, &[0, 0, 2])]),
    ]];
    let sys = SdeSystem::from_polys(b.clone(), drift, noise).unwrap();
    let g = poly(3, &[(2, 1, &[0, 0, 1]), (-2, 1, &[0, 0, 2]), (-1, 1, &[2, 0, 0]), (-1, 1, &[0, 2, 0])]);
    (sys, DensityCandidate::new(QPoly::one(3), b, rat(1, 1)), g)
}

pub fn example3() -> (SdeSystem, DensityCandidate) {
    let b = Arc::new(poly(1, &[(2, 1, &[0]), (1, 1, &[2])]));
    let p = QPoly::var(1, 0);
    let drift =
        BExpr::new(b.clone(), vec![(p.scale(&rat(3, 2)), rat(0, 1)), (p.scale(&rat(20, 1)), rat(-1, 1))]).unwrap();
    let noise = BExpr::from_poly(-&p, &b).unwrap();
    let sys = SdeSystem::new(b.clone(), vec![drift], vec![vec![noise]]).unwrap();
    (sys, DensityCandidate::new(QPoly::one(1), b, rat(-1, 2)))
}

pub fn planar_plant() -> ControlledSdeSystem {
    let b = Arc::new(poly(2, &[(1, 1, &[2, 0]), (1, 1, &[0, 2])]));
    let drift = vec![poly(2, &[(2, 1, &[3, 0]), (1, 1, &[2, 1]), (-6, 1, &[1, 2]), (5, 1, &[0, 3])]), QPoly::zero(2)];
    let noise = vec![vec![(*b).clone(), -&*b]];
    let control = vec![QPoly::zero(2), QPoly::one(2)];
    ControlledSdeSystem::from_polys(b, drift, noise, control).unwrap()
}

/// The reference feedback `−2.7x³ + 4.6x²y − 6.7xy² − 3.4y³`.
pub fn reference_controller() -> QPoly {
    poly(2, &[(-27, 10, &[3, 0]), (46, 10, &[2, 1]), (-67, 10, &[1, 2]), (-34, 10, &[0, 3])])
}

pub fn r(n: i64, d: i64) -> BigRational {
    rat(n, d)
}
