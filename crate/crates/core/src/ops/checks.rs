use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::poly::{FPoly, PolyEval, QPoly};
use crate::sos::{prove_sos, SosOptions};

use super::{ConditionReport, DensityCandidate, OpsError, SdeSystem, Verdict};

/// Degree bounds for the polynomial growth hypotheses with exponent `p`:
/// `deg X_k ≤ p+1` and `deg X₀ ≤ 2p+1`. Derivative bounds and the global
/// Lipschitz route are reported as advisory details.
pub fn check_growth(sys: &SdeSystem, p: u32) -> Result<ConditionReport, OpsError> {
    let degree = |e: &crate::poly::BExpr| -> Result<u32, OpsError> {
        let poly = e.as_polynomial().ok_or_else(|| OpsError::NotPolynomial(e.to_string()))?;
        Ok(poly.degree().unwrap_or(0))
    };
    let mut drift_deg = 0;
    for e in sys.drift() {
        drift_deg = drift_deg.max(degree(e)?);
    }
    let mut col_degs = Vec::with_capacity(sys.noise_count());
    for col in sys.diffusion() {
        let mut d = 0;
        for e in col {
            d = d.max(degree(e)?);
        }
        col_degs.push(d);
    }

    let mut report = ConditionReport::new("growth");
    let bound = |ok: bool| if ok { Verdict::Holds } else { Verdict::Fails };
    report.push(
        "drift_degree",
        &[("degree", drift_deg.to_string()), ("bound", (2 * p + 1).to_string())],
        bound(drift_deg <= 2 * p + 1),
    );
    for (k, &d) in col_degs.iter().enumerate() {
        report.push(
            &format!("noise_{}_degree", k + 1),
            &[("degree", d.to_string()), ("bound", (p + 1).to_string())],
            bound(d <= p + 1),
        );
    }
    let mandatory = report.details.len();

    let deriv = |d: u32| d.saturating_sub(1);
    report.push(
        "drift_derivative_degree",
        &[("degree", deriv(drift_deg).to_string()), ("bound", (2 * p).to_string())],
        bound(deriv(drift_deg) <= 2 * p),
    );
    for (k, &d) in col_degs.iter().enumerate() {
        report.push(
            &format!("noise_{}_derivative_degree", k + 1),
            &[("degree", deriv(d).to_string()), ("bound", p.to_string())],
            bound(deriv(d) <= p),
        );
    }
    let max_deg = col_degs.iter().copied().chain([drift_deg]).max().unwrap_or(0);
    if max_deg <= 1 {
        report.push("global_lipschitz", &[("max_degree", max_deg.to_string())], Verdict::Holds);
    } else {
        report.push(
            "global_lipschitz",
            &[("max_degree", max_deg.to_string()), ("route", "requires time change".into())],
            Verdict::Inconclusive,
        );
    }
    report.push("holder_regularity", &[("class", "polynomial".into())], Verdict::Holds);
    report.settle(mandatory);
    Ok(report)
}

/// Radial degree test for integrability of `D = a·b^{-γ}` outside the unit
/// ball, or of `(1+|x|^p)²·D` when `p` is given.
pub fn check_integrability(d: &DensityCandidate, p: Option<u32>) -> Result<ConditionReport, OpsError> {
    let n = d.nvars() as i64;
    let deg_a = d.numerator.degree().unwrap_or(0) as i64;
    let deg_b = d.base.degree().unwrap_or(0) as i64;
    let mut radial = BigRational::from_integer(deg_a.into()) - &d.gamma * BigRational::from_integer(deg_b.into());
    if let Some(p) = p {
        radial += BigRational::from_integer((2 * p as i64).into());
    }
    let margin = &radial + BigRational::from_integer(n.into());

    let opts = SphereOptions::default();
    let base_matters = !d.gamma.is_zero() && deg_b > 0;
    let base_ok = if base_matters {
        match positivity_on_sphere(&d.base.top_form(), &opts) {
            SpherePositivity::Positive => true,
            SpherePositivity::FoundZero(pt) => return Err(OpsError::BaseVanishesOffOrigin(pt)),
            SpherePositivity::Unknown => false,
        }
    } else {
        true
    };
    let numerator_positive = d.numerator.is_zero()
        || matches!(positivity_on_sphere(&d.numerator.top_form(), &opts), SpherePositivity::Positive);

    let outcome = if !base_ok {
        Verdict::Inconclusive
    } else if margin.is_negative() {
        Verdict::Holds
    } else if margin.is_zero() {
        Verdict::Marginal
    } else if numerator_positive && !d.numerator.is_zero() {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };

    let name = if p.is_some() { "weighted_integrability" } else { "integrability" };
    let mut report = ConditionReport::new(name);
    let mut values = vec![
        ("radial_degree", radial.to_string()),
        ("dimension", n.to_string()),
        ("margin", margin.to_string()),
        ("base_top_form_positive", base_ok.to_string()),
    ];
    if let Some(p) = p {
        values.push(("p", p.to_string()));
    }
    report.push("radial_degree", &values, outcome);
    report.settle(1);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SpherePositivity {
    Positive,
    FoundZero(Vec<f64>),
    Unknown,
}

#[derive(Clone, Debug)]
pub struct SphereOptions {
    /// Number of sample directions; `None` means `10⁴·n`.
    pub samples: Option<usize>,
    pub radius: f64,
    /// Request an SOS certificate before answering `Positive`.
    pub certify: bool,
}

impl Default for SphereOptions {
    fn default() -> Self {
        SphereOptions { samples: None, radius: 1.0, certify: true }
    }
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * inv;
        i /= b;
        inv /= base as f64;
    }
    out
}

/// Deterministic directions on the sphere of the given radius: signed axes
/// first, then normalized Halton points of the cube `[-1, 1]^n`.
fn sphere_samples(n: usize, count: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count + 2 * n);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; n];
            v[i] = s * radius;
            out.push(v);
        }
    }
    if n == 1 {
        return out;
    }
    let mut i = 1u64;
    while out.len() < count + 2 * n {
        let v: Vec<f64> = (0..n)
            .map(|k| 2.0 * radical_inverse(i + (k / PRIMES.len()) as u64 * 7919, PRIMES[k % PRIMES.len()]) - 1.0)
            .collect();
        i += 1;
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.iter().map(|t| t * radius / norm).collect());
        }
    }
    out
}

fn project(v: &[f64], radius: f64) -> Vec<f64> {
    let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    v.iter().map(|t| t * radius / norm).collect()
}

/// Decides positivity of `q` on the sphere `|x| = radius` by sampling and,
/// when every sample is positive, an SOS certificate of
/// `q − ε·(|x|²/radius²)^k` with `2k ≥ deg q`.
pub fn positivity_on_sphere(q: &QPoly, opts: &SphereOptions) -> SpherePositivity {
    let n = q.nvars();
    if q.is_zero() {
        let mut pt = vec![0.0; n];
        pt[0] = opts.radius;
        return SpherePositivity::FoundZero(pt);
    }
    if q.is_constant() {
        return if q.constant_term().is_positive() { SpherePositivity::Positive } else { SpherePositivity::Unknown };
    }
    let fq: FPoly = q.to_f64();
    let eval = PolyEval::new(&fq);
    let count = opts.samples.unwrap_or(10_000 * n);
    let samples = sphere_samples(n, count, opts.radius);
    let values: Vec<f64> = samples.iter().map(|s| eval.eval(s)).collect();

    if let Some(i) = values.iter().position(|v| *v == 0.0) {
        return SpherePositivity::FoundZero(samples[i].clone());
    }
    if let Some(neg) = values.iter().position(|v| *v < 0.0) {
        let pos = values.iter().position(|v| *v > 0.0);
        let Some(pos) = pos else {
            return SpherePositivity::Unknown;
        };
        // nearest positive sample to the first negative one, so the chord
        // between them stays away from the origin
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let mut best = pos;
        for (i, v) in values.iter().enumerate() {
            if *v > 0.0 && dist(&samples[i], &samples[neg]) < dist(&samples[best], &samples[neg]) {
                best = i;
            }
        }
        return bisect(&eval, &samples[best], &samples[neg], opts.radius);
    }
    if !opts.certify {
        return SpherePositivity::Unknown;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let Some(deg) = q.degree() else {
        return SpherePositivity::Unknown;
    };
    let k = deg.div_ceil(2);
    let r2 = BigRational::from_float(opts.radius * opts.radius).unwrap_or_else(|| BigRational::from_integer(1.into()));
    let norm2 = (0..n).fold(QPoly::zero(n), |acc, i| &acc + &QPoly::var(n, i).pow(2));
    let weight = norm2.pow(k).scale(&(BigRational::from_integer(1.into()) / num_traits::pow(r2, k as usize)));
    for frac in [2u32, 100] {
        let eps = (min / frac as f64 * 1e6).floor();
        if eps < 1.0 {
            break;
        }
        let eps = BigRational::new(BigInt::from(eps as i64), BigInt::from(1_000_000));
        let target = q - &weight.scale(&eps);
        if let Ok(out) = prove_sos(&target, &SosOptions::default()) {
            if out.certified() {
                return SpherePositivity::Positive;
            }
        }
    }
    SpherePositivity::Unknown
}

fn bisect(eval: &PolyEval, pos: &[f64], neg: &[f64], radius: f64) -> SpherePositivity {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let point = |t: f64| -> Vec<f64> {
        let v: Vec<f64> = pos.iter().zip(neg).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        project(&v, radius)
    };
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = eval.eval(&point(mid));
        if v == 0.0 {
            return SpherePositivity::FoundZero(point(mid));
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    SpherePositivity::FoundZero(point(0.5 * (lo + hi)))
}
