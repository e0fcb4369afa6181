use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::poly::{default_names, rat_to_f64, FPoly, Monomial, QPoly};
use crate::sdp::{SdpSolution, SdpStatus};

use super::{SosError, SosProblem};

#[derive(Clone, Debug)]
pub struct GramCertificate {
    pub label: String,
    pub basis: Vec<Monomial>,
    /// Gram matrix in the caller's scaling.
    pub gram: DMatrix<f64>,
    pub multiplier: QPoly,
    /// Smallest eigenvalue of the Gram matrix as solved (unit-scaled target).
    pub min_eig: f64,
}

#[derive(Clone, Debug)]
pub struct SosCertificate {
    pub blocks: Vec<GramCertificate>,
    pub params: Vec<f64>,
    /// Max coefficient mismatch over all identities, unit-scaled.
    pub residual: f64,
    pub min_eig: f64,
}

/// Sum with addends ordered by magnitude, smallest first.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    v.into_iter().sum()
}

/// Rebuilds every identity from the solver's values and measures the
/// mismatch independently of solver state. Fails unless the solver reports
/// a feasible point.
pub fn extract_certificate(prob: &SosProblem, sol: &SdpSolution) -> Result<SosCertificate, SosError> {
    if sol.status != SdpStatus::Feasible {
        return Err(SosError::NotFeasible(sol.status));
    }
    let mut residual: f64 = 0.0;
    for (k, id) in prob.identities.iter().enumerate() {
        let s = prob.scales[k];
        let mut acc: BTreeMap<Monomial, Vec<f64>> = BTreeMap::new();
        for (m, c) in id.constant.terms() {
            acc.entry(m.clone()).or_default().push(s * rat_to_f64(c));
        }
        for (j, p) in &id.params {
            for (m, c) in p.terms() {
                acc.entry(m.clone()).or_default().push(s * rat_to_f64(c) * sol.free[*j]);
            }
        }
        for (bi, b) in prob.blocks.iter().enumerate().filter(|(_, b)| b.identity == k) {
            let z = b.basis.monomials();
            let q = &sol.blocks[bi];
            for r in 0..z.len() {
                for c in 0..z.len() {
                    let zz = z[r].mul(&z[c]);
                    for (gm, gc) in b.multiplier.terms() {
                        acc.entry(zz.mul(gm)).or_default().push(-rat_to_f64(gc) * q[(r, c)]);
                    }
                }
            }
        }
        for (_, v) in acc {
            residual = residual.max(sorted_sum(v).abs());
        }
    }
    let mut blocks = Vec::with_capacity(prob.blocks.len());
    let mut min_eig = f64::INFINITY;
    for (bi, b) in prob.blocks.iter().enumerate() {
        let q = &sol.blocks[bi];
        let e = ((q + q.transpose()) * 0.5).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        min_eig = min_eig.min(e);
        blocks.push(GramCertificate {
            label: b.label.clone(),
            basis: b.basis.monomials().to_vec(),
            gram: q / prob.scales[b.identity],
            multiplier: b.multiplier.clone(),
            min_eig: e,
        });
    }
    Ok(SosCertificate { blocks, params: sol.free.clone(), residual, min_eig })
}

impl SosCertificate {
    pub fn is_valid(&self, eps_res: f64, eps_eig: f64) -> bool {
        self.residual <= eps_res && self.min_eig >= -eps_eig
    }

    /// `zᵀQz` of one block as a float polynomial.
    pub fn block_polynomial(&self, b: usize) -> FPoly {
        let blk = &self.blocks[b];
        let n = blk.multiplier.nvars();
        let mut terms = Vec::new();
        for r in 0..blk.basis.len() {
            for c in 0..blk.basis.len() {
                terms.push((blk.basis[r].mul(&blk.basis[c]).exps().to_vec(), blk.gram[(r, c)]));
            }
        }
        FPoly::from_terms(n, terms)
    }

    /// The block as an explicit sum of squares from the eigendecomposition
    /// `Q = Σ λ_k v_k v_kᵀ`, dropping eigenvalues below `1e-12·λ_max`.
    pub fn squares(&self, b: usize) -> Vec<(f64, FPoly)> {
        let blk = &self.blocks[b];
        let n = blk.multiplier.nvars();
        let eig = ((&blk.gram + blk.gram.transpose()) * 0.5).symmetric_eigen();
        let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let mut out = Vec::new();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for k in order {
            let lam = eig.eigenvalues[k];
            if lam <= 1e-12 * lmax || lam <= 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            // normalize so the largest coefficient is positive and 1
            let vmax = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            let p = FPoly::from_terms(n, blk.basis.iter().map(|m| m.exps().to_vec()).zip(v.iter().map(|x| x / vmax)));
            out.push((lam * vmax * vmax, p));
        }
        out
    }

    /// Multi-line rendering `g·(λ₁·(p₁)² + …)` per block.
    pub fn render(&self, names: Option<&[String]>) -> String {
        let mut out = String::new();
        for (b, blk) in self.blocks.iter().enumerate() {
            let owned = default_names(blk.multiplier.nvars());
            let names = names.unwrap_or(&owned);
            let squares: Vec<String> = self
                .squares(b)
                .into_iter()
                .map(|(w, p)| format!("{}*({})^2", sig(w, 6), render_float(&p, names, 6)))
                .collect();
            let body = if squares.is_empty() { "0".to_string() } else { squares.join(" + ") };
            let mult = blk.multiplier.render(names);
            if mult == "1" {
                out.push_str(&format!("{}: {body}\n", blk.label));
            } else {
                out.push_str(&format!("{}: ({mult})*[{body}]\n", blk.label));
            }
        }
        out
    }
}

/// `v` with `digits` significant figures, shortest form.
pub fn sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), v);
    let parsed: f64 = s.parse().unwrap_or(v);
    if (1e-4..1e15).contains(&parsed.abs()) {
        format!("{parsed}")
    } else {
        format!("{parsed:e}")
    }
}

/// Graded-lex descending rendering with rounded coefficients.
pub fn render_float(p: &FPoly, names: &[String], digits: usize) -> String {
    let mut out = String::new();
    for (m, c) in p.terms().rev() {
        let mag = sig(c.abs(), digits);
        let sign = if *c < 0.0 { "-" } else { "+" };
        if out.is_empty() {
            if *c < 0.0 {
                out.push('-');
            }
        } else {
            out.push_str(&format!(" {sign} "));
        }
        if m.is_one() {
            out.push_str(&mag);
        } else if mag == "1" {
            out.push_str(&m.render(names));
        } else {
            out.push_str(&format!("{mag}*{}", m.render(names)));
        }
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}
