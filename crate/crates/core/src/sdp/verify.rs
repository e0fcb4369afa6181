//! Solver-independent checks of primal points and infeasibility rays.

use nalgebra::DMatrix;

use super::SdpProblem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verification {
    /// Max absolute violation of the equality constraints.
    pub primal_residual: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

/// Recomputes constraint violations and block eigenvalues from scratch.
pub fn verify_solution(p: &SdpProblem, blocks: &[DMatrix<f64>], free: &[f64], tol_p: f64, tol_e: f64) -> Verification {
    let shape_ok = blocks.len() == p.blocks.len()
        && blocks.iter().zip(&p.blocks).all(|(b, &s)| b.nrows() == s && b.ncols() == s)
        && free.len() == p.free_vars;
    if !shape_ok {
        return Verification { primal_residual: f64::INFINITY, min_eigenvalue: f64::NEG_INFINITY, passed: false };
    }
    let mut residual: f64 = 0.0;
    for c in &p.constraints {
        let r = (c.functional.eval(blocks, free) - c.rhs).abs();
        residual = if r.is_nan() { f64::INFINITY } else { residual.max(r) };
    }
    let mut min_eig = f64::INFINITY;
    for b in blocks {
        if b.iter().any(|v| !v.is_finite()) {
            min_eig = f64::NEG_INFINITY;
            break;
        }
        let sym = (b + b.transpose()) * 0.5;
        let e = sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        min_eig = min_eig.min(e);
    }
    Verification { primal_residual: residual, min_eigenvalue: min_eig, passed: residual <= tol_p && min_eig >= -tol_e }
}

/// Checks that `y` proves infeasibility: after normalizing to `bᵀy = 1`,
/// `|Bᵀy|_∞ ≤ tol` and `λ_max(Σ y_i A_i) ≤ tol`. For any feasible `(X, θ)`
/// this would give `1 = ⟨Σ y_i A_i, X⟩ + θᵀBᵀy ≤ tol·(tr X + |θ|₁)`.
pub fn verify_farkas(p: &SdpProblem, y: &[f64], tol: f64) -> bool {
    if y.len() != p.constraints.len() || y.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let beta: f64 = y.iter().zip(&p.constraints).map(|(yi, c)| yi * c.rhs).sum();
    if beta.is_nan() || beta <= 0.0 {
        return false;
    }
    let mut bt = vec![0.0; p.free_vars];
    let mut acc: Vec<DMatrix<f64>> = p.blocks.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    for (yi, c) in y.iter().zip(&p.constraints) {
        let w = yi / beta;
        if w == 0.0 {
            continue;
        }
        for (j, v) in c.functional.free_entries() {
            bt[j] += w * v;
        }
        for (b, r, col, v) in c.functional.entries() {
            acc[b][(r, col)] += w * v;
            if r != col {
                acc[b][(col, r)] += w * v;
            }
        }
    }
    if bt.iter().any(|v| v.abs() > tol) {
        return false;
    }
    acc.into_iter().all(|m| m.symmetric_eigen().eigenvalues.iter().all(|&e| e <= tol))
}
