use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::poly::{rational_sqrt, BExpr, PolyError, QPoly};

use super::{OpsError, SdeSystem};

fn check_compatible(sys: &SdeSystem, d: &BExpr) -> Result<(), OpsError> {
    if d.nvars() != sys.nvars() {
        return Err(PolyError::DimensionMismatch { left: sys.nvars(), right: d.nvars() }.into());
    }
    if **d.base() != **sys.base() {
        return Err(PolyError::BaseMismatch.into());
    }
    Ok(())
}

/// `ℒ*D = ½ Σ_k Σ_{i,j} ∂_i∂_j(X_k^i X_k^j D) − Σ_i ∂_i(X₀^i D)`.
///
/// Computed as `Σ_i ∂_i(½ Σ_j ∂_j(A_ij D) − X₀^i D)` with the diffusion
/// matrix `A = Σ_k X_k X_kᵀ`, which needs one derivative pass per index.
pub fn adjoint_generator(sys: &SdeSystem, d: &BExpr) -> Result<BExpr, OpsError> {
    check_compatible(sys, d)?;
    let n = sys.nvars();
    let half = BigRational::new(1.into(), 2.into());
    let mut out = BExpr::zero(sys.base());
    for i in 0..n {
        let mut inner = BExpr::zero(sys.base());
        for j in 0..n {
            let mut aij = BExpr::zero(sys.base());
            for col in sys.diffusion() {
                if col[i].is_zero() || col[j].is_zero() {
                    continue;
                }
                aij = aij.try_add(&col[i].try_mul(&col[j])?)?;
            }
            if aij.is_zero() {
                continue;
            }
            inner = inner.try_add(&aij.try_mul(d)?.partial_derivative(j))?;
        }
        let flux = inner.scale(&half).try_sub(&sys.drift()[i].try_mul(d)?)?;
        out = out.try_add(&flux.partial_derivative(i))?;
    }
    Ok(out)
}

/// `∇·(fD)` for a polynomial field `f`.
pub fn divergence_condition(f: &[QPoly], d: &BExpr) -> Result<BExpr, OpsError> {
    if f.len() != d.nvars() {
        return Err(PolyError::DimensionMismatch { left: d.nvars(), right: f.len() }.into());
    }
    let mut out = BExpr::zero(d.base());
    for (i, fi) in f.iter().enumerate() {
        out = out.try_add(&d.mul_poly(fi)?.partial_derivative(i))?;
    }
    Ok(out)
}

/// Time change by a positive rate `c`: drift `c·X₀`, diffusion `√c·X_k`.
/// Returns the new system and the density multiplier `1/c`.
///
/// Only `c = κ²·b^q` with `κ` rational is accepted, so that both `√c` and
/// `1/c` stay in the base-power algebra.
pub fn time_change(sys: &SdeSystem, c: &BExpr) -> Result<(SdeSystem, BExpr), OpsError> {
    check_compatible(sys, c)?;
    let [(p, q)] = c.terms() else {
        return Err(OpsError::NotExpressible(format!("rate {c} is not a single power of the base")));
    };
    if !p.is_constant() {
        return Err(OpsError::NotExpressible(format!("coefficient {p} of the rate is not constant")));
    }
    let k2 = p.constant_term();
    if !k2.is_positive() {
        return Err(OpsError::NotExpressible("rate is not strictly positive".into()));
    }
    let Some(k) = rational_sqrt(&k2) else {
        return Err(OpsError::NotExpressible(format!("constant {k2} is not a rational square")));
    };
    let base = sys.base();
    let half_q = q / BigRational::from_integer(2.into());
    let sqrt_c = BExpr::term(QPoly::constant(sys.nvars(), k), half_q, base)?;
    let inv_c = BExpr::term(QPoly::constant(sys.nvars(), BigRational::one() / &k2), -q.clone(), base)?;
    let drift = sys.drift().iter().map(|e| e.try_mul(c)).collect::<Result<Vec<_>, _>>()?;
    let diffusion = sys
        .diffusion()
        .iter()
        .map(|col| col.iter().map(|e| e.try_mul(&sqrt_c)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = SdeSystem::new(base.clone(), drift, diffusion)?;
    out.inherit_equilibrium(sys.equilibrium_at_origin());
    Ok((out, inv_c))
}
