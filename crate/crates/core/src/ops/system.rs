use std::sync::Arc;

use crate::poly::{BExpr, PolyError, QPoly};

use super::OpsError;

/// Itô system `dx = X₀(x) dt + Σ_k X_k(x) dW^k` with every entry an
/// expression over one shared base polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct SdeSystem {
    base: Arc<QPoly>,
    drift: Vec<BExpr>,
    diffusion: Vec<Vec<BExpr>>,
    equilibrium_at_origin: bool,
}

impl SdeSystem {
    pub fn new(base: Arc<QPoly>, drift: Vec<BExpr>, diffusion: Vec<Vec<BExpr>>) -> Result<Self, OpsError> {
        let n = base.nvars();
        if drift.len() != n {
            return Err(OpsError::Shape(format!("drift has {} components, expected {n}", drift.len())));
        }
        for (k, col) in diffusion.iter().enumerate() {
            if col.len() != n {
                return Err(OpsError::Shape(format!(
                    "noise column {} has {} components, expected {n}",
                    k + 1,
                    col.len()
                )));
            }
        }
        for e in drift.iter().chain(diffusion.iter().flatten()) {
            if e.nvars() != n {
                return Err(PolyError::DimensionMismatch { left: n, right: e.nvars() }.into());
            }
            if **e.base() != *base {
                return Err(PolyError::BaseMismatch.into());
            }
        }
        Ok(SdeSystem { base, drift, diffusion, equilibrium_at_origin: false })
    }

    /// Convenience constructor for polynomial fields.
    pub fn from_polys(base: Arc<QPoly>, drift: Vec<QPoly>, diffusion: Vec<Vec<QPoly>>) -> Result<Self, OpsError> {
        let lift = |p: QPoly| BExpr::from_poly(p, &base);
        let drift = drift.into_iter().map(lift).collect::<Result<Vec<_>, _>>()?;
        let diffusion = diffusion
            .into_iter()
            .map(|col| col.into_iter().map(lift).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(base, drift, diffusion)
    }

    /// Marks the origin as an equilibrium after checking that every field
    /// vanishes there exactly.
    pub fn with_equilibrium_at_origin(mut self) -> Result<Self, OpsError> {
        if !self.fields_vanish_at_origin()? {
            return Err(OpsError::EquilibriumViolated);
        }
        self.equilibrium_at_origin = true;
        Ok(self)
    }

    pub fn fields_vanish_at_origin(&self) -> Result<bool, OpsError> {
        for e in self.drift.iter().chain(self.diffusion.iter().flatten()) {
            if !e.vanishes_at_origin()? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn equilibrium_at_origin(&self) -> bool {
        self.equilibrium_at_origin
    }

    pub fn nvars(&self) -> usize {
        self.base.nvars()
    }

    pub fn base(&self) -> &Arc<QPoly> {
        &self.base
    }

    pub fn drift(&self) -> &[BExpr] {
        &self.drift
    }

    pub fn diffusion(&self) -> &[Vec<BExpr>] {
        &self.diffusion
    }

    pub fn noise_count(&self) -> usize {
        self.diffusion.len()
    }

    /// Same diffusion, new drift.
    pub fn with_drift(&self, drift: Vec<BExpr>) -> Result<Self, OpsError> {
        let mut out = Self::new(self.base.clone(), drift, self.diffusion.clone())?;
        out.inherit_equilibrium(self.equilibrium_at_origin);
        Ok(out)
    }

    pub(crate) fn inherit_equilibrium(&mut self, flag: bool) {
        self.equilibrium_at_origin = flag && self.fields_vanish_at_origin().unwrap_or(false);
    }
}

/// `D = a · b^{-γ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityCandidate {
    pub numerator: QPoly,
    pub base: Arc<QPoly>,
    pub gamma: num_rational::BigRational,
}

impl DensityCandidate {
    pub fn new(numerator: QPoly, base: Arc<QPoly>, gamma: num_rational::BigRational) -> Self {
        DensityCandidate { numerator, base, gamma }
    }

    pub fn to_bexpr(&self) -> Result<BExpr, PolyError> {
        BExpr::term(self.numerator.clone(), -self.gamma.clone(), &self.base)
    }

    pub fn nvars(&self) -> usize {
        self.base.nvars()
    }
}
