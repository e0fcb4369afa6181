//! Differential operators on base-power expressions and degree-based
//! hypothesis checks.

mod checks;
mod generator;
mod system;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::poly::PolyError;

pub use checks::{check_growth, check_integrability, positivity_on_sphere, SphereOptions, SpherePositivity};
pub use generator::{adjoint_generator, divergence_condition, time_change};
pub use system::{DensityCandidate, SdeSystem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpsError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("fields do not vanish at the origin")]
    EquilibriumViolated,
    #[error("time change not expressible: {0}")]
    NotExpressible(String),
    #[error("entry is not polynomial: {0}")]
    NotPolynomial(String),
    #[error("base polynomial vanishes away from the origin near {0:?}")]
    BaseVanishesOffOrigin(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Fails,
    Marginal,
    Inconclusive,
}

/// One checked hypothesis: its name, the quantities involved and the outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionDetail {
    pub name: String,
    pub values: BTreeMap<String, String>,
    pub outcome: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub verdict: Verdict,
    pub details: Vec<ConditionDetail>,
}

impl ConditionReport {
    pub(crate) fn new(condition: &str) -> Self {
        ConditionReport { condition: condition.to_string(), verdict: Verdict::Holds, details: Vec::new() }
    }

    pub(crate) fn push(&mut self, name: &str, values: &[(&str, String)], outcome: Verdict) {
        self.details.push(ConditionDetail {
            name: name.to_string(),
            values: values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            outcome,
        });
    }

    /// Combines detail outcomes: any failure fails, then inconclusive, then
    /// marginal. Advisory details never affect the verdict.
    pub(crate) fn settle(&mut self, mandatory: usize) {
        let outcomes: Vec<Verdict> = self.details.iter().take(mandatory).map(|d| d.outcome).collect();
        self.verdict = if outcomes.contains(&Verdict::Fails) {
            Verdict::Fails
        } else if outcomes.contains(&Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else if outcomes.contains(&Verdict::Marginal) {
            Verdict::Marginal
        } else {
            Verdict::Holds
        };
    }
}
