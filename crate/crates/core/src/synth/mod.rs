//! Certificate workflows: check a given density against the stochastic,
//! escape, invariant-set and deterministic criteria, or search for a
//! polynomial feedback together with its density as one parametric SOS
//! program.

mod synthesis;
mod verify;

use num_rational::BigRational;
use serde::Serialize;

use crate::ops::{ConditionReport, OpsError, Verdict};
use crate::poly::{BExpr, PolyError, QPoly};
use crate::sdp::SdpStatus;
use crate::sos::{SosError, SosOptions, SosOutcome, SosProblem};

pub use synthesis::{sweep, synthesize_controller, ControlledSdeSystem, Controller, SweepRow, SynthesisSpec};
pub use verify::{soundness_margin, verify_density, verify_deterministic, verify_on_invariant_set};

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    /// Convergence to the origin: `D` singular at 0, integrable at infinity.
    Stabilize,
    /// Escape to infinity: `D` globally `C²` and not integrable.
    Escape,
    /// Convergence inside `K = {g_i ≥ 0}`, assumed backward invariant.
    InvariantSet(Vec<QPoly>),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Stabilize => "stabilize",
            Mode::Escape => "escape",
            Mode::InvariantSet(_) => "invariant-set",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertVerdict {
    Certified,
    NotCertified,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error("invalid synthesis input: {0}")]
    Spec(String),
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub sos: SosOptions,
    /// Marginal side conditions block certification.
    pub strict: bool,
    /// Require `target − ε·|x|^{deg}` SOS instead of `target`.
    pub eps_pos: Option<BigRational>,
    /// Half-degree of the multipliers in invariant-set mode; chosen from the
    /// target degree when absent.
    pub multiplier_half_degree: Option<u32>,
    pub degree_cap: u32,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            sos: SosOptions::default(),
            strict: false,
            eps_pos: None,
            multiplier_half_degree: None,
            degree_cap: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SideCondition {
    pub mandatory: bool,
    pub report: ConditionReport,
}

#[derive(Clone, Debug)]
pub struct CertificateResult {
    pub verdict: CertVerdict,
    pub mode: String,
    pub density: BExpr,
    pub controller: Option<Controller>,
    /// `ℒ*D`, or `∇·(fD)` in the deterministic workflow.
    pub generator: BExpr,
    /// Polynomial required to be SOS (before any `eps_pos` margin), with
    /// `generator = sign · target · b^shift`.
    pub target: QPoly,
    pub shift: BigRational,
    /// `-1` when the generator must be negative, `+1` when positive.
    pub sign: i8,
    pub sos_problem: Option<SosProblem>,
    pub outcome: Option<SosOutcome>,
    /// Synthesis only: the parametric program and how its solve ended.
    pub search: Option<SosProblem>,
    pub search_status: Option<SdpStatus>,
    pub conditions: Vec<SideCondition>,
    pub notes: Vec<String>,
}

impl CertificateResult {
    pub fn sos_certified(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.certified())
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().map(|c| &c.report).find(|r| r.condition == name)
    }
}

/// Certified needs a valid SOS certificate and no failed mandatory
/// condition; in strict mode any marginal condition downgrades to Marginal.
pub(crate) fn decide(sos_ok: bool, conditions: &[SideCondition], strict: bool) -> CertVerdict {
    if !sos_ok || conditions.iter().any(|c| c.mandatory && c.report.verdict == Verdict::Fails) {
        return CertVerdict::NotCertified;
    }
    if strict && conditions.iter().any(|c| c.report.verdict == Verdict::Marginal) {
        return CertVerdict::Marginal;
    }
    CertVerdict::Certified
}
