//! Sparse multivariate polynomials and the base-power expression algebra.

mod bexpr;
mod float;
mod monomial;
mod polynomial;

use std::fmt;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub use bexpr::{rat, BExpr};
pub use float::{FloatBExpr, PolyEval};
pub use monomial::{default_names, monomials_up_to, Monomial};
pub use polynomial::{rat_to_f64, rational_sqrt, FPoly, Polynomial, QPoly};

/// Coefficient domain of a [`Polynomial`]. Implemented by `BigRational`
/// (exact symbolic work) and `f64` (numeric layers). The two never mix: the
/// only bridge is [`QPoly::to_f64`].
pub trait Coeff:
    Num + Signed + Clone + fmt::Debug + fmt::Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

impl<T> Coeff for T where
    T: Num + Signed + Clone + fmt::Debug + fmt::Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: {left} vs {right} variables")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expressions use different base polynomials")]
    BaseMismatch,
    #[error("base polynomial must be nonzero")]
    ZeroBase,
    #[error("powers {powers:?} are not separated by integers")]
    NonIntegerGap { powers: Vec<String> },
    #[error("shift {shift} leaves a negative or fractional power")]
    InvalidShift { shift: String },
    #[error("base polynomial vanishes at the evaluation point")]
    BaseVanishes,
    #[error("base polynomial is negative at the evaluation point under fractional power {power}")]
    NegativeBase { power: String },
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error("evaluation point is not finite")]
    NonFinitePoint,
}
