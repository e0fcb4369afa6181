//! Dense primal-dual interior-point solver for semidefinite programs in the
//! standard form
//!
//! ```text
//! minimize   ⟨C, X⟩ + cᵀθ
//! subject to ⟨A_i, X⟩ + B_iᵀθ = b_i,   X = diag(X_1, …, X_K) ⪰ 0,   θ free
//! ```
//!
//! plus SDPA sparse-format interchange.

mod sdpa;
mod solver;
mod verify;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

pub use sdpa::{read_sdpa, read_sdpa_document, write_sdpa, write_sdpa_document, ParseError, SdpaDocument};
pub use solver::{solve, SdpOptions};
pub use verify::{verify_farkas, verify_solution, Verification};

/// Linear functional on block matrices and free variables. A matrix entry
/// `(block, r, c)` with `r ≤ c` and value `v` stands for the symmetric
/// matrix with `v` at `(r, c)` and `(c, r)`, so off-diagonal entries count
/// twice in `⟨A, X⟩`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearFunctional {
    matrix: BTreeMap<(usize, usize, usize), f64>,
    free: BTreeMap<usize, f64>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` to the symmetric entry `(r, c)` of `block`.
    pub fn add_entry(&mut self, block: usize, r: usize, c: usize, v: f64) {
        let key = if r <= c { (block, r, c) } else { (block, c, r) };
        let slot = self.matrix.entry(key).or_insert(0.0);
        *slot += v;
        if *slot == 0.0 {
            self.matrix.remove(&key);
        }
    }

    pub fn add_free(&mut self, j: usize, v: f64) {
        let slot = self.free.entry(j).or_insert(0.0);
        *slot += v;
        if *slot == 0.0 {
            self.free.remove(&j);
        }
    }

    pub fn with_entry(mut self, block: usize, r: usize, c: usize, v: f64) -> Self {
        self.add_entry(block, r, c, v);
        self
    }

    pub fn with_free(mut self, j: usize, v: f64) -> Self {
        self.add_free(j, v);
        self
    }

    /// `(block, r, c, v)` with `r ≤ c`, sorted.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.matrix.iter().map(|(&(b, r, c), &v)| (b, r, c, v))
    }

    pub fn free_entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.free.iter().map(|(&j, &v)| (j, v))
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.is_empty() && self.free.is_empty()
    }

    pub fn eval(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&(b, r, c), &v) in &self.matrix {
            acc += if r == c { v * blocks[b][(r, c)] } else { v * (blocks[b][(r, c)] + blocks[b][(c, r)]) };
        }
        for (&j, &v) in &self.free {
            acc += v * free[j];
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub functional: LinearFunctional,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub free_vars: usize,
    pub constraints: Vec<Constraint>,
    /// Minimized.
    pub objective: LinearFunctional,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("block size must be at least 1")]
    EmptyBlock,
    #[error("constraint {index} refers to {what} outside the problem")]
    OutOfRange { index: usize, what: String },
    #[error("constraint {0} has a non-finite coefficient")]
    NonFinite(usize),
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>, free_vars: usize) -> Self {
        SdpProblem { blocks, free_vars, constraints: Vec::new(), objective: LinearFunctional::new() }
    }

    pub fn add_constraint(&mut self, functional: LinearFunctional, rhs: f64) {
        self.constraints.push(Constraint { functional, rhs });
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.contains(&0) {
            return Err(SdpError::EmptyBlock);
        }
        let check = |index: usize, f: &LinearFunctional| -> Result<(), SdpError> {
            for (b, _, c, v) in f.entries() {
                if b >= self.blocks.len() || c >= self.blocks[b] {
                    return Err(SdpError::OutOfRange { index, what: format!("entry ({b}, {c})") });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite(index));
                }
            }
            for (j, v) in f.free_entries() {
                if j >= self.free_vars {
                    return Err(SdpError::OutOfRange { index, what: format!("free variable {j}") });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite(index));
                }
            }
            Ok(())
        };
        for (i, c) in self.constraints.iter().enumerate() {
            check(i, &c.functional)?;
            if !c.rhs.is_finite() {
                return Err(SdpError::NonFinite(i));
            }
        }
        check(self.constraints.len(), &self.objective)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub mu: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Whether the duality gap also closed (not only primal feasibility).
    pub optimal: bool,
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Max absolute constraint violation in the caller's scaling.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub history: Vec<IterationLog>,
    /// `y` with `bᵀy = 1`, `Bᵀy = 0` and `−Σ y_i A_i ⪰ 0` when infeasible.
    pub farkas: Option<Vec<f64>>,
    pub dropped_rows: Vec<usize>,
    pub message: Option<String>,
}

impl SdpSolution {
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min)
    }
}
