//! Sum-of-squares programs: polynomial identities with Gram-matrix blocks,
//! affine parameters and linear side constraints, assembled into an SDP.

mod basis;
mod certificate;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::poly::{default_names, rat_to_f64, Monomial, QPoly};
use crate::sdp::{solve, LinearFunctional, SdpOptions, SdpProblem, SdpSolution, SdpStatus};

pub use basis::MonomialBasis;
pub use certificate::{extract_certificate, render_float, sig, GramCertificate, SosCertificate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SosError {
    #[error("target has odd degree {0}")]
    OddDegree(u32),
    #[error("structural constraints are inconsistent")]
    InconsistentStructural,
    #[error("degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: u32, cap: u32 },
    #[error("polynomials disagree on the number of variables")]
    Dimension,
    #[error("no constraints g_i given")]
    NoConstraints,
    #[error("SDP status {0:?} carries no certificate")]
    NotFeasible(SdpStatus),
}

/// A Gram block `z_bᵀ Q_b z_b`, entering its identity multiplied by `g_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramBlock {
    pub label: String,
    pub basis: MonomialBasis,
    pub identity: usize,
    pub multiplier: QPoly,
}

/// `constant + Σ θ_j N_j = Σ_b g_b · z_bᵀQ_b z_b` over all blocks attached
/// to this identity.
#[derive(Clone, Debug, PartialEq)]
pub struct SosIdentity {
    pub label: String,
    pub constant: QPoly,
    pub params: Vec<(usize, QPoly)>,
}

/// `Σ coeffs_j θ_j = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralConstraint {
    pub label: String,
    pub coeffs: Vec<(usize, BigRational)>,
    pub rhs: BigRational,
}

#[derive(Clone, Debug)]
pub struct SosProblem {
    pub nvars: usize,
    pub blocks: Vec<GramBlock>,
    pub param_labels: Vec<String>,
    pub identities: Vec<SosIdentity>,
    pub structural: Vec<StructuralConstraint>,
    /// Per identity: coefficients are multiplied by this before assembly so
    /// the largest is 1. Gram variables in the SDP are scaled alike.
    pub scales: Vec<f64>,
    pub sdp: SdpProblem,
}

fn max_abs(p: &QPoly) -> BigRational {
    p.terms().map(|(_, c)| c.abs()).fold(BigRational::zero(), |a, c| if c > a { c } else { a })
}

impl SosProblem {
    /// Validates the pieces and assembles the SDP: one equality per monomial
    /// of each identity, one per structural constraint, trace objective.
    pub fn assemble(
        nvars: usize,
        blocks: Vec<GramBlock>,
        param_labels: Vec<String>,
        identities: Vec<SosIdentity>,
        structural: Vec<StructuralConstraint>,
    ) -> Result<Self, SosError> {
        let nparams = param_labels.len();
        for id in &identities {
            if id.constant.nvars() != nvars || id.params.iter().any(|(_, p)| p.nvars() != nvars) {
                return Err(SosError::Dimension);
            }
        }
        for b in &blocks {
            if b.multiplier.nvars() != nvars || b.basis.monomials().iter().any(|m| m.nvars() != nvars) {
                return Err(SosError::Dimension);
            }
        }
        check_structural(&structural, nparams)?;

        let mut scales = Vec::with_capacity(identities.len());
        for id in &identities {
            let mut m = max_abs(&id.constant);
            for (_, p) in &id.params {
                let a = max_abs(p);
                if a > m {
                    m = a;
                }
            }
            scales.push(if m.is_zero() { 1.0 } else { 1.0 / rat_to_f64(&m) });
        }

        let mut sdp = SdpProblem::new(blocks.iter().map(|b| b.basis.len().max(1)).collect(), nparams);
        for (k, id) in identities.iter().enumerate() {
            let s = scales[k];
            let mut rows: BTreeMap<Monomial, (LinearFunctional, f64)> = BTreeMap::new();
            for (m, c) in id.constant.terms() {
                rows.entry(m.clone()).or_default().1 += s * rat_to_f64(c);
            }
            for (j, p) in &id.params {
                for (m, c) in p.terms() {
                    rows.entry(m.clone()).or_default().0.add_free(*j, -s * rat_to_f64(c));
                }
            }
            for (bi, b) in blocks.iter().enumerate().filter(|(_, b)| b.identity == k) {
                let z = b.basis.monomials();
                let g: Vec<(&Monomial, f64)> = b.multiplier.terms().map(|(m, c)| (m, rat_to_f64(c))).collect();
                for r in 0..z.len() {
                    for c in r..z.len() {
                        let zz = z[r].mul(&z[c]);
                        for (gm, gc) in &g {
                            rows.entry(zz.mul(gm)).or_default().0.add_entry(bi, r, c, *gc);
                        }
                    }
                }
            }
            for (_, (f, rhs)) in rows {
                sdp.add_constraint(f, rhs);
            }
        }
        for sc in &structural {
            let mut f = LinearFunctional::new();
            for (j, c) in &sc.coeffs {
                f.add_free(*j, rat_to_f64(c));
            }
            sdp.add_constraint(f, rat_to_f64(&sc.rhs));
        }
        let mut objective = LinearFunctional::new();
        for (bi, b) in blocks.iter().enumerate() {
            for r in 0..b.basis.len() {
                objective.add_entry(bi, r, r, 1.0);
            }
        }
        sdp.objective = objective;
        Ok(SosProblem { nvars, blocks, param_labels, identities, structural, scales, sdp })
    }

    /// Human-auditable listing of blocks, parameters and constraints.
    pub fn render(&self, names: Option<&[String]>) -> String {
        let owned = default_names(self.nvars);
        let names = names.unwrap_or(&owned);
        let mut out = String::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let z: Vec<String> = b.basis.monomials().iter().map(|m| m.render(names)).collect();
            let _ = writeln!(
                out,
                "block {i} `{}` (identity {}, multiplier {}): z = [{}]",
                b.label,
                b.identity,
                b.multiplier.render(names),
                z.join(", ")
            );
        }
        for (j, l) in self.param_labels.iter().enumerate() {
            let _ = writeln!(out, "param {j}: {l}");
        }
        for (k, id) in self.identities.iter().enumerate() {
            let mut lhs = vec![id.constant.render(names)];
            for (j, p) in &id.params {
                lhs.push(format!("theta{j}*({})", p.render(names)));
            }
            let rhs: Vec<String> = self
                .blocks
                .iter()
                .enumerate()
                .filter(|(_, b)| b.identity == k)
                .map(|(i, b)| format!("({})*sos{i}", b.multiplier.render(names)))
                .collect();
            let _ = writeln!(out, "identity {k} `{}`: {} == {}", id.label, lhs.join(" + "), rhs.join(" + "));
        }
        for sc in &self.structural {
            let lhs: Vec<String> = sc.coeffs.iter().map(|(j, c)| format!("{c}*theta{j}")).collect();
            let _ = writeln!(out, "structural `{}`: {} = {}", sc.label, lhs.join(" + "), sc.rhs);
        }
        let _ = writeln!(
            out,
            "sdp: blocks {:?}, {} free, {} equalities",
            self.sdp.blocks,
            self.sdp.free_vars,
            self.sdp.constraints.len()
        );
        out
    }
}

/// Exact rank test of the structural system `[A | b]`.
fn check_structural(structural: &[StructuralConstraint], nparams: usize) -> Result<(), SosError> {
    let mut rows: Vec<Vec<BigRational>> = structural
        .iter()
        .map(|sc| {
            let mut row = vec![BigRational::zero(); nparams + 1];
            for (j, c) in &sc.coeffs {
                if *j < nparams {
                    row[*j] += c;
                }
            }
            row[nparams] = sc.rhs.clone();
            row
        })
        .collect();
    if structural.iter().any(|sc| sc.coeffs.iter().any(|(j, _)| *j >= nparams)) {
        return Err(SosError::Dimension);
    }
    let mut rank_row = 0;
    for col in 0..nparams {
        let Some(piv) = (rank_row..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank_row, piv);
        let pivot = rows[rank_row][col].clone();
        let pivot_row = rows[rank_row].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank_row && !row[col].is_zero() {
                let factor = &row[col] / &pivot;
                for (x, p) in row[col..=nparams].iter_mut().zip(&pivot_row[col..=nparams]) {
                    *x -= &factor * p;
                }
            }
        }
        rank_row += 1;
    }
    if rows[rank_row..].iter().any(|row| !row[nparams].is_zero()) {
        return Err(SosError::InconsistentStructural);
    }
    Ok(())
}

/// `N = zᵀQz`, `Q ⪰ 0`, with the half-Newton box basis.
pub fn build_sos_feasibility(n: &QPoly) -> Result<SosProblem, SosError> {
    if let Some(d) = n.degree() {
        if d % 2 == 1 {
            return Err(SosError::OddDegree(d));
        }
    }
    build_sos_with_basis(n, MonomialBasis::for_polynomial(n))
}

/// As [`build_sos_feasibility`] with a caller-chosen basis.
pub fn build_sos_with_basis(n: &QPoly, basis: MonomialBasis) -> Result<SosProblem, SosError> {
    let nv = n.nvars();
    let block = GramBlock { label: "sos".into(), basis, identity: 0, multiplier: QPoly::one(nv) };
    let id = SosIdentity { label: "target".into(), constant: n.clone(), params: Vec::new() };
    SosProblem::assemble(nv, vec![block], Vec::new(), vec![id], Vec::new())
}

/// `N₀ + Σ θ_j N_j = zᵀQz`, `Q ⪰ 0`, under linear structural constraints.
pub fn build_parametric_sos(
    n0: &QPoly,
    nj: &[QPoly],
    structural: Vec<StructuralConstraint>,
) -> Result<SosProblem, SosError> {
    let nv = n0.nvars();
    if nj.iter().any(|p| p.nvars() != nv) {
        return Err(SosError::Dimension);
    }
    let support = n0.terms().map(|(m, _)| m).chain(nj.iter().flat_map(|p| p.terms().map(|(m, _)| m)));
    let basis = MonomialBasis::half_newton(nv, support);
    let block = GramBlock { label: "sos".into(), basis, identity: 0, multiplier: QPoly::one(nv) };
    let id =
        SosIdentity { label: "target".into(), constant: n0.clone(), params: nj.iter().cloned().enumerate().collect() };
    let labels = (0..nj.len()).map(|j| format!("theta{j}")).collect();
    SosProblem::assemble(nv, vec![block], labels, vec![id], structural)
}

/// Putinar-style certificate `N = σ₀ + Σ σ_i g_i` with SOS multipliers,
/// `σ_i` of half-degree `multiplier_half_degrees[i]`. The degree of `σ₀` is
/// chosen to cover every product; it must stay within `degree_cap`.
pub fn localized_sos(
    n: &QPoly,
    constraints: &[QPoly],
    multiplier_half_degrees: &[u32],
    degree_cap: u32,
) -> Result<SosProblem, SosError> {
    let nv = n.nvars();
    if constraints.is_empty() {
        return Err(SosError::NoConstraints);
    }
    if constraints.iter().any(|g| g.nvars() != nv) || multiplier_half_degrees.len() != constraints.len() {
        return Err(SosError::Dimension);
    }
    let mut top = n.degree().unwrap_or(0);
    for (g, &d) in constraints.iter().zip(multiplier_half_degrees) {
        top = top.max(g.degree().unwrap_or(0) + 2 * d);
    }
    let d0 = top.div_ceil(2);
    if 2 * d0 > degree_cap {
        return Err(SosError::DegreeOverflow { degree: 2 * d0, cap: degree_cap });
    }
    let mut blocks = vec![GramBlock {
        label: "sigma0".into(),
        basis: MonomialBasis::dense(nv, 0, d0),
        identity: 0,
        multiplier: QPoly::one(nv),
    }];
    for (i, (g, &d)) in constraints.iter().zip(multiplier_half_degrees).enumerate() {
        blocks.push(GramBlock {
            label: format!("sigma{}", i + 1),
            basis: MonomialBasis::dense(nv, 0, d),
            identity: 0,
            multiplier: g.clone(),
        });
    }
    let id = SosIdentity { label: "target".into(), constant: n.clone(), params: Vec::new() };
    SosProblem::assemble(nv, blocks, Vec::new(), vec![id], Vec::new())
}

#[derive(Clone, Debug)]
pub struct SosOptions {
    pub sdp: SdpOptions,
    /// Max scaled coefficient mismatch for a valid certificate.
    pub eps_res: f64,
    /// Most negative scaled Gram eigenvalue tolerated.
    pub eps_eig: f64,
}

impl Default for SosOptions {
    fn default() -> Self {
        SosOptions { sdp: SdpOptions::default(), eps_res: 1e-7, eps_eig: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct SosOutcome {
    pub solution: SdpSolution,
    pub certificate: Option<SosCertificate>,
    pub eps_res: f64,
    pub eps_eig: f64,
}

impl SosOutcome {
    pub fn certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.is_valid(self.eps_res, self.eps_eig))
    }

    pub fn status(&self) -> SdpStatus {
        self.solution.status
    }
}

pub fn solve_sos(prob: &SosProblem, opts: &SosOptions) -> SosOutcome {
    let solution = solve(&prob.sdp, &opts.sdp);
    let certificate = extract_certificate(prob, &solution).ok();
    SosOutcome { solution, certificate, eps_res: opts.eps_res, eps_eig: opts.eps_eig }
}

/// Builds, solves and checks `N` SOS.
pub fn prove_sos(n: &QPoly, opts: &SosOptions) -> Result<SosOutcome, SosError> {
    Ok(solve_sos(&build_sos_feasibility(n)?, opts))
}

/// `ε·(Σ x_i²)^k`, the strictness margin subtracted under a positive `eps_pos`.
pub fn norm_power(nvars: usize, k: u32, eps: &BigRational) -> QPoly {
    let norm2 = (0..nvars).fold(QPoly::zero(nvars), |acc, i| &acc + &QPoly::var(nvars, i).pow(2));
    norm2.pow(k).scale(eps)
}
