//! Infeasible-start primal-dual path following with the HKM search direction
//! and Mehrotra predictor-corrector steps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::verify::{verify_farkas, verify_solution};
use super::{IterationLog, SdpProblem, SdpSolution, SdpStatus};

#[derive(Clone, Debug)]
pub struct SdpOptions {
    /// Absolute tolerance on constraint violation for a `Feasible` answer.
    pub tol_p: f64,
    /// Tolerance on negative eigenvalues of block values.
    pub tol_e: f64,
    /// Relative duality gap for optimality.
    pub tol_gap: f64,
    pub max_iter: usize,
    /// Initial `X = S = radius·I`.
    pub init_radius: f64,
    pub step_fraction: f64,
    /// Gram–Schmidt pivot tolerance for dropping dependent constraints.
    pub pivot_tol: f64,
    /// Tolerance for accepting a normalized dual ray as an infeasibility
    /// witness: it rules out feasible points with `tr X + |θ|₁ < 1/farkas_tol`.
    pub farkas_tol: f64,
    /// Solve the auxiliary ray problem when the main run stalls.
    pub farkas_fallback: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol_p: 1e-8,
            tol_e: 1e-8,
            tol_gap: 1e-8,
            max_iter: 200,
            init_radius: 10.0,
            step_fraction: 0.98,
            pivot_tol: 1e-10,
            farkas_tol: 1e-6,
            farkas_fallback: true,
        }
    }
}

type BlockEntries = Vec<(usize, usize, f64)>;

struct Prepared {
    blocks: Vec<usize>,
    nfree: usize,
    /// Per kept row, per touched block: full (both triangles) entries.
    rows: Vec<Vec<(usize, BlockEntries)>>,
    bfree: DMatrix<f64>,
    b: DVector<f64>,
    c_blocks: Vec<DMatrix<f64>>,
    c_free: DVector<f64>,
    kept: Vec<usize>,
    /// Row norms used for scaling, per kept row.
    norms: Vec<f64>,
}

enum Preprocessed {
    Ready(Box<Prepared>, Vec<usize>),
    Inconsistent(Vec<f64>, Vec<usize>),
}

fn tri_index(s: usize, r: usize, c: usize) -> usize {
    r * (2 * s - r + 1) / 2 + (c - r)
}

fn preprocess(p: &SdpProblem, opts: &SdpOptions) -> Preprocessed {
    let m = p.constraints.len();
    let mut offsets = Vec::with_capacity(p.blocks.len());
    let mut dim = 0;
    for &s in &p.blocks {
        offsets.push(dim);
        dim += s * (s + 1) / 2;
    }
    let free_off = dim;
    dim += p.free_vars;

    let mut norms = vec![0.0; m];
    let mut scaled_b = vec![0.0; m];
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut transforms: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();

    for (i, con) in p.constraints.iter().enumerate() {
        let mut a = DVector::zeros(dim);
        for (b, r, c, v) in con.functional.entries() {
            a[offsets[b] + tri_index(p.blocks[b], r, c)] = v;
        }
        for (j, v) in con.functional.free_entries() {
            a[free_off + j] = v;
        }
        let norm = a.norm();
        if norm == 0.0 {
            if con.rhs.abs() > opts.tol_p {
                let mut y = vec![0.0; m];
                y[i] = 1.0 / con.rhs;
                return Preprocessed::Inconsistent(y, dropped);
            }
            dropped.push(i);
            log::warn!("constraint {i} is empty and dropped");
            continue;
        }
        norms[i] = norm;
        a /= norm;
        scaled_b[i] = con.rhs / norm;

        let mut v = a.clone();
        let mut coeffs = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (k, q) in basis.iter().enumerate() {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
                coeffs[k] += c;
            }
        }
        let rest = v.norm();
        if rest > opts.pivot_tol {
            let mut t = vec![0.0; m];
            t[i] = 1.0;
            for (k, ck) in coeffs.iter().enumerate() {
                for (l, tl) in transforms[k].iter().enumerate() {
                    t[l] -= ck * tl;
                }
            }
            for tl in &mut t {
                *tl /= rest;
            }
            basis.push(v / rest);
            transforms.push(t);
            kept.push(i);
        } else {
            let mut w = vec![0.0; m];
            for (k, ck) in coeffs.iter().enumerate() {
                for (l, tl) in transforms[k].iter().enumerate() {
                    w[l] += ck * tl;
                }
            }
            let pred: f64 = w.iter().zip(&scaled_b).map(|(wl, bl)| wl * bl).sum();
            let gap = scaled_b[i] - pred;
            if gap.abs() > 1e-8 * (1.0 + scaled_b[i].abs()) {
                let mut y = vec![0.0; m];
                y[i] = 1.0 / norms[i];
                for (l, wl) in w.iter().enumerate() {
                    if *wl != 0.0 {
                        y[l] -= wl / norms[l];
                    }
                }
                for yl in &mut y {
                    *yl /= gap;
                }
                return Preprocessed::Inconsistent(y, dropped);
            }
            log::warn!("constraint {i} is linearly dependent and dropped");
            dropped.push(i);
        }
    }

    let mk = kept.len();
    let mut rows = Vec::with_capacity(mk);
    let mut bfree = DMatrix::zeros(mk, p.free_vars);
    let mut b = DVector::zeros(mk);
    let mut kept_norms = Vec::with_capacity(mk);
    for (k, &i) in kept.iter().enumerate() {
        let con = &p.constraints[i];
        let n = norms[i];
        let mut per_block: Vec<(usize, BlockEntries)> = Vec::new();
        for (blk, r, c, v) in con.functional.entries() {
            if per_block.last().map(|(bb, _)| *bb) != Some(blk) {
                per_block.push((blk, Vec::new()));
            }
            let list = &mut per_block.last_mut().expect("just pushed").1;
            list.push((r, c, v / n));
            if r != c {
                list.push((c, r, v / n));
            }
        }
        for (j, v) in con.functional.free_entries() {
            bfree[(k, j)] = v / n;
        }
        b[k] = con.rhs / n;
        rows.push(per_block);
        kept_norms.push(n);
    }
    let mut c_blocks: Vec<DMatrix<f64>> = p.blocks.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    for (blk, r, c, v) in p.objective.entries() {
        c_blocks[blk][(r, c)] += v;
        if r != c {
            c_blocks[blk][(c, r)] += v;
        }
    }
    let mut c_free = DVector::zeros(p.free_vars);
    for (j, v) in p.objective.free_entries() {
        c_free[j] = v;
    }
    Preprocessed::Ready(
        Box::new(Prepared {
            blocks: p.blocks.clone(),
            nfree: p.free_vars,
            rows,
            bfree,
            b,
            c_blocks,
            c_free,
            kept,
            norms: kept_norms,
        }),
        dropped,
    )
}

impl Prepared {
    fn m(&self) -> usize {
        self.rows.len()
    }

    /// `A(Z)_i = ⟨A_i, Z⟩` for a possibly nonsymmetric block matrix `Z`.
    fn apply(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|row| {
                row.iter().map(|(blk, es)| es.iter().map(|&(r, c, v)| v * z[*blk][(c, r)]).sum::<f64>()).sum::<f64>()
            }),
        )
    }

    /// `Σ y_i A_i` as dense blocks.
    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.blocks.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        for (i, row) in self.rows.iter().enumerate() {
            if y[i] == 0.0 {
                continue;
            }
            for (blk, es) in row {
                for &(r, c, v) in es {
                    out[*blk][(r, c)] += y[i] * v;
                }
            }
        }
        out
    }

    /// Schur complement `M_ij = tr(A_i X A_j S⁻¹)`.
    fn schur(&self, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut by_block: Vec<Vec<(usize, &BlockEntries)>> = vec![Vec::new(); self.blocks.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (blk, es) in row {
                by_block[*blk].push((i, es));
            }
        }
        let mut mat = DMatrix::zeros(m, m);
        for (blk, members) in by_block.iter().enumerate() {
            let s = self.blocks[blk];
            for &(j, ej) in members {
                // F = X A_j, then G = F S⁻¹
                let mut f = DMatrix::zeros(s, s);
                for &(r, c, v) in ej.iter() {
                    for a in 0..s {
                        f[(a, c)] += v * x[blk][(a, r)];
                    }
                }
                let g = &f * &sinv[blk];
                for &(i, ei) in members {
                    let mut acc = 0.0;
                    for &(a, b, w) in ei.iter() {
                        acc += w * g[(b, a)];
                    }
                    mat[(i, j)] += acc;
                }
            }
        }
        mat
    }
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `α` with `X + αΔX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(a) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&a.transpose()) else {
        return 0.0;
    };
    let min = sym(&w).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dtheta: DVector<f64>,
}

struct Iterate<'a> {
    prep: &'a Prepared,
    x: &'a [DMatrix<f64>],
    sinv: &'a [DMatrix<f64>],
    rd: &'a [DMatrix<f64>],
    rp: &'a DVector<f64>,
    rf: &'a DVector<f64>,
    lu: &'a nalgebra::LU<f64, Dyn, Dyn>,
}

impl Iterate<'_> {
    /// Solves for the direction with complementarity target `σμ` and the
    /// second-order correction `ΔX_a ΔS_a`.
    fn direction(&self, sigma_mu: f64, corr: Option<&Direction>) -> Option<Direction> {
        let prep = self.prep;
        let m = prep.m();
        let nb = prep.blocks.len();
        let mut z = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut zk = &self.sinv[k] * sigma_mu - &self.x[k] - &self.x[k] * &self.rd[k] * &self.sinv[k];
            if let Some(c) = corr {
                zk -= &c.dx[k] * &c.ds[k] * &self.sinv[k];
            }
            z.push(zk);
        }
        let rhs_top = self.rp - prep.apply(&z);
        let mut rhs = DVector::zeros(m + prep.nfree);
        rhs.rows_mut(0, m).copy_from(&rhs_top);
        rhs.rows_mut(m, prep.nfree).copy_from(self.rf);
        let sol = if m + prep.nfree == 0 { rhs.clone() } else { self.lu.solve(&rhs)? };
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dy = sol.rows(0, m).into_owned();
        let dtheta = sol.rows(m, prep.nfree).into_owned();
        let ady = prep.adjoint(&dy);
        let mut dx = Vec::with_capacity(nb);
        let mut ds = Vec::with_capacity(nb);
        for k in 0..nb {
            let dsk = &self.rd[k] - &ady[k];
            let dxk = &z[k] + &self.x[k] * &ady[k] * &self.sinv[k];
            dx.push(sym(&dxk));
            ds.push(dsk);
        }
        Some(Direction { dx, ds, dy, dtheta })
    }
}

struct State {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    theta: DVector<f64>,
}

enum Outcome {
    Converged,
    Ray(Vec<f64>),
    MaxIter,
    Stalled(String),
    Failure(String),
}

/// Solves `p`. The status is `Feasible` only after the independent
/// verifier accepts the block values, and `Infeasible` only with a verified
/// dual ray.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let mut sol = solve_inner(p, opts);
    if opts.farkas_fallback && matches!(sol.status, SdpStatus::MaxIter | SdpStatus::NumericalFailure) {
        if let Some(y) = farkas_auxiliary(p, opts) {
            sol.status = SdpStatus::Infeasible;
            sol.farkas = Some(y);
            sol.message = Some("infeasibility certified by auxiliary ray problem".into());
        }
    }
    sol
}

fn empty_solution(p: &SdpProblem, status: SdpStatus) -> SdpSolution {
    SdpSolution {
        status,
        optimal: false,
        blocks: p.blocks.iter().map(|&s| DMatrix::zeros(s, s)).collect(),
        free: vec![0.0; p.free_vars],
        y: vec![0.0; p.constraints.len()],
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        iterations: 0,
        history: Vec::new(),
        farkas: None,
        dropped_rows: Vec::new(),
        message: None,
    }
}

fn solve_inner(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    if let Err(e) = p.validate() {
        let mut sol = empty_solution(p, SdpStatus::NumericalFailure);
        sol.message = Some(e.to_string());
        return sol;
    }
    let (prep, dropped) = match preprocess(p, opts) {
        Preprocessed::Ready(prep, dropped) => (prep, dropped),
        Preprocessed::Inconsistent(y, dropped) => {
            let mut sol = empty_solution(p, SdpStatus::Infeasible);
            if verify_farkas(p, &y, opts.farkas_tol) {
                sol.farkas = Some(y);
                sol.message = Some("inconsistent linear constraints".into());
            } else {
                sol.status = SdpStatus::NumericalFailure;
                sol.message = Some("inconsistent constraints but ray check failed".into());
            }
            sol.dropped_rows = dropped;
            return sol;
        }
    };
    let m = prep.m();
    let nb = prep.blocks.len();
    let ntot: usize = prep.blocks.iter().sum();
    let r0 = opts.init_radius;
    let mut st = State {
        x: prep.blocks.iter().map(|&s| DMatrix::identity(s, s) * r0).collect(),
        s: prep.blocks.iter().map(|&s| DMatrix::identity(s, s) * r0).collect(),
        y: DVector::zeros(m),
        theta: DVector::zeros(prep.nfree),
    };
    let bnorm = prep.b.norm();
    let cnorm = (frob(&prep.c_blocks).powi(2) + prep.c_free.norm_squared()).sqrt();
    let mut history = Vec::new();
    let mut stall = 0;

    let outcome = 'outer: loop {
        let it = history.len();
        let ax = prep.apply(&st.x);
        let rp = &prep.b - &ax - &prep.bfree * &st.theta;
        let ay = prep.adjoint(&st.y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &prep.c_blocks[k] - &ay[k] - &st.s[k]).collect();
        let rf = &prep.c_free - prep.bfree.transpose() * &st.y;
        let mu = if ntot > 0 { inner(&st.x, &st.s) / ntot as f64 } else { 0.0 };
        let pobj = inner(&prep.c_blocks, &st.x) + prep.c_free.dot(&st.theta);
        let dobj = prep.b.dot(&st.y);
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = (frob(&rd).powi(2) + rf.norm_squared()).sqrt() / (1.0 + cnorm);
        let relgap = ntot as f64 * mu / (1.0 + pobj.abs() + dobj.abs());

        if pinf <= opts.tol_p && dinf <= opts.tol_p && relgap <= opts.tol_gap {
            break Outcome::Converged;
        }
        if dobj > 0.0 {
            if let Some(ray) = candidate_ray(p, &prep, &st.y, dobj, opts) {
                break Outcome::Ray(ray);
            }
        }
        if it >= opts.max_iter {
            break Outcome::MaxIter;
        }

        let mut xchol = Vec::with_capacity(nb);
        let mut schol = Vec::with_capacity(nb);
        let mut sinv = Vec::with_capacity(nb);
        for k in 0..nb {
            let Some(cx) = Cholesky::new(st.x[k].clone()) else {
                break 'outer Outcome::Failure(format!("Cholesky breakdown of X in block {k}"));
            };
            let Some(cs) = Cholesky::new(st.s[k].clone()) else {
                break 'outer Outcome::Failure(format!("Cholesky breakdown of S in block {k}"));
            };
            sinv.push(cs.inverse());
            xchol.push(cx);
            schol.push(cs);
        }
        let mmat = prep.schur(&st.x, &sinv);
        let dim = m + prep.nfree;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (m, m)).copy_from(&mmat);
        kkt.view_mut((0, m), (m, prep.nfree)).copy_from(&prep.bfree);
        kkt.view_mut((m, 0), (prep.nfree, m)).copy_from(&prep.bfree.transpose());
        let scale = (0..m).map(|i| mmat[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
        for j in 0..prep.nfree {
            kkt[(m + j, m + j)] = -1e-12 * scale;
        }
        let lu = kkt.lu();
        let iterate = Iterate { prep: &prep, x: &st.x, sinv: &sinv, rd: &rd, rp: &rp, rf: &rf, lu: &lu };

        let Some(pred) = iterate.direction(0.0, None) else {
            break Outcome::Failure("singular Newton system".into());
        };
        let steps = |d: &Direction| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&xchol[k], &d.dx[k]));
                ad = ad.min(max_step(&schol[k], &d.ds[k]));
            }
            ((opts.step_fraction * ap).min(1.0), (opts.step_fraction * ad).min(1.0))
        };
        let (ap, ad) = steps(&pred);
        let mut mu_aff = 0.0;
        for k in 0..nb {
            mu_aff += (&st.x[k] + &pred.dx[k] * ap).dot(&(&st.s[k] + &pred.ds[k] * ad));
        }
        mu_aff /= ntot.max(1) as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        let Some(dir) = iterate.direction(sigma * mu, Some(&pred)) else {
            break Outcome::Failure("singular Newton system".into());
        };
        let (ap, ad) = steps(&dir);
        for k in 0..nb {
            st.x[k] += &dir.dx[k] * ap;
            st.s[k] += &dir.ds[k] * ad;
            st.x[k] = sym(&st.x[k]);
            st.s[k] = sym(&st.s[k]);
        }
        st.theta += &dir.dtheta * ap;
        st.y += &dir.dy * ad;
        history.push(IterationLog {
            iteration: it,
            primal_objective: pobj,
            dual_objective: dobj,
            mu,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            step_primal: ap,
            step_dual: ad,
        });
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall >= 3 {
                break Outcome::Stalled("step lengths vanished".into());
            }
        } else {
            stall = 0;
        }
        if st.x.iter().chain(&st.s).any(|b| b.iter().any(|v| !v.is_finite())) {
            break Outcome::Failure("non-finite iterate".into());
        }
    };

    let mut y_orig = vec![0.0; p.constraints.len()];
    for (k, &i) in prep.kept.iter().enumerate() {
        y_orig[i] = st.y[k] / prep.norms[k];
    }
    let mut free: Vec<f64> = st.theta.iter().copied().collect();
    if !matches!(outcome, Outcome::Ray(_)) {
        if let Some((x, f)) = polish(p, &st.x, &free, opts.tol_e) {
            st.x = x;
            free = f;
        }
    }
    let ver = verify_solution(p, &st.x, &free, opts.tol_p, opts.tol_e);
    let ay = prep.adjoint(&st.y);
    let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &prep.c_blocks[k] - &ay[k] - &st.s[k]).collect();
    let rf = &prep.c_free - prep.bfree.transpose() * &st.y;
    let dual_residual = (frob(&rd).powi(2) + rf.norm_squared()).sqrt();
    let mut sol = SdpSolution {
        status: SdpStatus::MaxIter,
        optimal: false,
        objective: p.objective.eval(&st.x, &free),
        dual_objective: y_orig.iter().zip(&p.constraints).map(|(y, c)| y * c.rhs).sum(),
        blocks: st.x,
        free,
        y: y_orig,
        primal_residual: ver.primal_residual,
        dual_residual,
        iterations: history.len(),
        history,
        farkas: None,
        dropped_rows: dropped,
        message: None,
    };
    match outcome {
        Outcome::Converged => {
            sol.optimal = true;
            sol.status = if ver.passed { SdpStatus::Feasible } else { SdpStatus::NumericalFailure };
            if !ver.passed {
                sol.message = Some("converged but the verifier rejected the point".into());
            }
        }
        Outcome::Ray(ray) => {
            sol.status = SdpStatus::Infeasible;
            sol.farkas = Some(ray);
        }
        Outcome::MaxIter | Outcome::Stalled(_) | Outcome::Failure(_) => {
            let (status, msg) = match outcome {
                Outcome::MaxIter => (SdpStatus::MaxIter, "iteration limit reached".to_string()),
                Outcome::Stalled(m) => (SdpStatus::MaxIter, m),
                Outcome::Failure(m) => (SdpStatus::NumericalFailure, m),
                _ => unreachable!(),
            };
            sol.status = if ver.passed { SdpStatus::Feasible } else { status };
            sol.message = Some(msg);
        }
    }
    sol
}

/// Minimum-norm correction of `(X, θ)` onto the affine constraint set, two
/// rounds. Kept only if the constraint violation drops and every block stays
/// within `tol_e` of PSD.
fn polish(p: &SdpProblem, x: &[DMatrix<f64>], free: &[f64], tol_e: f64) -> Option<(Vec<DMatrix<f64>>, Vec<f64>)> {
    let mut offsets = Vec::with_capacity(p.blocks.len());
    let mut nv = 0;
    for &s in &p.blocks {
        offsets.push(nv);
        nv += s * (s + 1) / 2;
    }
    let tri = |s: usize, r: usize, c: usize| {
        let (r, c) = (r.min(c), r.max(c));
        r * s - r * (r + 1) / 2 + c
    };
    let m = p.constraints.len();
    if m == 0 || m * (nv + p.free_vars) > 4_000_000 {
        return None;
    }
    let mut a = DMatrix::zeros(m, nv + p.free_vars);
    for (i, c) in p.constraints.iter().enumerate() {
        for (b, r, col, v) in c.functional.entries() {
            let w = if r == col { v } else { 2.0 * v };
            a[(i, offsets[b] + tri(p.blocks[b], r, col))] += w;
        }
        for (j, v) in c.functional.free_entries() {
            a[(i, nv + j)] += v;
        }
    }
    let violation = |x: &[DMatrix<f64>], f: &[f64]| {
        p.constraints.iter().map(|c| (c.functional.eval(x, f) - c.rhs).abs()).fold(0.0, f64::max)
    };
    let before = violation(x, free);
    let svd = a.svd(true, true);
    let mut xs = x.to_vec();
    let mut fs = free.to_vec();
    for _ in 0..2 {
        let r = DVector::from_iterator(m, p.constraints.iter().map(|c| c.rhs - c.functional.eval(&xs, &fs)));
        let d = svd.solve(&r, 1e-12 * svd.singular_values.max()).ok()?;
        for (k, &s) in p.blocks.iter().enumerate() {
            for row in 0..s {
                for col in row..s {
                    let v = d[offsets[k] + tri(s, row, col)];
                    xs[k][(row, col)] += v;
                    if row != col {
                        xs[k][(col, row)] += v;
                    }
                }
            }
        }
        for (j, f) in fs.iter_mut().enumerate() {
            *f += d[nv + j];
        }
    }
    let after = violation(&xs, &fs);
    let psd = xs.iter().all(|b| b.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e >= -tol_e));
    (after.is_finite() && after < before && psd).then_some((xs, fs))
}

/// Normalized dual iterate as an infeasibility witness, in the caller's
/// constraint scaling, if it passes the ray check.
fn candidate_ray(p: &SdpProblem, prep: &Prepared, y: &DVector<f64>, dobj: f64, opts: &SdpOptions) -> Option<Vec<f64>> {
    // cheap screen before the eigenvalue check
    let yhat = y / dobj;
    if (prep.bfree.transpose() * &yhat).amax() > opts.farkas_tol {
        return None;
    }
    let mut out = vec![0.0; p.constraints.len()];
    for (k, &i) in prep.kept.iter().enumerate() {
        out[i] = yhat[k] / prep.norms[k];
    }
    if verify_farkas(p, &out, opts.farkas_tol) {
        Some(out)
    } else {
        None
    }
}

/// `min θ₂` over `⟨A_i, X⟩ + B_iθ₁ + b_iθ₂ = 0`, `X ⪰ 0`. Its dual asks for
/// `y` with `−Σ y_i A_i ⪰ 0`, `Bᵀy = 0`, `bᵀy = 1`.
fn farkas_auxiliary(p: &SdpProblem, opts: &SdpOptions) -> Option<Vec<f64>> {
    let f = p.free_vars;
    let mut aux = SdpProblem::new(p.blocks.clone(), f + 1);
    for c in &p.constraints {
        let mut func = c.functional.clone();
        if c.rhs != 0.0 {
            func.add_free(f, c.rhs);
        }
        aux.add_constraint(func, 0.0);
    }
    aux.objective = super::LinearFunctional::new().with_free(f, 1.0);
    let inner_opts = SdpOptions { farkas_fallback: false, ..opts.clone() };
    let sol = solve_inner(&aux, &inner_opts);
    if sol.y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if verify_farkas(p, &sol.y, opts.farkas_tol) {
        Some(sol.y)
    } else {
        None
    }
}
