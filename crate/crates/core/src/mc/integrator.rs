use nalgebra::DMatrix;
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::ops::SdeSystem;
use crate::poly::{FloatBExpr, PolyEval};
use crate::synth::{ControlledSdeSystem, Controller};

/// Uniform on `[0, 1)` from the top 53 bits of one draw.
pub(crate) fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normals by the Box–Muller transform: two uniforms `u₁, u₂`
/// give `√(−2 ln(1−u₁))·cos(2πu₂)` and then the matching sine, in that
/// order.
pub(crate) struct Normals {
    spare: Option<f64>,
}

impl Normals {
    pub fn new() -> Self {
        Normals { spare: None }
    }

    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = unit(rng);
        let u2 = unit(rng);
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill(&mut self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for z in out {
            *z = self.next(rng);
        }
    }
}

/// Feedback term `u(x)·Ỹ(x)` added to the drift.
#[derive(Clone, Debug)]
struct Feedback {
    numerator: PolyEval,
    denominator: PolyEval,
    channel: Vec<FloatBExpr>,
    channel_jac: Vec<Vec<FloatBExpr>>,
    numerator_grad: Vec<PolyEval>,
    denominator_grad: Vec<PolyEval>,
}

/// Binary64 image of the drift and diffusion columns with their Jacobians.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    n: usize,
    drift: Vec<FloatBExpr>,
    diffusion: Vec<Vec<FloatBExpr>>,
    drift_jac: Vec<Vec<FloatBExpr>>,
    diffusion_jac: Vec<Vec<Vec<FloatBExpr>>>,
    feedback: Option<Feedback>,
    /// Every field vanishes at the origin in exact arithmetic.
    equilibrium: bool,
}

fn jacobian(field: &[FloatBExpr]) -> Vec<Vec<FloatBExpr>> {
    field.iter().map(|f| (0..field.len()).map(|j| f.partial(j)).collect()).collect()
}

impl CompiledSystem {
    pub fn new(sys: &SdeSystem) -> Self {
        let drift: Vec<FloatBExpr> = sys.drift().iter().map(FloatBExpr::from_exact).collect();
        let diffusion: Vec<Vec<FloatBExpr>> =
            sys.diffusion().iter().map(|col| col.iter().map(FloatBExpr::from_exact).collect()).collect();
        CompiledSystem {
            n: sys.nvars(),
            drift_jac: jacobian(&drift),
            diffusion_jac: diffusion.iter().map(|c| jacobian(c)).collect(),
            drift,
            diffusion,
            feedback: None,
            equilibrium: sys.fields_vanish_at_origin().unwrap_or(false),
        }
    }

    /// Closed loop `X₀ + (c/a)·Ỹ`. A control channel that is identically
    /// zero leaves the open-loop system untouched.
    pub fn controlled(sys: &ControlledSdeSystem, u: &Controller) -> Self {
        let mut out = Self::new(sys.system());
        if sys.control().iter().all(|e| e.is_zero()) {
            return out;
        }
        let c = u.numerator.to_f64();
        let a = u.denominator.to_f64();
        let channel: Vec<FloatBExpr> = sys.control().iter().map(FloatBExpr::from_exact).collect();
        let vanishes = sys.control().iter().all(|e| e.vanishes_at_origin().unwrap_or(false));
        out.equilibrium &= vanishes || u.numerator.constant_term() == num_traits::Zero::zero();
        out.feedback = Some(Feedback {
            numerator: PolyEval::new(&c),
            denominator: PolyEval::new(&a),
            channel_jac: jacobian(&channel),
            channel,
            numerator_grad: (0..out.n).map(|j| PolyEval::new(&c.partial_derivative(j))).collect(),
            denominator_grad: (0..out.n).map(|j| PolyEval::new(&a.partial_derivative(j))).collect(),
        });
        out
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn noise_count(&self) -> usize {
        self.diffusion.len()
    }

    pub fn equilibrium_at_origin(&self) -> bool {
        self.equilibrium
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.drift) {
            *o = f.eval(x);
        }
        if let Some(fb) = &self.feedback {
            let u = fb.numerator.eval(x) / fb.denominator.eval(x);
            for (o, y) in out.iter_mut().zip(&fb.channel) {
                if !y.is_zero() {
                    *o += u * y.eval(x);
                }
            }
        }
    }

    /// One Euler–Maruyama step `x + X₀(x)h + Σ_k X_k(x)√h ξ_k`. A state
    /// sitting exactly at an exact equilibrium is returned unchanged.
    pub fn step_em(&self, x: &[f64], h: f64, xi: &[f64], out: &mut [f64]) {
        if self.equilibrium && x.iter().all(|&v| v == 0.0) {
            out.copy_from_slice(x);
            return;
        }
        self.drift_into(x, out);
        for (o, &xv) in out.iter_mut().zip(x) {
            *o = xv + *o * h;
        }
        let sh = h.sqrt();
        for (col, &z) in self.diffusion.iter().zip(xi) {
            let w = sh * z;
            for (o, f) in out.iter_mut().zip(col) {
                if !f.is_zero() {
                    *o += f.eval(x) * w;
                }
            }
        }
    }

    /// `I + DX₀(x)h + Σ_k DX_k(x)√h ξ_k`, the one-step factor of the
    /// discrete variational equation `J_{n+1} = (I + M_n) J_n`.
    pub fn jacobian_factor(&self, x: &[f64], h: f64, xi: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += self.drift_jac[i][j].eval(x) * h;
            }
        }
        if let Some(fb) = &self.feedback {
            let a = fb.denominator.eval(x);
            let u = fb.numerator.eval(x) / a;
            let y: Vec<f64> = fb.channel.iter().map(|e| e.eval(x)).collect();
            for j in 0..n {
                let du = (fb.numerator_grad[j].eval(x) - u * fb.denominator_grad[j].eval(x)) / a;
                for i in 0..n {
                    m[(i, j)] += (du * y[i] + u * fb.channel_jac[i][j].eval(x)) * h;
                }
            }
        }
        let sh = h.sqrt();
        for (jac, &z) in self.diffusion_jac.iter().zip(xi) {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += jac[i][j].eval(x) * sh * z;
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, QPoly};
    use rand_chacha::rand_core::SeedableRng;
    use std::sync::Arc;

    #[test]
    fn normals_have_unit_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Normals::new();
        let k = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..k {
            let z = g.next(&mut rng);
            s1 += z;
            s2 += z * z;
        }
        assert!((s1 / k as f64).abs() < 0.01);
        assert!((s2 / k as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_fields_leave_state() {
        let sys =
            SdeSystem::from_polys(Arc::new(QPoly::one(2)), vec![QPoly::zero(2); 2], vec![vec![QPoly::zero(2); 2]])
                .unwrap();
        let c = CompiledSystem::new(&sys);
        let mut out = [0.0; 2];
        c.step_em(&[0.3, -2.0], 0.1, &[1.7], &mut out);
        assert_eq!(out, [0.3, -2.0]);
        assert_eq!(c.jacobian_factor(&[0.3, -2.0], 0.1, &[1.7]), DMatrix::identity(2, 2));
    }

    #[test]
    fn jacobian_factor_matches_finite_difference() {
        let x = QPoly::var(2, 0);
        let y = QPoly::var(2, 1);
        let b = Arc::new(&x.pow(2) + &y.pow(2));
        let sys =
            SdeSystem::from_polys(b, vec![&x.pow(3) - &y, &x * &y], vec![vec![x.scale(&rat(1, 2)), y.pow(2)]]).unwrap();
        let c = CompiledSystem::new(&sys);
        let (h, xi, p) = (0.01, [0.8], [0.4, -0.7]);
        let m = c.jacobian_factor(&p, h, &xi);
        let d = 1e-6;
        for j in 0..2 {
            let mut hi = p;
            hi[j] += d;
            let mut lo = p;
            lo[j] -= d;
            let (mut a, mut b2) = ([0.0; 2], [0.0; 2]);
            c.step_em(&hi, h, &xi, &mut a);
            c.step_em(&lo, h, &xi, &mut b2);
            for i in 0..2 {
                assert!(((a[i] - b2[i]) / (2.0 * d) - m[(i, j)]).abs() < 1e-7);
            }
        }
    }
}
