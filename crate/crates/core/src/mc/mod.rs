//! Monte Carlo validation by Euler–Maruyama integration.
//!
//! Every path `i` draws from its own `ChaCha8Rng` seeded with `seed ^ i`:
//! first the initial state, then `m` Box–Muller normals per step. Paths run
//! in parallel and are aggregated in index order, so a report depends only on
//! the system and the configuration.

mod integrator;
mod report;

use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ops::SdeSystem;
use crate::synth::{ControlledSdeSystem, Controller};

pub(crate) use integrator::unit;
pub use integrator::CompiledSystem;
use integrator::Normals;
pub use report::{wilson_interval, ClassStat, JacobianSummary, SimReport, Stats};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("initial state has {got} components, system has {expected} variables")]
    Dimension { expected: usize, got: usize },
    #[error("could not draw an initial state outside the excluded ball after {0} attempts")]
    Sampler(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSampler {
    /// Uniform on `[lo, hi]` per coordinate, rejecting `‖x₀‖ < exclude_radius`.
    Box { lo: Vec<f64>, hi: Vec<f64>, exclude_radius: f64 },
    /// Path `i` starts at `points[i mod len]`.
    Fixed(Vec<Vec<f64>>),
    /// Uniform on the sphere of the given radius.
    Sphere(f64),
}

impl InitialSampler {
    /// The box `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64, exclude_radius: f64) -> Self {
        InitialSampler::Box { lo: vec![lo; n], hi: vec![hi; n], exclude_radius }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub h: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub init: InitialSampler,
    pub eps_conv: f64,
    /// Share of the horizon, at its end, that a converged path spends
    /// inside `eps_conv`.
    pub dwell_fraction: f64,
    pub r_escape: f64,
    pub track_jacobian: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            h: 1e-3,
            horizon: 30.0,
            paths: 1000,
            seed: 0,
            init: InitialSampler::Sphere(1.0),
            eps_conv: 1e-2,
            dwell_fraction: 0.2,
            r_escape: 1e6,
            track_jacobian: false,
        }
    }
}

const MAX_REJECTIONS: usize = 100_000;

impl SimConfig {
    pub fn validate(&self, nvars: usize) -> Result<(), McError> {
        let bad = |m: &str| Err(McError::Config(m.into()));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("step h must be positive");
        }
        if !(self.horizon >= self.h && self.horizon.is_finite()) {
            return bad("horizon must be at least one step");
        }
        if self.paths == 0 {
            return bad("at least one path is required");
        }
        if !(self.eps_conv >= 0.0 && self.eps_conv < self.r_escape) {
            return bad("need 0 <= eps_conv < r_escape");
        }
        if !(self.dwell_fraction > 0.0 && self.dwell_fraction <= 1.0) {
            return bad("dwell fraction must lie in (0, 1]");
        }
        match &self.init {
            InitialSampler::Box { lo, hi, exclude_radius } => {
                if lo.len() != nvars || hi.len() != nvars {
                    return Err(McError::Dimension { expected: nvars, got: lo.len().max(hi.len()) });
                }
                if lo.iter().zip(hi).any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h) {
                    return bad("box needs finite lo <= hi");
                }
                if exclude_radius.is_nan() || *exclude_radius < 0.0 {
                    return bad("exclusion radius must be nonnegative");
                }
                let far: f64 = lo.iter().zip(hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt();
                if *exclude_radius > 0.0 && far <= *exclude_radius {
                    return bad("box lies inside the excluded ball");
                }
            }
            InitialSampler::Fixed(points) => {
                if points.is_empty() {
                    return bad("fixed initial list is empty");
                }
                if let Some(p) = points.iter().find(|p| p.len() != nvars) {
                    return Err(McError::Dimension { expected: nvars, got: p.len() });
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("fixed initial states must be finite");
                }
            }
            InitialSampler::Sphere(r) => {
                if !(*r >= 0.0 && r.is_finite()) {
                    return bad("sphere radius must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.h).round() as usize).max(1)
    }

    /// Number of final states (of `steps + 1`) that must lie inside `eps_conv`.
    pub fn dwell_steps(&self) -> usize {
        ((self.dwell_fraction * self.steps() as f64).ceil() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TrajectoryClass {
    Converged,
    Escaped,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub class: TrajectoryClass,
    /// Converged: time of the last entry into the `eps_conv` ball.
    /// Escaped: time `‖x‖ ≥ R_escape` was first seen.
    pub exit_time: Option<f64>,
    pub final_radius: f64,
    pub min_log_det: Option<f64>,
    pub det_nonpositive_steps: usize,
    pub jacobian_steps: usize,
    pub annotation: Option<String>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn initial_state(cfg: &SimConfig, n: usize, i: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, McError> {
    match &cfg.init {
        InitialSampler::Fixed(points) => Ok(points[i % points.len()].clone()),
        InitialSampler::Box { lo, hi, exclude_radius } => {
            for _ in 0..MAX_REJECTIONS {
                let x: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| l + (h - l) * unit(rng)).collect();
                if norm(&x) >= *exclude_radius {
                    return Ok(x);
                }
            }
            Err(McError::Sampler(MAX_REJECTIONS))
        }
        InitialSampler::Sphere(r) => {
            let mut g = Normals::new();
            loop {
                let mut x = vec![0.0; n];
                g.fill(rng, &mut x);
                let s = norm(&x);
                if s > 0.0 {
                    return Ok(x.into_iter().map(|v| r * v / s).collect());
                }
            }
        }
    }
}

/// One row of a recorded trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    pub state: Vec<f64>,
    pub log_det: Option<f64>,
}

struct PathRun {
    outcome: TrajectoryOutcome,
    trace: Vec<TraceRow>,
}

/// Integrates path `i`. States are recorded every `stride` steps when
/// `stride > 0`.
fn run_path(sys: &CompiledSystem, cfg: &SimConfig, i: usize, stride: usize) -> Result<PathRun, McError> {
    let n = sys.nvars();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
    let mut x = initial_state(cfg, n, i, &mut rng)?;
    let mut next = vec![0.0; n];
    let mut xi = vec![0.0; sys.noise_count()];
    let mut normals = Normals::new();
    let steps = cfg.steps();
    let dwell_start = steps + 1 - cfg.dwell_steps().min(steps + 1);

    let mut log_det = 0.0;
    let mut det_positive = true;
    let mut singular = false;
    let mut min_log_det = cfg.track_jacobian.then_some(0.0_f64);
    let mut nonpositive = 0;
    let mut jac_steps = 0;
    let mut trace = Vec::new();
    let record = |trace: &mut Vec<TraceRow>, k: usize, x: &[f64], ld: Option<f64>| {
        if stride > 0 && (k.is_multiple_of(stride) || k == steps) {
            trace.push(TraceRow { time: k as f64 * cfg.h, state: x.to_vec(), log_det: ld });
        }
    };

    let mut last_outside: Option<usize> = None;
    let mut r = norm(&x);
    record(&mut trace, 0, &x, min_log_det.map(|_| 0.0));
    let mut escaped: Option<(usize, Option<String>)> = None;
    if !r.is_finite() {
        escaped = Some((0, Some("numeric overflow".into())));
    } else if r >= cfg.r_escape {
        escaped = Some((0, None));
    } else if r > cfg.eps_conv {
        last_outside = Some(0);
    }
    let mut k = 0;
    while escaped.is_none() && k < steps {
        normals.fill(&mut rng, &mut xi);
        if cfg.track_jacobian {
            let det = sys.jacobian_factor(&x, cfg.h, &xi).determinant();
            if det == 0.0 || !det.is_finite() {
                singular = true;
                log_det = f64::NEG_INFINITY;
            } else {
                if det < 0.0 {
                    det_positive = !det_positive;
                }
                log_det += det.abs().ln();
            }
            jac_steps += 1;
            if singular || !det_positive {
                nonpositive += 1;
            }
            if let Some(m) = min_log_det.as_mut() {
                *m = m.min(log_det);
            }
        }
        sys.step_em(&x, cfg.h, &xi, &mut next);
        std::mem::swap(&mut x, &mut next);
        k += 1;
        r = norm(&x);
        record(&mut trace, k, &x, cfg.track_jacobian.then_some(log_det));
        if !r.is_finite() {
            escaped = Some((k, Some("numeric overflow".into())));
        } else if r >= cfg.r_escape {
            escaped = Some((k, None));
        } else if r > cfg.eps_conv {
            last_outside = Some(k);
        }
    }

    let (class, exit_time, annotation) = match escaped {
        Some((k, note)) => (TrajectoryClass::Escaped, Some(k as f64 * cfg.h), note),
        None => match last_outside {
            None => (TrajectoryClass::Converged, Some(0.0), None),
            Some(k) if k < dwell_start => (TrajectoryClass::Converged, Some((k + 1) as f64 * cfg.h), None),
            Some(_) => (TrajectoryClass::Undecided, None, None),
        },
    };
    let annotation = match (annotation, nonpositive > 0) {
        (Some(a), true) => Some(format!("{a}; det J <= 0 on {nonpositive} steps")),
        (None, true) => Some(format!("det J <= 0 on {nonpositive} steps")),
        (a, false) => a,
    };
    let outcome = TrajectoryOutcome {
        class,
        exit_time,
        final_radius: r,
        min_log_det,
        det_nonpositive_steps: nonpositive,
        jacobian_steps: jac_steps,
        annotation,
    };
    Ok(PathRun { outcome, trace })
}

/// All path outcomes in index order.
pub fn run_paths(sys: &CompiledSystem, cfg: &SimConfig) -> Result<Vec<TrajectoryOutcome>, McError> {
    cfg.validate(sys.nvars())?;
    (0..cfg.paths).into_par_iter().map(|i| run_path(sys, cfg, i, 0).map(|p| p.outcome)).collect()
}

pub fn run_mc(sys: &SdeSystem, cfg: &SimConfig) -> Result<SimReport, McError> {
    run_compiled(&CompiledSystem::new(sys), cfg)
}

pub fn run_compiled(sys: &CompiledSystem, cfg: &SimConfig) -> Result<SimReport, McError> {
    let outcomes = run_paths(sys, cfg)?;
    Ok(SimReport::from_outcomes(cfg, &outcomes))
}

/// Closed loop `X₀ + u(x)·Ỹ` with `u = c/a` evaluated in binary64.
pub fn simulate_controlled(sys: &ControlledSdeSystem, u: &Controller, cfg: &SimConfig) -> Result<SimReport, McError> {
    if u.numerator.nvars() != sys.system().nvars() || u.denominator.nvars() != sys.system().nvars() {
        return Err(McError::Dimension { expected: sys.system().nvars(), got: u.numerator.nvars() });
    }
    run_compiled(&CompiledSystem::controlled(sys, u), cfg)
}

/// Per-path `log|det J|` series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianSeries {
    pub path: usize,
    /// `(time, log|det J|)`, sampled every `stride` steps.
    pub samples: Vec<(f64, f64)>,
    pub positive_steps: usize,
    pub total_steps: usize,
}

/// Integrates `J_{n+1} = J_n + DX₀(x_n)J_n h + Σ_k DX_k(x_n)J_n √h ξ_k`
/// from `J₀ = I` along every path, using the same noise as [`run_mc`].
/// Because `J_{n+1} = (I + M_n)J_n`, `det J` is accumulated as a product of
/// one-step factors, which cannot overflow.
pub fn run_jacobian(sys: &SdeSystem, cfg: &SimConfig, stride: usize) -> Result<Vec<JacobianSeries>, McError> {
    if !cfg.track_jacobian {
        return Err(McError::Config("track_jacobian is not set".into()));
    }
    let compiled = CompiledSystem::new(sys);
    cfg.validate(compiled.nvars())?;
    let stride = stride.max(1);
    (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let run = run_path(&compiled, cfg, i, stride)?;
            Ok(JacobianSeries {
                path: i,
                samples: run.trace.iter().map(|t| (t.time, t.log_det.unwrap_or(0.0))).collect(),
                positive_steps: run.outcome.jacobian_steps - run.outcome.det_nonpositive_steps,
                total_steps: run.outcome.jacobian_steps,
            })
        })
        .collect()
}

/// Recorded states of path `i` every `stride` steps.
pub fn trace_path(sys: &CompiledSystem, cfg: &SimConfig, i: usize, stride: usize) -> Result<Vec<TraceRow>, McError> {
    cfg.validate(sys.nvars())?;
    Ok(run_path(sys, cfg, i, stride.max(1))?.trace)
}

/// CSV with columns `path,time,x0..x{n-1},log_det`.
pub fn write_csv<W: Write>(mut w: W, paths: &[(usize, Vec<TraceRow>)]) -> std::io::Result<()> {
    let n = paths.iter().flat_map(|(_, t)| t.first()).map(|r| r.state.len()).next().unwrap_or(0);
    let mut header = vec!["path".to_string(), "time".to_string()];
    header.extend((0..n).map(|j| format!("x{j}")));
    header.push("log_det".into());
    writeln!(w, "{}", header.join(","))?;
    for (i, rows) in paths {
        for r in rows {
            let mut line = format!("{i},{}", r.time);
            for v in &r.state {
                line.push_str(&format!(",{v}"));
            }
            match r.log_det {
                Some(l) => line.push_str(&format!(",{l}")),
                None => line.push(','),
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}
