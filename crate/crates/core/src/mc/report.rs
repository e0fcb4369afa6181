use serde::Serialize;

use super::{SimConfig, TrajectoryClass, TrajectoryOutcome};

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes out of `n` at 95% confidence.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassStat {
    pub count: usize,
    pub fraction: f64,
    pub ci95: (f64, f64),
}

impl ClassStat {
    fn new(count: usize, n: usize) -> Self {
        ClassStat { count, fraction: count as f64 / n as f64, ci95: wilson_interval(count, n) }
    }
}

/// Summary of a sample; all fields are `None` when it is empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Stats { count: 0, mean: None, min: None, median: None, max: None };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
        Stats {
            count: k,
            mean: Some(v.iter().sum::<f64>() / k as f64),
            min: Some(v[0]),
            median: Some(median),
            max: Some(v[k - 1]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianSummary {
    pub steps: usize,
    pub positive_steps: usize,
    pub positive_fraction: f64,
    pub paths_with_nonpositive: usize,
    pub min_log_det: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub paths: usize,
    pub seed: u64,
    pub converged: ClassStat,
    pub escaped: ClassStat,
    pub undecided: ClassStat,
    /// Time of the last entry into the `eps_conv` ball.
    pub convergence_time: Stats,
    pub escape_time: Stats,
    pub undecided_final_radius: Stats,
    pub numeric_overflows: usize,
    pub jacobian: Option<JacobianSummary>,
    pub config: SimConfig,
}

impl SimReport {
    /// Aggregates outcomes in the order given.
    pub fn from_outcomes(cfg: &SimConfig, outcomes: &[TrajectoryOutcome]) -> Self {
        let n = outcomes.len();
        let times = |c: TrajectoryClass| -> Vec<f64> {
            outcomes.iter().filter(|o| o.class == c).filter_map(|o| o.exit_time).collect()
        };
        let count = |c: TrajectoryClass| outcomes.iter().filter(|o| o.class == c).count();
        let radii: Vec<f64> =
            outcomes.iter().filter(|o| o.class == TrajectoryClass::Undecided).map(|o| o.final_radius).collect();
        let jacobian = cfg.track_jacobian.then(|| {
            let steps: usize = outcomes.iter().map(|o| o.jacobian_steps).sum();
            let bad: usize = outcomes.iter().map(|o| o.det_nonpositive_steps).sum();
            JacobianSummary {
                steps,
                positive_steps: steps - bad,
                positive_fraction: if steps == 0 { 1.0 } else { (steps - bad) as f64 / steps as f64 },
                paths_with_nonpositive: outcomes.iter().filter(|o| o.det_nonpositive_steps > 0).count(),
                min_log_det: outcomes.iter().filter_map(|o| o.min_log_det).reduce(f64::min),
            }
        });
        SimReport {
            paths: n,
            seed: cfg.seed,
            converged: ClassStat::new(count(TrajectoryClass::Converged), n),
            escaped: ClassStat::new(count(TrajectoryClass::Escaped), n),
            undecided: ClassStat::new(count(TrajectoryClass::Undecided), n),
            convergence_time: Stats::of(&times(TrajectoryClass::Converged)),
            escape_time: Stats::of(&times(TrajectoryClass::Escaped)),
            undecided_final_radius: Stats::of(&radii),
            numeric_overflows: outcomes
                .iter()
                .filter(|o| o.annotation.as_deref().is_some_and(|a| a.starts_with("numeric overflow")))
                .count(),
            jacobian,
            config: cfg.clone(),
        }
    }
}
