//! Benchmark harness: approximation ratios, seeded resumable experiments
//! and CSV reports with rank statistics.

mod plan;
mod report;

pub use plan::{
    cell_seed, load_plan, parse_optima, resolve_optima, run_experiment, AlgorithmSpec, InstanceSpec, Plan, SolverKind,
};
pub use report::{emit_report, read_aggregates, read_scores, Aggregate, ReportFiles, ScoreTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{ProblemError, ProblemKind, Sense};
use crate::solver::{SampleSet, SolverError};
use crate::stats::MetricError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.display().to_string(), source }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    /// The raw ratio fell outside `[0, 1]`, which usually means a stale
    /// reference optimum.
    pub clamped: bool,
}

/// `optimum / value` for minimization, `value / optimum` for maximization,
/// clamped to `[0, 1]`. Infeasible solutions score 0.
pub fn approximation_ratio(
    value: f64,
    feasible: bool,
    optimum: Option<f64>,
    sense: Sense,
) -> std::result::Result<Ratio, MetricError> {
    let optimum = optimum.ok_or_else(|| MetricError::MissingOptimum(vec![]))?;
    match sense {
        Sense::Min if !(optimum > 0.0) => {
            return Err(MetricError::Domain(format!("minimization optimum must be positive, got {optimum}")))
        }
        Sense::Max if optimum == 0.0 || optimum.is_nan() => {
            return Err(MetricError::Domain("maximization optimum must be nonzero".into()))
        }
        _ => {}
    }
    if !feasible {
        return Ok(Ratio { value: 0.0, clamped: false });
    }
    let raw = match sense {
        Sense::Min if value <= 0.0 => f64::INFINITY,
        Sense::Min => optimum / value,
        Sense::Max => value / optimum,
    };
    let value = raw.clamp(0.0, 1.0);
    Ok(Ratio { value, clamped: value != raw })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub best_ratio: f64,
    /// Unweighted over every sample and every undecodable read (scored 0).
    pub mean_ratio: f64,
    /// Best natural value among feasible samples.
    pub best_value: Option<f64>,
    /// Mean natural value over feasible samples.
    pub mean_value: Option<f64>,
    pub feasible_fraction: f64,
    pub clamped: usize,
    pub samples: usize,
}

pub fn sampleset_metrics(
    set: &SampleSet,
    kind: ProblemKind,
    optimum: Option<f64>,
) -> std::result::Result<SetMetrics, MetricError> {
    let sense = kind.sense();
    let mut best_ratio: f64 = 0.0;
    let mut sum = 0.0;
    let mut clamped = 0;
    let mut feasible_values = Vec::new();
    for s in &set.samples {
        let value = kind.natural_value(s.objective);
        let r = approximation_ratio(value, s.feasible, optimum, sense)?;
        best_ratio = best_ratio.max(r.value);
        sum += r.value;
        clamped += r.clamped as usize;
        if s.feasible {
            feasible_values.push(value);
        }
    }
    let total = set.samples.len() + set.undecodable as usize;
    let best_value = feasible_values.iter().copied().reduce(|a, b| match sense {
        Sense::Min => a.min(b),
        Sense::Max => a.max(b),
    });
    let mean_value =
        (!feasible_values.is_empty()).then(|| feasible_values.iter().sum::<f64>() / feasible_values.len() as f64);
    Ok(SetMetrics {
        best_ratio,
        mean_ratio: if total == 0 { 0.0 } else { sum / total as f64 },
        best_value,
        mean_value,
        feasible_fraction: if total == 0 { 0.0 } else { feasible_values.len() as f64 / total as f64 },
        clamped,
        samples: total,
    })
}

/// One (instance, algorithm, run) cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub problem: ProblemKind,
    pub algorithm: String,
    pub run: usize,
    pub seed: u64,
    /// Best feasible natural value; empty when nothing feasible was found.
    pub best_objective: Option<f64>,
    pub mean_objective: Option<f64>,
    pub best_ratio: f64,
    pub mean_ratio: f64,
    pub feasible_fraction: f64,
    pub samples: usize,
    pub clamped: usize,
    pub wall_time_s: f64,
}

impl RunRecord {
    fn key(&self) -> (&str, &str, usize) {
        (&self.instance, &self.algorithm, self.run)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub records: Vec<RunRecord>,
    pub optima: std::collections::BTreeMap<String, f64>,
    /// Algorithm the post-hoc tests compare against.
    pub control: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, State};
    use crate::problems::{exact_kp, KpInstance};
    use crate::solver::{Origin, SampleRecord};

    fn record(objective: f64, feasible: bool) -> SampleRecord {
        SampleRecord {
            state: State::new(vec![Assignment::Binary(vec![])]),
            objective,
            feasible,
            violation: if feasible { 0.0 } else { 1.0 },
            branch: 0,
            iteration: 0,
            origin: Origin::FinalBest,
        }
    }

    fn set(samples: Vec<SampleRecord>, undecodable: u64) -> SampleSet {
        SampleSet {
            solver: "test".into(),
            samples,
            trace: vec![],
            branches: vec![],
            config: serde_json::Value::Null,
            warnings: vec![],
            undecodable,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn ratio_basics() {
        assert_eq!(approximation_ratio(426.0, true, Some(426.0), Sense::Min).unwrap().value, 1.0);
        assert_eq!(approximation_ratio(852.0, true, Some(426.0), Sense::Min).unwrap().value, 0.5);
        assert_eq!(approximation_ratio(45.0, true, Some(90.0), Sense::Max).unwrap().value, 0.5);
        assert_eq!(approximation_ratio(10.0, false, Some(10.0), Sense::Max).unwrap().value, 0.0);
    }

    #[test]
    fn ratio_clamps_and_reports() {
        let r = approximation_ratio(400.0, true, Some(426.0), Sense::Min).unwrap();
        assert_eq!(r, Ratio { value: 1.0, clamped: true });
        let r = approximation_ratio(-3.0, true, Some(10.0), Sense::Max).unwrap();
        assert_eq!(r, Ratio { value: 0.0, clamped: true });
        assert!(!approximation_ratio(5.0, true, Some(10.0), Sense::Max).unwrap().clamped);
    }

    #[test]
    fn ratio_errors() {
        assert!(matches!(approximation_ratio(1.0, true, None, Sense::Min), Err(MetricError::MissingOptimum(_))));
        assert!(matches!(approximation_ratio(1.0, true, Some(0.0), Sense::Min), Err(MetricError::Domain(_))));
        assert!(matches!(approximation_ratio(1.0, true, Some(0.0), Sense::Max), Err(MetricError::Domain(_))));
    }

    #[test]
    fn knapsack_optimum_scores_one() {
        let inst = KpInstance::new("k", vec![6, 10, 12, 7], vec![1, 2, 3, 2], 5).unwrap();
        let (opt, _) = exact_kp(&inst).unwrap();
        assert_eq!(approximation_ratio(opt as f64, true, Some(opt as f64), Sense::Max).unwrap().value, 1.0);
    }

    #[test]
    fn all_optimal_samples() {
        let s = set(vec![record(-7.0, true), record(-7.0, true)], 0);
        let m = sampleset_metrics(&s, ProblemKind::Kp, Some(7.0)).unwrap();
        assert_eq!((m.best_ratio, m.mean_ratio), (1.0, 1.0));
        assert_eq!(m.feasible_fraction, 1.0);
    }

    #[test]
    fn infeasible_sample_halves_the_mean() {
        let s = set(vec![record(-7.0, true), record(-9.0, false)], 0);
        let m = sampleset_metrics(&s, ProblemKind::Kp, Some(7.0)).unwrap();
        assert_eq!((m.best_ratio, m.mean_ratio), (1.0, 0.5));
        assert_eq!(m.best_value, Some(7.0));
    }

    #[test]
    fn five_sample_hand_sum() {
        // tour costs against optimum 100: ratios 1, 0.8, 0.5, 0 (infeasible), 1
        let s = set(
            vec![record(100.0, true), record(125.0, true), record(200.0, true), record(90.0, false), record(100.0, true)],
            0,
        );
        let m = sampleset_metrics(&s, ProblemKind::Tsp, Some(100.0)).unwrap();
        assert_eq!(m.best_ratio, 1.0);
        assert!((m.mean_ratio - 3.3 / 5.0).abs() < 1e-12);
        assert_eq!(m.best_value, Some(100.0));
        assert!((m.mean_value.unwrap() - 131.25).abs() < 1e-12);
        assert_eq!(m.feasible_fraction, 0.8);
    }

    #[test]
    fn undecodable_reads_score_zero() {
        let s = set(vec![record(-10.0, true)], 3);
        let m = sampleset_metrics(&s, ProblemKind::MaxCut, Some(10.0)).unwrap();
        assert_eq!(m.mean_ratio, 0.25);
        assert_eq!(m.samples, 4);
    }
}
