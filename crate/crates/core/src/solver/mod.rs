//! Portfolio solver. A front end starts several equally configured
//! branches; each pairs a classical local search (simulated annealing or
//! tabu search) with a QUBO sub-solver that re-optimizes windows of the
//! incumbent and posts results back through a mailbox. The best states of
//! all branches are merged into one [`SampleSet`].

mod baseline;
mod branch;
pub mod moves;
mod qm;

pub use baseline::{solve_qubo_baseline, BaselineConfig};
pub use moves::{initial_state, neighbor, propose, Move};
pub use qm::{qm_query, QmEncoder, QmQuery};

use std::cmp::Ordering;
use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Evaluation, Model, ModelError, State};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("model not ready: {0}")]
    State(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qubo(#[from] crate::qubo::QuboError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmKind {
    #[default]
    SimulatedAnnealing,
    TabuSearch,
}

/// How QUBO subproblems are solved relative to the local search.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QmMode {
    /// On a worker thread per branch; results are merged whenever they arrive.
    #[default]
    Async,
    /// Solved on the branch thread; results still pass through the mailbox
    /// and are merged at the next iteration. Deterministic.
    Inline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Wall-clock budget in seconds; `None` uses [`default_time_limit`].
    pub time_limit: Option<f64>,
    pub n_branches: usize,
    pub seed: u64,
    pub cm_kind: CmKind,
    pub qm_enabled: bool,
    /// Local-search iterations between QM queries.
    pub qm_period: u64,
    /// Decision elements freed per QM subproblem.
    pub qm_window: usize,
    pub qm_mode: QmMode,
    /// SA reads per QM query.
    pub qm_reads: usize,
    pub qm_sweeps: usize,
    /// Iteration budget per branch; makes runs reproducible when set.
    pub max_iterations: Option<u64>,
    /// Incumbent improvements recorded per branch (the most recent are kept).
    pub max_samples_per_branch: usize,
    /// Stop all branches once a feasible objective at or below this is found.
    pub target_objective: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        SolverConfig {
            time_limit: None,
            n_branches: cores.min(8),
            seed: 0,
            cm_kind: CmKind::SimulatedAnnealing,
            qm_enabled: true,
            qm_period: 500,
            qm_window: 16,
            qm_mode: QmMode::Async,
            qm_reads: 8,
            qm_sweeps: 100,
            max_iterations: None,
            max_samples_per_branch: 32,
            target_objective: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SolverError::Config(m));
        if let Some(t) = self.time_limit {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("time_limit must be positive, got {t}"));
            }
        }
        if self.n_branches == 0 {
            return fail("n_branches must be at least 1".into());
        }
        if self.qm_period == 0 {
            return fail("qm_period must be at least 1".into());
        }
        if self.qm_window == 0 {
            return fail("qm_window must be at least 1".into());
        }
        if self.max_samples_per_branch == 0 {
            return fail("max_samples_per_branch must be at least 1".into());
        }
        Ok(())
    }
}

/// `max(5, N / 20)` seconds for a problem with `N` decision elements.
pub fn default_time_limit(problem_size: usize) -> f64 {
    (problem_size as f64 / 20.0).max(5.0)
}

/// Orders evaluations: feasible first, then lower total violation, then
/// lower objective.
pub fn compare_evals(a: &Evaluation, b: &Evaluation) -> Ordering {
    b.feasible
        .cmp(&a.feasible)
        .then_with(|| a.total_violation().total_cmp(&b.total_violation()))
        .then_with(|| a.objective.total_cmp(&b.objective))
}

/// [`compare_evals`] with the state fingerprint as final tie-breaker.
pub fn compare(a: &Evaluation, sa: &State, b: &Evaluation, sb: &State) -> Ordering {
    compare_evals(a, b).then_with(|| sa.fingerprint().cmp(&sb.fingerprint()))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Incumbent improvement found by the local search.
    Cm,
    /// Incumbent improvement merged from the QUBO sub-solver.
    Qm,
    /// A branch's best state at the end of the run.
    FinalBest,
    /// A branch's current search state at the end of the run.
    FinalCurrent,
    /// One read of the standalone QUBO baseline.
    QuboRead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub state: State,
    pub objective: f64,
    pub feasible: bool,
    pub violation: f64,
    pub branch: usize,
    pub iteration: u64,
    pub origin: Origin,
}

impl SampleRecord {
    fn new(state: State, eval: &Evaluation, branch: usize, iteration: u64, origin: Origin) -> Self {
        SampleRecord {
            state,
            objective: eval.objective,
            feasible: eval.feasible,
            violation: eval.total_violation(),
            branch,
            iteration,
            origin,
        }
    }

    fn key(&self) -> Evaluation {
        Evaluation {
            objective: self.objective,
            constraint_results: Vec::new(),
            violations: vec![self.violation],
            margins: Vec::new(),
            feasible: self.feasible,
        }
    }
}

/// Best-so-far snapshot taken whenever an incumbent improves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub elapsed_s: f64,
    pub branch: usize,
    pub iteration: u64,
    pub objective: f64,
    pub feasible: bool,
    pub violation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub index: usize,
    pub seed: u64,
    pub iterations: u64,
    pub restarts: u64,
    pub qm_queries: u64,
    pub qm_improvements: u64,
    pub best_objective: f64,
    pub best_feasible: bool,
    pub temperature0: f64,
    pub violation_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub solver: String,
    /// Sorted best first under [`compare`]; duplicates are kept.
    pub samples: Vec<SampleRecord>,
    /// Global best-so-far over wall-clock time.
    pub trace: Vec<Checkpoint>,
    pub branches: Vec<BranchSummary>,
    pub config: serde_json::Value,
    pub warnings: Vec<String>,
    /// Sub-solver reads that did not decode to a valid state.
    pub undecodable: u64,
    pub wall_time_s: f64,
}

impl SampleSet {
    pub fn best(&self) -> Option<&SampleRecord> {
        self.samples.first()
    }

    pub fn sort(&mut self) {
        self.samples.sort_by(|a, b| {
            compare_evals(&a.key(), &b.key())
                .then_with(|| a.state.fingerprint().cmp(&b.state.fingerprint()))
                .then_with(|| a.branch.cmp(&b.branch))
                .then_with(|| a.iteration.cmp(&b.iteration))
        });
    }

    /// Copy without the wall-clock fields, for reproducibility checks. The
    /// trace goes too since branches interleave by wall-clock time.
    pub fn without_timing(&self) -> SampleSet {
        let mut s = self.clone();
        s.wall_time_s = 0.0;
        s.trace.clear();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sample sets serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Runs the portfolio on a frozen model with an objective.
pub fn solve(model: &Model, config: &SolverConfig) -> Result<SampleSet> {
    config.validate()?;
    if !model.is_frozen() {
        return Err(SolverError::State("model must be frozen before solving".into()));
    }
    if model.objective().is_none() {
        return Err(SolverError::State("model has no objective".into()));
    }
    let time_limit = config.time_limit.unwrap_or_else(|| default_time_limit(model.problem_size()));
    let start = Instant::now();
    let ctx = branch::Context {
        model,
        config,
        start,
        deadline: start + Duration::from_secs_f64(time_limit),
        stop: AtomicBool::new(false),
    };
    let outputs: Vec<branch::Output> = if config.n_branches == 1 {
        vec![branch::run(&ctx, 0)?]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..config.n_branches).map(|i| {
                let ctx = &ctx;
                s.spawn(move || branch::run(ctx, i))
            }).collect();
            handles.into_iter().map(|h| h.join().expect("branch thread panicked")).collect::<Result<Vec<_>>>()
        })?
    };

    let mut set = SampleSet {
        solver: "nl".into(),
        samples: Vec::new(),
        trace: Vec::new(),
        branches: Vec::new(),
        config: serde_json::to_value(config).expect("config serializes"),
        warnings: Vec::new(),
        undecodable: 0,
        wall_time_s: 0.0,
    };
    let mut checkpoints = Vec::new();
    for out in outputs {
        set.samples.extend(out.samples);
        checkpoints.extend(out.trace);
        set.branches.push(out.summary);
        for w in out.warnings {
            if !set.warnings.contains(&w) {
                set.warnings.push(w);
            }
        }
        set.undecodable += out.undecodable;
    }
    set.sort();
    set.trace = merge_traces(checkpoints);
    set.wall_time_s = start.elapsed().as_secs_f64();
    Ok(set)
}

fn checkpoint_key(c: &Checkpoint) -> Evaluation {
    Evaluation {
        objective: c.objective,
        constraint_results: Vec::new(),
        violations: vec![c.violation],
        margins: Vec::new(),
        feasible: c.feasible,
    }
}

/// Running global best over all branch checkpoints, ordered by time.
fn merge_traces(mut all: Vec<Checkpoint>) -> Vec<Checkpoint> {
    all.sort_by(|a, b| {
        a.elapsed_s.total_cmp(&b.elapsed_s).then(a.branch.cmp(&b.branch)).then(a.iteration.cmp(&b.iteration))
    });
    let mut out: Vec<Checkpoint> = Vec::new();
    for c in all {
        let better = out.last().is_none_or(|last| compare_evals(&checkpoint_key(&c), &checkpoint_key(last)) == Ordering::Less);
        if better {
            out.push(c);
        }
    }
    out
}
