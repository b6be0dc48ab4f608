use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, sampleset_metrics, BenchError, ResultsTable, Result, RunRecord};
use crate::problems::{Instance, ProblemKind};
use crate::solver::{default_time_limit, solve, solve_qubo_baseline, BaselineConfig, SolverConfig};
use crate::stats::MetricError;

/// A declarative experiment: every instance is solved `runs` times by every
/// algorithm. Relative paths are resolved against the plan file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// File of "instance_id optimum" lines.
    #[serde(default)]
    pub optima: Option<PathBuf>,
    /// Seconds per run when an instance sets none; otherwise `max(5, N/20)`.
    #[serde(default)]
    pub time_limit: Option<f64>,
    /// Algorithm the post-hoc tests compare against; the first by default.
    #[serde(default)]
    pub control: Option<String>,
    pub instances: Vec<InstanceSpec>,
    pub algorithms: Vec<AlgorithmSpec>,
}

fn default_runs() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    /// Defaults to the file stem.
    #[serde(default)]
    pub id: Option<String>,
    pub problem: ProblemKind,
    pub path: PathBuf,
    #[serde(default)]
    pub time_limit: Option<f64>,
    #[serde(default)]
    pub optimum: Option<f64>,
}

impl InstanceSpec {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "nl")]
    Nl,
    #[serde(rename = "qubo-sa")]
    QuboSa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub id: String,
    pub solver: SolverKind,
    /// Overrides for [`SolverConfig`] or [`BaselineConfig`] fields.
    #[serde(default)]
    pub settings: serde_json::Map<String, serde_json::Value>,
}

fn overlay<T: Serialize + serde::de::DeserializeOwned>(
    base: T,
    settings: &serde_json::Map<String, serde_json::Value>,
    algorithm: &str,
) -> Result<T> {
    let mut value = serde_json::to_value(base).expect("configs serialize");
    let obj = value.as_object_mut().expect("configs are objects");
    for (k, v) in settings {
        if !obj.contains_key(k) {
            return Err(BenchError::Plan(format!("algorithm {algorithm}: unknown setting {k:?}")));
        }
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| BenchError::Plan(format!("algorithm {algorithm}: {e}")))
}

impl AlgorithmSpec {
    pub fn nl_config(&self, time_limit: f64, seed: u64) -> Result<SolverConfig> {
        let base = SolverConfig { time_limit: Some(time_limit), ..SolverConfig::default() };
        let mut cfg: SolverConfig = overlay(base, &self.settings, &self.id)?;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self, time_limit: f64, seed: u64) -> Result<BaselineConfig> {
        let base = BaselineConfig { time_limit: Some(time_limit), ..BaselineConfig::default() };
        let mut cfg: BaselineConfig = overlay(base, &self.settings, &self.id)?;
        cfg.seed = seed;
        Ok(cfg)
    }
}

/// Reads a plan and resolves its relative paths against the plan's directory.
pub fn load_plan(path: &Path) -> Result<Plan> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut plan: Plan = serde_json::from_str(&text).map_err(|e| BenchError::Plan(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for inst in &mut plan.instances {
        if inst.path.is_relative() {
            inst.path = dir.join(&inst.path);
        }
    }
    if let Some(o) = &plan.optima {
        if o.is_relative() {
            plan.optima = Some(dir.join(o));
        }
    }
    plan.validate()?;
    Ok(plan)
}

impl Plan {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(BenchError::Plan("runs must be at least 1".into()));
        }
        if self.instances.is_empty() || self.algorithms.is_empty() {
            return Err(BenchError::Plan("plan needs at least one instance and one algorithm".into()));
        }
        let mut ids = HashSet::new();
        for i in &self.instances {
            if !ids.insert(i.id()) {
                return Err(BenchError::Plan(format!("duplicate instance id {:?}", i.id())));
            }
            if i.time_limit.is_some_and(|t| !(t > 0.0)) {
                return Err(BenchError::Plan(format!("instance {}: time_limit must be positive", i.id())));
            }
        }
        let mut ids = HashSet::new();
        for a in &self.algorithms {
            if !ids.insert(a.id.as_str()) {
                return Err(BenchError::Plan(format!("duplicate algorithm id {:?}", a.id)));
            }
            match a.solver {
                SolverKind::Nl => a.nl_config(1.0, 0).map(|_| ())?,
                SolverKind::QuboSa => a.baseline_config(1.0, 0).map(|_| ())?,
            }
        }
        if let Some(c) = &self.control {
            if !ids.contains(c.as_str()) {
                return Err(BenchError::Plan(format!("control {c:?} is not an algorithm of the plan")));
            }
        }
        Ok(())
    }
}

/// Reference optima, one "instance_id optimum" pair per line; blank lines
/// and `#` comments are skipped.
pub fn parse_optima(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(id), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(BenchError::Plan(format!("optima line {}: expected \"instance_id optimum\"", no + 1)));
        };
        let v: f64 = v
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| BenchError::Plan(format!("optima line {}: bad number {v:?}", no + 1)))?;
        out.insert(id.to_string(), v);
    }
    Ok(out)
}

fn small_enough_for_oracle(inst: &Instance) -> bool {
    match inst {
        Instance::Tsp(t) => t.n() <= 12,
        Instance::Kp(k) => (k.n() as u64).saturating_mul(k.capacity + 1) <= 10_000_000,
        Instance::MaxCut(m) => m.n <= 20,
    }
}

/// Optimum per instance: inline plan value first, then the optima file,
/// then the exact oracle for small instances.
pub fn resolve_optima(plan: &Plan, instances: &[(InstanceSpec, Instance)]) -> Result<BTreeMap<String, f64>> {
    let file = match &plan.optima {
        Some(p) => parse_optima(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => BTreeMap::new(),
    };
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for (spec, inst) in instances {
        let id = spec.id();
        let opt = match spec.optimum.or_else(|| file.get(&id).copied()) {
            Some(v) => Some(v),
            None if small_enough_for_oracle(inst) => Some(inst.exact()?.value),
            None => None,
        };
        match opt {
            Some(v) => {
                out.insert(id, v);
            }
            None => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(MetricError::MissingOptimum(missing).into());
    }
    Ok(out)
}

/// Seed of one cell: the first 8 bytes of
/// SHA-256(master seed, instance id, algorithm id, run).
pub fn cell_seed(master: u64, instance: &str, algorithm: &str, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(instance.as_bytes());
    h.update([0]);
    h.update(algorithm.as_bytes());
    h.update([0]);
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

const LOG_FILE: &str = "runs.jsonl";

fn read_log(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            // an interrupted write leaves a torn last line; that cell reruns
            Err(e) => warn!("{}:{}: skipping unreadable record ({e})", path.display(), no + 1),
        }
    }
    Ok(out)
}

/// Runs every missing cell of `plan`, appending each record to
/// `out_dir/runs.jsonl` as soon as it finishes. Cells already in the log
/// are not run again, so an interrupted experiment resumes where it
/// stopped and a finished one is a no-op.
pub fn run_experiment(plan: &Plan, out_dir: &Path) -> Result<ResultsTable> {
    plan.validate()?;
    let instances: Vec<(InstanceSpec, Instance)> = plan
        .instances
        .iter()
        .map(|s| Ok((s.clone(), Instance::read(s.problem, &s.path)?)))
        .collect::<Result<_>>()?;
    let optima = resolve_optima(plan, &instances)?;

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let log_path = out_dir.join(LOG_FILE);
    let mut records = read_log(&log_path)?;
    let done: HashSet<(String, String, usize)> =
        records.iter().map(|r| (r.instance.clone(), r.algorithm.clone(), r.run)).collect();
    let mut log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;

    for (spec, inst) in &instances {
        let id = spec.id();
        let time_limit = spec.time_limit.or(plan.time_limit).unwrap_or_else(|| default_time_limit(inst.size()));
        for alg in &plan.algorithms {
            for run in 0..plan.runs {
                if done.contains(&(id.clone(), alg.id.clone(), run)) {
                    continue;
                }
                let seed = cell_seed(plan.master_seed, &id, &alg.id, run);
                let set = match alg.solver {
                    SolverKind::Nl => solve(&inst.build_model(), &alg.nl_config(time_limit, seed)?)?,
                    SolverKind::QuboSa => solve_qubo_baseline(inst, &alg.baseline_config(time_limit, seed)?)?,
                };
                let m = sampleset_metrics(&set, inst.kind(), optima.get(&id).copied())?;
                let rec = RunRecord {
                    instance: id.clone(),
                    problem: inst.kind(),
                    algorithm: alg.id.clone(),
                    run,
                    seed,
                    best_objective: m.best_value,
                    mean_objective: m.mean_value,
                    best_ratio: m.best_ratio,
                    mean_ratio: m.mean_ratio,
                    feasible_fraction: m.feasible_fraction,
                    samples: m.samples,
                    clamped: m.clamped,
                    wall_time_s: set.wall_time_s,
                };
                if rec.clamped > 0 {
                    warn!("{id}: {} ratios clamped to 1; check the reference optimum", rec.clamped);
                }
                info!("{id} {} run {run}: best ratio {:.4}, mean ratio {:.4}", alg.id, rec.best_ratio, rec.mean_ratio);
                let line = serde_json::to_string(&rec).expect("records serialize");
                writeln!(log, "{line}").and_then(|_| log.flush()).map_err(io_err(&log_path))?;
                records.push(rec);
            }
        }
    }

    // keep the plan's cells in plan order
    let inst_pos: BTreeMap<String, usize> = instances.iter().enumerate().map(|(i, (s, _))| (s.id(), i)).collect();
    let alg_pos: BTreeMap<&str, usize> = plan.algorithms.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
    records.retain(|r| inst_pos.contains_key(&r.instance) && alg_pos.contains_key(r.algorithm.as_str()) && r.run < plan.runs);
    records.sort_by_key(|r| (inst_pos[&r.instance], alg_pos[r.algorithm.as_str()], r.run));
    records.dedup_by(|a, b| a.key() == b.key());
    Ok(ResultsTable {
        records,
        optima,
        control: Some(plan.control.clone().unwrap_or_else(|| plan.algorithms[0].id.clone())),
    })
}
