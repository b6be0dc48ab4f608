use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, BenchError, ResultsTable, Result, RunRecord};
use crate::problems::ProblemKind;
use crate::stats::{
    average_ranks, format_friedman, format_holm, friedman_statistic, holm_posthoc, wilcoxon_rank_sum, Direction,
    MetricError, RankSummary,
};

/// Significance level of the rank-sum verdicts.
const WILCOXON_ALPHA: f64 = 0.01;

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fixed).unwrap_or_default()
}

/// Mean over the runs of one (instance, algorithm) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instance: String,
    pub problem: ProblemKind,
    pub algorithm: String,
    pub runs: usize,
    pub best_ratio: f64,
    pub mean_ratio: f64,
    /// Best feasible value over all runs.
    pub best_objective: Option<f64>,
    pub mean_objective: Option<f64>,
    pub feasible_fraction: f64,
    pub wall_time_s: f64,
    pub clamped: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn aggregate(table: &ResultsTable) -> Vec<Aggregate> {
    let mut cells: Vec<((String, String), Vec<&RunRecord>)> = Vec::new();
    for r in &table.records {
        let key = (r.instance.clone(), r.algorithm.clone());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => cells.push((key, vec![r])),
        }
    }
    cells
        .into_iter()
        .map(|((instance, algorithm), rs)| {
            let problem = rs[0].problem;
            let values = rs.iter().filter_map(|r| r.best_objective);
            let best_objective = match problem.sense() {
                crate::problems::Sense::Min => values.reduce(f64::min),
                crate::problems::Sense::Max => values.reduce(f64::max),
            };
            Aggregate {
                instance,
                problem,
                algorithm,
                runs: rs.len(),
                best_ratio: mean(rs.iter().map(|r| r.best_ratio)).unwrap_or(0.0),
                mean_ratio: mean(rs.iter().map(|r| r.mean_ratio)).unwrap_or(0.0),
                best_objective,
                mean_objective: mean(rs.iter().filter_map(|r| r.mean_objective)),
                feasible_fraction: mean(rs.iter().map(|r| r.feasible_fraction)).unwrap_or(0.0),
                wall_time_s: mean(rs.iter().map(|r| r.wall_time_s)).unwrap_or(0.0),
                clamped: rs.iter().map(|r| r.clamped).sum(),
            }
        })
        .collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Metric {
    Best,
    Mean,
}

impl Metric {
    const ALL: [Metric; 2] = [Metric::Best, Metric::Mean];

    fn name(self) -> &'static str {
        match self {
            Metric::Best => "best_ratio",
            Metric::Mean => "mean_ratio",
        }
    }

    fn of_aggregate(self, a: &Aggregate) -> f64 {
        match self {
            Metric::Best => a.best_ratio,
            Metric::Mean => a.mean_ratio,
        }
    }

    fn of_record(self, r: &RunRecord) -> f64 {
        match self {
            Metric::Best => r.best_ratio,
            Metric::Mean => r.mean_ratio,
        }
    }
}

/// Instance-by-algorithm scores plus the per-run values behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub algorithms: Vec<String>,
    pub instances: Vec<String>,
    /// `matrix[i][j]`: score of algorithm `j` on instance `i`.
    pub matrix: Vec<Vec<f64>>,
    /// Every individual value of each algorithm, for two-sample tests.
    pub samples: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn ranks(&self, direction: Direction) -> std::result::Result<RankSummary, MetricError> {
        let algs: Vec<&str> = self.algorithms.iter().map(String::as_str).collect();
        average_ranks(&algs, &self.matrix, direction)
    }
}

/// Scores of `algorithms` over the instances that have all of them.
fn score_table(aggs: &[Aggregate], records: &[&RunRecord], algorithms: &[String], metric: Metric) -> ScoreTable {
    let mut instances: Vec<String> = Vec::new();
    for a in aggs {
        if !instances.contains(&a.instance) {
            instances.push(a.instance.clone());
        }
    }
    let mut kept = Vec::new();
    let mut matrix = Vec::new();
    for inst in instances {
        let row: Option<Vec<f64>> = algorithms
            .iter()
            .map(|alg| aggs.iter().find(|a| a.instance == inst && &a.algorithm == alg).map(|a| metric.of_aggregate(a)))
            .collect();
        if let Some(row) = row {
            kept.push(inst);
            matrix.push(row);
        }
    }
    let samples = algorithms
        .iter()
        .map(|alg| {
            records
                .iter()
                .filter(|r| &r.algorithm == alg && kept.contains(&r.instance))
                .map(|r| metric.of_record(r))
                .collect()
        })
        .collect();
    ScoreTable { algorithms: algorithms.to_vec(), instances: kept, matrix, samples }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub records: PathBuf,
    pub aggregates: PathBuf,
    pub ranks: PathBuf,
    pub friedman: PathBuf,
    pub holm: PathBuf,
    pub wilcoxon: PathBuf,
    /// One series file per metric: instances as rows, algorithms as columns.
    pub plots: Vec<PathBuf>,
    /// Human-readable rank tables.
    pub summary: PathBuf,
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// Writes the raw records, per-cell aggregates, rank statistics per problem
/// and metric, and plot series into `out_dir`. Floats carry six decimals.
pub fn emit_report(table: &ResultsTable, out_dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = ReportFiles {
        records: out_dir.join("records.csv"),
        aggregates: out_dir.join("aggregates.csv"),
        ranks: out_dir.join("ranks.csv"),
        friedman: out_dir.join("friedman.csv"),
        holm: out_dir.join("holm.csv"),
        wilcoxon: out_dir.join("wilcoxon.csv"),
        plots: Metric::ALL.iter().map(|m| out_dir.join(format!("plot_{}.csv", m.name()))).collect(),
        summary: out_dir.join("summary.txt"),
    };

    let mut w = writer(&files.records)?;
    w.write_record([
        "instance",
        "problem",
        "algorithm",
        "run",
        "seed",
        "best_objective",
        "mean_objective",
        "best_ratio",
        "mean_ratio",
        "feasible_fraction",
        "samples",
        "clamped",
        "wall_time_s",
    ])?;
    for r in &table.records {
        w.write_record([
            r.instance.clone(),
            r.problem.to_string(),
            r.algorithm.clone(),
            r.run.to_string(),
            r.seed.to_string(),
            opt(r.best_objective),
            opt(r.mean_objective),
            fixed(r.best_ratio),
            fixed(r.mean_ratio),
            fixed(r.feasible_fraction),
            r.samples.to_string(),
            r.clamped.to_string(),
            fixed(r.wall_time_s),
        ])?;
    }
    w.flush().map_err(io_err(&files.records))?;

    let aggs = aggregate(table);
    let mut w = writer(&files.aggregates)?;
    w.write_record([
        "instance",
        "problem",
        "algorithm",
        "runs",
        "best_ratio",
        "mean_ratio",
        "best_objective",
        "mean_objective",
        "feasible_fraction",
        "wall_time_s",
        "clamped",
    ])?;
    for a in &aggs {
        w.write_record([
            a.instance.clone(),
            a.problem.to_string(),
            a.algorithm.clone(),
            a.runs.to_string(),
            fixed(a.best_ratio),
            fixed(a.mean_ratio),
            opt(a.best_objective),
            opt(a.mean_objective),
            fixed(a.feasible_fraction),
            fixed(a.wall_time_s),
            a.clamped.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&files.aggregates))?;

    let mut algorithms: Vec<String> = Vec::new();
    for r in &table.records {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm.clone());
        }
    }
    let control = table.control.clone().filter(|c| algorithms.contains(c)).or_else(|| algorithms.first().cloned());
    let mut problems: Vec<ProblemKind> = Vec::new();
    for a in &aggs {
        if !problems.contains(&a.problem) {
            problems.push(a.problem);
        }
    }

    let mut ranks = writer(&files.ranks)?;
    ranks.write_record(["problem", "metric", "algorithm", "avg_rank", "instances"])?;
    let mut fried = writer(&files.friedman)?;
    fried.write_record(["problem", "metric", "k", "instances", "statistic", "df", "critical_value", "p_value", "significant"])?;
    let mut holm = writer(&files.holm)?;
    holm.write_record(["problem", "metric", "control", "algorithm", "avg_rank", "z", "p_value", "adjusted_p"])?;
    let mut wil = writer(&files.wilcoxon)?;
    wil.write_record(["problem", "metric", "control", "algorithm", "z", "p_value", "verdict"])?;
    let mut plots: Vec<csv::Writer<fs::File>> = files.plots.iter().map(|p| writer(p)).collect::<Result<_>>()?;
    for p in &mut plots {
        let mut header = vec!["problem".to_string(), "instance".to_string()];
        header.extend(algorithms.iter().cloned());
        p.write_record(&header)?;
    }
    let mut summary = String::new();

    for &problem in &problems {
        let p_aggs: Vec<Aggregate> = aggs.iter().filter(|a| a.problem == problem).cloned().collect();
        let p_records: Vec<&RunRecord> = table.records.iter().filter(|r| r.problem == problem).collect();
        for (mi, metric) in Metric::ALL.into_iter().enumerate() {
            let scores = score_table(&p_aggs, &p_records, &algorithms, metric);
            for (inst, row) in scores.instances.iter().zip(&scores.matrix) {
                let mut rec = vec![problem.to_string(), inst.clone()];
                rec.extend(row.iter().map(|&v| fixed(v)));
                plots[mi].write_record(&rec)?;
            }
            if algorithms.len() < 2 || scores.instances.is_empty() {
                continue;
            }
            let summary_ranks = scores.ranks(Direction::HigherIsBetter)?;
            for (alg, r) in summary_ranks.algorithms.iter().zip(&summary_ranks.avg_ranks) {
                ranks.write_record([problem.to_string(), metric.name().into(), alg.clone(), fixed(*r), summary_ranks.n.to_string()])?;
            }
            let f = friedman_statistic(&summary_ranks);
            fried.write_record([
                problem.to_string(),
                metric.name().into(),
                summary_ranks.k().to_string(),
                summary_ranks.n.to_string(),
                fixed(f.statistic),
                f.df.to_string(),
                fixed(f.critical_value),
                fixed(f.p_value),
                f.significant.to_string(),
            ])?;
            summary.push_str(&format!("== {problem} / {} ==\n", metric.name()));
            summary.push_str(&format_friedman(&summary_ranks, &f));
            if let Some(control) = &control {
                let rows = holm_posthoc(&summary_ranks, control)?;
                for h in &rows {
                    holm.write_record([
                        problem.to_string(),
                        metric.name().into(),
                        control.clone(),
                        h.algorithm.clone(),
                        fixed(h.avg_rank),
                        fixed(h.z),
                        fixed(h.p_value),
                        fixed(h.adjusted_p),
                    ])?;
                }
                summary.push_str(&format_holm(control, &rows));
                let c = scores.algorithms.iter().position(|a| a == control).expect("control is an algorithm");
                for (j, alg) in scores.algorithms.iter().enumerate() {
                    if j == c {
                        continue;
                    }
                    let r = wilcoxon_rank_sum(&scores.samples[c], &scores.samples[j])?;
                    wil.write_record([
                        problem.to_string(),
                        metric.name().into(),
                        control.clone(),
                        alg.clone(),
                        fixed(r.z),
                        fixed(r.p_value),
                        r.verdict(Direction::HigherIsBetter, WILCOXON_ALPHA).symbol().into(),
                    ])?;
                }
            }
            summary.push('\n');
        }
    }
    for (w, path) in [(ranks, &files.ranks), (fried, &files.friedman), (holm, &files.holm), (wil, &files.wilcoxon)] {
        let mut w = w;
        w.flush().map_err(io_err(path))?;
    }
    for (mut w, path) in plots.into_iter().zip(&files.plots) {
        w.flush().map_err(io_err(path))?;
    }
    fs::write(&files.summary, summary).map_err(io_err(&files.summary))?;
    Ok(files)
}

pub fn read_aggregates(path: &Path) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Loads scores for the statistical tests. Accepts either a records file
/// written by [`emit_report`] (`metric` picks the `best_ratio` or
/// `mean_ratio` column, averaged per instance) or a plain matrix whose first
/// column names the instance and whose other columns hold one score per
/// algorithm.
pub fn read_scores(path: &Path, metric: &str) -> Result<ScoreTable> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let bad = |m: String| BenchError::Plan(format!("{}: {m}", path.display()));
    if headers.iter().any(|h| h == "algorithm") && headers.iter().any(|h| h == "run") {
        let metric = match metric {
            "best" | "best_ratio" => Metric::Best,
            "mean" | "mean_ratio" => Metric::Mean,
            other => return Err(bad(format!("unknown metric {other:?}"))),
        };
        let records: Vec<RunRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let table = ResultsTable { records, ..Default::default() };
        let aggs = aggregate(&table);
        let mut algorithms: Vec<String> = Vec::new();
        for rec in &table.records {
            if !algorithms.contains(&rec.algorithm) {
                algorithms.push(rec.algorithm.clone());
            }
        }
        let refs: Vec<&RunRecord> = table.records.iter().collect();
        return Ok(score_table(&aggs, &refs, &algorithms, metric));
    }
    if headers.len() < 2 {
        return Err(bad("need an instance column and at least one score column".into()));
    }
    let algorithms = headers[1..].to_vec();
    let mut instances = Vec::new();
    let mut matrix = Vec::new();
    for (no, rec) in r.records().enumerate() {
        let rec = rec?;
        instances.push(rec.get(0).unwrap_or_default().to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("row {}: bad score {v:?}", no + 2))))
            .collect::<Result<Vec<f64>>>()?;
        matrix.push(row);
    }
    let samples = (0..algorithms.len()).map(|j| matrix.iter().map(|row: &Vec<f64>| row[j]).collect()).collect();
    Ok(ScoreTable { algorithms, instances, matrix, samples })
}
