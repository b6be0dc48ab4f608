//! Nonparametric comparison of algorithms over benchmark instances:
//! Friedman average ranks, Holm post-hoc against a control, and the
//! Wilcoxon rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no reference optimum for: {}", .0.join(", "))]
    MissingOptimum(Vec<String>),
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Standard normal CDF, `0.5 * erfc(-z / sqrt 2)`. The complementary error
/// function is the musl/fdlibm one (libm crate): piecewise rational
/// approximations with relative error below one ulp, so tails far out keep
/// full precision.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided tail probability `2 * (1 - Phi(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * normal_cdf(-z.abs())).min(1.0)
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Larger scores are better (approximation ratios).
    #[default]
    HigherIsBetter,
    LowerIsBetter,
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Ranks `values` from 1 (best) upward; tied values share the mean of the
/// positions they occupy.
pub fn midranks(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (values[i], values[j]);
        match direction {
            Direction::HigherIsBetter => b.total_cmp(&a),
            Direction::LowerIsBetter => a.total_cmp(&b),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && tied(values[order[i]], values[order[j]]) {
            j += 1;
        }
        let mean = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = mean;
        }
        i = j;
    }
    ranks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub algorithms: Vec<String>,
    /// Number of blocks (instances).
    pub n: usize,
    pub avg_ranks: Vec<f64>,
    /// Per-instance rank rows; empty when built from averages alone.
    pub rows: Vec<Vec<f64>>,
}

impl RankSummary {
    pub fn k(&self) -> usize {
        self.algorithms.len()
    }

    /// Summary from already averaged ranks, e.g. values read off a table.
    pub fn from_average_ranks(algorithms: &[&str], avg_ranks: &[f64], n: usize) -> Result<Self> {
        if algorithms.len() != avg_ranks.len() || algorithms.len() < 2 || n == 0 {
            return Err(MetricError::Shape(format!(
                "{} algorithms, {} ranks, {n} blocks",
                algorithms.len(),
                avg_ranks.len()
            )));
        }
        Ok(RankSummary {
            algorithms: algorithms.iter().map(|s| s.to_string()).collect(),
            n,
            avg_ranks: avg_ranks.to_vec(),
            rows: Vec::new(),
        })
    }

    pub fn position(&self, algorithm: &str) -> Result<usize> {
        self.algorithms
            .iter()
            .position(|a| a == algorithm)
            .ok_or_else(|| MetricError::UnknownAlgorithm(algorithm.to_string()))
    }
}

/// Ranks the algorithms (columns) within each instance (row) and averages.
pub fn average_ranks(algorithms: &[&str], scores: &[Vec<f64>], direction: Direction) -> Result<RankSummary> {
    let k = algorithms.len();
    if k < 2 {
        return Err(MetricError::Shape("need at least two algorithms".into()));
    }
    if scores.is_empty() {
        return Err(MetricError::Shape("need at least one instance".into()));
    }
    let mut rows = Vec::with_capacity(scores.len());
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(MetricError::Shape(format!("row {i} has {} scores, expected {k}", row.len())));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(MetricError::Domain(format!("row {i} contains NaN")));
        }
        rows.push(midranks(row, direction));
    }
    let n = rows.len();
    let avg_ranks = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    Ok(RankSummary { algorithms: algorithms.iter().map(|s| s.to_string()).collect(), n, avg_ranks, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Chi-square quantile at 99%.
    pub critical_value: f64,
    pub significant: bool,
}

/// `12N / (k(k+1)) * sum_j (R_j - (k+1)/2)^2`, compared against the
/// chi-square distribution with `k - 1` degrees of freedom at 99%.
pub fn friedman_statistic(summary: &RankSummary) -> FriedmanResult {
    let k = summary.k() as f64;
    let n = summary.n as f64;
    let centre = (k + 1.0) / 2.0;
    let ss: f64 = summary.avg_ranks.iter().map(|r| (r - centre).powi(2)).sum();
    let statistic = 12.0 * n / (k * (k + 1.0)) * ss;
    let df = summary.k() - 1;
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    let critical_value = chi.inverse_cdf(0.99);
    FriedmanResult { statistic, df, p_value: chi.sf(statistic), critical_value, significant: statistic > critical_value }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolmRow {
    pub algorithm: String,
    pub avg_rank: f64,
    pub z: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
}

/// Compares every algorithm with `control` through
/// `z = (R_j - R_control) / sqrt(k(k+1) / (6N))` and applies Holm's
/// step-down adjustment. Rows come back in ascending order of raw p.
pub fn holm_posthoc(summary: &RankSummary, control: &str) -> Result<Vec<HolmRow>> {
    let c = summary.position(control)?;
    let k = summary.k() as f64;
    let se = (k * (k + 1.0) / (6.0 * summary.n as f64)).sqrt();
    let mut rows: Vec<HolmRow> = (0..summary.k())
        .filter(|&j| j != c)
        .map(|j| {
            let z = (summary.avg_ranks[j] - summary.avg_ranks[c]) / se;
            HolmRow {
                algorithm: summary.algorithms[j].clone(),
                avg_rank: summary.avg_ranks[j],
                z,
                p_value: two_sided_p(z),
                adjusted_p: 0.0,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.p_value.total_cmp(&b.p_value));
    let m = rows.len();
    let mut running: f64 = 0.0;
    for (i, row) in rows.iter_mut().enumerate() {
        running = running.max(((m - i) as f64 * row.p_value).min(1.0));
        row.adjusted_p = running;
    }
    Ok(rows)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The first sample is significantly better.
    Win,
    /// The second sample is significantly better.
    Loss,
    NoDifference,
}

impl Verdict {
    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::Win => "\u{25B2}",
            Verdict::Loss => "\u{25BD}",
            Verdict::NoDifference => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Rank sum of the first sample (rank 1 = smallest value).
    pub rank_sum: f64,
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

impl RankSumResult {
    /// Win when the first sample is better at level `alpha`, loss when the
    /// second one is.
    pub fn verdict(&self, direction: Direction, alpha: f64) -> Verdict {
        if self.p_value >= alpha || self.z == 0.0 {
            return Verdict::NoDifference;
        }
        // positive z: the first sample holds the larger values
        let first_larger = self.z > 0.0;
        if first_larger == (direction == Direction::HigherIsBetter) {
            Verdict::Win
        } else {
            Verdict::Loss
        }
    }
}

fn pooled_ranks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    midranks(&pooled, Direction::LowerIsBetter)
}

/// Wilcoxon rank-sum test, normal approximation with tie-corrected variance
/// and continuity correction.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Shape("both samples must be nonempty".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(MetricError::Domain("samples contain NaN".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let ranks = pooled_ranks(a, b);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;

    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let diff = u - mean;
    let z = if var <= 0.0 { 0.0 } else { diff.signum() * (diff.abs() - 0.5).max(0.0) / var.sqrt() };
    Ok(RankSumResult { rank_sum, u, z, p_value: two_sided_p(z) })
}

/// Exact two-sided rank-sum p over every assignment of the pooled midranks
/// to the first sample: the share of assignments whose rank sum lies at
/// least as far from its mean as the observed one.
pub fn rank_sum_exact_p(a: &[f64], b: &[f64]) -> Result<f64> {
    let total = a.len() + b.len();
    if a.is_empty() || b.is_empty() || total > 24 {
        return Err(MetricError::Shape(format!("exact enumeration needs 1..=24 values, got {total}")));
    }
    let ranks = pooled_ranks(a, b);
    let n1 = a.len();
    let observed: f64 = ranks[..n1].iter().sum();
    let mean = n1 as f64 * (total as f64 + 1.0) / 2.0;
    let dev = (observed - mean).abs() - 1e-9;
    let (mut hits, mut count) = (0u64, 0u64);
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let s: f64 = (0..total).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        count += 1;
        if (s - mean).abs() >= dev {
            hits += 1;
        }
    }
    Ok(hits as f64 / count as f64)
}

/// Four significant figures, the precision of published statistic tables.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 3 - x.abs().log10().floor() as i32;
    if (0..=6).contains(&digits) {
        format!("{:.*}", digits as usize, x)
    } else {
        format!("{x:.3e}")
    }
}

/// Average ranks with the Friedman statistic underneath.
pub fn format_friedman(summary: &RankSummary, result: &FriedmanResult) -> String {
    let mut out = String::from("Algorithm\tRanking\n");
    let mut order: Vec<usize> = (0..summary.k()).collect();
    order.sort_by(|&i, &j| summary.avg_ranks[i].total_cmp(&summary.avg_ranks[j]));
    for j in order {
        out.push_str(&format!("{}\t{}\n", summary.algorithms[j], sig4(summary.avg_ranks[j])));
    }
    out.push_str(&format!(
        "Friedman statistic (df {}): {}  critical value 99%: {}  p = {}\n",
        result.df,
        sig4(result.statistic),
        sig4(result.critical_value),
        sig4(result.p_value)
    ));
    out.push_str(if result.significant { "significant differences at 99%\n" } else { "no significant differences\n" });
    out
}

pub fn format_holm(control: &str, rows: &[HolmRow]) -> String {
    let mut out = format!("Control: {control}\nAlgorithm\tz\tp\tHolm p\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.algorithm, sig4(r.z), sig4(r.p_value), sig4(r.adjusted_p)));
    }
    out
}
