//! Command-line front end: solve instances, run benchmark plans, generate
//! MaxCut graphs, compute exact optima, run rank statistics and export QUBOs.
//!
//! Exit codes: 0 success, 2 bad input (usage, parse error, missing file),
//! 3 solver failure, 4 instance too large for the requested exact method,
//! 1 anything else (for example an unwritable output file).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridopt::bench::{
    approximation_ratio, emit_report, load_plan, parse_optima, read_scores, run_experiment, BenchError,
};
use hybridopt::model::Assignment;
use hybridopt::problems::{Instance, ProblemError, ProblemKind};
use hybridopt::qubo::{encode_instance, PenaltyConfig, QuboError};
use hybridopt::solver::{solve, solve_qubo_baseline, BaselineConfig, CmKind, QmMode, SolverConfig, SolverError};
use hybridopt::stats::{
    format_friedman, format_holm, friedman_statistic, holm_posthoc, sig4, wilcoxon_rank_sum, Direction, MetricError,
};

const INSTANCE_FORMATS: &str = "\
Instance formats:
  tsp     TSPLIB: NAME/DIMENSION/EDGE_WEIGHT_TYPE headers, then NODE_COORD_SECTION
          (EUC_2D, distances rounded to the nearest integer) or EDGE_WEIGHT_SECTION
          (EXPLICIT FULL_MATRIX), terminated by EOF.
  kp      first line `n capacity`, then n lines `profit weight`.
  maxcut  first line `nodes edges`, then one `i j weight` line per edge (0-indexed).
Lines starting with # are ignored in the kp and maxcut formats.";

const WILCOXON_ALPHA: f64 = 0.01;

#[derive(Parser)]
#[command(name = "hybridopt", version, about = "Hybrid classical/QUBO heuristics for TSP, knapsack and MaxCut")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and optionally write the sample set as JSON.
    #[command(after_help = INSTANCE_FORMATS)]
    Solve(SolveArgs),
    /// Run a benchmark plan and write CSV reports.
    #[command(after_help = PLAN_FORMAT)]
    Bench(BenchArgs),
    /// Generate a random weighted MaxCut graph.
    #[command(after_help = INSTANCE_FORMATS)]
    GenMaxcut(GenArgs),
    /// Compute the exact optimum of a small instance.
    #[command(after_help = INSTANCE_FORMATS)]
    Exact(ExactArgs),
    /// Rank statistics over a results or score matrix CSV.
    #[command(after_help = STATS_FORMAT)]
    Stats(StatsArgs),
    /// Write the QUBO encoding of an instance.
    #[command(after_help = QUBO_FORMAT)]
    ExportQubo(ExportArgs),
}

const PLAN_FORMAT: &str = "\
Plan format (JSON, unknown keys rejected):
  { \"name\": \"...\", \"master_seed\": 0, \"runs\": 10, \"time_limit\": 60,
    \"optima\": \"optima.txt\", \"control\": \"nl\",
    \"instances\": [ { \"problem\": \"tsp\", \"path\": \"berlin52.tsp\", \"id\": \"...\",
                     \"time_limit\": 60, \"optimum\": 7542 } ],
    \"algorithms\": [ { \"id\": \"nl\", \"solver\": \"nl\", \"settings\": { \"cm_kind\": \"tabu_search\" } },
                    { \"id\": \"sa\", \"solver\": \"qubo-sa\", \"settings\": { \"reads\": 100 } } ] }
Relative paths are resolved against the plan file. The optima file holds one
`instance_id value` pair per line. Completed cells are logged to runs.jsonl in
the output directory; --resume skips them.";

const STATS_FORMAT: &str = "\
Results formats:
  records   records.csv written by `bench`; --metric picks best or mean ratio,
            averaged over runs per instance.
  matrix    header `instance,alg1,alg2,...`, then one row of scores per instance.
Scores are higher-is-better unless --lower-is-better is given. Tests are run at
the 99% level. A CSV with the numbers is written next to the results file
unless --csv names another path.";

const QUBO_FORMAT: &str = "\
QUBO format: a `p qubo n m` header, a `c offset X` line, then one `i j coeff`
line per upper-triangular term (0-indexed, i == j for linear terms).";

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, value_enum)]
    problem: Problem,
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum Problem {
    Tsp,
    Kp,
    Maxcut,
}

impl From<Problem> for ProblemKind {
    fn from(p: Problem) -> Self {
        match p {
            Problem::Tsp => ProblemKind::Tsp,
            Problem::Kp => ProblemKind::Kp,
            Problem::Maxcut => ProblemKind::MaxCut,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SolverChoice {
    Nl,
    QuboSa,
}

#[derive(Copy, Clone, ValueEnum)]
enum QmChoice {
    Async,
    Inline,
}

#[derive(Copy, Clone, ValueEnum)]
enum LocalSearch {
    Sa,
    Tabu,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long, value_enum, default_value = "nl")]
    solver: SolverChoice,
    /// Seconds; defaults to max(5, N/20) for nl and unlimited for qubo-sa.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Parallel search branches (nl only); capped by --threads.
    #[arg(long)]
    branches: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration budget per branch (nl only). Makes runs reproducible.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, value_enum, default_value = "sa")]
    local_search: LocalSearch,
    /// Disable the QUBO subproblem move (nl only).
    #[arg(long)]
    no_qm: bool,
    /// How QUBO subproblems run (nl only). Defaults to inline when
    /// --iterations is given, so seeded runs repeat exactly, else async.
    #[arg(long, value_enum)]
    qm_mode: Option<QmChoice>,
    /// SA reads (qubo-sa only).
    #[arg(long, default_value_t = 100)]
    reads: usize,
    /// SA sweeps per read (qubo-sa only).
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Known optimum, used to print the approximation ratio.
    #[arg(long)]
    optimum: Option<f64>,
    /// Optima file (`instance_id value` per line) to look the optimum up in.
    #[arg(long)]
    optima: Option<PathBuf>,
    /// Write the sample set JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Continue an existing run log instead of refusing to touch it.
    #[arg(long)]
    resume: bool,
    /// Overrides the plan's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 1)]
    min_w: i64,
    #[arg(long, default_value_t = 10)]
    max_w: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    input: InstanceArgs,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum Test {
    Friedman,
    Holm,
    Wilcoxon,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum, default_value = "friedman")]
    test: Test,
    /// Control algorithm for holm and wilcoxon; defaults to the first column.
    #[arg(long)]
    control: Option<String>,
    /// best or mean (records files only).
    #[arg(long, default_value = "best")]
    metric: String,
    #[arg(long)]
    lower_is_better: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    input: InstanceArgs,
    /// Constraint penalty weight: `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    penalty: String,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        let code = if matches!(e, ProblemError::Size(_)) { 4 } else { 2 };
        Failure::new(code, e)
    }
}

impl From<QuboError> for Failure {
    fn from(e: QuboError) -> Self {
        let code = if matches!(e, QuboError::Size(_)) { 4 } else { 2 };
        Failure::new(code, e)
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        Failure::new(3, e)
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure::new(2, e)
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Problem(p) => p.into(),
            BenchError::Solver(s) => s.into(),
            other => Failure::new(2, other),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn write_output(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::new(2, "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::new(1, e))?;
    }
    Ok(())
}

fn read_instance(args: &InstanceArgs) -> Result<Instance> {
    Ok(Instance::read(args.problem.into(), &args.instance)?)
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    set_threads(args.threads)?;
    let inst = read_instance(&args.input)?;
    let kind = inst.kind();
    let set = match args.solver {
        SolverChoice::Nl => {
            let mut cfg = SolverConfig {
                time_limit: args.time_limit,
                seed: args.seed,
                max_iterations: args.iterations,
                qm_enabled: !args.no_qm,
                qm_mode: match args.qm_mode {
                    Some(QmChoice::Async) => QmMode::Async,
                    Some(QmChoice::Inline) => QmMode::Inline,
                    None if args.iterations.is_some() => QmMode::Inline,
                    None => QmMode::Async,
                },
                cm_kind: match args.local_search {
                    LocalSearch::Sa => CmKind::SimulatedAnnealing,
                    LocalSearch::Tabu => CmKind::TabuSearch,
                },
                ..SolverConfig::default()
            };
            if let Some(b) = args.branches {
                cfg.n_branches = b;
            }
            if let Some(t) = args.threads {
                cfg.n_branches = cfg.n_branches.min(t);
            }
            solve(&inst.build_model(), &cfg)?
        }
        SolverChoice::QuboSa => {
            let cfg = BaselineConfig {
                reads: args.reads,
                sweeps: args.sweeps,
                seed: args.seed,
                time_limit: args.time_limit,
                ..BaselineConfig::default()
            };
            solve_qubo_baseline(&inst, &cfg)?
        }
    };
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &args.out {
        write_output(out, &set.to_json())?;
    }
    let optimum = match (args.optimum, &args.optima) {
        (Some(v), _) => Some(v),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
            let optima = parse_optima(&text)?;
            let v = optima.get(inst.name()).copied();
            if v.is_none() {
                eprintln!("warning: no optimum for {} in {}", inst.name(), path.display());
            }
            v
        }
        (None, None) => None,
    };
    let Some(best) = set.best() else {
        println!("no solution found ({} undecodable reads)", set.undecodable);
        return Ok(());
    };
    let value = kind.natural_value(best.objective);
    let mut line = format!("objective {value} feasible {}", best.feasible);
    if let Some(opt) = optimum {
        let r = approximation_ratio(value, best.feasible, Some(opt), kind.sense())?;
        let _ = write!(line, " ratio {:.4}", r.value);
    }
    println!("{line}");
    println!("solution {}", certificate(&best.state.assignments[0]));
    Ok(())
}

fn certificate(a: &Assignment) -> String {
    let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
    match a {
        Assignment::List(v) | Assignment::Set(v) => join(&mut v.iter().map(usize::to_string)),
        Assignment::Binary(v) => v.iter().map(u8::to_string).collect(),
        other => format!("{other:?}"),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    set_threads(args.threads)?;
    let mut plan = load_plan(&args.plan)?;
    if let Some(seed) = args.seed {
        plan.master_seed = seed;
    }
    let log = args.out_dir.join("runs.jsonl");
    if log.exists() && !args.resume {
        return Err(Failure::new(
            2,
            format!("{} already exists; pass --resume to continue it or choose another --out-dir", log.display()),
        ));
    }
    let table = run_experiment(&plan, &args.out_dir)?;
    let files = emit_report(&table, &args.out_dir)?;
    let summary = fs::read_to_string(&files.summary).map_err(|e| Failure::new(1, e))?;
    print!("{summary}");
    eprintln!("{} records, reports in {}", table.records.len(), args.out_dir.display());
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let g = hybridopt::problems::generate_random_maxcut(args.nodes, args.density, args.min_w, args.max_w, args.seed)
        .map_err(|e| Failure::new(2, e))?;
    match &args.out {
        Some(path) => write_output(path, &g.to_text()),
        None => {
            print!("{}", g.to_text());
            Ok(())
        }
    }
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    let inst = read_instance(&args.input)?;
    let sol = inst.exact()?;
    println!("optimum {}", sol.value);
    println!("solution {}", certificate(&sol.state.assignments[0]));
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    if !args.results.exists() {
        return Err(Failure::new(2, format!("{}: no such file", args.results.display())));
    }
    let scores = read_scores(&args.results, &args.metric)?;
    if scores.algorithms.is_empty() || scores.instances.is_empty() {
        return Err(Failure::new(2, format!("{}: no scores", args.results.display())));
    }
    let direction = if args.lower_is_better { Direction::LowerIsBetter } else { Direction::HigherIsBetter };
    let control = args.control.clone().unwrap_or_else(|| scores.algorithms[0].clone());
    let summary = scores.ranks(direction)?;
    let mut csv_text = String::new();
    match args.test {
        Test::Friedman => {
            let f = friedman_statistic(&summary);
            print!("{}", format_friedman(&summary, &f));
            csv_text.push_str("k,instances,statistic,df,critical_value,p_value,significant\n");
            let _ = writeln!(
                csv_text,
                "{},{},{:.6},{},{:.6},{:.6},{}",
                summary.k(),
                summary.n,
                f.statistic,
                f.df,
                f.critical_value,
                f.p_value,
                f.significant
            );
        }
        Test::Holm => {
            let f = friedman_statistic(&summary);
            print!("{}", format_friedman(&summary, &f));
            let rows = holm_posthoc(&summary, &control)?;
            print!("{}", format_holm(&control, &rows));
            csv_text.push_str("control,algorithm,avg_rank,z,p_value,adjusted_p\n");
            for r in &rows {
                let _ = writeln!(
                    csv_text,
                    "{control},{},{:.6},{:.6},{:.6},{:.6}",
                    r.algorithm, r.avg_rank, r.z, r.p_value, r.adjusted_p
                );
            }
        }
        Test::Wilcoxon => {
            let c = summary.position(&control)?;
            println!("Control: {control}\nAlgorithm\tz\tp\tverdict");
            csv_text.push_str("control,algorithm,z,p_value,verdict\n");
            for (j, alg) in scores.algorithms.iter().enumerate() {
                if j == c {
                    continue;
                }
                let r = wilcoxon_rank_sum(&scores.samples[c], &scores.samples[j])?;
                let symbol = r.verdict(direction, WILCOXON_ALPHA).symbol();
                println!("{alg}\t{}\t{}\t{symbol}", sig4(r.z), sig4(r.p_value));
                let _ = writeln!(csv_text, "{control},{alg},{:.6},{:.6},{symbol}", r.z, r.p_value);
            }
        }
    }
    let csv_path = args.csv.clone().unwrap_or_else(|| {
        let test = match args.test {
            Test::Friedman => "friedman",
            Test::Holm => "holm",
            Test::Wilcoxon => "wilcoxon",
        };
        let stem = args.results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        args.results.with_file_name(format!("{stem}.{test}.csv"))
    });
    write_output(&csv_path, &csv_text)
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let inst = read_instance(&args.input)?;
    let penalty = match args.penalty.as_str() {
        "auto" => PenaltyConfig::Auto,
        s => PenaltyConfig::Fixed(s.parse().map_err(|_| Failure::new(2, format!("bad --penalty {s:?}")))?),
    };
    let enc = encode_instance(&inst, penalty)?;
    eprintln!("{} variables, {} terms", enc.qubo.n(), enc.qubo.terms().len());
    match &args.out {
        Some(path) => write_output(path, &enc.qubo.to_text()),
        None => {
            print!("{}", enc.qubo.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::GenMaxcut(a) => cmd_gen(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Stats(a) => cmd_stats(a),
        Command::ExportQubo(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
