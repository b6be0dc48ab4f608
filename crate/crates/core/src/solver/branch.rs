use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::moves::{initial_state, propose};
use super::qm::{QmEncoder, QmQuery};
use super::{compare, BranchSummary, Checkpoint, CmKind, Origin, QmMode, Result, SampleRecord, SolverConfig};
use crate::model::{Evaluation, Model, State};
use crate::qubo::{sa_sample_with, SaParams};

const PROBES: usize = 100;
const STAGNATION: u64 = 10_000;
const FINAL_TEMPERATURE: f64 = 1e-3;
const TABU_CANDIDATES: usize = 16;
const RESCHEDULE_EVERY: u64 = 1024;

pub(super) struct Context<'a> {
    pub model: &'a Model,
    pub config: &'a SolverConfig,
    pub start: Instant,
    pub deadline: Instant,
    pub stop: AtomicBool,
}

pub(super) struct Output {
    pub samples: Vec<SampleRecord>,
    pub trace: Vec<Checkpoint>,
    pub summary: BranchSummary,
    pub warnings: Vec<String>,
    pub undecodable: u64,
}

struct QmJob {
    query: QmQuery,
    params: SaParams,
}

struct QmResult {
    states: Vec<State>,
    undecodable: u64,
}

impl QmJob {
    fn run(self) -> QmResult {
        let mut states = Vec::new();
        let mut undecodable = 0;
        for sample in sa_sample_with(&self.query.qubo, &self.params) {
            match self.query.decode(&sample.bits) {
                Some(s) if !states.contains(&s) => states.push(s),
                Some(_) => {}
                None => undecodable += 1,
            }
        }
        QmResult { states, undecodable }
    }
}

/// The branch side of the CM/QM mailbox.
enum Link {
    Off,
    Inline { mailbox: VecDeque<QmResult> },
    Async { jobs: Sender<QmJob>, results: Receiver<QmResult>, pending: bool },
}

impl Link {
    fn busy(&self) -> bool {
        match self {
            Link::Off => true,
            Link::Inline { mailbox } => !mailbox.is_empty(),
            Link::Async { pending, .. } => *pending,
        }
    }

    fn submit(&mut self, job: QmJob) {
        match self {
            Link::Off => {}
            Link::Inline { mailbox } => mailbox.push_back(job.run()),
            Link::Async { jobs, pending, .. } => {
                // a closed worker only means no more QM results
                *pending = jobs.send(job).is_ok();
            }
        }
    }

    fn poll(&mut self) -> Option<QmResult> {
        match self {
            Link::Off => None,
            Link::Inline { mailbox } => mailbox.pop_front(),
            Link::Async { results, pending, .. } => match results.try_recv() {
                Ok(r) => {
                    *pending = false;
                    Some(r)
                }
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => {
                    *pending = true;
                    None
                }
            },
        }
    }
}

struct Search<'a> {
    ctx: &'a Context<'a>,
    index: usize,
    rng: ChaCha8Rng,
    qm: QmEncoder<'a>,
    qm_declined: bool,
    cur: State,
    cur_eval: Evaluation,
    cur_e: f64,
    best: State,
    best_eval: Evaluation,
    lambda: f64,
    t0: f64,
    t: f64,
    t_end: f64,
    alpha: f64,
    search_start: Instant,
    iter: u64,
    last_improvement: u64,
    restarts: u64,
    tabu: HashMap<u64, u64>,
    tenure: u64,
    improvements: VecDeque<SampleRecord>,
    trace: Vec<Checkpoint>,
    warnings: Vec<String>,
    qm_queries: u64,
    qm_improvements: u64,
    undecodable: u64,
}

pub(super) fn run(ctx: &Context<'_>, index: usize) -> Result<Output> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    rng.set_stream(index as u64);
    let search = Search::new(ctx, index, rng)?;
    let cfg = ctx.config;
    if !cfg.qm_enabled {
        return search.run(Link::Off);
    }
    match cfg.qm_mode {
        QmMode::Inline => search.run(Link::Inline { mailbox: VecDeque::new() }),
        QmMode::Async => std::thread::scope(|s| {
            let (job_tx, job_rx) = mpsc::channel::<QmJob>();
            let (res_tx, res_rx) = mpsc::channel::<QmResult>();
            s.spawn(move || {
                for job in job_rx {
                    if res_tx.send(job.run()).is_err() {
                        break;
                    }
                }
            });
            search.run(Link::Async { jobs: job_tx, results: res_rx, pending: false })
        }),
    }
}

impl<'a> Search<'a> {
    fn new(ctx: &'a Context<'a>, index: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        let model = ctx.model;
        let cur = initial_state(model, &mut rng);
        let cur_eval = model.evaluate_unchecked(&cur)?;

        // probe the neighbourhood for the violation weight and start temperature
        let probe_start = Instant::now();
        let mut deltas = Vec::with_capacity(PROBES);
        for _ in 0..PROBES {
            let mut next = cur.clone();
            propose(model, &cur, &mut rng).apply(&mut next);
            let ev = model.evaluate_unchecked(&next)?;
            deltas.push((ev.objective - cur_eval.objective, ev.total_violation() - cur_eval.total_violation()));
        }
        let per_iteration = probe_start.elapsed().as_secs_f64() / PROBES as f64;
        let lambda = violation_weight(&deltas);
        let moved: Vec<f64> = deltas.iter().map(|&(df, dv)| (df + lambda * dv).abs()).filter(|&d| d > 0.0).collect();
        let t0 = if moved.is_empty() { 1.0 } else { moved.iter().sum::<f64>() / moved.len() as f64 };
        let t_end = t0 * FINAL_TEMPERATURE;
        let budget = match ctx.config.max_iterations {
            Some(b) => b as f64,
            None => {
                let left = ctx.deadline.saturating_duration_since(Instant::now()).as_secs_f64();
                left / per_iteration.max(1e-9)
            }
        };
        let alpha = (t_end / t0).powf(1.0 / budget.max(1.0));

        let size = model.problem_size() as u64;
        let cur_e = cur_eval.objective + lambda * cur_eval.total_violation();
        let mut s = Search {
            ctx,
            index,
            rng,
            qm: QmEncoder::new(model),
            qm_declined: false,
            best: cur.clone(),
            best_eval: cur_eval.clone(),
            cur,
            cur_eval,
            cur_e,
            lambda,
            t0,
            t: t0,
            t_end,
            alpha,
            search_start: Instant::now(),
            iter: 0,
            last_improvement: 0,
            restarts: 0,
            tabu: HashMap::new(),
            tenure: (7 + size / 10).min(30),
            improvements: VecDeque::new(),
            trace: Vec::new(),
            warnings: Vec::new(),
            qm_queries: 0,
            qm_improvements: 0,
            undecodable: 0,
        };
        s.record_best(Origin::Cm);
        Ok(s)
    }

    fn energy(&self, eval: &Evaluation) -> f64 {
        eval.objective + self.lambda * eval.total_violation()
    }

    fn out_of_time(&self) -> bool {
        self.ctx.stop.load(AtomicOrdering::Relaxed) || Instant::now() >= self.ctx.deadline
    }

    fn run(mut self, mut link: Link) -> Result<Output> {
        let cfg = self.ctx.config;
        loop {
            if self.iter.is_multiple_of(16) && self.out_of_time() {
                break;
            }
            if cfg.max_iterations.is_some_and(|m| self.iter >= m) {
                break;
            }
            while let Some(result) = link.poll() {
                self.merge(result)?;
            }
            match cfg.cm_kind {
                CmKind::SimulatedAnnealing => self.sa_step()?,
                CmKind::TabuSearch => self.tabu_step()?,
            }
            self.iter += 1;
            if self.iter - self.last_improvement >= STAGNATION {
                self.restart();
            }
            if cfg.max_iterations.is_none() && self.iter.is_multiple_of(RESCHEDULE_EVERY) {
                self.reschedule();
            }
            if cfg.qm_enabled && !self.qm_declined && self.iter.is_multiple_of(cfg.qm_period) && !link.busy() {
                self.submit_query(&mut link);
            }
        }
        drop(link);
        self.finish()
    }

    fn sa_step(&mut self) -> Result<()> {
        let mv = propose(self.ctx.model, &self.cur, &mut self.rng);
        let mut cand = self.cur.clone();
        mv.apply(&mut cand);
        let ev = self.ctx.model.evaluate_unchecked(&cand)?;
        let e = self.energy(&ev);
        let delta = e - self.cur_e;
        let accept = delta <= 0.0 || (self.t > 0.0 && self.rng.gen::<f64>() < (-delta / self.t).exp());
        if accept {
            self.cur = cand;
            self.cur_eval = ev;
            self.cur_e = e;
            self.consider_current(Origin::Cm);
        }
        self.t = (self.t * self.alpha).max(self.t_end);
        Ok(())
    }

    fn tabu_step(&mut self) -> Result<()> {
        let model = self.ctx.model;
        let mut chosen: Option<(f64, State, Evaluation, u64)> = None;
        let mut fallback: Option<(f64, State, Evaluation, u64)> = None;
        for _ in 0..TABU_CANDIDATES {
            let mv = propose(model, &self.cur, &mut self.rng);
            let key = mv.tabu_key(&self.cur);
            let mut cand = self.cur.clone();
            mv.apply(&mut cand);
            let ev = model.evaluate_unchecked(&cand)?;
            let e = self.energy(&ev);
            let tabu = self.tabu.get(&key).is_some_and(|&until| until > self.iter);
            let aspirates = compare(&ev, &cand, &self.best_eval, &self.best) == Ordering::Less;
            let slot = if !tabu || aspirates { &mut chosen } else { &mut fallback };
            if slot.as_ref().is_none_or(|c| e < c.0) {
                *slot = Some((e, cand, ev, key));
            }
        }
        // every candidate tabu: take the best of them anyway
        let Some((e, cand, ev, key)) = chosen.or(fallback) else { return Ok(()) };
        self.cur = cand;
        self.cur_eval = ev;
        self.cur_e = e;
        self.tabu.insert(key, self.iter + self.tenure);
        if self.tabu.len() > 4 * self.tenure as usize + 64 {
            let now = self.iter;
            self.tabu.retain(|_, until| *until > now);
        }
        self.consider_current(Origin::Cm);
        Ok(())
    }

    fn consider_current(&mut self, origin: Origin) {
        if compare(&self.cur_eval, &self.cur, &self.best_eval, &self.best) == Ordering::Less {
            self.best = self.cur.clone();
            self.best_eval = self.cur_eval.clone();
            self.last_improvement = self.iter;
            self.record_best(origin);
        }
    }

    fn record_best(&mut self, origin: Origin) {
        let rec = SampleRecord::new(self.best.clone(), &self.best_eval, self.index, self.iter, origin);
        self.improvements.push_back(rec);
        if self.improvements.len() > self.ctx.config.max_samples_per_branch {
            self.improvements.pop_front();
        }
        self.trace.push(Checkpoint {
            elapsed_s: self.ctx.start.elapsed().as_secs_f64(),
            branch: self.index,
            iteration: self.iter,
            objective: self.best_eval.objective,
            feasible: self.best_eval.feasible,
            violation: self.best_eval.total_violation(),
        });
        if let Some(target) = self.ctx.config.target_objective {
            if self.best_eval.feasible && self.best_eval.objective <= target + 1e-9 {
                self.ctx.stop.store(true, AtomicOrdering::Relaxed);
            }
        }
    }

    fn restart(&mut self) {
        self.restarts += 1;
        self.last_improvement = self.iter;
        self.cur = self.best.clone();
        self.cur_eval = self.best_eval.clone();
        self.cur_e = self.energy(&self.cur_eval);
        self.t = self.t.max(0.1 * self.t0);
        self.tabu.clear();
    }

    /// Re-aims the cooling rate at the remaining time.
    fn reschedule(&mut self) {
        let elapsed = self.search_start.elapsed().as_secs_f64();
        let left = self.ctx.deadline.saturating_duration_since(Instant::now()).as_secs_f64();
        if elapsed <= 0.0 {
            return;
        }
        let remaining = self.iter as f64 / elapsed * left;
        self.alpha = if self.t > self.t_end && remaining > 1.0 { (self.t_end / self.t).powf(1.0 / remaining) } else { 1.0 };
    }

    fn submit_query(&mut self, link: &mut Link) {
        let cfg = self.ctx.config;
        match self.qm.query(&self.best, cfg.qm_window, &mut self.rng) {
            Ok(query) => {
                for w in &query.warnings {
                    self.warn(w.clone());
                }
                let params = SaParams {
                    reads: cfg.qm_reads,
                    sweeps: cfg.qm_sweeps,
                    seed: self.rng.gen(),
                    beta_range: None,
                    parallel: false,
                };
                self.qm_queries += 1;
                link.submit(QmJob { query, params });
            }
            Err(reason) => {
                self.warn(reason);
                self.qm_declined = true;
            }
        }
    }

    fn warn(&mut self, w: String) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    fn merge(&mut self, result: QmResult) -> Result<()> {
        self.undecodable += result.undecodable;
        let model = self.ctx.model;
        let mut top: Option<(State, Evaluation)> = None;
        for state in result.states {
            debug_assert!(model.validate_state(&state).is_empty());
            let ev = model.evaluate_unchecked(&state)?;
            if !ev.feasible {
                continue;
            }
            if top.as_ref().is_none_or(|(s, e)| compare(&ev, &state, e, s) == Ordering::Less) {
                top = Some((state, ev));
            }
        }
        if let Some((state, ev)) = top {
            if compare(&ev, &state, &self.best_eval, &self.best) == Ordering::Less {
                self.cur_e = self.energy(&ev);
                self.cur = state;
                self.cur_eval = ev;
                self.qm_improvements += 1;
                self.consider_current(Origin::Qm);
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Output> {
        let mut samples: Vec<SampleRecord> = self.improvements.into_iter().collect();
        samples.push(SampleRecord::new(self.best.clone(), &self.best_eval, self.index, self.iter, Origin::FinalBest));
        samples.push(SampleRecord::new(self.cur.clone(), &self.cur_eval, self.index, self.iter, Origin::FinalCurrent));
        let summary = BranchSummary {
            index: self.index,
            seed: self.ctx.config.seed,
            iterations: self.iter,
            restarts: self.restarts,
            qm_queries: self.qm_queries,
            qm_improvements: self.qm_improvements,
            best_objective: self.best_eval.objective,
            best_feasible: self.best_eval.feasible,
            temperature0: self.t0,
            violation_weight: self.lambda,
        };
        Ok(Output { samples, trace: self.trace, summary, warnings: self.warnings, undecodable: self.undecodable })
    }
}

/// Largest objective change per unit of violation seen while probing, so
/// that trading feasibility for objective never pays off on average.
fn violation_weight(deltas: &[(f64, f64)]) -> f64 {
    let ratio = deltas
        .iter()
        .filter(|&&(df, dv)| df != 0.0 && dv != 0.0)
        .map(|&(df, dv)| (df / dv).abs())
        .fold(0.0, f64::max);
    if ratio > 0.0 {
        return ratio.max(1.0);
    }
    let mean_df = deltas.iter().map(|d| d.0.abs()).sum::<f64>() / deltas.len().max(1) as f64;
    1.0 + mean_df
}
