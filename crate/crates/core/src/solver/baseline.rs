use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Origin, Result, SampleRecord, SampleSet, SolverError};
use crate::problems::Instance;
use crate::qubo::{encode_instance, sa_sample_with, PenaltyConfig, SaParams};

/// Standalone QUBO route: the whole instance is encoded once and sampled
/// with simulated annealing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub reads: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub penalty: PenaltyConfig,
    /// Stops issuing reads once exceeded; at least one batch always runs.
    pub time_limit: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { reads: 100, sweeps: 1000, seed: 0, penalty: PenaltyConfig::Auto, time_limit: None }
    }
}

const BATCH: usize = 16;

pub fn solve_qubo_baseline(instance: &Instance, cfg: &BaselineConfig) -> Result<SampleSet> {
    if cfg.reads == 0 || cfg.sweeps == 0 {
        return Err(SolverError::Config("reads and sweeps must be at least 1".into()));
    }
    let start = Instant::now();
    let enc = encode_instance(instance, cfg.penalty)?;
    let model = instance.build_model();

    let mut samples = Vec::new();
    let mut undecodable = 0;
    let batch_size = if cfg.time_limit.is_some() { BATCH } else { cfg.reads };
    let deadline = cfg.time_limit.map(|t| start + Duration::from_secs_f64(t));
    let mut done = 0;
    let mut batch = 0u64;
    while done < cfg.reads {
        if batch > 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let reads = batch_size.min(cfg.reads - done);
        let params = SaParams {
            reads,
            sweeps: cfg.sweeps,
            seed: cfg.seed.wrapping_add(batch.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            beta_range: None,
            parallel: true,
        };
        for (k, sample) in sa_sample_with(&enc.qubo, &params).into_iter().enumerate() {
            match enc.decoder.raw_state(&sample.bits) {
                Some(state) => {
                    let eval = model.evaluate_unchecked(&state)?;
                    samples.push(SampleRecord::new(state, &eval, 0, (done + k) as u64, Origin::QuboRead));
                }
                None => undecodable += 1,
            }
        }
        done += reads;
        batch += 1;
    }

    let mut set = SampleSet {
        solver: "qubo-sa".into(),
        samples,
        trace: Vec::new(),
        branches: Vec::new(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        warnings: Vec::new(),
        undecodable,
        wall_time_s: 0.0,
    };
    if done < cfg.reads {
        set.warnings.push(format!("time limit reached after {done} of {} reads", cfg.reads));
    }
    set.sort();
    set.wall_time_s = start.elapsed().as_secs_f64();
    Ok(set)
}
