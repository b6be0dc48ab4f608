use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Qubo;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaParams {
    pub reads: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// `(beta_start, beta_end)`; estimated from the coefficients when `None`.
    pub beta_range: Option<(f64, f64)>,
    /// Run reads on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams { reads: 100, sweeps: 1000, seed: 0, beta_range: None, parallel: true }
    }
}

/// `reads` independent single-flip Metropolis runs over `sweeps` sweeps each.
pub fn sa_sample(qubo: &Qubo, reads: usize, sweeps: usize, seed: u64) -> Vec<Sample> {
    sa_sample_with(qubo, &SaParams { reads, sweeps, seed, ..SaParams::default() })
}

pub fn sa_sample_with(qubo: &Qubo, params: &SaParams) -> Vec<Sample> {
    let adj = qubo.adjacency();
    let (b0, b1) = params.beta_range.unwrap_or_else(|| default_beta_range(qubo));
    let betas = geometric(b0, b1, params.sweeps);
    let run = |read: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(read as u64);
        let mut bits: Vec<u8> = (0..qubo.n()).map(|_| rng.gen_range(0..2)).collect();
        let mut field = adj.fields(&bits);
        for &beta in &betas {
            for i in 0..bits.len() {
                let delta = adj.flip_delta(&bits, &field, i);
                if delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp() {
                    adj.flip(&mut bits, &mut field, i);
                }
            }
        }
        // zero-temperature quench so every read ends in a local minimum
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 100 {
            improved = false;
            passes += 1;
            for i in 0..bits.len() {
                if adj.flip_delta(&bits, &field, i) < 0.0 {
                    adj.flip(&mut bits, &mut field, i);
                    improved = true;
                }
            }
        }
        let energy = qubo.energy(&bits);
        Sample { bits, energy }
    };
    if params.parallel {
        (0..params.reads).into_par_iter().map(run).collect()
    } else {
        (0..params.reads).map(run).collect()
    }
}

/// `ln 2 / dE_max` to `ln 100 / dE_min`, where `dE_max` bounds any single
/// flip and `dE_min` is the smallest coefficient magnitude.
fn default_beta_range(qubo: &Qubo) -> (f64, f64) {
    let adj = qubo.adjacency();
    let max_delta = (0..qubo.n())
        .map(|i| adj.h[i].abs() + adj.nbr[i].iter().map(|&(_, q)| q.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let min_delta = qubo.terms().values().map(|q| q.abs()).fold(f64::INFINITY, f64::min);
    if max_delta == 0.0 || !min_delta.is_finite() {
        return (1.0, 1.0);
    }
    let b0 = std::f64::consts::LN_2 / max_delta;
    let b1 = 100f64.ln() / min_delta;
    (b0, b1.max(b0))
}

fn geometric(b0: f64, b1: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![b1],
        _ => {
            let r = (b1 / b0).powf(1.0 / (steps - 1) as f64);
            (0..steps).map(|k| b0 * r.powi(k as i32)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::generate_random_maxcut;
    use crate::qubo::{brute_force, mcp_to_qubo};

    #[test]
    fn single_variable() {
        let mut q = Qubo::new(1);
        q.add_linear(0, -1.0);
        for s in sa_sample(&q, 20, 50, 1) {
            assert_eq!(s.bits, vec![1]);
            assert_eq!(s.energy, -1.0);
        }
    }

    #[test]
    fn zero_qubo() {
        let samples = sa_sample(&Qubo::new(6), 10, 10, 3);
        assert_eq!(samples.len(), 10);
        assert!(samples.iter().all(|s| s.energy == 0.0 && s.bits.len() == 6));
    }

    #[test]
    fn deterministic_and_exact_energies() {
        let g = generate_random_maxcut(20, 0.4, 1, 5, 11).unwrap();
        let q = mcp_to_qubo(&g).qubo;
        let a = sa_sample(&q, 16, 100, 99);
        let serial = sa_sample_with(&q, &SaParams { reads: 16, sweeps: 100, seed: 99, parallel: false, beta_range: None });
        assert_eq!(a, serial);
        for s in &a {
            assert_eq!(s.energy, q.energy(&s.bits));
        }
        assert_ne!(a, sa_sample(&q, 16, 100, 100));
    }

    #[test]
    fn reaches_ground_state_on_small_graphs() {
        let mut hits = 0;
        for seed in 0..20 {
            let g = generate_random_maxcut(10, 0.8, 1, 10, seed).unwrap();
            let q = mcp_to_qubo(&g).qubo;
            let ground = brute_force(&q).unwrap().0;
            let best = sa_sample(&q, 100, 200, seed).iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
            assert!(best >= ground);
            hits += usize::from(best == ground);
        }
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn schedule_endpoints() {
        let b = geometric(0.1, 10.0, 5);
        assert!((b[0] - 0.1).abs() < 1e-12 && (b[4] - 10.0).abs() < 1e-9);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        assert!(geometric(1.0, 2.0, 0).is_empty());
    }
}
