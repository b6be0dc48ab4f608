use serde::{Deserialize, Serialize};

use super::{Qubo, QuboError, Result};
use crate::model::{Assignment, State};
use crate::problems::{Instance, KpInstance, McInstance, TspInstance};

/// How the constraint penalty weight `A` is chosen.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyConfig {
    #[default]
    Auto,
    Fixed(f64),
}

impl PenaltyConfig {
    fn resolve(self, objective: &Qubo) -> Result<f64> {
        match self {
            PenaltyConfig::Auto => Ok(auto_penalty(objective.terms().values().copied())),
            PenaltyConfig::Fixed(a) if a > 0.0 && a.is_finite() => Ok(a),
            PenaltyConfig::Fixed(a) => Err(QuboError::Domain(format!("penalty must be positive, got {a}"))),
        }
    }
}

/// `1 + sum |c|` over the objective coefficients. A unit constraint breach
/// then costs more than the whole objective range.
pub fn auto_penalty(coeffs: impl IntoIterator<Item = f64>) -> f64 {
    1.0 + coeffs.into_iter().map(f64::abs).sum::<f64>()
}

/// Maps bitstrings of an encoding back to model states and vice versa.
#[derive(Clone, Debug, PartialEq)]
pub enum Decoder {
    /// `x_{v,p}` (city `v` at position `p`) is bit `v * n + p`.
    Tsp { n: usize },
    /// Item bits first, then slack bits with the given coefficients.
    Kp { weights: Vec<u64>, capacity: u64, slack: Vec<u64> },
    MaxCut { n: usize },
}

impl Decoder {
    /// Number of bits the encoding uses.
    pub fn bits(&self) -> usize {
        match self {
            Decoder::Tsp { n } => n * n,
            Decoder::Kp { weights, slack, .. } => weights.len() + slack.len(),
            Decoder::MaxCut { n } => *n,
        }
    }

    /// The state a bitstring stands for, or `None` if it breaks the
    /// one-hot structure (TSP) or the capacity (KP).
    pub fn decode(&self, bits: &[u8]) -> Option<State> {
        if bits.len() != self.bits() {
            return None;
        }
        let assignment = match self {
            Decoder::Tsp { n } => {
                let n = *n;
                let mut tour = vec![usize::MAX; n];
                for v in 0..n {
                    let row = &bits[v * n..(v + 1) * n];
                    if row.iter().map(|&b| b as usize).sum::<usize>() != 1 {
                        return None;
                    }
                    let p = row.iter().position(|&b| b != 0)?;
                    if tour[p] != usize::MAX {
                        return None;
                    }
                    tour[p] = v;
                }
                Assignment::List(tour)
            }
            Decoder::Kp { weights, capacity, .. } => {
                let items: Vec<usize> = (0..weights.len()).filter(|&i| bits[i] != 0).collect();
                if items.iter().map(|&i| weights[i]).sum::<u64>() > *capacity {
                    return None;
                }
                Assignment::Set(items)
            }
            Decoder::MaxCut { .. } => Assignment::Binary(bits.to_vec()),
        };
        Some(State::new(vec![assignment]))
    }

    /// Like [`Decoder::decode`] but keeps overweight KP selections, which are
    /// valid states of the model even though they violate its constraint.
    pub fn raw_state(&self, bits: &[u8]) -> Option<State> {
        match self {
            Decoder::Kp { weights, .. } if bits.len() == self.bits() => {
                let items = (0..weights.len()).filter(|&i| bits[i] != 0).collect();
                Some(State::new(vec![Assignment::Set(items)]))
            }
            _ => self.decode(bits),
        }
    }

    /// Bitstring of a state; for KP the slack bits take the exact residual
    /// capacity. `None` for a state of the wrong kind or an overweight set.
    pub fn encode(&self, state: &State) -> Option<Vec<u8>> {
        let [assignment] = state.assignments.as_slice() else { return None };
        match (self, assignment) {
            (Decoder::Tsp { n }, Assignment::List(tour)) if tour.len() == *n => {
                let mut bits = vec![0u8; n * n];
                for (p, &v) in tour.iter().enumerate() {
                    bits[v * n + p] = 1;
                }
                Some(bits)
            }
            (Decoder::Kp { weights, capacity, slack }, Assignment::Set(items)) => {
                let load: u64 = items.iter().map(|&i| weights[i]).sum();
                let mut rest = capacity.checked_sub(load)?;
                let mut bits = vec![0u8; weights.len() + slack.len()];
                for &i in items {
                    bits[i] = 1;
                }
                // the top coefficient is capped, so fill it first when needed
                for (k, &c) in slack.iter().enumerate().rev() {
                    let below: u64 = slack[..k].iter().sum();
                    if rest > below {
                        bits[weights.len() + k] = 1;
                        rest -= c;
                    }
                }
                debug_assert_eq!(rest, 0);
                Some(bits)
            }
            (Decoder::MaxCut { n }, Assignment::Binary(b)) if b.len() == *n => Some(b.clone()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuboEncoding {
    pub qubo: Qubo,
    pub decoder: Decoder,
    /// Penalty weight used (0 when the problem has no constraints).
    pub penalty: f64,
}

/// One-hot position encoding with row and column penalties.
pub fn tsp_to_qubo(inst: &TspInstance, penalty: PenaltyConfig) -> Result<QuboEncoding> {
    let n = inst.n();
    let var = |v: usize, p: usize| v * n + p;
    let mut qubo = Qubo::new(n * n);
    for p in 0..n {
        let next = (p + 1) % n;
        for u in 0..n {
            for v in 0..n {
                let c = inst.cost(u, v);
                if u != v && c != 0.0 {
                    qubo.add(var(u, p), var(v, next), c);
                }
            }
        }
    }
    let a = penalty.resolve(&qubo)?;
    for v in 0..n {
        let row: Vec<(usize, f64)> = (0..n).map(|p| (var(v, p), 1.0)).collect();
        qubo.add_squared_linear(&row, 1.0, a);
    }
    for p in 0..n {
        let col: Vec<(usize, f64)> = (0..n).map(|v| (var(v, p), 1.0)).collect();
        qubo.add_squared_linear(&col, 1.0, a);
    }
    Ok(QuboEncoding { qubo, decoder: Decoder::Tsp { n }, penalty: a })
}

/// Slack coefficients `1, 2, 4, ..` with the last one capped so that the
/// reachable slack values are exactly `0..=capacity`.
pub(crate) fn slack_coefficients(capacity: u64) -> Vec<u64> {
    let bits = (u64::BITS - capacity.leading_zeros()) as usize;
    let mut coeffs: Vec<u64> = (0..bits.saturating_sub(1)).map(|k| 1 << k).collect();
    if bits > 0 {
        coeffs.push(capacity - ((1u64 << (bits - 1)) - 1));
    }
    coeffs
}

/// `-sum v x + A (sum w x + s - C)^2` with a binary slack `s`.
pub fn kp_to_qubo(inst: &KpInstance, penalty: PenaltyConfig) -> Result<QuboEncoding> {
    let n = inst.n();
    let slack = slack_coefficients(inst.capacity);
    let mut qubo = Qubo::new(n + slack.len());
    for (i, &v) in inst.profits.iter().enumerate() {
        if v != 0 {
            qubo.add_linear(i, -(v as f64));
        }
    }
    let a = penalty.resolve(&qubo)?;
    let vars: Vec<(usize, f64)> = inst
        .weights
        .iter()
        .map(|&w| w as f64)
        .chain(slack.iter().map(|&c| c as f64))
        .enumerate()
        .collect();
    qubo.add_squared_linear(&vars, inst.capacity as f64, a);
    let decoder = Decoder::Kp { weights: inst.weights.clone(), capacity: inst.capacity, slack };
    Ok(QuboEncoding { qubo, decoder, penalty: a })
}

/// `-sum W_uv (x_u + x_v - 2 x_u x_v)` over the stored edges.
pub fn mcp_to_qubo(inst: &McInstance) -> QuboEncoding {
    let mut qubo = Qubo::new(inst.n);
    for &(u, v, w) in &inst.edges {
        qubo.add_linear(u, -w);
        qubo.add_linear(v, -w);
        qubo.add(u, v, 2.0 * w);
    }
    QuboEncoding { qubo, decoder: Decoder::MaxCut { n: inst.n }, penalty: 0.0 }
}

pub fn encode_instance(inst: &Instance, penalty: PenaltyConfig) -> Result<QuboEncoding> {
    match inst {
        Instance::Tsp(t) => tsp_to_qubo(t, penalty),
        Instance::Kp(k) => kp_to_qubo(k, penalty),
        Instance::MaxCut(m) => Ok(mcp_to_qubo(m)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{exact_kp, exact_maxcut, exact_tsp, generate_random_maxcut};
    use crate::qubo::{brute_force, for_each_bitstring};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_tsp(n: usize) -> TspInstance {
        let cost = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        TspInstance::new("unit", n, cost).unwrap()
    }

    fn random_tsp(n: usize, seed: u64) -> TspInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0))).collect();
        TspInstance::from_coords("r", &pts).unwrap()
    }

    fn random_kp(n: usize, seed: u64) -> KpInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profits = (0..n).map(|_| rng.gen_range(0..20)).collect();
        let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..12)).collect();
        let cap = rng.gen_range(0..=weights.iter().sum::<u64>());
        KpInstance::new("k", profits, weights, cap).unwrap()
    }

    #[test]
    fn auto_penalty_rule() {
        assert_eq!(auto_penalty([]), 1.0);
        assert_eq!(auto_penalty([0.0, 0.0]), 1.0);
        let k = KpInstance::new("k", vec![5, 6], vec![1, 1], 1).unwrap();
        assert_eq!(kp_to_qubo(&k, PenaltyConfig::Auto).unwrap().penalty, 12.0);
        assert!(kp_to_qubo(&k, PenaltyConfig::Fixed(0.0)).is_err());
    }

    #[test]
    fn slack_range_is_exact() {
        for cap in 0..300u64 {
            let s = slack_coefficients(cap);
            assert_eq!(s.iter().sum::<u64>(), cap);
            let mut reach = vec![false; cap as usize + 1];
            for mask in 0u32..1 << s.len() {
                let v: u64 = (0..s.len()).filter(|k| mask & (1 << k) != 0).map(|k| s[k]).sum();
                reach[v as usize] = true;
            }
            assert!(reach.iter().all(|&r| r), "capacity {cap}");
        }
        assert!(slack_coefficients(0).is_empty());
        assert_eq!(slack_coefficients(10), vec![1, 2, 4, 3]);
    }

    #[test]
    fn tsp_unit_energies() {
        let enc = tsp_to_qubo(&unit_tsp(3), PenaltyConfig::Auto).unwrap();
        let a = enc.penalty;
        let tour = State::new(vec![Assignment::List(vec![2, 0, 1])]);
        let bits = enc.decoder.encode(&tour).unwrap();
        assert_eq!(enc.qubo.energy(&bits), 3.0);
        assert_eq!(enc.qubo.energy(&[0; 9]), 2.0 * 3.0 * a);
        assert_eq!(enc.decoder.decode(&bits).unwrap(), tour);
        assert!(enc.decoder.decode(&[0; 9]).is_none());
    }

    #[test]
    fn tsp_ground_state_is_optimal_tour() {
        for seed in 0..10 {
            let inst = random_tsp(3, seed);
            let enc = tsp_to_qubo(&inst, PenaltyConfig::Auto).unwrap();
            let (e, bits) = brute_force(&enc.qubo).unwrap();
            let state = enc.decoder.decode(&bits).expect("ground state is a tour");
            let Assignment::List(tour) = &state.assignments[0] else { unreachable!() };
            assert_eq!(e, exact_tsp(&inst).unwrap().0);
            assert_eq!(inst.tour_cost(tour), e);
        }
    }

    #[test]
    fn kp_examples() {
        let k = KpInstance::new("k", vec![7, 3], vec![4, 9], 4).unwrap();
        let enc = kp_to_qubo(&k, PenaltyConfig::Auto).unwrap();
        let empty = enc.decoder.encode(&State::new(vec![Assignment::Set(vec![])])).unwrap();
        assert_eq!(enc.qubo.energy(&empty), 0.0);
        let exact = enc.decoder.encode(&State::new(vec![Assignment::Set(vec![0])])).unwrap();
        assert_eq!(enc.qubo.energy(&exact), -7.0);
        assert!(enc.decoder.encode(&State::new(vec![Assignment::Set(vec![1])])).is_none());
    }

    #[test]
    fn kp_penalty_dominance() {
        for seed in 0..40 {
            let inst = random_kp(7, seed);
            let enc = kp_to_qubo(&inst, PenaltyConfig::Auto).unwrap();
            let opt = -(exact_kp(&inst).unwrap().0 as f64);
            let mut ground = f64::INFINITY;
            for_each_bitstring(&enc.qubo, |bits, e| {
                ground = ground.min(e);
                if enc.decoder.decode(bits).is_none() {
                    assert!(e > opt, "seed {seed}: infeasible energy {e} <= {opt}");
                }
            })
            .unwrap();
            assert_eq!(ground, opt, "seed {seed}");
        }
    }

    #[test]
    fn decoded_states_reencode_with_model_energy() {
        let inst = random_kp(6, 1);
        let enc = kp_to_qubo(&inst, PenaltyConfig::Auto).unwrap();
        for_each_bitstring(&enc.qubo, |bits, _| {
            if let Some(state) = enc.decoder.decode(bits) {
                let again = enc.decoder.encode(&state).unwrap();
                let Assignment::Set(items) = &state.assignments[0] else { unreachable!() };
                assert_eq!(enc.qubo.energy(&again), -(inst.profit(items) as f64));
            }
        })
        .unwrap();
    }

    #[test]
    fn maxcut_examples() {
        let g = McInstance::new("two", 2, vec![(0, 1, 5.0)]).unwrap();
        let enc = mcp_to_qubo(&g);
        assert_eq!(enc.qubo.energy(&[0, 1]), -5.0);
        assert_eq!(enc.qubo.energy(&[1, 1]), 0.0);
        assert_eq!(enc.qubo.energy(&[0, 0]), 0.0);
    }

    #[test]
    fn maxcut_ground_state_matches_enumeration() {
        for seed in 0..5 {
            let g = generate_random_maxcut(12, 0.5, 1, 9, seed).unwrap();
            let enc = mcp_to_qubo(&g);
            let (e, bits) = brute_force(&enc.qubo).unwrap();
            assert_eq!(e, -exact_maxcut(&g).unwrap().0);
            assert_eq!(e, -g.cut_value(&bits));
        }
    }
}
