use super::{data_lines, parse_err, ProblemError, Result};
use crate::model::{Array, DecisionSpec, Model};

/// DP table cells (items x capacity) above which `exact_kp` refuses.
const DP_CELL_CAP: u64 = 400_000_000;

/// 0-1 knapsack instance with integer data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KpInstance {
    pub name: String,
    pub profits: Vec<u64>,
    pub weights: Vec<u64>,
    pub capacity: u64,
}

impl KpInstance {
    pub fn new(name: impl Into<String>, profits: Vec<u64>, weights: Vec<u64>, capacity: u64) -> Result<Self> {
        if profits.len() != weights.len() {
            return Err(ProblemError::Domain(format!(
                "{} profits but {} weights",
                profits.len(),
                weights.len()
            )));
        }
        if profits.is_empty() {
            return Err(ProblemError::Domain("knapsack needs at least one item".into()));
        }
        if weights.contains(&0) {
            return Err(ProblemError::Domain("item weights must be at least 1".into()));
        }
        Ok(KpInstance { name: name.into(), profits, weights, capacity })
    }

    pub fn n(&self) -> usize {
        self.profits.len()
    }

    pub fn profit(&self, items: &[usize]) -> u64 {
        items.iter().map(|&i| self.profits[i]).sum()
    }

    pub fn weight(&self, items: &[usize]) -> u64 {
        items.iter().map(|&i| self.weights[i]).sum()
    }

    pub fn fits(&self, items: &[usize]) -> bool {
        self.weight(items) <= self.capacity
    }

    /// Canonical layout: item count, capacity, blank line, then `profit weight` per item.
    pub fn to_kplib(&self) -> String {
        let mut out = format!("{}\n{}\n\n", self.n(), self.capacity);
        for (p, w) in self.profits.iter().zip(&self.weights) {
            out.push_str(&format!("{p} {w}\n"));
        }
        out
    }
}

pub fn parse_kplib(text: &str) -> Result<KpInstance> {
    let mut toks = data_lines(text).flat_map(str::split_whitespace);
    let mut next = |what: &str| -> Result<u64> {
        let tok = toks.next().ok_or_else(|| parse_err(format!("missing {what}")))?;
        tok.parse::<u64>()
            .map_err(|_| parse_err(format!("{what}: expected a nonnegative integer, got {tok:?}")))
    };
    let n = next("item count")? as usize;
    let capacity = next("capacity")?;
    let mut profits = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        profits.push(next(&format!("profit of item {i}"))?);
        weights.push(next(&format!("weight of item {i}"))?);
    }
    if toks.next().is_some() {
        return Err(parse_err(format!("trailing data after {n} items")));
    }
    KpInstance::new("", profits, weights, capacity).map_err(|e| parse_err(e.to_string()))
}

/// Model with one `Set(N)` decision, the capacity constraint and the
/// negated profit as objective.
pub fn build_kp_model(inst: &KpInstance) -> Model {
    let to_f = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let mut m = Model::new();
    let build = |m: &mut Model| -> crate::model::Result<()> {
        let items = m.add_decision(DecisionSpec::Set(inst.n()))?;
        let capacity = m.add_constant(Array::scalar(inst.capacity as f64))?;
        let weights = m.add_constant(Array::vector(to_f(&inst.weights)))?;
        let profits = m.add_constant(Array::vector(to_f(&inst.profits)))?;
        let packed = m.index(weights, &[items.node])?;
        let load = m.sum(packed)?;
        let capacity_check = m.le(load, capacity)?;
        m.add_constraint(capacity_check)?;
        let gained = m.index(profits, &[items.node])?;
        let sum_values = m.sum(gained)?;
        let objective = m.neg(sum_values)?;
        m.minimize(objective)
    };
    build(&mut m).expect("knapsack model construction is shape-correct");
    m.freeze();
    m
}

/// Optimal profit and item set by dynamic programming over capacity.
pub fn exact_kp(inst: &KpInstance) -> Result<(u64, Vec<usize>)> {
    let n = inst.n();
    // no item heavier than the total weight can matter
    let cap = inst.capacity.min(inst.weights.iter().sum()) as usize;
    let cells = n as u64 * (cap as u64 + 1);
    if cells > DP_CELL_CAP {
        return Err(ProblemError::Size(format!("{n} items x capacity {cap} exceeds {DP_CELL_CAP} cells")));
    }
    let width = cap + 1;
    let words = width.div_ceil(64);
    let mut take = vec![0u64; n * words];
    let mut best = vec![0u64; width];
    for (i, (&p, &w)) in inst.profits.iter().zip(&inst.weights).enumerate() {
        let w = w as usize;
        if w > cap {
            continue;
        }
        for c in (w..=cap).rev() {
            let cand = best[c - w] + p;
            if cand > best[c] {
                best[c] = cand;
                take[i * words + c / 64] |= 1 << (c % 64);
            }
        }
    }
    let mut items = Vec::new();
    let mut c = cap;
    for i in (0..n).rev() {
        if take[i * words + c / 64] & (1 << (c % 64)) != 0 {
            items.push(i);
            c -= inst.weights[i] as usize;
        }
    }
    items.reverse();
    Ok((best[cap], items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, State};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(n: usize, seed: u64) -> KpInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profits = (0..n).map(|_| rng.gen_range(1..100)).collect();
        let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..60)).collect();
        let cap = weights.iter().sum::<u64>() / 2;
        KpInstance::new(format!("k{n}"), profits, weights, cap).unwrap()
    }

    fn brute_force(inst: &KpInstance) -> u64 {
        let n = inst.n();
        (0u32..1 << n)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
            .filter(|items| inst.fits(items))
            .map(|items| inst.profit(&items))
            .max()
            .unwrap()
    }

    #[test]
    fn parse_canonical_layout() {
        let k = parse_kplib("2\n10\n\n5 4\n6 7\n").unwrap();
        assert_eq!(k.n(), 2);
        assert_eq!(k.capacity, 10);
        assert_eq!(k.profits, vec![5, 6]);
        assert_eq!(k.weights, vec![4, 7]);
        assert_eq!(parse_kplib(&k.to_kplib()).unwrap(), k);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_kplib("2\n10\n\n5 -4\n6 7\n"), Err(ProblemError::Parse(_))));
        assert!(matches!(parse_kplib("2\n10\n\n5 4\n"), Err(ProblemError::Parse(_))));
        assert!(matches!(parse_kplib("1\n10\n\n5 4\n1 1\n"), Err(ProblemError::Parse(_))));
        assert!(matches!(parse_kplib("1\n10\n\n5 0\n"), Err(ProblemError::Parse(_))));
        assert!(matches!(parse_kplib(""), Err(ProblemError::Parse(_))));
    }

    #[test]
    fn model_semantics() {
        let inst = random_instance(8, 4);
        let m = build_kp_model(&inst);
        assert_eq!(m.constraints().len(), 1);
        let empty = m.evaluate(&State::new(vec![Assignment::Set(vec![])])).unwrap();
        assert!(empty.feasible);
        assert_eq!(empty.objective, 0.0);

        let roomy = KpInstance::new("r", vec![3, 4], vec![2, 2], 10).unwrap();
        let m = build_kp_model(&roomy);
        let all = m.evaluate(&State::new(vec![Assignment::Set(vec![0, 1])])).unwrap();
        assert!(all.feasible);
        assert_eq!(all.objective, -7.0);
    }

    #[test]
    fn single_item() {
        let k = KpInstance::new("one", vec![9], vec![2], 5).unwrap();
        assert_eq!(exact_kp(&k).unwrap(), (9, vec![0]));
        let k = KpInstance::new("none", vec![9], vec![6], 5).unwrap();
        assert_eq!(exact_kp(&k).unwrap(), (0, vec![]));
    }

    #[test]
    fn dp_matches_enumeration() {
        for seed in 0..30 {
            let inst = random_instance(12, seed);
            let (v, items) = exact_kp(&inst).unwrap();
            assert_eq!(v, brute_force(&inst), "seed {seed}");
            assert!(inst.fits(&items));
            assert_eq!(inst.profit(&items), v);
        }
        // n = 20 against the enumeration oracle as well
        let inst = random_instance(20, 77);
        assert_eq!(exact_kp(&inst).unwrap().0, brute_force(&inst));
    }

    #[test]
    fn dp_monotone_in_capacity() {
        let base = random_instance(15, 8);
        let mut prev = 0;
        for cap in 0..=base.weights.iter().sum::<u64>() {
            let inst = KpInstance { capacity: cap, ..base.clone() };
            let v = exact_kp(&inst).unwrap().0;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn oversize_is_rejected() {
        let inst = KpInstance::new("big", vec![1; 2000], vec![1_000_000; 2000], 1_000_000_000).unwrap();
        assert!(matches!(exact_kp(&inst), Err(ProblemError::Size(_))));
    }
}
