//! Quadratic unconstrained binary models: penalty encodings of the three
//! benchmark problems, a simulated-annealing sampler, exhaustive ground-state
//! search for small models, and a line-oriented text format.
//!
//! Energies are `offset + sum_{i <= j} q_ij * x_i * x_j` over bits `x`.

mod encode;
mod sa;

pub(crate) use encode::slack_coefficients;

pub use encode::{auto_penalty, encode_instance, kp_to_qubo, mcp_to_qubo, tsp_to_qubo, Decoder, PenaltyConfig, QuboEncoding};
pub use sa::{sa_sample, sa_sample_with, SaParams, Sample};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Largest variable count accepted by [`brute_force`].
pub const BRUTE_FORCE_CAP: usize = 26;

#[derive(Debug, Error)]
pub enum QuboError {
    #[error("qubo parse error: {0}")]
    Parse(String),
    #[error("qubo too large: {0}")]
    Size(String),
    #[error("qubo domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, QuboError>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Qubo {
    n: usize,
    terms: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl Qubo {
    pub fn new(n: usize) -> Self {
        Qubo { n, terms: BTreeMap::new(), offset: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Stored `(i, j) -> q_ij` entries with `i <= j`, none zero.
    pub fn terms(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.terms
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.terms.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    /// Adds `c * x_i * x_j`; `i == j` is a linear term.
    ///
    /// # Panics
    /// On an out-of-range index or a non-finite coefficient.
    pub fn add(&mut self, i: usize, j: usize, c: f64) {
        assert!(i < self.n && j < self.n, "variable ({i}, {j}) outside 0..{}", self.n);
        assert!(c.is_finite(), "non-finite coefficient {c}");
        let key = (i.min(j), i.max(j));
        let v = self.terms.entry(key).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn add_linear(&mut self, i: usize, c: f64) {
        self.add(i, i, c);
    }

    pub fn add_offset(&mut self, c: f64) {
        self.offset += c;
    }

    /// Adds `scale * (sum_k a_k x_{v_k} - target)^2`, expanded using `x^2 = x`.
    pub fn add_squared_linear(&mut self, vars: &[(usize, f64)], target: f64, scale: f64) {
        for (k, &(i, a)) in vars.iter().enumerate() {
            self.add_linear(i, scale * (a * a - 2.0 * target * a));
            for &(j, b) in &vars[k + 1..] {
                self.add(i, j, 2.0 * scale * a * b);
            }
        }
        self.add_offset(scale * target * target);
    }

    pub fn energy(&self, bits: &[u8]) -> f64 {
        assert_eq!(bits.len(), self.n, "bitstring length");
        let mut e = self.offset;
        for (&(i, j), &q) in &self.terms {
            if bits[i] != 0 && bits[j] != 0 {
                e += q;
            }
        }
        e
    }

    /// Upper-triangular dense row-major matrix; the offset is not included.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n * self.n];
        for (&(i, j), &q) in &self.terms {
            m[i * self.n + j] = q;
        }
        m
    }

    /// `p qubo n m` header, a `c offset X` comment, then one `i j coeff`
    /// line per stored term (0-indexed).
    pub fn to_text(&self) -> String {
        let mut out = format!("p qubo {} {}\nc offset {}\n", self.n, self.terms.len(), self.offset);
        for (&(i, j), &q) in &self.terms {
            let _ = writeln!(out, "{i} {j} {q}");
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let perr = |m: String| QuboError::Parse(m);
        let mut header: Option<(usize, usize)> = None;
        let mut offset = 0.0;
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                [] => {}
                ["c", "offset", x] => {
                    offset = x.parse().map_err(|_| perr(format!("line {}: bad offset {x:?}", lineno + 1)))?;
                }
                ["c", ..] => {}
                ["p", "qubo", n, m] => {
                    if header.is_some() {
                        return Err(perr(format!("line {}: duplicate header", lineno + 1)));
                    }
                    let n = n.parse().map_err(|_| perr(format!("bad variable count {n:?}")))?;
                    let m = m.parse().map_err(|_| perr(format!("bad entry count {m:?}")))?;
                    header = Some((n, m));
                }
                [i, j, c] => {
                    let Some((n, _)) = header else {
                        return Err(perr(format!("line {}: entry before header", lineno + 1)));
                    };
                    let idx = |s: &str| -> Result<usize> {
                        let v: usize = s.parse().map_err(|_| perr(format!("line {}: bad index {s:?}", lineno + 1)))?;
                        if v >= n {
                            return Err(perr(format!("line {}: index {v} outside 0..{n}", lineno + 1)));
                        }
                        Ok(v)
                    };
                    let c: f64 = c.parse().map_err(|_| perr(format!("line {}: bad coefficient {c:?}", lineno + 1)))?;
                    if !c.is_finite() {
                        return Err(perr(format!("line {}: non-finite coefficient", lineno + 1)));
                    }
                    entries.push((idx(i)?, idx(j)?, c));
                }
                _ => return Err(perr(format!("line {}: unrecognized {line:?}", lineno + 1))),
            }
        }
        let (n, m) = header.ok_or_else(|| perr("missing `p qubo n m` header".into()))?;
        if entries.len() != m {
            return Err(perr(format!("header says {m} entries, found {}", entries.len())));
        }
        let mut q = Qubo::new(n);
        q.offset = offset;
        for (i, j, c) in entries {
            q.add(i, j, c);
        }
        Ok(q)
    }

    fn adjacency(&self) -> Adjacency {
        let mut h = vec![0.0; self.n];
        let mut nbr = vec![Vec::new(); self.n];
        for (&(i, j), &q) in &self.terms {
            if i == j {
                h[i] += q;
            } else {
                nbr[i].push((j, q));
                nbr[j].push((i, q));
            }
        }
        Adjacency { h, nbr }
    }
}

/// Linear biases and symmetric neighbour lists, for incremental flips.
struct Adjacency {
    h: Vec<f64>,
    nbr: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    /// Energy change of flipping bit `i` given `field[i] = sum_j q_ij x_j`.
    fn flip_delta(&self, bits: &[u8], field: &[f64], i: usize) -> f64 {
        let d = self.h[i] + field[i];
        if bits[i] == 0 {
            d
        } else {
            -d
        }
    }

    fn flip(&self, bits: &mut [u8], field: &mut [f64], i: usize) {
        let sign = if bits[i] == 0 { 1.0 } else { -1.0 };
        bits[i] ^= 1;
        for &(j, q) in &self.nbr[i] {
            field[j] += sign * q;
        }
    }

    fn fields(&self, bits: &[u8]) -> Vec<f64> {
        self.nbr
            .iter()
            .map(|ns| ns.iter().filter(|&&(j, _)| bits[j] != 0).map(|&(_, q)| q).sum())
            .collect()
    }
}

/// Visits all `2^n` bitstrings in Gray-code order, passing each with its
/// energy (tracked incrementally, exact for integral coefficients).
pub fn for_each_bitstring(qubo: &Qubo, mut f: impl FnMut(&[u8], f64)) -> Result<()> {
    let n = qubo.n;
    if n > BRUTE_FORCE_CAP {
        return Err(QuboError::Size(format!("{n} variables exceeds enumeration cap {BRUTE_FORCE_CAP}")));
    }
    let adj = qubo.adjacency();
    let mut bits = vec![0u8; n];
    let mut field = vec![0.0; n];
    let mut e = qubo.offset;
    f(&bits, e);
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        e += adj.flip_delta(&bits, &field, i);
        adj.flip(&mut bits, &mut field, i);
        f(&bits, e);
    }
    Ok(())
}

/// Minimum energy and a minimizing bitstring (the first in Gray order).
pub fn brute_force(qubo: &Qubo) -> Result<(f64, Vec<u8>)> {
    let mut best = (f64::INFINITY, Vec::new());
    for_each_bitstring(qubo, |bits, e| {
        if e < best.0 {
            best = (e, bits.to_vec());
        }
    })?;
    best.0 = qubo.energy(&best.1);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_qubo(n: usize, seed: u64) -> Qubo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = Qubo::new(n);
        for i in 0..n {
            for j in i..n {
                if rng.gen_bool(0.4) {
                    q.add(i, j, rng.gen_range(-5.0..5.0));
                }
            }
        }
        q.add_offset(rng.gen_range(-3.0..3.0));
        q
    }

    fn dense_energy(q: &Qubo, bits: &[u8]) -> f64 {
        let m = q.to_dense();
        let n = q.n();
        let mut e = q.offset();
        for i in 0..n {
            for j in 0..n {
                e += m[i * n + j] * bits[i] as f64 * bits[j] as f64;
            }
        }
        e
    }

    #[test]
    fn zero_sums_are_not_stored() {
        let mut q = Qubo::new(3);
        q.add(2, 0, 1.5);
        q.add(0, 2, -1.5);
        assert!(q.terms().is_empty());
        q.add(1, 0, 2.0);
        assert_eq!(q.get(0, 1), 2.0);
        assert_eq!(q.terms().keys().next(), Some(&(0, 1)));
    }

    #[test]
    fn energy_matches_dense_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let q = random_qubo(15, seed);
            for _ in 0..50 {
                let bits: Vec<u8> = (0..15).map(|_| rng.gen_range(0..2)).collect();
                assert!((q.energy(&bits) - dense_energy(&q, &bits)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn squared_linear_expansion() {
        let mut q = Qubo::new(3);
        let vars = [(0, 2.0), (1, 3.0), (2, -1.0)];
        q.add_squared_linear(&vars, 4.0, 1.5);
        for mask in 0..8u8 {
            let bits: Vec<u8> = (0..3).map(|i| (mask >> i) & 1).collect();
            let s: f64 = vars.iter().map(|&(i, a)| a * bits[i] as f64).sum();
            assert!((q.energy(&bits) - 1.5 * (s - 4.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn text_roundtrip() {
        let q = random_qubo(12, 9);
        let back = Qubo::parse_text(&q.to_text()).unwrap();
        assert_eq!(back, q);
        assert!(q.to_text().starts_with(&format!("p qubo 12 {}\n", q.terms().len())));
    }

    #[test]
    fn text_errors() {
        assert!(Qubo::parse_text("0 0 1\n").is_err());
        assert!(Qubo::parse_text("p qubo 2 1\n0 2 1\n").is_err());
        assert!(Qubo::parse_text("p qubo 2 2\n0 1 1\n").is_err());
        assert!(Qubo::parse_text("p qubo 2 1\n0 1 x\n").is_err());
        assert!(Qubo::parse_text("").is_err());
    }

    #[test]
    fn enumeration_visits_every_bitstring_once() {
        let q = random_qubo(10, 5);
        let mut seen = vec![false; 1 << 10];
        for_each_bitstring(&q, |bits, e| {
            let idx = bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((b as usize) << i));
            assert!(!seen[idx]);
            seen[idx] = true;
            assert!((e - q.energy(bits)).abs() < 1e-9);
        })
        .unwrap();
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn brute_force_minimum() {
        let mut q = Qubo::new(1);
        q.add_linear(0, -1.0);
        assert_eq!(brute_force(&q).unwrap(), (-1.0, vec![1]));
        assert_eq!(brute_force(&Qubo::new(0)).unwrap(), (0.0, vec![]));
        assert!(matches!(brute_force(&Qubo::new(BRUTE_FORCE_CAP + 1)), Err(QuboError::Size(_))));
    }
}
