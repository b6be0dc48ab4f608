use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{data_lines, parse_err, ProblemError, Result};
use crate::model::{Array, DecisionSpec, Model};

const ENUMERATION_CAP: usize = 20;

/// Weighted graph for max-cut. Each stored edge `(u, v, w)` is the directed
/// weight-matrix entry `W[u][v] = w`.
#[derive(Clone, Debug, PartialEq)]
pub struct McInstance {
    pub name: String,
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl McInstance {
    pub fn new(name: impl Into<String>, n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(u, v, w) in &edges {
            if u >= n || v >= n {
                return Err(ProblemError::Domain(format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if u == v {
                return Err(ProblemError::Domain(format!("self-loop on node {u}")));
            }
            if !w.is_finite() {
                return Err(ProblemError::Domain(format!("edge ({u}, {v}) has weight {w}")));
            }
        }
        Ok(McInstance { name: name.into(), n, edges })
    }

    /// Dense row-major `W`.
    pub fn weight_matrix(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n * self.n];
        for &(u, v, x) in &self.edges {
            w[u * self.n + v] += x;
        }
        w
    }

    /// `sum_{i != j} |x_i - x_j| * W[i][j]`, evaluated literally on the dense matrix.
    pub fn cut_value(&self, bits: &[u8]) -> f64 {
        let w = self.weight_matrix();
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    total += (bits[i] as f64 - bits[j] as f64).abs() * w[i * n + j];
                }
            }
        }
        total
    }

    /// Gset-style text: `n m` header and 1-indexed `u v w` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for &(u, v, w) in &self.edges {
            out.push_str(&format!("{} {} {}\n", u + 1, v + 1, w));
        }
        out
    }
}

pub fn parse_maxcut(text: &str) -> Result<McInstance> {
    let mut lines = data_lines(text);
    let header = lines.next().ok_or_else(|| parse_err("missing `n m` header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let [n, m] = head.as_slice() else {
        return Err(parse_err(format!("bad header {header:?}")));
    };
    let n: usize = n.parse().map_err(|_| parse_err(format!("bad node count {n:?}")))?;
    let m: usize = m.parse().map_err(|_| parse_err(format!("bad edge count {m:?}")))?;
    let mut edges = Vec::with_capacity(m);
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [u, v, w] = toks.as_slice() else {
            return Err(parse_err(format!("bad edge line {line:?}")));
        };
        let node = |s: &str| -> Result<usize> {
            let i: usize = s.parse().map_err(|_| parse_err(format!("bad node {s:?}")))?;
            if i == 0 || i > n {
                return Err(parse_err(format!("node {i} outside 1..={n}")));
            }
            Ok(i - 1)
        };
        let w: f64 = w.parse().map_err(|_| parse_err(format!("bad weight {w:?}")))?;
        edges.push((node(u)?, node(v)?, w));
    }
    if edges.len() != m {
        return Err(parse_err(format!("header says {m} edges, found {}", edges.len())));
    }
    McInstance::new("", n, edges).map_err(|e| parse_err(e.to_string()))
}

/// Random graph: each unordered pair `i < j` is kept with probability
/// `density` and gets a uniform integer weight in `min_w..=max_w`.
pub fn generate_random_maxcut(n: usize, density: f64, min_w: i64, max_w: i64, seed: u64) -> Result<McInstance> {
    if n < 2 {
        return Err(ProblemError::Domain(format!("need at least 2 nodes, got {n}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(ProblemError::Domain(format!("density {density} outside (0, 1]")));
    }
    if min_w > max_w {
        return Err(ProblemError::Domain(format!("empty weight range {min_w}..={max_w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < density {
                edges.push((i, j, rng.gen_range(min_w..=max_w) as f64));
            }
        }
    }
    McInstance::new(format!("mc{n}_s{seed}"), n, edges)
}

/// Model with a `BinaryArray(N)` decision and the negated cut value
/// `-sum |x_i - x_j| * W[i][j]` over the nonzero matrix entries.
pub fn build_mcp_model(inst: &McInstance) -> Model {
    let n = inst.n;
    let w = inst.weight_matrix();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && w[i * n + j] != 0.0 {
                rows.push(i as f64);
                cols.push(j as f64);
                weights.push(w[i * n + j]);
            }
        }
    }
    let mut m = Model::new();
    let build = |m: &mut Model| -> crate::model::Result<()> {
        let nodes = m.add_decision(DecisionSpec::BinaryArray(n))?;
        let weights = m.add_constant(Array::vector(weights))?;
        let i = m.add_constant(Array::vector(rows))?;
        let j = m.add_constant(Array::vector(cols))?;
        let xi = m.index(nodes.node, &[i])?;
        let xj = m.index(nodes.node, &[j])?;
        let diff = m.sub(xi, xj)?;
        let cut = m.abs(diff)?;
        let weighted = m.mul(cut, weights)?;
        let obj = m.sum(weighted)?;
        let neg = m.neg(obj)?;
        m.minimize(neg)
    };
    build(&mut m).expect("max-cut model construction is shape-correct");
    m.freeze();
    m
}

/// Optimal cut by Gray-code enumeration with node 0 pinned to side 0.
pub fn exact_maxcut(inst: &McInstance) -> Result<(f64, Vec<u8>)> {
    let n = inst.n;
    if n > ENUMERATION_CAP {
        return Err(ProblemError::Size(format!("enumeration supports n <= {ENUMERATION_CAP}, got {n}")));
    }
    if n <= 1 {
        return Ok((0.0, vec![0; n]));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(u, v, w) in &inst.edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut bits = vec![0u8; n];
    let mut cut = 0.0;
    let mut best = (0.0, bits.clone());
    for step in 1u64..(1 << (n - 1)) {
        let i = step.trailing_zeros() as usize + 1;
        for &(j, w) in &adj[i] {
            cut += if bits[i] == bits[j] { w } else { -w };
        }
        bits[i] ^= 1;
        if cut > best.0 {
            best = (cut, bits.clone());
        }
    }
    Ok(best)
}
