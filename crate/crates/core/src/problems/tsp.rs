use log::warn;

use super::{data_lines, parse_err, ProblemError, Result};
use crate::model::{Array, DecisionSpec, Model};

const ENUMERATION_CAP: usize = 10;
const HELD_KARP_CAP: usize = 18;

/// Travelling salesman instance with a dense (possibly asymmetric) cost matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TspInstance {
    pub name: String,
    n: usize,
    cost: Vec<f64>,
}

impl TspInstance {
    pub fn new(name: impl Into<String>, n: usize, cost: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(ProblemError::Domain("TSP needs at least one node".into()));
        }
        if cost.len() != n * n {
            return Err(ProblemError::Domain(format!("{} costs for {n} nodes", cost.len())));
        }
        if let Some(c) = cost.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(ProblemError::Domain(format!("invalid cost {c}")));
        }
        if (0..n).any(|i| cost[i * n + i] != 0.0) {
            return Err(ProblemError::Domain("cost matrix diagonal must be zero".into()));
        }
        Ok(TspInstance { name: name.into(), n, cost })
    }

    /// Distances rounded to the nearest integer, halves away from zero.
    pub fn from_coords(name: impl Into<String>, coords: &[(f64, f64)]) -> Result<Self> {
        let n = coords.len();
        let mut cost = vec![0.0; n * n];
        for (i, a) in coords.iter().enumerate() {
            for (j, b) in coords.iter().enumerate() {
                if i != j {
                    cost[i * n + j] = (a.0 - b.0).hypot(a.1 - b.1).round();
                }
            }
        }
        Self::new(name, n, cost)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.cost
    }

    /// Closed-tour cost computed directly from the cost matrix.
    pub fn tour_cost(&self, tour: &[usize]) -> f64 {
        let n = tour.len();
        let mut total = 0.0;
        for i in 0..n.saturating_sub(1) {
            total += self.cost(tour[i], tour[i + 1]);
        }
        if n > 0 {
            total += self.cost(tour[n - 1], tour[0]);
        }
        total
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.cost(i, j) == self.cost(j, i)))
    }

    /// Number of ordered triples with `c(i,k) > c(i,j) + c(j,k)`.
    pub fn triangle_violations(&self) -> usize {
        let n = self.n;
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i != j && j != k && i != k && self.cost(i, k) > self.cost(i, j) + self.cost(j, k) {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// TSPLib text with an explicit full matrix.
    pub fn to_tsplib(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            out.push_str(&format!("NAME: {}\n", self.name));
        }
        out.push_str("TYPE: TSP\n");
        out.push_str(&format!("DIMENSION: {}\n", self.n));
        out.push_str("EDGE_WEIGHT_TYPE: EXPLICIT\nEDGE_WEIGHT_FORMAT: FULL_MATRIX\nEDGE_WEIGHT_SECTION\n");
        for row in self.cost.chunks(self.n) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out.push_str("EOF\n");
        out
    }
}

#[derive(PartialEq)]
enum Section {
    Header,
    Coords,
    Weights,
    Skip,
}

/// Parses TSPLib `EUC_2D` or `EXPLICIT`/`FULL_MATRIX` instances.
pub fn parse_tsplib(text: &str) -> Result<TspInstance> {
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut weight_type: Option<String> = None;
    let mut weight_format: Option<String> = None;
    let mut coords: Vec<(f64, f64)> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut section = Section::Header;

    for line in data_lines(text) {
        let upper = line.to_ascii_uppercase();
        if upper == "EOF" {
            break;
        }
        match upper.as_str() {
            "NODE_COORD_SECTION" => {
                section = Section::Coords;
                continue;
            }
            "EDGE_WEIGHT_SECTION" => {
                section = Section::Weights;
                continue;
            }
            s if s.ends_with("_SECTION") => {
                section = Section::Skip;
                continue;
            }
            _ => {}
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim().to_ascii_uppercase();
            let value = value.trim();
            section = Section::Header;
            match key.as_str() {
                "NAME" => name = value.to_string(),
                "DIMENSION" => {
                    dimension = Some(value.parse().map_err(|_| parse_err(format!("bad DIMENSION {value:?}")))?)
                }
                "EDGE_WEIGHT_TYPE" => weight_type = Some(value.to_ascii_uppercase()),
                "EDGE_WEIGHT_FORMAT" => weight_format = Some(value.to_ascii_uppercase()),
                _ => {}
            }
            continue;
        }
        match section {
            Section::Coords => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(parse_err(format!("bad coordinate line {line:?}")));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad number {s:?}")));
                coords.push((num(toks[1])?, num(toks[2])?));
            }
            Section::Weights => {
                for tok in line.split_whitespace() {
                    weights.push(tok.parse().map_err(|_| parse_err(format!("bad weight {tok:?}")))?);
                }
            }
            Section::Skip => {}
            Section::Header => return Err(parse_err(format!("unexpected line {line:?}"))),
        }
    }

    let n = dimension.ok_or_else(|| parse_err("missing DIMENSION"))?;
    let inst = match weight_type.as_deref() {
        Some("EUC_2D") => {
            if coords.len() != n {
                return Err(parse_err(format!("DIMENSION {n} but {} coordinates", coords.len())));
            }
            TspInstance::from_coords(name, &coords)
        }
        Some("EXPLICIT") => {
            match weight_format.as_deref() {
                Some("FULL_MATRIX") => {}
                other => return Err(parse_err(format!("unsupported EDGE_WEIGHT_FORMAT {other:?}"))),
            }
            if weights.len() != n * n {
                return Err(parse_err(format!("DIMENSION {n} needs {} weights, got {}", n * n, weights.len())));
            }
            TspInstance::new(name, n, weights)
        }
        other => return Err(parse_err(format!("unsupported EDGE_WEIGHT_TYPE {other:?}"))),
    }
    .map_err(|e| parse_err(e.to_string()))?;
    if inst.n <= 60 {
        let bad = inst.triangle_violations();
        if bad > 0 {
            warn!("{}: {bad} triangle-inequality violations", inst.name);
        }
    }
    Ok(inst)
}

/// Model with one `List(N)` decision and the closed-tour cost as objective.
pub fn build_tsp_model(inst: &TspInstance) -> Model {
    let n = inst.n;
    let mut m = Model::new();
    let build = |m: &mut Model| -> crate::model::Result<()> {
        let route = m.add_decision(DecisionSpec::List(n))?;
        let cost = m.add_constant(Array::matrix(n, n, inst.cost.clone())?)?;
        let from = m.slice(route.node, None, Some(-1))?;
        let to = m.slice(route.node, Some(1), None)?;
        let legs = m.index(cost, &[from, to])?;
        let last = m.at(route.node, -1)?;
        let first = m.at(route.node, 0)?;
        let back = m.index(cost, &[last, first])?;
        let route_cost = m.sum(legs)?;
        let return_cost = m.sum(back)?;
        let total = m.add(route_cost, return_cost)?;
        m.minimize(total)
    };
    build(&mut m).expect("TSP model construction is shape-correct");
    m.freeze();
    m
}

/// Optimal tour by enumeration (N <= 10) or Held-Karp (N <= 18).
pub fn exact_tsp(inst: &TspInstance) -> Result<(f64, Vec<usize>)> {
    if inst.n <= ENUMERATION_CAP {
        tsp_enumerate(inst)
    } else {
        tsp_held_karp(inst)
    }
}

/// Brute force over all tours starting at node 0.
pub fn tsp_enumerate(inst: &TspInstance) -> Result<(f64, Vec<usize>)> {
    let n = inst.n;
    if n > ENUMERATION_CAP {
        return Err(ProblemError::Size(format!("enumeration supports N <= {ENUMERATION_CAP}, got {n}")));
    }
    let mut tour: Vec<usize> = (0..n).collect();
    let mut best = (inst.tour_cost(&tour), tour.clone());
    if n <= 2 {
        return Ok(best);
    }
    // Heap's algorithm over positions 1..n
    let k = n - 1;
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                tour.swap(1, 1 + i);
            } else {
                tour.swap(1 + c[i], 1 + i);
            }
            let cost = inst.tour_cost(&tour);
            if cost < best.0 {
                best = (cost, tour.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Held-Karp dynamic program over subsets of nodes `1..n`.
pub fn tsp_held_karp(inst: &TspInstance) -> Result<(f64, Vec<usize>)> {
    let n = inst.n;
    if n > HELD_KARP_CAP {
        return Err(ProblemError::Size(format!("Held-Karp supports N <= {HELD_KARP_CAP}, got {n}")));
    }
    if n <= 2 {
        let tour: Vec<usize> = (0..n).collect();
        return Ok((inst.tour_cost(&tour), tour));
    }
    let m = n - 1;
    let full = 1usize << m;
    let mut dp = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for j in 0..m {
        dp[(1 << j) * m + j] = inst.cost(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let here = dp[mask * m + j];
            if !here.is_finite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = here + inst.cost(j + 1, k + 1);
                if cand < dp[next * m + k] {
                    dp[next * m + k] = cand;
                    parent[next * m + k] = j as u8;
                }
            }
        }
    }
    let last_mask = full - 1;
    let (mut best, mut last) = (f64::INFINITY, 0);
    for j in 0..m {
        let cand = dp[last_mask * m + j] + inst.cost(j + 1, 0);
        if cand < best {
            best = cand;
            last = j;
        }
    }
    let mut tour = Vec::with_capacity(n);
    let mut mask = last_mask;
    let mut j = last;
    loop {
        tour.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    tour.push(0);
    tour.reverse();
    Ok((best, tour))
}
