//! QUBO subproblems over a window of the incumbent.
//!
//! Binary and set windows are encoded by probing the model: the objective
//! is sampled on all windows with at most two bits set, which recovers any
//! objective that is quadratic in the window bits exactly. Scalar
//! constraints are probed linearly and enforced with a slack penalty.
//! List windows re-place a segment of the permutation with a one-hot
//! element-by-position encoding whose objective terms are extracted
//! symbolically from `C[view, view]` gathers of the list.

use std::collections::HashMap;

use crate::model::{resolve_slice, Assignment, DecisionSpec, Evaluation, Model, NodeId, NodeKind, Op, State};
use crate::qubo::{auto_penalty, slack_coefficients, Qubo};

/// Largest slack range encoded for a probed constraint.
const SLACK_CAP: f64 = (1u64 << 24) as f64;

#[derive(Clone, Debug)]
enum Window {
    /// Bit `k` is `x[idx[k]]` of a binary array.
    Bits(Vec<usize>),
    /// Bit `k` is membership of element `elems[k]` in a set.
    Members(Vec<usize>),
    /// Bit `a * w + b` places `elements[a]` at list position `positions[b]`.
    Positions { positions: Vec<usize>, elements: Vec<usize> },
}

/// A QUBO over a window of one decision plus what is needed to map samples
/// back onto the incumbent it was built from.
#[derive(Clone, Debug)]
pub struct QmQuery {
    pub qubo: Qubo,
    pub decision: usize,
    window: Window,
    base: State,
    /// Non-fatal notes, e.g. a clamped window.
    pub warnings: Vec<String>,
}

impl QmQuery {
    /// Number of decision elements freed by the window.
    pub fn window_len(&self) -> usize {
        match &self.window {
            Window::Bits(v) | Window::Members(v) => v.len(),
            Window::Positions { positions, .. } => positions.len(),
        }
    }

    /// State for a sample, or `None` when a list window's one-hot structure
    /// is broken. Slack bits are ignored.
    pub fn decode(&self, bits: &[u8]) -> Option<State> {
        let mut state = self.base.clone();
        match (&self.window, &mut state.assignments[self.decision]) {
            (Window::Bits(idx), Assignment::Binary(x)) => {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = bits[k];
                }
            }
            (Window::Members(elems), Assignment::Set(s)) => {
                s.extend(elems.iter().enumerate().filter(|&(k, _)| bits[k] != 0).map(|(_, &e)| e));
                s.sort_unstable();
            }
            (Window::Positions { positions, elements }, Assignment::List(p)) => {
                let w = positions.len();
                let mut used = vec![false; w];
                for (b, &pos) in positions.iter().enumerate() {
                    let mut chosen = None;
                    for a in 0..w {
                        if bits[a * w + b] != 0 {
                            if chosen.is_some() || used[a] {
                                return None;
                            }
                            chosen = Some(a);
                        }
                    }
                    let a = chosen?;
                    used[a] = true;
                    p[pos] = elements[a];
                }
            }
            _ => return None,
        }
        Some(state)
    }
}

#[derive(Clone, Debug)]
enum Idx {
    Pos(usize),
    Fixed(usize),
}

/// `scale * table[idx..]`, or the constant `scale` when `table` is `None`.
#[derive(Clone, Debug)]
struct Term {
    table: Option<NodeId>,
    idx: Vec<Idx>,
    scale: f64,
}

#[derive(Clone, Debug)]
enum Val {
    /// Positions of the list decision viewed by an expression.
    View { scalar: bool, pos: Vec<usize> },
    Const(NodeId),
    /// One sum of terms per element.
    Sym { scalar: bool, atoms: Vec<Vec<Term>> },
}

/// Builds QM queries for one model; caches the symbolic form of list objectives.
pub struct QmEncoder<'m> {
    model: &'m Model,
    list_terms: HashMap<usize, Result<Vec<Term>, String>>,
}

impl<'m> QmEncoder<'m> {
    pub fn new(model: &'m Model) -> Self {
        let mut list_terms = HashMap::new();
        for (d, spec) in model.decisions().iter().enumerate() {
            if let DecisionSpec::List(n) = *spec {
                list_terms.insert(d, extract_list_objective(model, d, n));
            }
        }
        QmEncoder { model, list_terms }
    }

    /// Decisions the QM can build windows for.
    pub fn supported(&self) -> Vec<usize> {
        self.model
            .decisions()
            .iter()
            .enumerate()
            .filter(|(d, spec)| match spec {
                DecisionSpec::BinaryArray(_) | DecisionSpec::Set(_) => true,
                DecisionSpec::List(_) => matches!(self.list_terms.get(d), Some(Ok(_))),
                _ => false,
            })
            .map(|(d, _)| d)
            .collect()
    }

    /// Random window of `window` elements on a random supported decision.
    pub fn query(&self, incumbent: &State, window: usize, rng: &mut impl rand::Rng) -> Result<QmQuery, String> {
        use rand::seq::SliceRandom;
        let supported = self.supported();
        let Some(&d) = supported.choose(rng) else {
            return Err(self.decline_reason());
        };
        let spec = self.model.decisions()[d];
        let n = spec.size();
        let mut warnings = Vec::new();
        let w = if window > n {
            warnings.push(format!("qm window {window} clamped to decision size {n}"));
            n
        } else {
            window.max(1)
        };
        let elems: Vec<usize> = match (spec, &incumbent.assignments[d]) {
            (DecisionSpec::List(_), _) => {
                let start = rng.gen_range(0..n);
                (0..w).map(|k| (start + k) % n).collect()
            }
            (DecisionSpec::Set(_), Assignment::Set(members)) => {
                // half from the current members, the rest from outside
                let mut inside = members.clone();
                inside.shuffle(rng);
                let mut outside: Vec<usize> = (0..n).filter(|e| members.binary_search(e).is_err()).collect();
                outside.shuffle(rng);
                let take_in = inside.len().min(w.div_ceil(2)).max(w.saturating_sub(outside.len()));
                let mut v: Vec<usize> = inside.into_iter().take(take_in).collect();
                v.extend(outside.into_iter().take(w - v.len()));
                v.sort_unstable();
                v
            }
            _ => {
                let mut v: Vec<usize> = (0..n).collect();
                v.shuffle(rng);
                v.truncate(w);
                v.sort_unstable();
                v
            }
        };
        let mut q = self.query_window(incumbent, d, &elems)?;
        q.warnings.extend(warnings);
        Ok(q)
    }

    fn decline_reason(&self) -> String {
        let list_errors: Vec<&String> = self.list_terms.values().filter_map(|r| r.as_ref().err()).collect();
        match list_errors.first() {
            Some(e) => format!("qm declined: {e}"),
            None => "qm declined: no binary, set or list decision".into(),
        }
    }

    /// Query over explicit window elements: bit indices for binary arrays,
    /// elements for sets, positions for lists.
    pub fn query_window(&self, incumbent: &State, d: usize, elems: &[usize]) -> Result<QmQuery, String> {
        match (self.model.decisions().get(d), incumbent.assignments.get(d)) {
            (Some(DecisionSpec::BinaryArray(_)), Some(Assignment::Binary(_))) => {
                self.probe_query(incumbent, d, Window::Bits(elems.to_vec()))
            }
            (Some(DecisionSpec::Set(_)), Some(Assignment::Set(_))) => {
                self.probe_query(incumbent, d, Window::Members(elems.to_vec()))
            }
            (Some(DecisionSpec::List(_)), Some(Assignment::List(p))) => {
                let terms = match self.list_terms.get(&d) {
                    Some(Ok(t)) => t,
                    Some(Err(e)) => return Err(format!("qm declined: {e}")),
                    None => return Err("qm declined: unknown list decision".into()),
                };
                Ok(self.list_query(incumbent, d, p, elems, terms))
            }
            _ => Err(format!("qm declined: decision {d} is not a binary, set or list decision")),
        }
    }

    fn probe_query(&self, incumbent: &State, d: usize, window: Window) -> Result<QmQuery, String> {
        let model = self.model;
        let mut base = incumbent.clone();
        let elems = match (&window, &mut base.assignments[d]) {
            (Window::Bits(idx), Assignment::Binary(x)) => {
                idx.iter().for_each(|&i| x[i] = 0);
                idx.clone()
            }
            (Window::Members(elems), Assignment::Set(s)) => {
                s.retain(|e| !elems.contains(e));
                elems.clone()
            }
            _ => unreachable!("window kind matches the decision"),
        };
        let w = elems.len();
        let probe = QmQuery { qubo: Qubo::new(w), decision: d, window, base, warnings: Vec::new() };
        let eval = |on: &[usize]| -> Result<Evaluation, String> {
            let mut bits = vec![0u8; w];
            on.iter().for_each(|&k| bits[k] = 1);
            let state = probe.decode(&bits).expect("bit windows always decode");
            model.evaluate_unchecked(&state).map_err(|e| format!("qm probe failed: {e}"))
        };
        let e0 = eval(&[])?;
        let e1: Vec<Evaluation> = (0..w).map(|k| eval(&[k])).collect::<Result<_, _>>()?;
        let mut e2 = HashMap::new();
        for k in 0..w {
            for l in k + 1..w {
                e2.insert((k, l), eval(&[k, l])?);
            }
        }

        // quadratic form of any per-evaluation quantity, from the probes
        let quad = |f: &dyn Fn(&Evaluation) -> f64, q: &mut Qubo, scale: f64| {
            let f0 = f(&e0);
            q.add_offset(scale * f0);
            for k in 0..w {
                let h = f(&e1[k]) - f0;
                if h != 0.0 {
                    q.add_linear(k, scale * h);
                }
                for l in k + 1..w {
                    let c = f(&e2[&(k, l)]) - f(&e1[k]) - f(&e1[l]) + f0;
                    if c != 0.0 {
                        q.add(k, l, scale * c);
                    }
                }
            }
        };

        // plan constraint encodings before sizing the QUBO
        enum Plan {
            Violation(usize),
            Linear { m0: f64, a: Vec<f64>, slack: Vec<u64> },
        }
        let mut plans = Vec::new();
        let mut n_slack = 0;
        for (c, &root) in model.constraints().iter().enumerate() {
            let is_eq = matches!(model.node(root).kind(), NodeKind::Op(Op::Eq));
            match e0.margins[c] {
                Some(m0) => {
                    let a: Vec<f64> = e1.iter().map(|e| e.margins[c].unwrap_or(m0) - m0).collect();
                    let reach = -(m0 + a.iter().map(|&x| x.min(0.0)).sum::<f64>());
                    let slack = if is_eq || reach <= 0.0 {
                        Vec::new()
                    } else if reach <= SLACK_CAP {
                        slack_coefficients(reach.ceil() as u64)
                    } else {
                        plans.push(Plan::Violation(c));
                        continue;
                    };
                    n_slack += slack.len();
                    plans.push(Plan::Linear { m0, a, slack });
                }
                None => plans.push(Plan::Violation(c)),
            }
        }

        let mut qubo = Qubo::new(w + n_slack);
        quad(&|e| e.objective, &mut qubo, 1.0);
        let objective_terms: Vec<f64> = qubo.terms().values().copied().collect();
        let penalty = auto_penalty(objective_terms);
        let mut next_slack = w;
        for plan in plans {
            match plan {
                Plan::Violation(c) => quad(&|e| e.violations[c], &mut qubo, penalty),
                Plan::Linear { m0, a, slack } => {
                    let mut vars: Vec<(usize, f64)> = a.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect();
                    for &s in &slack {
                        vars.push((next_slack, s as f64));
                        next_slack += 1;
                    }
                    // margin m0 + sum a x + s should be zero
                    qubo.add_squared_linear(&vars, -m0, penalty);
                }
            }
        }
        Ok(QmQuery { qubo, ..probe })
    }

    fn list_query(&self, incumbent: &State, d: usize, list: &[usize], positions: &[usize], terms: &[Term]) -> QmQuery {
        let model = self.model;
        let w = positions.len();
        let elements: Vec<usize> = positions.iter().map(|&p| list[p]).collect();
        let slot: HashMap<usize, usize> = positions.iter().enumerate().map(|(b, &p)| (p, b)).collect();
        let var = |a: usize, b: usize| a * w + b;
        let mut qubo = Qubo::new(w * w);

        let lookup = |table: NodeId, coords: &[usize]| -> f64 {
            let NodeKind::Constant(arr) = model.node(table).kind() else { unreachable!("tables are constants") };
            let offset = match *arr.shape() {
                [_] => coords[0],
                [_, cols] => coords[0] * cols + coords[1],
                _ => 0,
            };
            arr.data()[offset]
        };

        for t in terms {
            let Some(table) = t.table else {
                qubo.add_offset(t.scale);
                continue;
            };
            // window slots touched by this term, in index order, deduplicated
            let mut slots: Vec<usize> = Vec::new();
            for ix in &t.idx {
                if let Idx::Pos(p) = ix {
                    if let Some(&b) = slot.get(p) {
                        if !slots.contains(&b) {
                            slots.push(b);
                        }
                    }
                }
            }
            let coords_for = |assign: &dyn Fn(usize) -> Option<usize>| -> Vec<usize> {
                t.idx
                    .iter()
                    .map(|ix| match *ix {
                        Idx::Fixed(c) => c,
                        Idx::Pos(p) => slot.get(&p).and_then(|&b| assign(b)).unwrap_or(list[p]),
                    })
                    .collect()
            };
            match slots.as_slice() {
                [] => qubo.add_offset(t.scale * lookup(table, &coords_for(&|_| None))),
                &[b] => {
                    for a in 0..w {
                        let v = t.scale * lookup(table, &coords_for(&|_| Some(elements[a])));
                        if v != 0.0 {
                            qubo.add_linear(var(a, b), v);
                        }
                    }
                }
                &[b1, b2] => {
                    for a1 in 0..w {
                        for a2 in 0..w {
                            if a1 == a2 {
                                continue;
                            }
                            let pick = |b: usize| Some(if b == b1 { elements[a1] } else { elements[a2] });
                            let v = t.scale * lookup(table, &coords_for(&pick));
                            if v != 0.0 {
                                qubo.add(var(a1, b1), var(a2, b2), v);
                            }
                        }
                    }
                }
                _ => unreachable!("tables have rank <= 2"),
            }
        }

        let penalty = auto_penalty(qubo.terms().values().copied());
        for a in 0..w {
            let row: Vec<(usize, f64)> = (0..w).map(|b| (var(a, b), 1.0)).collect();
            qubo.add_squared_linear(&row, 1.0, penalty);
        }
        for b in 0..w {
            let col: Vec<(usize, f64)> = (0..w).map(|a| (var(a, b), 1.0)).collect();
            qubo.add_squared_linear(&col, 1.0, penalty);
        }
        QmQuery {
            qubo,
            decision: d,
            window: Window::Positions { positions: positions.to_vec(), elements },
            base: incumbent.clone(),
            warnings: Vec::new(),
        }
    }
}

/// Convenience wrapper around [`QmEncoder::query`].
pub fn qm_query(model: &Model, incumbent: &State, window: usize, rng: &mut impl rand::Rng) -> Result<QmQuery, String> {
    QmEncoder::new(model).query(incumbent, window, rng)
}

fn extract_list_objective(model: &Model, d: usize, n: usize) -> Result<Vec<Term>, String> {
    let root = model.objective().ok_or("model has no objective")?;
    let mut memo = HashMap::new();
    match extract(model, d, n, root, &mut memo)? {
        Val::Sym { scalar: true, mut atoms } => Ok(atoms.pop().unwrap_or_default()),
        Val::Const(id) => Ok(const_atoms(model, id)?.pop().unwrap_or_default()),
        _ => Err("objective is not a scalar sum of table lookups".into()),
    }
}

fn const_atoms(model: &Model, id: NodeId) -> Result<Vec<Vec<Term>>, String> {
    let NodeKind::Constant(arr) = model.node(id).kind() else { unreachable!() };
    if arr.shape().len() > 1 {
        return Err("matrix constant used as a value".into());
    }
    Ok(arr.data().iter().map(|&v| vec![Term { table: None, idx: Vec::new(), scale: v }]).collect())
}

fn as_index(v: f64, len: usize) -> Result<usize, String> {
    if v < 0.0 || v.fract() != 0.0 || v >= len as f64 {
        return Err(format!("constant index {v} invalid for length {len}"));
    }
    Ok(v as usize)
}

fn extract(model: &Model, d: usize, n: usize, id: NodeId, memo: &mut HashMap<NodeId, Val>) -> Result<Val, String> {
    if let Some(v) = memo.get(&id) {
        return Ok(v.clone());
    }
    let node = model.node(id);
    let ops = node.operands();
    let val = match node.kind() {
        NodeKind::Constant(_) => Val::Const(id),
        NodeKind::Decision { decision, part: None } if decision.0 == d => Val::View { scalar: false, pos: (0..n).collect() },
        NodeKind::Decision { .. } => return Err("objective depends on another decision".into()),
        NodeKind::Op(op) => {
            let args: Vec<Val> = ops.iter().map(|&o| extract(model, d, n, o, memo)).collect::<Result<_, _>>()?;
            match (op, args.as_slice()) {
                (Op::Slice { start, stop }, [Val::View { scalar: false, pos }]) => {
                    let (a, b) = resolve_slice(*start, *stop, pos.len());
                    Val::View { scalar: false, pos: pos[a..b].to_vec() }
                }
                (Op::Index, [Val::View { scalar: false, pos }, Val::Const(ix)]) => {
                    let NodeKind::Constant(arr) = model.node(*ix).kind() else { unreachable!() };
                    let picked =
                        arr.data().iter().map(|&v| as_index(v, pos.len()).map(|i| pos[i])).collect::<Result<Vec<_>, _>>()?;
                    Val::View { scalar: arr.shape().is_empty(), pos: picked }
                }
                (Op::Index, [Val::Const(table), indexers @ ..]) => index_table(model, *table, indexers)?,
                (Op::Add | Op::Sub | Op::Mul, [a, b]) => combine(model, op, a, b)?,
                (Op::Neg, [a]) => {
                    let (scalar, mut atoms) = sym(model, a)?;
                    atoms.iter_mut().flatten().for_each(|t| t.scale = -t.scale);
                    Val::Sym { scalar, atoms }
                }
                (Op::Sum, [a]) => {
                    let (_, atoms) = sym(model, a)?;
                    Val::Sym { scalar: true, atoms: vec![atoms.into_iter().flatten().collect()] }
                }
                (op, _) => return Err(format!("unsupported {op:?} in list objective")),
            }
        }
    };
    memo.insert(id, val.clone());
    Ok(val)
}

fn sym(model: &Model, v: &Val) -> Result<(bool, Vec<Vec<Term>>), String> {
    match v {
        Val::Sym { scalar, atoms } => Ok((*scalar, atoms.clone())),
        Val::Const(id) => Ok((model.node(*id).shape().is_scalar(), const_atoms(model, *id)?)),
        Val::View { .. } => Err("raw list positions used as values".into()),
    }
}

fn broadcast_len(a: (bool, usize), b: (bool, usize)) -> Result<usize, String> {
    match (a, b) {
        ((true, _), (_, m)) => Ok(m),
        ((_, m), (true, _)) => Ok(m),
        ((_, x), (_, y)) if x == y => Ok(x),
        _ => Err("length mismatch".into()),
    }
}

fn combine(model: &Model, op: &Op, a: &Val, b: &Val) -> Result<Val, String> {
    let (sa, xa) = sym(model, a)?;
    let (sb, xb) = sym(model, b)?;
    let len = broadcast_len((sa, xa.len()), (sb, xb.len()))?;
    let at = |x: &Vec<Vec<Term>>, scalar: bool, k: usize| -> Vec<Term> { x[if scalar { 0 } else { k }].clone() };
    let is_const = |atom: &[Term]| atom.iter().all(|t| t.table.is_none());
    let value = |atom: &[Term]| atom.iter().map(|t| t.scale).sum::<f64>();
    let mut atoms = Vec::with_capacity(len);
    for k in 0..len {
        let (p, q) = (at(&xa, sa, k), at(&xb, sb, k));
        let atom = match op {
            Op::Add => p.into_iter().chain(q).collect(),
            Op::Sub => p.into_iter().chain(q.into_iter().map(|t| Term { scale: -t.scale, ..t })).collect(),
            Op::Mul if is_const(&q) => {
                let c = value(&q);
                p.into_iter().map(|t| Term { scale: t.scale * c, ..t }).collect()
            }
            Op::Mul if is_const(&p) => {
                let c = value(&p);
                q.into_iter().map(|t| Term { scale: t.scale * c, ..t }).collect()
            }
            _ => return Err("product of two list-dependent terms".into()),
        };
        atoms.push(atom);
    }
    Ok(Val::Sym { scalar: sa && sb, atoms })
}

fn index_table(model: &Model, table: NodeId, indexers: &[Val]) -> Result<Val, String> {
    let NodeKind::Constant(arr) = model.node(table).kind() else { unreachable!() };
    let dims = arr.shape().to_vec();
    let mut cols: Vec<(bool, Vec<Idx>)> = Vec::new();
    for (axis, ix) in indexers.iter().enumerate() {
        match ix {
            Val::View { scalar, pos } => cols.push((*scalar, pos.iter().map(|&p| Idx::Pos(p)).collect())),
            Val::Const(c) => {
                let NodeKind::Constant(a) = model.node(*c).kind() else { unreachable!() };
                let v = a.data().iter().map(|&x| as_index(x, dims[axis]).map(Idx::Fixed)).collect::<Result<_, _>>()?;
                cols.push((a.shape().is_empty(), v));
            }
            Val::Sym { .. } => return Err("computed index into a table".into()),
        }
    }
    let scalar = cols.iter().all(|c| c.0);
    let len = cols.iter().filter(|c| !c.0).map(|c| c.1.len()).max().unwrap_or(1);
    if cols.iter().any(|c| !c.0 && c.1.len() != len) {
        return Err("indexer length mismatch".into());
    }
    let atoms = (0..len)
        .map(|k| {
            let idx = cols.iter().map(|(s, v)| v[if *s { 0 } else { k }].clone()).collect();
            vec![Term { table: Some(table), idx, scale: 1.0 }]
        })
        .collect();
    Ok(Val::Sym { scalar, atoms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_kp_model, build_mcp_model, build_tsp_model, generate_random_maxcut, KpInstance, TspInstance};
    use crate::qubo::{brute_force, for_each_bitstring, mcp_to_qubo, tsp_to_qubo, PenaltyConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tsp(n: usize, seed: u64) -> TspInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0))).collect();
        TspInstance::from_coords("t", &pts).unwrap()
    }

    #[test]
    fn whole_graph_window_equals_direct_encoding() {
        let g = generate_random_maxcut(10, 0.8, 1, 10, 3).unwrap();
        let model = build_mcp_model(&g);
        let inc = State::new(vec![Assignment::Binary(vec![1, 0, 1, 1, 0, 0, 1, 0, 1, 0])]);
        let q = QmEncoder::new(&model).query_window(&inc, 0, &(0..10).collect::<Vec<_>>()).unwrap();
        assert_eq!(q.qubo, mcp_to_qubo(&g).qubo);
    }

    #[test]
    fn oversized_window_is_clamped_with_warning() {
        let g = generate_random_maxcut(10, 0.5, 1, 3, 1).unwrap();
        let model = build_mcp_model(&g);
        let inc = State::new(vec![Assignment::Binary(vec![0; 10])]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = qm_query(&model, &inc, 16, &mut rng).unwrap();
        assert_eq!(q.window_len(), 10);
        assert_eq!(q.warnings.len(), 1);
        assert_eq!(q.qubo, mcp_to_qubo(&g).qubo);
    }

    #[test]
    fn whole_tour_window_equals_direct_encoding() {
        let inst = random_tsp(5, 2);
        let model = build_tsp_model(&inst);
        let inc = State::new(vec![Assignment::List((0..5).collect())]);
        let q = QmEncoder::new(&model).query_window(&inc, 0, &(0..5).collect::<Vec<_>>()).unwrap();
        assert_eq!(q.qubo, tsp_to_qubo(&inst, PenaltyConfig::Auto).unwrap().qubo);
    }

    #[test]
    fn single_position_window() {
        let inst = random_tsp(6, 4);
        let model = build_tsp_model(&inst);
        let inc = State::new(vec![Assignment::List(vec![3, 1, 0, 5, 2, 4])]);
        let q = QmEncoder::new(&model).query_window(&inc, 0, &[2]).unwrap();
        assert_eq!(q.qubo.n(), 1);
        let (e, bits) = brute_force(&q.qubo).unwrap();
        assert_eq!(bits, vec![1]);
        assert_eq!(q.decode(&bits).unwrap(), inc);
        assert_eq!(e, model.evaluate(&inc).unwrap().objective);
    }

    #[test]
    fn list_window_energy_matches_model() {
        let inst = random_tsp(9, 6);
        let model = build_tsp_model(&inst);
        let inc = State::new(vec![Assignment::List(vec![4, 8, 0, 2, 7, 1, 6, 3, 5])]);
        // window wraps around the end of the tour
        let positions = [7, 8, 0, 1];
        let q = QmEncoder::new(&model).query_window(&inc, 0, &positions).unwrap();
        let mut valid = 0;
        for_each_bitstring(&q.qubo, |bits, e| {
            if let Some(s) = q.decode(bits) {
                valid += 1;
                assert!(model.validate_state(&s).is_empty());
                assert_eq!(e, model.evaluate(&s).unwrap().objective);
            }
        })
        .unwrap();
        assert_eq!(valid, 24);
        // the ground state is the best re-placement of the window
        let (e, bits) = brute_force(&q.qubo).unwrap();
        assert!(q.decode(&bits).is_some());
        assert!(e <= model.evaluate(&inc).unwrap().objective);
    }

    #[test]
    fn set_window_respects_capacity() {
        let inst = KpInstance::new("k", vec![10, 7, 4, 9, 3, 8], vec![5, 4, 2, 6, 1, 5], 12).unwrap();
        let model = build_kp_model(&inst);
        let inc = State::new(vec![Assignment::Set(vec![0, 2])]);
        let q = QmEncoder::new(&model).query_window(&inc, 0, &[0, 1, 2, 3, 4, 5]).unwrap();
        let (e, bits) = brute_force(&q.qubo).unwrap();
        let s = q.decode(&bits).unwrap();
        let ev = model.evaluate(&s).unwrap();
        assert!(ev.feasible);
        assert_eq!(ev.objective, -(crate::problems::exact_kp(&inst).unwrap().0 as f64));
        assert_eq!(e, ev.objective);
    }

    #[test]
    fn unsupported_objectives_decline() {
        let mut m = Model::new();
        let x = m.add_decision(DecisionSpec::List(4)).unwrap();
        let a = m.abs(x.node).unwrap();
        let s = m.sum(a).unwrap();
        m.minimize(s).unwrap();
        m.freeze();
        let inc = State::new(vec![Assignment::List(vec![0, 1, 2, 3])]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = qm_query(&m, &inc, 2, &mut rng).unwrap_err();
        assert!(err.starts_with("qm declined"), "{err}");
    }
}
