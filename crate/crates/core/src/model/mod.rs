//! Expression-graph models over permutation, subset, partition and array
//! decision variables.
//!
//! A [`Model`] is an append-only DAG. Decision variables and constants are
//! leaves; arithmetic, gathering, slicing and comparisons are interior
//! nodes. Constraint roots must be comparisons and there is at most one
//! objective, which is always minimized (maximization is expressed by
//! negating the objective expression).
//!
//! ```
//! use hybridopt::model::{Array, DecisionSpec, Model, State, Assignment};
//!
//! let mut m = Model::new();
//! let items = m.add_decision(DecisionSpec::Set(3)).unwrap();
//! let weights = m.add_constant(Array::vector(vec![4.0, 5.0, 6.0])).unwrap();
//! let profits = m.add_constant(Array::vector(vec![3.0, 4.0, 5.0])).unwrap();
//! let cap = m.add_constant(Array::scalar(10.0)).unwrap();
//!
//! let w = m.index(weights, &[items.node]).unwrap();
//! let load = m.sum(w).unwrap();
//! let fits = m.le(load, cap).unwrap();
//! m.add_constraint(fits).unwrap();
//! let p = m.index(profits, &[items.node]).unwrap();
//! let total = m.sum(p).unwrap();
//! let neg = m.neg(total).unwrap();
//! m.minimize(neg).unwrap();
//! m.freeze();
//!
//! let state = State::new(vec![Assignment::Set(vec![0, 2])]);
//! let eval = m.evaluate(&state).unwrap();
//! assert_eq!(eval.objective, -8.0);
//! assert!(eval.feasible);
//! ```

mod array;
mod eval;
mod state;

pub use array::Array;
pub use eval::Evaluation;
pub use state::{Assignment, State, StateViolation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("state error: {0}")]
    State(String),
    #[error("evaluation error: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecisionId(pub usize);

/// Handle returned by [`Model::add_decision`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub id: DecisionId,
    pub node: NodeId,
}

/// The kinds of decision variable a model can declare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSpec {
    /// Ordered permutation of `0..n`.
    List(usize),
    /// Subset of `0..n`, possibly empty.
    Set(usize),
    /// `n_vars` elements split into `n_lists` ordered, disjoint, exhaustive lists.
    DisjointLists { n_vars: usize, n_lists: usize },
    /// `n_vars` elements split into `n_sets` unordered, disjoint, exhaustive sets.
    DisjointBitSets { n_vars: usize, n_sets: usize },
    BinaryArray(usize),
    IntegerArray { n: usize, lo: i64, hi: i64 },
}

impl DecisionSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ModelError::Domain(msg));
        match *self {
            DecisionSpec::List(n) | DecisionSpec::Set(n) | DecisionSpec::BinaryArray(n) => {
                if n == 0 {
                    return fail(format!("{self:?}: size must be at least 1"));
                }
            }
            DecisionSpec::DisjointLists { n_vars, n_lists: parts }
            | DecisionSpec::DisjointBitSets { n_vars, n_sets: parts } => {
                if n_vars == 0 {
                    return fail(format!("{self:?}: n_vars must be at least 1"));
                }
                if parts == 0 || parts > n_vars {
                    return fail(format!("{self:?}: need 1 <= parts <= n_vars"));
                }
            }
            DecisionSpec::IntegerArray { n, lo, hi } => {
                if n == 0 {
                    return fail(format!("{self:?}: size must be at least 1"));
                }
                if lo > hi {
                    return fail(format!("{self:?}: lower bound exceeds upper bound"));
                }
            }
        }
        Ok(())
    }

    /// Number of ground elements the decision ranges over.
    pub fn size(&self) -> usize {
        match *self {
            DecisionSpec::List(n) | DecisionSpec::Set(n) | DecisionSpec::BinaryArray(n) => n,
            DecisionSpec::DisjointLists { n_vars, .. }
            | DecisionSpec::DisjointBitSets { n_vars, .. } => n_vars,
            DecisionSpec::IntegerArray { n, .. } => n,
        }
    }

    fn parts(&self) -> Option<usize> {
        match *self {
            DecisionSpec::DisjointLists { n_lists, .. } => Some(n_lists),
            DecisionSpec::DisjointBitSets { n_sets, .. } => Some(n_sets),
            _ => None,
        }
    }
}

/// One static dimension: known length, or a length only known per state.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dim {
    Fixed(usize),
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Shape(pub Vec<Dim>);

impl Shape {
    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn fixed(dims: &[usize]) -> Self {
        Shape(dims.iter().map(|&d| Dim::Fixed(d)).collect())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_dynamic(&self) -> bool {
        self.0.contains(&Dim::Dynamic)
    }
}

/// Operations accepted by [`Model::build_expr`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Op {
    /// `base[i_0, .., i_{r-1}]` gather; one integer indexer per base axis.
    Index,
    /// Python-style `base[start:stop]` on a rank-1 base.
    Slice {
        start: Option<isize>,
        stop: Option<isize>,
    },
    Add,
    Sub,
    Mul,
    Neg,
    Abs,
    /// Reduce all elements to a scalar; an empty operand sums to 0.
    Sum,
    Le,
    Ge,
    Eq,
}

impl Op {
    pub fn is_comparison(&self) -> bool {
        matches!(self, Op::Le | Op::Ge | Op::Eq)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Constant(Array),
    /// `part` selects one list/set of a disjoint decision; `None` is the whole decision.
    Decision {
        decision: DecisionId,
        part: Option<usize>,
    },
    Op(Op),
}

#[derive(Clone, Debug)]
pub struct ExprNode {
    kind: NodeKind,
    operands: Vec<NodeId>,
    shape: Shape,
    integral: bool,
    bounds: Option<(f64, f64)>,
}

impl ExprNode {
    pub fn kind(&self) -> &NodeKind {
        &self.kind
    }

    pub fn operands(&self) -> &[NodeId] {
        &self.operands
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// True when every value the node can take is an integer.
    pub fn is_integral(&self) -> bool {
        self.integral
    }

    /// Static inclusive value range, when known.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn is_comparison(&self) -> bool {
        matches!(&self.kind, NodeKind::Op(op) if op.is_comparison())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Model {
    nodes: Vec<ExprNode>,
    decisions: Vec<DecisionSpec>,
    decision_nodes: Vec<NodeId>,
    constraints: Vec<NodeId>,
    objective: Option<NodeId>,
    frozen: bool,
    live: Vec<bool>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[ExprNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &ExprNode {
        &self.nodes[id.0]
    }

    pub fn decisions(&self) -> &[DecisionSpec] {
        &self.decisions
    }

    /// The node created for each decision by [`Model::add_decision`].
    pub fn decision_node(&self, id: DecisionId) -> NodeId {
        self.decision_nodes[id.0]
    }

    pub fn constraints(&self) -> &[NodeId] {
        &self.constraints
    }

    pub fn objective(&self) -> Option<NodeId> {
        self.objective
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Total number of decision elements, used to size default time limits.
    pub fn problem_size(&self) -> usize {
        self.decisions.iter().map(|d| d.size()).sum()
    }

    /// Ends construction. Later mutations fail with [`ModelError::State`].
    pub fn freeze(&mut self) {
        if !self.frozen {
            self.live = self.reachable();
            self.frozen = true;
        }
    }

    fn ensure_mutable(&self) -> Result<()> {
        if self.frozen {
            Err(ModelError::State("model is frozen".into()))
        } else {
            Ok(())
        }
    }

    fn check_operand(&self, id: NodeId) -> Result<&ExprNode> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| ModelError::Domain(format!("unknown node {}", id.0)))
    }

    fn push(&mut self, node: ExprNode) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_decision(&mut self, spec: DecisionSpec) -> Result<Decision> {
        self.ensure_mutable()?;
        spec.validate()?;
        let id = DecisionId(self.decisions.len());
        self.decisions.push(spec);
        let n = spec.size();
        let (shape, bounds) = match spec {
            DecisionSpec::List(n) => (Shape::fixed(&[n]), (0.0, (n - 1) as f64)),
            DecisionSpec::Set(n) => (Shape(vec![Dim::Dynamic]), (0.0, (n - 1) as f64)),
            DecisionSpec::BinaryArray(n) => (Shape::fixed(&[n]), (0.0, 1.0)),
            DecisionSpec::IntegerArray { n, lo, hi } => (Shape::fixed(&[n]), (lo as f64, hi as f64)),
            DecisionSpec::DisjointLists { n_lists: k, .. }
            | DecisionSpec::DisjointBitSets { n_sets: k, .. } => {
                (Shape::fixed(&[n]), (0.0, (k - 1) as f64))
            }
        };
        let node = self.push(ExprNode {
            kind: NodeKind::Decision { decision: id, part: None },
            operands: Vec::new(),
            shape,
            integral: true,
            bounds: Some(bounds),
        });
        self.decision_nodes.push(node);
        Ok(Decision { id, node })
    }

    /// One list (ordered elements, dynamic length) or one set (bit vector
    /// over all elements) of a disjoint decision. The decision's own node
    /// evaluates to the part label of every element.
    pub fn decision_part(&mut self, decision: DecisionId, part: usize) -> Result<NodeId> {
        self.ensure_mutable()?;
        let spec = *self
            .decisions
            .get(decision.0)
            .ok_or_else(|| ModelError::Domain(format!("unknown decision {}", decision.0)))?;
        let parts = spec
            .parts()
            .ok_or_else(|| ModelError::Type(format!("{spec:?} has no parts")))?;
        if part >= parts {
            return Err(ModelError::Domain(format!("part {part} out of range for {spec:?}")));
        }
        let n = spec.size();
        let (shape, bounds) = match spec {
            DecisionSpec::DisjointLists { .. } => (Shape(vec![Dim::Dynamic]), (0.0, (n - 1) as f64)),
            _ => (Shape::fixed(&[n]), (0.0, 1.0)),
        };
        Ok(self.push(ExprNode {
            kind: NodeKind::Decision { decision, part: Some(part) },
            operands: Vec::new(),
            shape,
            integral: true,
            bounds: Some(bounds),
        }))
    }

    pub fn add_constant(&mut self, array: Array) -> Result<NodeId> {
        self.ensure_mutable()?;
        if let Some(bad) = array.data().iter().find(|v| !v.is_finite()) {
            return Err(ModelError::Domain(format!("constant contains non-finite value {bad}")));
        }
        let integral = array.data().iter().all(|v| v.fract() == 0.0);
        let bounds = array.data().iter().fold(None, |acc: Option<(f64, f64)>, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        });
        let shape = Shape::fixed(array.shape());
        Ok(self.push(ExprNode {
            kind: NodeKind::Constant(array),
            operands: Vec::new(),
            shape,
            integral,
            bounds,
        }))
    }

    /// Appends an interior node after checking operand shapes and types.
    pub fn build_expr(&mut self, op: Op, operands: &[NodeId]) -> Result<NodeId> {
        self.ensure_mutable()?;
        for &id in operands {
            self.check_operand(id)?;
        }
        let arity = |want: usize| -> Result<()> {
            if operands.len() == want {
                Ok(())
            } else {
                Err(ModelError::Type(format!(
                    "{op:?} expects {want} operand(s), got {}",
                    operands.len()
                )))
            }
        };
        let node = match &op {
            Op::Index => self.infer_index(operands)?,
            Op::Slice { .. } => {
                arity(1)?;
                let base = self.node(operands[0]);
                if base.shape.rank() != 1 {
                    return Err(ModelError::Shape(format!(
                        "slice needs a rank-1 operand, got rank {}",
                        base.shape.rank()
                    )));
                }
                let dim = match (base.shape.0[0], &op) {
                    (Dim::Fixed(n), Op::Slice { start, stop }) => {
                        let (a, b) = resolve_slice(*start, *stop, n);
                        Dim::Fixed(b - a)
                    }
                    _ => Dim::Dynamic,
                };
                ExprNode {
                    kind: NodeKind::Op(op.clone()),
                    operands: operands.to_vec(),
                    shape: Shape(vec![dim]),
                    integral: base.integral,
                    bounds: base.bounds,
                }
            }
            Op::Add | Op::Sub | Op::Mul | Op::Le | Op::Ge | Op::Eq => {
                arity(2)?;
                let (a, b) = (self.node(operands[0]), self.node(operands[1]));
                let shape = broadcast(&a.shape, &b.shape)?;
                let integral = op.is_comparison() || (a.integral && b.integral);
                let bounds = if op.is_comparison() {
                    Some((0.0, 1.0))
                } else {
                    combine_bounds(&op, a.bounds, b.bounds)
                };
                ExprNode {
                    kind: NodeKind::Op(op.clone()),
                    operands: operands.to_vec(),
                    shape,
                    integral,
                    bounds,
                }
            }
            Op::Neg | Op::Abs => {
                arity(1)?;
                let a = self.node(operands[0]);
                let bounds = a.bounds.map(|(lo, hi)| match op {
                    Op::Neg => (-hi, -lo),
                    _ if lo >= 0.0 => (lo, hi),
                    _ if hi <= 0.0 => (-hi, -lo),
                    _ => (0.0, hi.max(-lo)),
                });
                ExprNode {
                    kind: NodeKind::Op(op.clone()),
                    operands: operands.to_vec(),
                    shape: a.shape.clone(),
                    integral: a.integral,
                    bounds,
                }
            }
            Op::Sum => {
                arity(1)?;
                let a = self.node(operands[0]);
                ExprNode {
                    kind: NodeKind::Op(op.clone()),
                    operands: operands.to_vec(),
                    shape: Shape::scalar(),
                    integral: a.integral,
                    bounds: None,
                }
            }
        };
        Ok(self.push(node))
    }

    fn infer_index(&self, operands: &[NodeId]) -> Result<ExprNode> {
        let (&base_id, indexers) = operands
            .split_first()
            .ok_or_else(|| ModelError::Type("index needs a base operand".into()))?;
        let base = self.node(base_id);
        let rank = base.shape.rank();
        if rank == 0 {
            return Err(ModelError::Shape("cannot index a scalar".into()));
        }
        if indexers.len() != rank {
            return Err(ModelError::Shape(format!(
                "rank-{rank} base needs {rank} indexers, got {}",
                indexers.len()
            )));
        }
        let mut out: Option<Dim> = None;
        for (axis, &ix) in indexers.iter().enumerate() {
            let node = self.node(ix);
            if !node.integral {
                return Err(ModelError::Type(format!("indexer {} is not integer-valued", ix.0)));
            }
            if node.shape.rank() > 1 {
                return Err(ModelError::Shape(format!("indexer {} has rank > 1", ix.0)));
            }
            if let (Dim::Fixed(len), Some((lo, hi))) = (base.shape.0[axis], node.bounds) {
                if lo < 0.0 || hi >= len as f64 {
                    return Err(ModelError::Shape(format!(
                        "indexer {} range [{lo}, {hi}] exceeds axis {axis} of length {len}",
                        ix.0
                    )));
                }
            }
            if let Some(&d) = node.shape.0.first() {
                out = Some(match (out, d) {
                    (None, d) => d,
                    (Some(Dim::Fixed(a)), Dim::Fixed(b)) if a == b => Dim::Fixed(a),
                    (Some(Dim::Dynamic), Dim::Dynamic) => Dim::Dynamic,
                    (Some(a), b) => {
                        return Err(ModelError::Shape(format!(
                            "indexer lengths disagree: {a:?} vs {b:?}"
                        )))
                    }
                });
            }
        }
        Ok(ExprNode {
            kind: NodeKind::Op(Op::Index),
            operands: operands.to_vec(),
            shape: Shape(out.into_iter().collect()),
            integral: base.integral,
            bounds: base.bounds,
        })
    }

    pub fn index(&mut self, base: NodeId, indexers: &[NodeId]) -> Result<NodeId> {
        let mut ops = Vec::with_capacity(indexers.len() + 1);
        ops.push(base);
        ops.extend_from_slice(indexers);
        self.build_expr(Op::Index, &ops)
    }

    pub fn slice(&mut self, base: NodeId, start: Option<isize>, stop: Option<isize>) -> Result<NodeId> {
        self.build_expr(Op::Slice { start, stop }, &[base])
    }

    /// Scalar element `base[i]` of a fixed-length vector; negative `i` counts from the end.
    pub fn at(&mut self, base: NodeId, i: isize) -> Result<NodeId> {
        self.check_operand(base)?;
        let len = match self.node(base).shape.0.as_slice() {
            [Dim::Fixed(n)] => *n,
            _ => {
                return Err(ModelError::Shape(
                    "element access needs a fixed-length rank-1 operand".into(),
                ))
            }
        };
        let pos = if i < 0 { len as isize + i } else { i };
        if pos < 0 || pos >= len as isize {
            return Err(ModelError::Shape(format!("element {i} out of range for length {len}")));
        }
        let ix = self.add_constant(Array::scalar(pos as f64))?;
        self.index(base, &[ix])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Mul, &[a, b])
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Neg, &[a])
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Abs, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Sum, &[a])
    }

    pub fn le(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Le, &[a, b])
    }

    pub fn ge(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Ge, &[a, b])
    }

    pub fn eq(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.build_expr(Op::Eq, &[a, b])
    }

    /// Registers a constraint root. The same node may be added more than
    /// once; every copy must hold.
    pub fn add_constraint(&mut self, node: NodeId) -> Result<usize> {
        self.ensure_mutable()?;
        if !self.check_operand(node)?.is_comparison() {
            return Err(ModelError::Type(format!("node {} is not a comparison", node.0)));
        }
        self.constraints.push(node);
        Ok(self.constraints.len() - 1)
    }

    pub fn minimize(&mut self, node: NodeId) -> Result<()> {
        self.ensure_mutable()?;
        if self.objective.is_some() {
            return Err(ModelError::State("objective already set".into()));
        }
        let shape = &self.check_operand(node)?.shape;
        if !shape.is_scalar() {
            return Err(ModelError::Shape(format!("objective must be scalar, got {shape:?}")));
        }
        self.objective = Some(node);
        Ok(())
    }

    fn reachable(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = self.constraints.clone();
        stack.extend(self.objective);
        while let Some(id) = stack.pop() {
            if !live[id.0] {
                live[id.0] = true;
                stack.extend_from_slice(&self.nodes[id.0].operands);
            }
        }
        live
    }
}

/// Resolves Python-style slice bounds against a concrete length.
pub(crate) fn resolve_slice(start: Option<isize>, stop: Option<isize>, len: usize) -> (usize, usize) {
    let norm = |v: isize| -> usize {
        let v = if v < 0 { v + len as isize } else { v };
        v.clamp(0, len as isize) as usize
    };
    let a = start.map_or(0, norm);
    let b = stop.map_or(len, norm);
    (a, b.max(a))
}

fn broadcast(a: &Shape, b: &Shape) -> Result<Shape> {
    if a.is_scalar() {
        return Ok(b.clone());
    }
    if b.is_scalar() || a == b {
        return Ok(a.clone());
    }
    Err(ModelError::Shape(format!("incompatible operand shapes {:?} and {:?}", a.0, b.0)))
}

fn combine_bounds(op: &Op, a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Option<(f64, f64)> {
    let ((alo, ahi), (blo, bhi)) = (a?, b?);
    match op {
        Op::Add => Some((alo + blo, ahi + bhi)),
        Op::Sub => Some((alo - bhi, ahi - blo)),
        Op::Mul => {
            let c = [alo * blo, alo * bhi, ahi * blo, ahi * bhi];
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests;
