use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::{resolve_slice, Assignment, DecisionSpec, Model, ModelError, NodeKind, Op, Result, State};

/// Result of evaluating a model at a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub constraint_results: Vec<bool>,
    /// 0 when satisfied, otherwise the size of the breach (summed over elements).
    pub violations: Vec<f64>,
    /// Signed `lhs - rhs` of scalar comparisons, oriented so that `<= 0`
    /// (`== 0` for equalities) means satisfied. `None` for elementwise ones.
    pub margins: Vec<Option<f64>>,
    pub feasible: bool,
}

impl Evaluation {
    pub fn total_violation(&self) -> f64 {
        self.violations.iter().fold(0.0, |a, v| a + v)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
struct RtShape {
    rank: usize,
    dims: [usize; 2],
}

impl RtShape {
    const SCALAR: RtShape = RtShape { rank: 0, dims: [1, 1] };

    fn vector(n: usize) -> Self {
        RtShape { rank: 1, dims: [n, 1] }
    }

    fn from_slice(shape: &[usize]) -> Self {
        match *shape {
            [] => Self::SCALAR,
            [n] => Self::vector(n),
            [r, c] => RtShape { rank: 2, dims: [r, c] },
            _ => unreachable!("arrays have rank <= 2"),
        }
    }
}

struct Value<'a> {
    data: Cow<'a, [f64]>,
    shape: RtShape,
}

impl<'a> Value<'a> {
    fn owned(data: Vec<f64>, shape: RtShape) -> Self {
        Value { data: Cow::Owned(data), shape }
    }

    fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::owned(data, RtShape::vector(n))
    }
}

impl Model {
    /// Evaluates the objective and every constraint at `state`.
    ///
    /// The state is structurally validated first; a broken invariant is
    /// reported as [`ModelError::State`].
    pub fn evaluate(&self, state: &State) -> Result<Evaluation> {
        let problems = self.validate_state(state);
        if !problems.is_empty() {
            let msg: Vec<String> = problems.iter().map(ToString::to_string).collect();
            return Err(ModelError::State(msg.join("; ")));
        }
        self.evaluate_unchecked(state)
    }

    /// Same as [`Model::evaluate`] without structural validation. Callers
    /// must only pass states produced by validity-preserving moves.
    pub(crate) fn evaluate_unchecked(&self, state: &State) -> Result<Evaluation> {
        let computed;
        let live: &[bool] = if self.frozen {
            &self.live
        } else {
            computed = self.reachable();
            &computed
        };
        let mut values: Vec<Option<Value<'_>>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            if !live[i] {
                values.push(None);
                continue;
            }
            let get = |id: super::NodeId| values[id.0].as_ref().expect("operand evaluated before use");
            let value = match &node.kind {
                NodeKind::Constant(arr) => Value {
                    data: Cow::Borrowed(arr.data()),
                    shape: RtShape::from_slice(arr.shape()),
                },
                NodeKind::Decision { decision, part } => {
                    decision_value(&self.decisions[decision.0], &state.assignments[decision.0], *part)
                }
                NodeKind::Op(op) => {
                    let args: Vec<&Value<'_>> = node.operands.iter().map(|&id| get(id)).collect();
                    apply(op, &args)?
                }
            };
            values.push(Some(value));
        }

        let objective = match self.objective {
            Some(id) => values[id.0].as_ref().map_or(0.0, |v| v.data[0]),
            None => 0.0,
        };
        let n = self.constraints.len();
        let mut violations = Vec::with_capacity(n);
        let mut margins = Vec::with_capacity(n);
        for &c in &self.constraints {
            let node = &self.nodes[c.0];
            let a = values[node.operands[0].0].as_ref().expect("live");
            let b = values[node.operands[1].0].as_ref().expect("live");
            let NodeKind::Op(op) = &node.kind else { unreachable!("constraint roots are comparisons") };
            let (viol, margin) = comparison_violation(op, a, b)?;
            violations.push(viol);
            margins.push(margin);
        }
        let constraint_results: Vec<bool> = violations.iter().map(|&v| v == 0.0).collect();
        let feasible = constraint_results.iter().all(|&ok| ok);
        Ok(Evaluation { objective, constraint_results, violations, margins, feasible })
    }
}

fn decision_value<'a>(spec: &DecisionSpec, value: &Assignment, part: Option<usize>) -> Value<'a> {
    let as_f = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    match (value, part) {
        (Assignment::List(p), _) | (Assignment::Set(p), _) => Value::vector(as_f(p)),
        (Assignment::Binary(b), _) => Value::vector(b.iter().map(|&x| x as f64).collect()),
        (Assignment::Integer(v), _) => Value::vector(v.iter().map(|&x| x as f64).collect()),
        (Assignment::DisjointLists(parts), Some(k)) => Value::vector(as_f(&parts[k])),
        (Assignment::DisjointBitSets(parts), Some(k)) => {
            let mut bits = vec![0.0; spec.size()];
            for &e in &parts[k] {
                bits[e] = 1.0;
            }
            Value::vector(bits)
        }
        (Assignment::DisjointLists(parts), None) | (Assignment::DisjointBitSets(parts), None) => {
            let mut labels = vec![0.0; spec.size()];
            for (k, part) in parts.iter().enumerate() {
                for &e in part {
                    labels[e] = k as f64;
                }
            }
            Value::vector(labels)
        }
    }
}

fn len_mismatch(a: RtShape, b: RtShape) -> ModelError {
    ModelError::Shape(format!(
        "runtime operand lengths differ: {:?} vs {:?}",
        &a.dims[..a.rank],
        &b.dims[..b.rank]
    ))
}

/// Elementwise binary op with scalar broadcasting.
fn zip_with<'a>(a: &Value<'_>, b: &Value<'_>, f: impl Fn(f64, f64) -> f64) -> Result<Value<'a>> {
    if a.shape.rank == 0 {
        let x = a.data[0];
        return Ok(Value::owned(b.data.iter().map(|&y| f(x, y)).collect(), b.shape));
    }
    if b.shape.rank == 0 {
        let y = b.data[0];
        return Ok(Value::owned(a.data.iter().map(|&x| f(x, y)).collect(), a.shape));
    }
    if a.shape != b.shape {
        return Err(len_mismatch(a.shape, b.shape));
    }
    Ok(Value::owned(a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect(), a.shape))
}

fn apply<'a>(op: &Op, args: &[&Value<'_>]) -> Result<Value<'a>> {
    Ok(match op {
        Op::Add => zip_with(args[0], args[1], |x, y| x + y)?,
        Op::Sub => zip_with(args[0], args[1], |x, y| x - y)?,
        Op::Mul => zip_with(args[0], args[1], |x, y| x * y)?,
        Op::Le => zip_with(args[0], args[1], |x, y| f64::from(u8::from(x <= y)))?,
        Op::Ge => zip_with(args[0], args[1], |x, y| f64::from(u8::from(x >= y)))?,
        Op::Eq => zip_with(args[0], args[1], |x, y| f64::from(u8::from(x == y)))?,
        Op::Neg => Value::owned(args[0].data.iter().map(|x| -x).collect(), args[0].shape),
        Op::Abs => Value::owned(args[0].data.iter().map(|x| x.abs()).collect(), args[0].shape),
        Op::Sum => Value::owned(vec![args[0].data.iter().sum()], RtShape::SCALAR),
        Op::Slice { start, stop } => {
            let base = args[0];
            let (a, b) = resolve_slice(*start, *stop, base.data.len());
            Value::vector(base.data[a..b].to_vec())
        }
        Op::Index => gather(args[0], &args[1..])?,
    })
}

fn gather<'a>(base: &Value<'_>, indexers: &[&Value<'_>]) -> Result<Value<'a>> {
    let mut len: Option<usize> = None;
    for ix in indexers {
        if ix.shape.rank == 1 {
            let n = ix.data.len();
            match len {
                Some(m) if m != n => return Err(len_mismatch(RtShape::vector(m), ix.shape)),
                _ => len = Some(n),
            }
        }
    }
    let count = len.unwrap_or(1);
    let rank = base.shape.rank;
    let mut strides = [1usize; 2];
    if rank == 2 {
        strides[0] = base.shape.dims[1];
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut offset = 0usize;
        for (axis, ix) in indexers.iter().enumerate() {
            let raw = if ix.shape.rank == 0 { ix.data[0] } else { ix.data[k] };
            let dim = base.shape.dims[axis];
            if raw < 0.0 || raw >= dim as f64 || raw.fract() != 0.0 {
                return Err(ModelError::Eval(format!("index {raw} invalid for axis of length {dim}")));
            }
            offset += raw as usize * strides[axis];
        }
        out.push(base.data[offset]);
    }
    Ok(match len {
        Some(_) => Value::vector(out),
        None => Value::owned(out, RtShape::SCALAR),
    })
}

fn comparison_violation(op: &Op, a: &Value<'_>, b: &Value<'_>) -> Result<(f64, Option<f64>)> {
    let diff = zip_with(a, b, |x, y| x - y)?;
    let viol = match op {
        Op::Le => diff.data.iter().map(|d| d.max(0.0)).sum(),
        Op::Ge => diff.data.iter().map(|d| (-d).max(0.0)).sum(),
        _ => diff.data.iter().map(|d| d.abs()).sum(),
    };
    let margin = (diff.shape.rank == 0).then(|| match op {
        Op::Ge => -diff.data[0],
        _ => diff.data[0],
    });
    Ok((viol, margin))
}
