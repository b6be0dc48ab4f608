use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::{DecisionSpec, Model};

/// Value of a single decision.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    List(Vec<usize>),
    /// Strictly increasing element indices.
    Set(Vec<usize>),
    DisjointLists(Vec<Vec<usize>>),
    /// Each set strictly increasing.
    DisjointBitSets(Vec<Vec<usize>>),
    Binary(Vec<u8>),
    Integer(Vec<i64>),
}

/// A concrete assignment to every decision of a model, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub assignments: Vec<Assignment>,
}

impl State {
    pub fn new(assignments: Vec<Assignment>) -> Self {
        State { assignments }
    }

    /// Stable within a build; used as the final tie-breaker when ordering samples.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }
}

/// A broken structural invariant of a state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateViolation {
    /// Offending decision, or `None` when the assignment count is wrong.
    pub decision: Option<usize>,
    pub message: String,
}

impl fmt::Display for StateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decision {
            Some(d) => write!(f, "decision {d}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl Model {
    /// Lists every structural problem of `state`; empty iff it is valid.
    pub fn validate_state(&self, state: &State) -> Vec<StateViolation> {
        let mut out = Vec::new();
        if state.assignments.len() != self.decisions.len() {
            out.push(StateViolation {
                decision: None,
                message: format!(
                    "expected {} assignments, got {}",
                    self.decisions.len(),
                    state.assignments.len()
                ),
            });
            return out;
        }
        for (d, (spec, value)) in self.decisions.iter().zip(&state.assignments).enumerate() {
            let mut push = |message: String| {
                out.push(StateViolation { decision: Some(d), message });
            };
            check_assignment(spec, value, &mut push);
        }
        out
    }
}

fn check_assignment(spec: &DecisionSpec, value: &Assignment, push: &mut impl FnMut(String)) {
    match (*spec, value) {
        (DecisionSpec::List(n), Assignment::List(perm)) => {
            if perm.len() != n {
                push(format!("permutation length {} != {n}", perm.len()));
            }
            check_cover(n, perm.iter().copied(), push);
        }
        (DecisionSpec::Set(n), Assignment::Set(items)) => check_sorted_subset(n, items, push),
        (DecisionSpec::DisjointLists { n_vars, n_lists }, Assignment::DisjointLists(lists)) => {
            if lists.len() != n_lists {
                push(format!("expected {n_lists} lists, got {}", lists.len()));
            }
            check_cover(n_vars, lists.iter().flatten().copied(), push);
        }
        (DecisionSpec::DisjointBitSets { n_vars, n_sets }, Assignment::DisjointBitSets(sets)) => {
            if sets.len() != n_sets {
                push(format!("expected {n_sets} sets, got {}", sets.len()));
            }
            for s in sets {
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    push("set is not strictly increasing".into());
                }
            }
            check_cover(n_vars, sets.iter().flatten().copied(), push);
        }
        (DecisionSpec::BinaryArray(n), Assignment::Binary(bits)) => {
            if bits.len() != n {
                push(format!("bit array length {} != {n}", bits.len()));
            }
            if let Some(b) = bits.iter().find(|&&b| b > 1) {
                push(format!("non-binary value {b}"));
            }
        }
        (DecisionSpec::IntegerArray { n, lo, hi }, Assignment::Integer(vals)) => {
            if vals.len() != n {
                push(format!("integer array length {} != {n}", vals.len()));
            }
            if let Some(v) = vals.iter().find(|&&v| v < lo || v > hi) {
                push(format!("value {v} outside [{lo}, {hi}]"));
            }
        }
        (spec, value) => push(format!("assignment {value:?} does not match {spec:?}")),
    }
}

/// Each element of `0..n` exactly once.
fn check_cover(n: usize, elems: impl Iterator<Item = usize>, push: &mut impl FnMut(String)) {
    let mut seen = vec![false; n];
    for e in elems {
        if e >= n {
            push(format!("index {e} out of range 0..{n}"));
        } else if seen[e] {
            push(format!("duplicate index {e}"));
        } else {
            seen[e] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        push(format!("not exhaustive: missing element {missing}"));
    }
}

fn check_sorted_subset(n: usize, items: &[usize], push: &mut impl FnMut(String)) {
    if let Some(&e) = items.iter().find(|&&e| e >= n) {
        push(format!("index {e} out of range 0..{n}"));
    }
    if items.windows(2).any(|w| w[0] >= w[1]) {
        push("set is not strictly increasing".into());
    }
}
