//! Random initial states and validity-preserving neighbourhood moves.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::prelude::*;

use crate::model::{Assignment, DecisionSpec, Model, State};

/// Uniformly random valid assignment for every decision.
pub fn initial_state(model: &Model, rng: &mut impl Rng) -> State {
    State::new(model.decisions().iter().map(|spec| initial_assignment(spec, rng)).collect())
}

fn balanced_parts(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut elems: Vec<usize> = (0..n).collect();
    elems.shuffle(rng);
    let mut parts = vec![Vec::new(); k];
    // rotate the starting part so no part is systematically larger
    let offset = rng.gen_range(0..k);
    for (i, e) in elems.into_iter().enumerate() {
        parts[(i + offset) % k].push(e);
    }
    parts
}

fn initial_assignment(spec: &DecisionSpec, rng: &mut impl Rng) -> Assignment {
    match *spec {
        DecisionSpec::List(n) => {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            Assignment::List(p)
        }
        DecisionSpec::Set(n) => Assignment::Set((0..n).filter(|_| rng.gen_bool(0.5)).collect()),
        DecisionSpec::DisjointLists { n_vars, n_lists } => Assignment::DisjointLists(balanced_parts(n_vars, n_lists, rng)),
        DecisionSpec::DisjointBitSets { n_vars, n_sets } => {
            let mut parts = balanced_parts(n_vars, n_sets, rng);
            parts.iter_mut().for_each(|p| p.sort_unstable());
            Assignment::DisjointBitSets(parts)
        }
        DecisionSpec::BinaryArray(n) => Assignment::Binary((0..n).map(|_| rng.gen_range(0..2)).collect()),
        DecisionSpec::IntegerArray { n, lo, hi } => Assignment::Integer((0..n).map(|_| rng.gen_range(lo..=hi)).collect()),
    }
}

/// A change to one decision. Positions refer to the state the move was
/// proposed for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Move {
    /// Exchange two list positions (adjacent when `j == i + 1`).
    ListSwap { d: usize, i: usize, j: usize },
    /// Reverse the list segment `i..=j` (2-opt).
    ListReverse { d: usize, i: usize, j: usize },
    /// Remove the element at `from` and reinsert it at `to`.
    ListInsert { d: usize, from: usize, to: usize },
    SetAdd { d: usize, e: usize },
    SetDrop { d: usize, e: usize },
    SetSwap { d: usize, out: usize, into: usize },
    BitFlip { d: usize, i: usize },
    IntChange { d: usize, i: usize, v: i64 },
    /// Move the element at `(part, pos)` into another list at `to_pos`.
    PartMove { d: usize, part: usize, pos: usize, to: usize, to_pos: usize },
    PartSwap { d: usize, a: (usize, usize), b: (usize, usize) },
    PartReverse { d: usize, part: usize, i: usize, j: usize },
    /// Move element `e` between sets of a disjoint bit-set decision.
    BitSetMove { d: usize, e: usize, from: usize, to: usize },
    BitSetSwap { d: usize, a: usize, pa: usize, b: usize, pb: usize },
    Noop,
}

impl Move {
    pub fn apply(&self, state: &mut State) {
        match *self {
            Move::ListSwap { d, i, j } => {
                if let Assignment::List(p) = &mut state.assignments[d] {
                    p.swap(i, j);
                }
            }
            Move::ListReverse { d, i, j } => {
                if let Assignment::List(p) = &mut state.assignments[d] {
                    p[i..=j].reverse();
                }
            }
            Move::ListInsert { d, from, to } => {
                if let Assignment::List(p) = &mut state.assignments[d] {
                    let e = p.remove(from);
                    p.insert(to, e);
                }
            }
            Move::SetAdd { d, e } => {
                if let Assignment::Set(s) = &mut state.assignments[d] {
                    if let Err(at) = s.binary_search(&e) {
                        s.insert(at, e);
                    }
                }
            }
            Move::SetDrop { d, e } => {
                if let Assignment::Set(s) = &mut state.assignments[d] {
                    if let Ok(at) = s.binary_search(&e) {
                        s.remove(at);
                    }
                }
            }
            Move::SetSwap { d, out, into } => {
                Move::SetDrop { d, e: out }.apply(state);
                Move::SetAdd { d, e: into }.apply(state);
            }
            Move::BitFlip { d, i } => {
                if let Assignment::Binary(b) = &mut state.assignments[d] {
                    b[i] ^= 1;
                }
            }
            Move::IntChange { d, i, v } => {
                if let Assignment::Integer(x) = &mut state.assignments[d] {
                    x[i] = v;
                }
            }
            Move::PartMove { d, part, pos, to, to_pos } => {
                if let Assignment::DisjointLists(l) = &mut state.assignments[d] {
                    let e = l[part].remove(pos);
                    l[to].insert(to_pos, e);
                }
            }
            Move::PartSwap { d, a, b } => {
                if let Assignment::DisjointLists(l) = &mut state.assignments[d] {
                    let tmp = l[a.0][a.1];
                    l[a.0][a.1] = l[b.0][b.1];
                    l[b.0][b.1] = tmp;
                }
            }
            Move::PartReverse { d, part, i, j } => {
                if let Assignment::DisjointLists(l) = &mut state.assignments[d] {
                    l[part][i..=j].reverse();
                }
            }
            Move::BitSetMove { d, e, from, to } => {
                if let Assignment::DisjointBitSets(s) = &mut state.assignments[d] {
                    move_sorted(s, e, from, to);
                }
            }
            Move::BitSetSwap { d, a, pa, b, pb } => {
                if let Assignment::DisjointBitSets(s) = &mut state.assignments[d] {
                    move_sorted(s, a, pa, pb);
                    move_sorted(s, b, pb, pa);
                }
            }
            Move::Noop => {}
        }
    }

    /// Attribute key for tabu bookkeeping: the decision and the elements the
    /// move touches, independent of direction.
    pub fn tabu_key(&self, state: &State) -> u64 {
        let mut touched: Vec<i64> = match (self, state.assignments.get(self.decision().unwrap_or(0))) {
            (&Move::ListSwap { i, j, .. }, Some(Assignment::List(p)))
            | (&Move::ListReverse { i, j, .. }, Some(Assignment::List(p))) => vec![p[i] as i64, p[j] as i64],
            (&Move::ListInsert { from, .. }, Some(Assignment::List(p))) => vec![p[from] as i64],
            (&Move::SetAdd { e, .. }, _) | (&Move::SetDrop { e, .. }, _) => vec![e as i64],
            (&Move::SetSwap { out, into, .. }, _) => vec![out as i64, into as i64],
            (&Move::BitFlip { i, .. }, _) => vec![i as i64],
            (&Move::IntChange { i, .. }, _) => vec![i as i64],
            (&Move::PartMove { part, pos, .. }, Some(Assignment::DisjointLists(l))) => vec![l[part][pos] as i64],
            (&Move::PartSwap { a, b, .. }, Some(Assignment::DisjointLists(l))) => vec![l[a.0][a.1] as i64, l[b.0][b.1] as i64],
            (&Move::PartReverse { part, i, j, .. }, Some(Assignment::DisjointLists(l))) => {
                vec![l[part][i] as i64, l[part][j] as i64]
            }
            (&Move::BitSetMove { e, .. }, _) => vec![e as i64],
            (&Move::BitSetSwap { a, b, .. }, _) => vec![a as i64, b as i64],
            _ => vec![-1],
        };
        touched.sort_unstable();
        let mut h = DefaultHasher::new();
        (self.decision(), touched).hash(&mut h);
        h.finish()
    }

    pub fn decision(&self) -> Option<usize> {
        match *self {
            Move::ListSwap { d, .. }
            | Move::ListReverse { d, .. }
            | Move::ListInsert { d, .. }
            | Move::SetAdd { d, .. }
            | Move::SetDrop { d, .. }
            | Move::SetSwap { d, .. }
            | Move::BitFlip { d, .. }
            | Move::IntChange { d, .. }
            | Move::PartMove { d, .. }
            | Move::PartSwap { d, .. }
            | Move::PartReverse { d, .. }
            | Move::BitSetMove { d, .. }
            | Move::BitSetSwap { d, .. } => Some(d),
            Move::Noop => None,
        }
    }
}

fn move_sorted(sets: &mut [Vec<usize>], e: usize, from: usize, to: usize) {
    if let Ok(at) = sets[from].binary_search(&e) {
        sets[from].remove(at);
    }
    if let Err(at) = sets[to].binary_search(&e) {
        sets[to].insert(at, e);
    }
}

/// Proposes a random move on a uniformly chosen decision.
pub fn propose(model: &Model, state: &State, rng: &mut impl Rng) -> Move {
    let specs = model.decisions();
    if specs.is_empty() {
        return Move::Noop;
    }
    let d = rng.gen_range(0..specs.len());
    propose_for(&specs[d], d, &state.assignments[d], rng)
}

/// Proposes a random move on decision `d`.
pub fn propose_for(spec: &DecisionSpec, d: usize, value: &Assignment, rng: &mut impl Rng) -> Move {
    match (*spec, value) {
        (DecisionSpec::List(n), Assignment::List(_)) => list_move(d, n, rng),
        (DecisionSpec::Set(n), Assignment::Set(s)) => set_move(d, n, s, rng),
        (DecisionSpec::BinaryArray(n), _) => Move::BitFlip { d, i: rng.gen_range(0..n) },
        (DecisionSpec::IntegerArray { n, lo, hi }, Assignment::Integer(x)) => {
            if lo == hi {
                return Move::Noop;
            }
            let i = rng.gen_range(0..n);
            // uniform over the other hi - lo values
            let mut v = rng.gen_range(lo..hi);
            if v >= x[i] {
                v += 1;
            }
            Move::IntChange { d, i, v }
        }
        (DecisionSpec::DisjointLists { .. }, Assignment::DisjointLists(l)) => partition_move(d, l, rng),
        (DecisionSpec::DisjointBitSets { .. }, Assignment::DisjointBitSets(s)) => bitset_move(d, s, rng),
        _ => Move::Noop,
    }
}

fn two_distinct(n: usize, rng: &mut impl Rng) -> (usize, usize) {
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i.min(j), i.max(j))
}

fn list_move(d: usize, n: usize, rng: &mut impl Rng) -> Move {
    if n < 2 {
        return Move::Noop;
    }
    let r: f64 = rng.gen();
    if r < 0.1 {
        let i = rng.gen_range(0..n - 1);
        Move::ListSwap { d, i, j: i + 1 }
    } else if r < 0.3 {
        let (i, j) = two_distinct(n, rng);
        Move::ListSwap { d, i, j }
    } else if r < 0.8 {
        let (i, j) = two_distinct(n, rng);
        Move::ListReverse { d, i, j }
    } else {
        let (from, to) = two_distinct(n, rng);
        if rng.gen_bool(0.5) {
            Move::ListInsert { d, from, to }
        } else {
            Move::ListInsert { d, from: to, to: from }
        }
    }
}

fn random_non_member(n: usize, set: &[usize], rng: &mut impl Rng) -> usize {
    // set is sorted and not full; the k-th gap element is found by a linear walk
    let k = rng.gen_range(0..n - set.len());
    let mut seen = 0;
    let mut prev = 0;
    for &m in set {
        let gap = m - prev;
        if k < seen + gap {
            return prev + (k - seen);
        }
        seen += gap;
        prev = m + 1;
    }
    prev + (k - seen)
}

fn set_move(d: usize, n: usize, set: &[usize], rng: &mut impl Rng) -> Move {
    let kind = rng.gen_range(0..3);
    let full = set.len() == n;
    // drops on an empty set and adds on a full set are resampled as the other
    match (kind, set.is_empty(), full) {
        (_, true, _) => Move::SetAdd { d, e: random_non_member(n, set, rng) },
        (_, _, true) => Move::SetDrop { d, e: set[rng.gen_range(0..set.len())] },
        (0, ..) => Move::SetAdd { d, e: random_non_member(n, set, rng) },
        (1, ..) => Move::SetDrop { d, e: set[rng.gen_range(0..set.len())] },
        _ => Move::SetSwap {
            d,
            out: set[rng.gen_range(0..set.len())],
            into: random_non_member(n, set, rng),
        },
    }
}

fn partition_move(d: usize, lists: &[Vec<usize>], rng: &mut impl Rng) -> Move {
    let k = lists.len();
    let non_empty: Vec<usize> = (0..k).filter(|&p| !lists[p].is_empty()).collect();
    for _ in 0..8 {
        match rng.gen_range(0..3) {
            0 if k >= 2 => {
                let part = non_empty[rng.gen_range(0..non_empty.len())];
                let pos = rng.gen_range(0..lists[part].len());
                let mut to = rng.gen_range(0..k - 1);
                if to >= part {
                    to += 1;
                }
                let to_pos = rng.gen_range(0..=lists[to].len());
                return Move::PartMove { d, part, pos, to, to_pos };
            }
            1 if non_empty.len() >= 2 => {
                let (x, y) = two_distinct(non_empty.len(), rng);
                let (pa, pb) = (non_empty[x], non_empty[y]);
                let a = (pa, rng.gen_range(0..lists[pa].len()));
                let b = (pb, rng.gen_range(0..lists[pb].len()));
                return Move::PartSwap { d, a, b };
            }
            2 => {
                let long: Vec<usize> = (0..k).filter(|&p| lists[p].len() >= 2).collect();
                if let Some(&part) = long.choose(rng) {
                    let (i, j) = two_distinct(lists[part].len(), rng);
                    return Move::PartReverse { d, part, i, j };
                }
            }
            _ => {}
        }
    }
    Move::Noop
}

fn bitset_move(d: usize, sets: &[Vec<usize>], rng: &mut impl Rng) -> Move {
    let k = sets.len();
    if k < 2 {
        return Move::Noop;
    }
    let non_empty: Vec<usize> = (0..k).filter(|&p| !sets[p].is_empty()).collect();
    if non_empty.len() >= 2 && rng.gen_bool(0.5) {
        let (x, y) = two_distinct(non_empty.len(), rng);
        let (pa, pb) = (non_empty[x], non_empty[y]);
        let a = sets[pa][rng.gen_range(0..sets[pa].len())];
        let b = sets[pb][rng.gen_range(0..sets[pb].len())];
        return Move::BitSetSwap { d, a, pa, b, pb };
    }
    let from = non_empty[rng.gen_range(0..non_empty.len())];
    let e = sets[from][rng.gen_range(0..sets[from].len())];
    let mut to = rng.gen_range(0..k - 1);
    if to >= from {
        to += 1;
    }
    Move::BitSetMove { d, e, from, to }
}

/// Applies one random move to a copy of `state`.
pub fn neighbor(model: &Model, state: &State, rng: &mut impl Rng) -> State {
    let mv = propose(model, state, rng);
    let mut next = state.clone();
    mv.apply(&mut next);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn model_with(specs: &[DecisionSpec]) -> Model {
        let mut m = Model::new();
        for &s in specs {
            m.add_decision(s).unwrap();
        }
        m.freeze();
        m
    }

    fn all_kinds() -> Model {
        model_with(&[
            DecisionSpec::List(6),
            DecisionSpec::Set(5),
            DecisionSpec::DisjointLists { n_vars: 7, n_lists: 3 },
            DecisionSpec::DisjointBitSets { n_vars: 6, n_sets: 2 },
            DecisionSpec::BinaryArray(4),
            DecisionSpec::IntegerArray { n: 3, lo: -2, hi: 2 },
        ])
    }

    #[test]
    fn two_opt_reverses_span() {
        let m = model_with(&[DecisionSpec::List(4)]);
        let mut s = State::new(vec![Assignment::List(vec![0, 1, 2, 3])]);
        Move::ListReverse { d: 0, i: 1, j: 2 }.apply(&mut s);
        assert_eq!(s.assignments[0], Assignment::List(vec![0, 2, 1, 3]));
        assert!(m.validate_state(&s).is_empty());
    }

    #[test]
    fn drop_on_empty_set_becomes_add() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!(matches!(set_move(0, 5, &[], &mut rng), Move::SetAdd { .. }));
            assert!(matches!(set_move(0, 3, &[0, 1, 2], &mut rng), Move::SetDrop { .. }));
        }
    }

    #[test]
    fn non_member_sampling_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = [1, 2, 5];
        let mut counts = [0; 7];
        for _ in 0..4000 {
            let e = random_non_member(7, &set, &mut rng);
            assert!(!set.contains(&e));
            counts[e] += 1;
        }
        for e in [0, 3, 4, 6] {
            assert!(counts[e] > 800, "{counts:?}");
        }
    }

    #[test]
    fn reversal_key_is_direction_free() {
        let s = State::new(vec![Assignment::List(vec![3, 1, 0, 2])]);
        let mv = Move::ListReverse { d: 0, i: 0, j: 2 };
        let mut t = s.clone();
        mv.apply(&mut t);
        assert_eq!(mv.tabu_key(&s), mv.tabu_key(&t));
        assert_ne!(mv.tabu_key(&s), Move::ListReverse { d: 0, i: 0, j: 3 }.tabu_key(&s));
    }

    #[test]
    fn singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = model_with(&[DecisionSpec::List(1), DecisionSpec::BinaryArray(1)]);
        let s = initial_state(&m, &mut rng);
        assert_eq!(s.assignments[0], Assignment::List(vec![0]));
        let Assignment::Binary(b) = &s.assignments[1] else { panic!() };
        assert!(b[0] <= 1);
        let next = neighbor(&m, &s, &mut rng);
        assert!(m.validate_state(&next).is_empty());
    }

    #[test]
    fn initial_partitions_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = all_kinds();
        for _ in 0..200 {
            let s = initial_state(&m, &mut rng);
            assert!(m.validate_state(&s).is_empty());
            let Assignment::DisjointLists(l) = &s.assignments[2] else { panic!() };
            let sizes: Vec<usize> = l.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn permutation_histogram_is_uniform() {
        let m = model_with(&[DecisionSpec::List(4)]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            *counts.entry(initial_state(&m, &mut rng)).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = draws as f64 / 24.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 23 degrees of freedom
        assert!(chi2 < 49.73, "chi2 = {chi2}");
    }

    #[test]
    fn moves_preserve_validity() {
        let m = all_kinds();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = initial_state(&m, &mut rng);
        for _ in 0..100_000 {
            let before = s.clone();
            let mv = propose(&m, &s, &mut rng);
            mv.apply(&mut s);
            assert!(m.validate_state(&s).is_empty(), "{mv:?} from {before:?}");
        }
    }
}
