use super::*;

fn unit_tsp(n: usize) -> Model {
    let mut m = Model::new();
    let route = m.add_decision(DecisionSpec::List(n)).unwrap();
    let mut c = vec![1.0; n * n];
    for i in 0..n {
        c[i * n + i] = 0.0;
    }
    let cost = m.add_constant(Array::matrix(n, n, c).unwrap()).unwrap();
    let head = m.slice(route.node, None, Some(-1)).unwrap();
    let tail = m.slice(route.node, Some(1), None).unwrap();
    let legs = m.index(cost, &[head, tail]).unwrap();
    let last = m.at(route.node, -1).unwrap();
    let first = m.at(route.node, 0).unwrap();
    let back = m.index(cost, &[last, first]).unwrap();
    let a = m.sum(legs).unwrap();
    let b = m.sum(back).unwrap();
    let total = m.add(a, b).unwrap();
    m.minimize(total).unwrap();
    m.freeze();
    m
}

#[test]
fn empty_model() {
    let m = Model::new();
    assert_eq!(m.nodes().len(), 0);
    assert_eq!(m.constraints().len(), 0);
    assert!(m.objective().is_none());
}

#[test]
fn second_minimize_is_rejected() {
    let mut m = Model::new();
    let c = m.add_constant(Array::scalar(1.0)).unwrap();
    m.minimize(c).unwrap();
    assert!(matches!(m.minimize(c), Err(ModelError::State(_))));
}

#[test]
fn minimize_vector_is_shape_error() {
    let mut m = Model::new();
    let c = m.add_constant(Array::vector(vec![1.0, 2.0])).unwrap();
    assert!(matches!(m.minimize(c), Err(ModelError::Shape(_))));
}

#[test]
fn decision_size_checks() {
    let mut m = Model::new();
    assert!(matches!(m.add_decision(DecisionSpec::Set(0)), Err(ModelError::Domain(_))));
    assert!(matches!(
        m.add_decision(DecisionSpec::DisjointLists { n_vars: 5, n_lists: 6 }),
        Err(ModelError::Domain(_))
    ));
    assert!(matches!(
        m.add_decision(DecisionSpec::IntegerArray { n: 2, lo: 3, hi: 1 }),
        Err(ModelError::Domain(_))
    ));
    let d = m.add_decision(DecisionSpec::List(9)).unwrap();
    assert_eq!(m.node(d.node).shape(), &Shape::fixed(&[9]));
}

#[test]
fn constants() {
    let mut m = Model::new();
    let mat = m.add_constant(Array::matrix(3, 3, vec![0.0; 9]).unwrap()).unwrap();
    assert_eq!(m.node(mat).shape(), &Shape::fixed(&[3, 3]));
    let cap = m.add_constant(Array::scalar(11793.0)).unwrap();
    assert!(m.node(cap).shape().is_scalar());
    assert!(matches!(
        m.add_constant(Array::vector(vec![1.0, f64::NAN])),
        Err(ModelError::Domain(_))
    ));
    assert!(matches!(
        m.add_constant(Array::vector(vec![f64::INFINITY])),
        Err(ModelError::Domain(_))
    ));
}

#[test]
fn gather_with_permutation_views() {
    let mut m = Model::new();
    let perm = m.add_decision(DecisionSpec::List(3)).unwrap();
    let c = m
        .add_constant(Array::matrix(3, 3, (0..9).map(f64::from).collect()).unwrap())
        .unwrap();
    let a = m.slice(perm.node, Some(0), Some(2)).unwrap();
    let b = m.slice(perm.node, Some(1), Some(3)).unwrap();
    let g = m.index(c, &[a, b]).unwrap();
    assert_eq!(m.node(g).shape(), &Shape::fixed(&[2]));
    let s = m.sum(g).unwrap();
    m.minimize(s).unwrap();
    // perm [2,0,1]: C[2,0] + C[0,1] = 6 + 1
    let e = m.evaluate(&State::new(vec![Assignment::List(vec![2, 0, 1])])).unwrap();
    assert_eq!(e.objective, 7.0);
}

#[test]
fn empty_set_sums_to_zero() {
    let mut m = Model::new();
    let items = m.add_decision(DecisionSpec::Set(4)).unwrap();
    let v = m.add_constant(Array::vector(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    let g = m.index(v, &[items.node]).unwrap();
    assert!(m.node(g).shape().is_dynamic());
    let s = m.sum(g).unwrap();
    m.minimize(s).unwrap();
    let empty = m.evaluate(&State::new(vec![Assignment::Set(vec![])])).unwrap();
    assert_eq!(empty.objective, 0.0);
    let full = m.evaluate(&State::new(vec![Assignment::Set(vec![0, 1, 2, 3])])).unwrap();
    assert_eq!(full.objective, 10.0);
}

#[test]
fn shape_errors() {
    let mut m = Model::new();
    let a = m.add_constant(Array::vector(vec![1.0, 2.0])).unwrap();
    let b = m.add_constant(Array::vector(vec![1.0, 2.0, 3.0])).unwrap();
    assert!(matches!(m.add(a, b), Err(ModelError::Shape(_))));
    let s = m.add_constant(Array::scalar(1.0)).unwrap();
    assert!(matches!(m.index(s, &[s]), Err(ModelError::Shape(_))));
    let frac = m.add_constant(Array::scalar(0.5)).unwrap();
    assert!(matches!(m.index(a, &[frac]), Err(ModelError::Type(_))));
    let big = m.add_constant(Array::scalar(2.0)).unwrap();
    assert!(matches!(m.index(a, &[big]), Err(ModelError::Shape(_))));
    // dynamic against fixed non-scalar
    let set = m.add_decision(DecisionSpec::Set(2)).unwrap();
    assert!(matches!(m.add(set.node, a), Err(ModelError::Shape(_))));
}

#[test]
fn dynamic_lengths_mismatch_at_runtime() {
    let mut m = Model::new();
    let parts = m.add_decision(DecisionSpec::DisjointLists { n_vars: 3, n_lists: 2 }).unwrap();
    let l0 = m.decision_part(parts.id, 0).unwrap();
    let l1 = m.decision_part(parts.id, 1).unwrap();
    let d = m.sub(l0, l1).unwrap();
    let s = m.sum(d).unwrap();
    m.minimize(s).unwrap();
    let same = State::new(vec![Assignment::DisjointLists(vec![vec![2], vec![0]])]);
    // element 1 missing -> structural error first
    assert!(matches!(m.evaluate(&same), Err(ModelError::State(_))));
    let ok = State::new(vec![Assignment::DisjointLists(vec![vec![2, 1], vec![0]])]);
    assert!(matches!(m.evaluate(&ok), Err(ModelError::Shape(_))));
    let eq = State::new(vec![Assignment::DisjointLists(vec![vec![2], vec![0, 1]])]);
    assert!(m.evaluate(&eq).is_err());
}

#[test]
fn constraints_and_violations() {
    let mut m = Model::new();
    let x = m.add_decision(DecisionSpec::IntegerArray { n: 1, lo: 0, hi: 10 }).unwrap();
    let s = m.sum(x.node).unwrap();
    let five = m.add_constant(Array::scalar(5.0)).unwrap();
    let le = m.le(s, five).unwrap();
    let ge = m.ge(s, five).unwrap();
    let eq = m.eq(s, five).unwrap();
    assert_eq!(m.add_constraint(le).unwrap(), 0);
    assert_eq!(m.add_constraint(le).unwrap(), 1);
    m.add_constraint(ge).unwrap();
    m.add_constraint(eq).unwrap();
    assert!(matches!(m.add_constraint(s), Err(ModelError::Type(_))));
    m.minimize(s).unwrap();
    let at = |v: i64| m.evaluate(&State::new(vec![Assignment::Integer(vec![v])])).unwrap();
    let e = at(8);
    assert_eq!(e.violations, vec![3.0, 3.0, 0.0, 3.0]);
    assert_eq!(e.margins, vec![Some(3.0), Some(3.0), Some(-3.0), Some(3.0)]);
    assert!(!e.feasible);
    let e = at(2);
    assert_eq!(e.violations, vec![0.0, 0.0, 3.0, 3.0]);
    let e = at(5);
    assert!(e.feasible);
    assert_eq!(e.total_violation(), 0.0);
}

#[test]
fn frozen_model_rejects_mutation() {
    let mut m = unit_tsp(3);
    assert!(matches!(m.add_constant(Array::scalar(1.0)), Err(ModelError::State(_))));
}

#[test]
fn unit_tsp_evaluates_to_three() {
    let m = unit_tsp(3);
    for p in [[0, 1, 2], [2, 1, 0], [1, 0, 2]] {
        let e = m.evaluate(&State::new(vec![Assignment::List(p.to_vec())])).unwrap();
        assert_eq!(e.objective, 3.0);
        assert!(e.feasible);
    }
}

#[test]
fn validate_state_messages() {
    let m = unit_tsp(3);
    assert!(m.validate_state(&State::new(vec![Assignment::List(vec![2, 0, 1])])).is_empty());
    let v = m.validate_state(&State::new(vec![Assignment::List(vec![0, 0, 2])]));
    assert!(v.iter().any(|p| p.message == "duplicate index 0"), "{v:?}");
    let v = m.validate_state(&State::new(vec![Assignment::Set(vec![0])]));
    assert_eq!(v.len(), 1);
    let v = m.validate_state(&State::new(vec![]));
    assert_eq!(v[0].decision, None);
    assert!(matches!(
        m.evaluate(&State::new(vec![Assignment::List(vec![0, 0, 2])])),
        Err(ModelError::State(_))
    ));

    let mut m = Model::new();
    m.add_decision(DecisionSpec::DisjointLists { n_vars: 5, n_lists: 2 }).unwrap();
    let v = m.validate_state(&State::new(vec![Assignment::DisjointLists(vec![vec![0, 1], vec![3, 2]])]));
    assert!(v.iter().any(|p| p.message.starts_with("not exhaustive")), "{v:?}");

    let mut m = Model::new();
    m.add_decision(DecisionSpec::DisjointBitSets { n_vars: 3, n_sets: 2 }).unwrap();
    m.add_decision(DecisionSpec::BinaryArray(2)).unwrap();
    m.add_decision(DecisionSpec::Set(3)).unwrap();
    let bad = State::new(vec![
        Assignment::DisjointBitSets(vec![vec![1, 0], vec![0, 2]]),
        Assignment::Binary(vec![0, 2]),
        Assignment::Set(vec![2, 1]),
    ]);
    let v = m.validate_state(&bad);
    assert!(v.iter().any(|p| p.decision == Some(0) && p.message.contains("duplicate")));
    assert!(v.iter().any(|p| p.decision == Some(1)));
    assert!(v.iter().any(|p| p.decision == Some(2)));
}

#[test]
fn disjoint_parts_evaluate() {
    let mut m = Model::new();
    let d = m.add_decision(DecisionSpec::DisjointBitSets { n_vars: 4, n_sets: 2 }).unwrap();
    let p1 = m.decision_part(d.id, 1).unwrap();
    let w = m.add_constant(Array::vector(vec![1.0, 10.0, 100.0, 1000.0])).unwrap();
    let prod = m.mul(p1, w).unwrap();
    let s = m.sum(prod).unwrap();
    let labels = m.sum(d.node).unwrap();
    let t = m.add(s, labels).unwrap();
    m.minimize(t).unwrap();
    assert!(m.decision_part(d.id, 2).is_err());
    let e = m
        .evaluate(&State::new(vec![Assignment::DisjointBitSets(vec![vec![0, 2], vec![1, 3]])]))
        .unwrap();
    assert_eq!(e.objective, 1010.0 + 2.0);
}

#[test]
fn integer_abs_neg() {
    let mut m = Model::new();
    let x = m.add_decision(DecisionSpec::IntegerArray { n: 3, lo: -4, hi: 4 }).unwrap();
    let a = m.abs(x.node).unwrap();
    assert_eq!(m.node(a).bounds(), Some((0.0, 4.0)));
    let s = m.sum(a).unwrap();
    let n = m.neg(s).unwrap();
    m.minimize(n).unwrap();
    let e = m.evaluate(&State::new(vec![Assignment::Integer(vec![-3, 0, 2])])).unwrap();
    assert_eq!(e.objective, -5.0);
}

#[test]
fn evaluation_is_pure() {
    let m = unit_tsp(5);
    let s = State::new(vec![Assignment::List(vec![4, 2, 0, 3, 1])]);
    assert_eq!(m.evaluate(&s).unwrap(), m.evaluate(&s).unwrap());
}
