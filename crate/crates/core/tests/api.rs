use std::sync::Arc;

use relscale::logic::{
    count_true_groundings, enumerate_worlds, holds, parse_model, parse_query, reduct, GroundLayout, GroundingMap,
    Model, ParseErrorKind, World,
};
use relscale::mln::{distribution, query_probability as mln_query, Aggregator, MlnModel, Scaling};
use relscale::rlr::{
    conditional_probability, forward_sample, generic_extension, learn_weights, log_likelihood, normalize_variable_sets,
    query_probability, read_samples, sigmoid, world_probability, write_samples, RlrModel, ViolationKind,
};
use relscale::{DomainAssignment, Error, Formula, SortId};

const PROJECTIVITY: &str = "pred R(person); pred Q(person);
    rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y) over { y }; } }";

fn rlr(text: &str) -> RlrModel {
    match parse_model(text).unwrap() {
        Model::Rlr(m) => m,
        Model::Mln(_) => panic!("expected an rlr model"),
    }
}

fn mln(text: &str) -> MlnModel {
    match parse_model(text).unwrap() {
        Model::Mln(m) => m,
        Model::Rlr(_) => panic!("expected an mln model"),
    }
}

fn sizes(n: usize) -> DomainAssignment {
    DomainAssignment::new(vec![n]).unwrap()
}

fn world(sig: &Arc<relscale::Signature>, n: usize, atoms: &[(&str, &[usize])]) -> World {
    let layout = GroundLayout::new(sig.clone(), sizes(n)).unwrap();
    let mut w = World::empty(layout);
    for (name, elems) in atoms {
        w.set_atom(sig.relation_id(name).unwrap(), elems, true).unwrap();
    }
    w
}

#[test]
fn parse_errors_carry_locations() {
    let err = parse_model("prop P;\npred R(person);\nmln { 1.0 : P -> ; }").unwrap_err();
    let Error::Parse(p) = err else { panic!("{err}") };
    assert_eq!(p.kind, ParseErrorKind::Syntax);
    assert_eq!((p.line, p.column), (3, 18));

    let dup = parse_model("prop P; prop P; mln { }").unwrap_err();
    assert!(
        matches!(dup, Error::Parse(ref p) if p.kind == ParseErrorKind::Duplicate),
        "{dup}"
    );
    let undeclared = parse_model("prop P; mln { 1 : Q; }").unwrap_err();
    assert!(
        matches!(undeclared, Error::Parse(ref p) if p.kind == ParseErrorKind::Undeclared),
        "{undeclared}"
    );
    let sorts = parse_model("sort a; sort b; pred R(a); pred S(b); mln { 1 : R(x) & S(x); }").unwrap_err();
    assert!(
        matches!(sorts, Error::Parse(ref p) if p.kind == ParseErrorKind::SortMismatch),
        "{sorts}"
    );
}

#[test]
fn simple_models_parse() {
    let m = mln("prop P; pred R(person); mln { 1.0 : P -> R(x); }");
    assert_eq!(m.formulas.len(), 1);
    assert_eq!(m.formulas[0].weight, 1.0);
    assert_eq!(m.scaling, Scaling::None);
    let r = rlr("pred Q(person); rlr { node Q(x) { 0.0 : true; } }");
    assert_eq!(r.nodes.len(), 1);
    assert!(r.nodes[0].is_root());
    assert_eq!(r.nodes[0].conditions[0].weight, 0.0);
}

#[test]
fn holds_and_counts() {
    let m = mln("pred R(s); pred Q(s); mln { 1 : R(x) & Q(y); }");
    let sig = &m.signature;
    let w = world(sig, 3, &[("R", &[0]), ("Q", &[1])]);
    let both = parse_query("R(x) & Q(y)", sig, None).unwrap();
    let g = GroundingMap::from([("x".to_string(), 0), ("y".to_string(), 1)]);
    assert!(holds(&w, &both, &g).unwrap());
    let neg = parse_query("!R(x)", sig, None).unwrap();
    assert!(!holds(&w, &neg, &g).unwrap());
    assert!(holds(&w, &Formula::True, &GroundingMap::new()).unwrap());
    assert!(matches!(
        holds(&w, &both, &GroundingMap::new()),
        Err(Error::UnboundVariable(_))
    ));

    let w = world(
        sig,
        3,
        &[("R", &[0]), ("R", &[1]), ("Q", &[0]), ("Q", &[1]), ("Q", &[2])],
    );
    assert_eq!(count_true_groundings(&w, &both).unwrap(), 6);
    let top = parse_query("true | R(x)", sig, None).unwrap();
    assert_eq!(count_true_groundings(&w, &top).unwrap(), 3);

    let w = world(sig, 3, &[("R", &[0]), ("Q", &[0])]);
    let same = parse_query("R(x) & Q(x)", sig, None).unwrap();
    assert_eq!(count_true_groundings(&w, &same).unwrap(), 1);
}

#[test]
fn free_variables_in_first_occurrence_order() {
    let m = mln("prop P; pred R(s, s); pred Q(s); mln { }");
    let names = |t: &str| -> Vec<String> {
        parse_query(t, &m.signature, None)
            .unwrap()
            .free_variables()
            .into_iter()
            .map(|v| v.name)
            .collect()
    };
    assert_eq!(names("Q(x) & Q(y)"), ["x", "y"]);
    assert!(names("P").is_empty());
    assert_eq!(names("R(x, y) | R(y, x)"), ["x", "y"]);
    assert_eq!(names("R(y, x) | Q(x)"), ["y", "x"]);
}

#[test]
fn enumeration_order_and_errors() {
    let m = mln("prop P; pred R(s); mln { }");
    let records: Vec<String> = enumerate_worlds(m.signature.clone(), sizes(1), 24)
        .unwrap()
        .map(|w| w.to_record())
        .collect();
    assert_eq!(records, ["", "P", "R(e1)", "P;R(e1)"]);
    assert_eq!(enumerate_worlds(m.signature.clone(), sizes(2), 24).unwrap().count(), 8);
    let err = enumerate_worlds(m.signature.clone(), sizes(30), 24).err();
    assert!(matches!(err, Some(Error::StateSpaceTooLarge { count: 31, cap: 24 })));
}

#[test]
fn reducts_keep_retained_symbols() {
    let m = mln("prop P; pred R(s); mln { 1 : P -> R(x); }");
    let w = world(&m.signature, 2, &[("P", &[]), ("R", &[1])]);
    let sub = Arc::new(m.signature.restrict(&["P"]).unwrap());
    let r = reduct(&w, &sub).unwrap();
    assert_eq!(r.to_record(), "P");
    let full = reduct(&w, &m.signature).unwrap();
    assert_eq!(full.to_record(), w.to_record());

    // extensions of a reduct sum to its marginal
    let d = distribution(&m, &sizes(2), 24).unwrap();
    let p_total: f64 = (0..d.len())
        .filter(|&i| reduct(&d.world(i), &sub).unwrap().to_record() == "P")
        .map(|i| d.probability(i))
        .sum();
    let p = parse_query("P", &m.signature, None).unwrap();
    assert!((p_total - d.query(&p, None).unwrap()).abs() < 1e-12);
}

#[test]
fn mln_small_model_values() {
    let m = mln("prop P; pred R(s); mln { 1 : P -> R(x); }");
    let e = std::f64::consts::E;
    let d = distribution(&m, &sizes(1), 24).unwrap();
    assert!((d.log_partition() - (3.0 * e + 1.0).ln()).abs() < 1e-12);
    let q = |t: &str| parse_query(t, &m.signature, Some(&sizes(1))).unwrap();
    let p = mln_query(&m, &sizes(1), &q("P"), None, 24).unwrap();
    assert!((p - (e + 1.0) / (3.0 * e + 1.0)).abs() < 1e-12);
    let r = mln_query(&m, &sizes(1), &q("R(e1)"), None, 24).unwrap();
    assert!((r - 2.0 * e / (3.0 * e + 1.0)).abs() < 1e-12);
    let c = mln_query(&m, &sizes(1), &q("R(e1)"), Some(&q("P")), 24).unwrap();
    assert!((c - sigmoid(1.0)).abs() < 1e-12);
    let zero = mln_query(&m, &sizes(1), &q("P"), Some(&q("false")), 24);
    assert!(matches!(zero, Err(Error::ZeroProbabilityEvidence)));

    let da = m.with_scaling(Scaling::DomainAware(Aggregator::Max));
    let w = world(&da.signature, 3, &[("P", &[]), ("R", &[0]), ("R", &[2])]);
    let lw = relscale::mln::world_log_weight(&da, &w).unwrap();
    assert!((lw - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn validation_reports_violations() {
    assert!(rlr(PROJECTIVITY).validate().is_empty());

    let cycle = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y) & Q(y); } }");
    let v = cycle.validate();
    assert!(v.iter().any(|v| matches!(v.kind, ViolationKind::Cycle(_))), "{v:?}");

    let head = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y) over { x, y }; } }");
    let v = head.validate();
    assert_eq!(v.len(), 1);
    assert_eq!((v[0].node.as_str(), v[0].condition), ("Q", Some(0)));
    assert_eq!(v[0].kind, ViolationKind::HeadVariableInSet("x".into()));

    let unbound = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y) over { }; } }");
    assert!(unbound
        .validate()
        .iter()
        .any(|v| v.kind == ViolationKind::UnboundVariable("y".into())));

    let missing = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } }");
    assert!(missing
        .validate()
        .iter()
        .any(|v| v.node == "Q" && v.kind == ViolationKind::MissingNode));

    let dup = rlr("pred R(s); rlr { node R(x) { 0 : true; } node R(y) { 1 : true; } }");
    assert!(dup.validate().iter().any(|v| v.kind == ViolationKind::DuplicateNode));

    assert!(matches!(cycle.structure(), Err(Error::InvalidModel(_))));
}

#[test]
fn variable_sets_normalize() {
    let m = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 prop : R(y) over { y, z }; } }");
    let n = normalize_variable_sets(&m, None).unwrap();
    let c = &n.nodes[1].conditions[0];
    assert_eq!(c.over.len(), 1);
    assert_eq!(c.weight, 1.0);

    let raw = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 0.5 raw : R(y) over { y, z }; } }");
    assert!(normalize_variable_sets(&raw, None).is_err());
    let d = sizes(4);
    let n = normalize_variable_sets(&raw, Some(&d)).unwrap();
    assert_eq!(n.nodes[1].conditions[0].weight, 2.0);
    let small = sizes(2);
    let before = normalize_variable_sets(&raw, Some(&small)).unwrap();
    for w in enumerate_worlds(raw.signature.clone(), small.clone(), 24).unwrap() {
        let a = world_probability(&raw, &w).unwrap();
        let b = world_probability(&before, &w).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(normalize_variable_sets(&n, Some(&d)).unwrap(), n);
}

#[test]
fn conditional_probabilities() {
    let m = rlr(PROJECTIVITY);
    let sig = &m.signature;
    let (r, q) = (sig.relation_id("R").unwrap(), sig.relation_id("Q").unwrap());
    let w = world(sig, 2, &[("R", &[1])]);
    assert!((conditional_probability(&m, r, &[0], &w).unwrap() - 0.5).abs() < 1e-15);
    assert!((conditional_probability(&m, q, &[0], &w).unwrap() - sigmoid(0.5)).abs() < 1e-15);

    let raw = m.clone().with_all_flags(false);
    let w = world(sig, 4, &[("R", &[0]), ("R", &[2]), ("R", &[3])]);
    assert!((conditional_probability(&raw, q, &[1], &w).unwrap() - sigmoid(3.0)).abs() < 1e-15);

    // strictly increasing in the weight once the condition is satisfied
    let mut last = 0.0;
    for k in -5..=5 {
        let mut m = raw.clone();
        m.node_mut(q).unwrap().conditions[0].weight = k as f64 / 2.0;
        let p = conditional_probability(&m, q, &[1], &w).unwrap();
        assert!(p > last);
        last = p;
    }
}

#[test]
fn non_projectivity_witness() {
    let m = rlr(PROJECTIVITY);
    let chi = |n: usize| {
        let d = sizes(n);
        let f = parse_query("Q(e1) & R(e1)", &m.signature, Some(&d)).unwrap();
        query_probability(&m, &d, &f, None).unwrap()
    };
    let (p1, p2) = (chi(1), chi(2));
    assert!((p1 - 0.5 * sigmoid(1.0)).abs() < 1e-12);
    assert!((p2 - 0.5 * (0.5 * sigmoid(1.0) + 0.5 * sigmoid(0.5))).abs() < 1e-12);
    assert!(p2 < p1);
    assert!((p1 - 0.36553).abs() < 5e-6 && (p2 - 0.33838).abs() < 5e-6);

    let w = world(&m.signature, 1, &[("R", &[0]), ("Q", &[0])]);
    assert!((world_probability(&m, &w).unwrap() - 0.5 * sigmoid(1.0)).abs() < 1e-15);
    let bottom = query_probability(&m, &sizes(2), &Formula::False, None).unwrap();
    assert_eq!(bottom, 0.0);
}

#[test]
fn generic_extension_keeps_marginals() {
    // models whose counted sets never meet the head element's own atoms
    let models = [
        PROJECTIVITY,
        "pred R(s); pred Q(s); rlr { node R(x) { 0.4 : true; } node Q(x) { 1.5 : R(x); -0.3 : true; } }",
        "pred R(s); pred S(s); prop P; pred Q(s); rlr { node R(x) { -0.2 : true; } node S(x) { 0.1 : true; }
            node P { 2 prop : R(y) over { y }; } node Q(x) { 0.7 : P; 1.2 : S(x) & P; } }",
        "pred E(s, s); pred Q(s); rlr { node E(x, y) { 0.3 : true; } node Q(x) { 1.1 : E(x, x); } }",
    ];
    for text in models {
        let m = rlr(text);
        let ext = generic_extension(&m, &[SortId(0)]).unwrap();
        assert!(ext.validate().is_empty());
        for n in 1..=3 {
            let d = sizes(n);
            for (rel, r) in m.signature.relations() {
                let elems = vec![0; r.arity()];
                let base =
                    query_probability(&m, &d, &Formula::Atom(relscale::Atom::ground(rel, &elems)), None).unwrap();
                let name = if r.arity() == 0 {
                    r.name.clone()
                } else {
                    format!("{}_{}", r.name, vec!["a1"; r.arity()].join("_"))
                };
                let inst = ext.signature.relation_id(&name).unwrap();
                let lifted =
                    query_probability(&ext, &d, &Formula::Atom(relscale::Atom::proposition(inst)), None).unwrap();
                assert!(
                    (base - lifted).abs() <= 1e-12,
                    "{text}, n={n}, {name}: {base} vs {lifted}"
                );
            }
        }
    }
}

#[test]
fn sampling_matches_exact_values() {
    let m = rlr("pred R(s); rlr { node R(x) { 0.8 : true; } }");
    let batch = forward_sample(&m, &sizes(1), 7, 10_000).unwrap();
    let freq = batch.worlds.iter().filter(|w| w.get(0)).count() as f64 / 10_000.0;
    assert!((freq - sigmoid(0.8)).abs() < 0.02);

    let m = rlr(PROJECTIVITY);
    let batch = forward_sample(&m, &sizes(1), 11, 10_000).unwrap();
    let chi = batch.worlds.iter().filter(|w| w.to_record() == "R(e1);Q(e1)").count() as f64 / 10_000.0;
    assert!((chi - 0.36553).abs() < 0.02);

    let again = forward_sample(&m, &sizes(1), 11, 10_000).unwrap();
    assert_eq!(write_samples(&batch, &m.signature), write_samples(&again, &m.signature));
}

#[test]
fn sample_files_round_trip() {
    let m = rlr("pred R(s, s); pred Q(s); prop P; rlr { node R(x, y) { 0 : true; } node Q(x) { 0 : true; } node P { 0 : true; } }");
    let w = world(&m.signature, 3, &[("R", &[0, 2]), ("Q", &[1]), ("P", &[])]);
    assert_eq!(w.to_record(), "R(e1,e3);Q(e2);P");
    let batch = forward_sample(&m, &sizes(3), 3, 20).unwrap();
    let text = write_samples(&batch, &m.signature);
    assert!(text.starts_with("# seed: 3\n# size s=3\n"));
    let back = read_samples(&text, &m.signature, None).unwrap();
    assert_eq!(back.domains, batch.domains);
    assert_eq!(back.worlds, batch.worlds);
    assert!(read_samples("# size s=3\nR(e1,e4)\n", &m.signature, None).is_err());
    assert!(read_samples("# size s=3\nZ(e1)\n", &m.signature, None).is_err());
}

#[test]
fn likelihood_and_learning() {
    let root = rlr("pred R(s); rlr { node R(x) { 0 : true; } }");
    let one = forward_sample(&root, &sizes(1), 0, 1).unwrap();
    assert!((log_likelihood(&root, &one).unwrap() - 0.5f64.ln()).abs() < 1e-15);

    let m = rlr(PROJECTIVITY);
    let batch = forward_sample(&m, &sizes(4), 5, 50).unwrap();
    let per_world: f64 = batch
        .worlds
        .iter()
        .map(|w| world_probability(&m, w).unwrap().ln())
        .sum();
    assert!((log_likelihood(&m, &batch).unwrap() - per_world).abs() < 1e-9);

    let zero = rlr("pred R(person); pred Q(person);
        rlr { node R(x) { 0 : true; } node Q(x) { 0 : R(y) over { y }; } }");
    let batch = forward_sample(&zero, &sizes(20), 21, 500).unwrap();
    let (learned, report) = learn_weights(&zero, &batch).unwrap();
    assert!(!report.any_clamped());
    for node in &learned.nodes {
        for c in &node.conditions {
            assert!(c.weight.abs() < 0.1, "{}", c.weight);
        }
    }
    assert!(log_likelihood(&learned, &batch).unwrap() >= log_likelihood(&zero, &batch).unwrap() - 1e-6);
}

#[test]
fn extension_differs_when_counts_include_the_head_element() {
    // Q(x) reads R(x) and the proportion of R(y); in the base model the
    // proportion includes R(e1), in the extension it excludes R_a1
    let m = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 2 : R(x); 1 : R(y); } }");
    let ext = generic_extension(&m, &[SortId(0)]).unwrap();
    let d = sizes(2);
    let base = parse_query("Q(e1)", &m.signature, Some(&d)).unwrap();
    let lifted = Formula::Atom(relscale::Atom::proposition(ext.signature.relation_id("Q_a1").unwrap()));
    let a = query_probability(&m, &d, &base, None).unwrap();
    let b = query_probability(&ext, &d, &lifted, None).unwrap();
    let s = sigmoid;
    assert!((a - 0.5 * (0.5 * s(2.5) + 0.5 * s(3.0)) - 0.5 * (0.5 * s(0.0) + 0.5 * s(0.5))).abs() < 1e-12);
    assert!(
        (b - 0.5 * (0.25 * s(2.0) + 0.5 * s(2.5) + 0.25 * s(3.0))
            - 0.5 * (0.25 * s(0.0) + 0.5 * s(0.5) + 0.25 * s(1.0)))
        .abs()
            < 1e-12
    );
    assert!((a - b).abs() > 1e-3);
}
