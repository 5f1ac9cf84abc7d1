//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when
//! any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relscale::asymptotics::{asymptotic_proposition_distribution, empirical_limit_check};
use relscale::logic::{enumerate_worlds, parse_model, parse_query, Model};
use relscale::mln::{distribution, probability, verify_sigmoid_identity, Aggregator, MlnModel, Scaling};
use relscale::rlr::{
    convert, forward_sample, generic_extension, learn_weights, log_likelihood, query_probability, sigmoid, Direction,
    GroundRlr, RlrModel,
};
use relscale::{asymptotic_query, Atom, DomainAssignment, Engine, Formula, SortId};

const PROJECTIVITY: &str = "pred R(person); pred Q(person);
    rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y) over { y }; } }";
const TESTBED: &str = "pred R(person); prop P; pred Q(person);
    rlr { node R(x) { 0.3 : true; } node P { 1.5 : R(y); } node Q(x) { -1 : P; 2 : R(x); 1 : R(y); } }";
const EX1: &str = "prop P; pred R(person); mln { 1 : P -> R(x); }";
const EX2: &str = "prop P; pred Q(person); pred R(person, person); mln { 1 : P & Q(x) & R(x, y); }";
const CAP: usize = 24;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

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

fn q(sig: &relscale::Signature, text: &str) -> Formula {
    parse_query(text, sig, None).unwrap()
}

fn mln_p(m: &MlnModel, n: usize, text: &str, engine: Engine) -> Result<f64, String> {
    probability(m, &sizes(n), &q(&m.signature, text), None, engine).map_err(|e| e.to_string())
}

/// Random Boolean formula over `leaves`.
fn random_formula(rng: &mut ChaCha8Rng, leaves: &[&str], depth: usize) -> String {
    if depth == 0 || rng.random_range(0..3) == 0 {
        return leaves[rng.random_range(0..leaves.len())].to_string();
    }
    let a = random_formula(rng, leaves, depth - 1);
    match rng.random_range(0..4) {
        0 => format!("!({a})"),
        op => {
            let b = random_formula(rng, leaves, depth - 1);
            let c = ["&", "|", "->"][op - 1];
            format!("({a}) {c} ({b})")
        }
    }
}

fn random_weight(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-20i32..=20) as f64 / 10.0
}

fn criterion_1() -> Check {
    let m = rlr(PROJECTIVITY);
    let chi = |n: usize| -> f64 {
        let d = sizes(n);
        let f = parse_query("Q(e1) & R(e1)", &m.signature, Some(&d)).unwrap();
        query_probability(&m, &d, &f, None).unwrap()
    };
    let (p1, p2) = (chi(1), chi(2));
    let (c1, c2) = (0.5 * sigmoid(1.0), 0.5 * (0.5 * sigmoid(1.0) + 0.5 * sigmoid(0.5)));
    ensure((p1 - c1).abs() <= 1e-9, || format!("n=1: {p1} vs {c1}"))?;
    ensure((p2 - c2).abs() <= 1e-9, || format!("n=2: {p2} vs {c2}"))?;
    ensure(p2 < p1, || format!("not decreasing: {p1} then {p2}"))?;
    Ok(format!("n=1 {p1:.6}, n=2 {p2:.6}"))
}

fn random_mln(rng: &mut ChaCha8Rng) -> MlnModel {
    let arities: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(0..=2)).collect();
    let names = ["A", "B"];
    let mut decls = String::new();
    let mut leaves = Vec::new();
    for (name, &k) in names.iter().zip(&arities) {
        match k {
            0 => {
                decls += &format!("prop {name}; ");
                leaves.push(name.to_string());
            }
            1 => {
                decls += &format!("pred {name}(s); ");
                leaves.extend([format!("{name}(x)"), format!("{name}(y)")]);
            }
            _ => {
                decls += &format!("pred {name}(s, s); ");
                leaves.extend([
                    format!("{name}(x, y)"),
                    format!("{name}(y, x)"),
                    format!("{name}(x, x)"),
                ]);
            }
        }
    }
    let leaves: Vec<&str> = leaves.iter().map(String::as_str).collect();
    let body: String = (0..rng.random_range(1..=3))
        .map(|_| format!("{} : {}; ", random_weight(rng), random_formula(rng, &leaves, 3)))
        .collect();
    let scaling = match rng.random_range(0..4) {
        0 => Scaling::None,
        1 => Scaling::DomainAware(Aggregator::Max),
        2 => Scaling::DomainAware(Aggregator::Sum),
        _ => Scaling::DomainAware(Aggregator::GeometricMean),
    };
    mln(&format!("{decls}mln {{ {body}}}")).with_scaling(scaling)
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut atoms = 0;
    for i in 0..200 {
        let m = random_mln(&mut rng);
        let n = rng.random_range(1..=2);
        let d = DomainAssignment::uniform(&m.signature, n).map_err(|e| e.to_string())?;
        let layout = distribution(&m, &d, CAP).map_err(|e| e.to_string())?.layout().clone();
        for a in 0..layout.num_atoms() {
            let (l, r) = verify_sigmoid_identity(&m, &d, a, CAP).map_err(|e| e.to_string())?;
            worst = worst.max((l - r).abs());
            atoms += 1;
            ensure((l - r).abs() <= 1e-10, || {
                format!("model {i} atom {a}: {l} vs {r}\n{m}")
            })?;
        }
    }
    Ok(format!("{atoms} atoms, max gap {worst:.1e}"))
}

fn criterion_3() -> Check {
    let m = mln(EX1);
    let mut last = f64::INFINITY;
    let mut pp = 0.0;
    // the bound holds with equality, so only rounding separates the sides
    let mut residual = 0.0f64;
    for n in 1..=30 {
        pp = mln_p(&m, n, "P", Engine::Factorized)?;
        let pr = mln_p(&m, n, "R(x)", Engine::Factorized)?;
        ensure(pp < last, || format!("P(P) not decreasing at n={n}"))?;
        residual = residual.max((pr - 0.5).abs() - pp * (sigmoid(1.0) - 0.5));
        ensure((pr - 0.5).abs() <= pp * (sigmoid(1.0) - 0.5) + 1e-12, || {
            format!(
                "n={n}: |P(R(x)) - 0.5| = {} exceeds {}",
                (pr - 0.5).abs(),
                pp * (sigmoid(1.0) - 0.5)
            )
        })?;
        if n <= 10 {
            for text in ["P", "R(x)"] {
                let a = mln_p(&m, n, text, Engine::Factorized)?;
                let b = mln_p(&m, n, text, Engine::Enumerate)?;
                ensure((a - b).abs() <= 1e-9, || {
                    format!("n={n} {text}: factorized {a} vs enumeration {b}")
                })?;
            }
        }
        last = pp;
    }
    ensure(pp < 1e-4, || format!("P(P) at n=30 is {pp}"))?;
    Ok(format!("P(P) at n=30 = {pp:.3e}, bound residual {residual:.1e}"))
}

fn criterion_4() -> Check {
    let ex1 = mln(EX1).with_scaling(Scaling::DomainAware(Aggregator::Max));
    let ex2 = mln(EX2).with_scaling(Scaling::DomainAware(Aggregator::Max));
    let mut rows = 0;
    for (m, query) in [(&ex1, "R(x)"), (&ex2, "Q(x)")] {
        for (engine, ns) in [
            (Engine::Enumerate, &[1, 2, 3][..]),
            (Engine::Factorized, &[10, 25, 50][..]),
        ] {
            for &n in ns {
                let p = mln_p(m, n, query, engine)?;
                let hi = sigmoid(1.0 / n as f64);
                ensure((0.5..=hi).contains(&p), || {
                    format!("{query} at n={n}: {p} outside [0.5, {hi}]")
                })?;
                rows += 1;
            }
        }
    }
    Ok(format!("{rows} bounds hold"))
}

fn criterion_5() -> Check {
    let m = mln(EX2);
    let mut last = 0.0;
    for n in [2, 4, 8, 16] {
        let p = mln_p(&m, n, "Q(x)", Engine::Factorized)?;
        ensure(p > last, || format!("P(Q(x)) not increasing at n={n}"))?;
        last = p;
    }
    ensure(last > 0.99, || format!("P(Q(x)) at n=16 is {last}"))?;
    let (a, b) = (
        mln_p(&m, 2, "Q(x)", Engine::Factorized)?,
        mln_p(&m, 2, "Q(x)", Engine::Enumerate)?,
    );
    ensure((a - b).abs() <= 1e-9, || {
        format!("n=2: factorized {a} vs enumeration {b}")
    })?;
    Ok(format!("P(Q(x)) at n=16 = {last:.6}"))
}

fn criterion_6() -> Check {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, text) in [("projectivity", PROJECTIVITY), ("testbed", TESTBED)] {
        let m = rlr(text);
        for query in ["Q(x)", "Q(x) & R(x)", "Q(x) & Q(y)"] {
            let rows =
                empirical_limit_check(&m, &q(&m.signature, query), &[2000], 200, 6).map_err(|e| e.to_string())?;
            let r = rows[0];
            worst = worst.max(r.gap);
            ensure(r.gap <= 0.03, || {
                format!(
                    "{name} {query}: empirical {} vs algorithmic {}",
                    r.empirical, r.algorithmic
                )
            })?;
            parts.push(format!("{name} {query} {:.4}", r.algorithmic));
        }
    }
    Ok(format!("max gap {worst:.4} ({})", parts.join(", ")))
}

/// Root `R(x)`, proposition `P` over the proportion of `R`, and `Q(x)`
/// over both, with random flags, variable sets and weights.
fn random_rlr(rng: &mut ChaCha8Rng, with_sets: bool) -> RlrModel {
    let flag = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { "prop" } else { "raw" };
    let q_leaves: &[&str] = if with_sets {
        &["R(x)", "R(y)", "P", "R(x) & R(y)"]
    } else {
        &["R(x)", "P", "S(x)", "R(x) & !P"]
    };
    let mut qs = String::new();
    for _ in 0..rng.random_range(1..=3) {
        qs += &format!(
            "{} {} : {}; ",
            random_weight(rng),
            flag(rng),
            random_formula(rng, q_leaves, 2)
        );
    }
    let text = if with_sets {
        let mut p = format!("{} : R(y); ", random_weight(rng));
        for _ in 0..rng.random_range(0..=2) {
            let f = random_formula(rng, &["R(y)", "R(z)", "true"], 2);
            p += &format!("{} {} : {f}; ", random_weight(rng), flag(rng));
        }
        format!(
            "pred R(s); prop P; pred Q(s); rlr {{ node R(x) {{ {} : true; }} node P {{ {p}}} node Q(x) {{ {qs}}} }}",
            random_weight(rng)
        )
    } else {
        let s = format!("{} : R(x); {} : P;", random_weight(rng), random_weight(rng));
        format!(
            "pred R(s); prop P; pred S(s); pred Q(s); rlr {{ node R(x) {{ {} : true; }} node P {{ {} : true; }} \
             node S(x) {{ {s} }} node Q(x) {{ {qs}}} }}",
            random_weight(rng),
            random_weight(rng)
        )
    };
    rlr(&text)
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let m = random_rlr(&mut rng, true);
        for n in 1..=3 {
            let d = sizes(n);
            let g = GroundRlr::new(&m, d.clone()).map_err(|e| e.to_string())?;
            for dir in [Direction::DaToUnscaled, Direction::UnscaledToDa] {
                let c = convert(&m, &d, dir);
                let gc = GroundRlr::new(&c, d.clone()).map_err(|e| e.to_string())?;
                for w in enumerate_worlds(m.signature.clone(), d.clone(), CAP).map_err(|e| e.to_string())? {
                    let diff = (g.world_probability(w.bits()) - gc.world_probability(w.bits())).abs();
                    worst = worst.max(diff);
                    ensure(diff <= 1e-12, || format!("model {i} n={n} {dir:?}: diff {diff}\n{m}"))?;
                }
            }
        }
    }
    Ok(format!("max diff {worst:.1e}"))
}

fn criterion_8() -> Check {
    // base models whose counted sets never include the head element's own atoms
    let models = [
        PROJECTIVITY,
        "pred R(s); pred Q(s); rlr { node R(x) { 0.4 : true; } node Q(x) { 1.5 : R(x); -0.3 : true; } }",
        "pred R(s); pred S(s); prop P; pred Q(s); rlr { node R(x) { -0.2 : true; } node S(x) { 0.1 : true; }
            node P { 2 : R(y); } node Q(x) { 0.7 : P; 1.2 : S(x) & P; } }",
        "pred E(s, s); pred Q(s); rlr { node E(x, y) { 0.3 : true; } node Q(x) { 1.1 : E(x, x); } }",
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for text in models {
        let m = rlr(text);
        let ext = generic_extension(&m, &[SortId(0)]).map_err(|e| e.to_string())?;
        for n in 1..=3 {
            let d = sizes(n);
            for (rel, r) in m.signature.relations() {
                let base = Formula::Atom(Atom::ground(rel, &vec![0; r.arity()]));
                let name = if r.arity() == 0 {
                    r.name.clone()
                } else {
                    format!("{}_{}", r.name, vec!["a1"; r.arity()].join("_"))
                };
                let inst = ext
                    .signature
                    .relation_id(&name)
                    .ok_or_else(|| format!("no relation {name}"))?;
                let a = query_probability(&m, &d, &base, None).map_err(|e| e.to_string())?;
                let b = query_probability(&ext, &d, &Formula::Atom(Atom::proposition(inst)), None)
                    .map_err(|e| e.to_string())?;
                worst = worst.max((a - b).abs());
                checked += 1;
                ensure((a - b).abs() <= 1e-12, || format!("{name} at n={n}: {a} vs {b}"))?;
            }
        }
    }
    let base = rlr(TESTBED);
    let with = rlr(&format!("const c: person; const d: person; {TESTBED}"));
    for text in ["Q(x)", "Q(x) & !Q(y)", "P & R(x)", "P"] {
        let a = asymptotic_query(&base, &q(&base.signature, text), None).map_err(|e| e.to_string())?;
        let b = asymptotic_query(&with, &q(&with.signature, text), None).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
        ensure((a - b).abs() <= 1e-12, || {
            format!("asymptotic {text}: {a} vs {b} with unused constants")
        })?;
    }
    Ok(format!("{checked} marginals and 4 limits, max diff {worst:.1e}"))
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let m = random_rlr(&mut rng, false);
        for text in ["Q(x)", "Q(x) & R(x)", "Q(x) | P", "S(x) & !Q(x)"] {
            let limit = asymptotic_query(&m, &q(&m.signature, text), None).map_err(|e| e.to_string())?;
            for n in 1..=4 {
                let f = q(&m.signature, text).ground_free_variables();
                let exact = query_probability(&m, &sizes(n), &f, None).map_err(|e| e.to_string())?;
                worst = worst.max((exact - limit).abs());
                ensure((exact - limit).abs() <= 1e-12, || {
                    format!("model {i} {text} n={n}: {exact} vs {limit}\n{m}")
                })?;
            }
        }
    }
    Ok(format!("max diff {worst:.1e}"))
}

fn criterion_10() -> Check {
    let truth = rlr(PROJECTIVITY);
    let batch = forward_sample(&truth, &sizes(20), 10, 500).map_err(|e| e.to_string())?;
    let (learned, report) = learn_weights(&truth, &batch).map_err(|e| e.to_string())?;
    for (t, l) in truth.nodes.iter().zip(&learned.nodes) {
        for (a, b) in t.conditions.iter().zip(&l.conditions) {
            ensure((a.weight - b.weight).abs() <= 0.2, || {
                format!(
                    "node {}: learned {} for {}",
                    truth.signature.relation(t.rel()).name,
                    b.weight,
                    a.weight
                )
            })?;
        }
    }
    ensure(!report.any_clamped(), || "weights clamped".into())?;
    let (ll_l, ll_t) = (
        log_likelihood(&learned, &batch).map_err(|e| e.to_string())?,
        log_likelihood(&truth, &batch).map_err(|e| e.to_string())?,
    );
    ensure(ll_l >= ll_t - 1e-6, || {
        format!("log-likelihood {ll_l} below truth {ll_t}")
    })?;
    let w: Vec<String> = learned
        .nodes
        .iter()
        .map(|n| format!("{:.3}", n.conditions[0].weight))
        .collect();
    Ok(format!(
        "weights [{}], log-likelihood gain {:.3}",
        w.join(", "),
        ll_l - ll_t
    ))
}

fn relscale_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_relscale"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn criterion_11() -> Check {
    for text in [EX1, EX2] {
        for scaling in [Scaling::None, Scaling::DomainAware(Aggregator::Max)] {
            let m = mln(text).with_scaling(scaling);
            for n in 1..=3 {
                let d = distribution(&m, &sizes(n), CAP).map_err(|e| e.to_string())?;
                let total: f64 = (0..d.len()).map(|i| d.probability(i)).sum();
                ensure((total - 1.0).abs() <= 1e-9, || format!("mln total {total} at n={n}"))?;
            }
        }
    }
    for text in [PROJECTIVITY, TESTBED] {
        let m = rlr(text);
        for n in 1..=3 {
            let g = GroundRlr::new(&m, sizes(n)).map_err(|e| e.to_string())?;
            let total: f64 = enumerate_worlds(m.signature.clone(), sizes(n), CAP)
                .map_err(|e| e.to_string())?
                .map(|w| g.world_probability(w.bits()))
                .sum();
            ensure((total - 1.0).abs() <= 1e-12, || format!("rlr total {total} at n={n}"))?;
        }
        let law = asymptotic_proposition_distribution(&m).map_err(|e| e.to_string())?;
        let total: f64 = law.iter().map(|r| r.1).sum();
        ensure((total - 1.0).abs() <= 1e-12, || format!("limit law total {total}"))?;
    }

    let models = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models");
    let path = |f: &str| models.join(f).to_string_lossy().into_owned();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("batch.txt").to_string_lossy().into_owned();
    let (proj, ex1, ex2) = (path("projectivity.rlr"), path("ex1.mln"), path("ex2-da.mln"));
    let runs: Vec<Vec<&str>> = vec![
        vec!["validate", &proj],
        vec![
            "infer",
            &proj,
            "--size",
            "person=3",
            "--query",
            "Q(e1) & R(e2)",
            "--format",
            "json",
        ],
        vec!["sweep", &ex1, "--sizes", "person=1..20", "--query", "P"],
        vec![
            "sweep",
            &ex2,
            "--sizes",
            "person=1..12",
            "--query",
            "Q(x)",
            "--format",
            "json",
        ],
        vec!["asymptotic", &proj, "--query", "Q(x) & Q(y)"],
        vec![
            "asymptotic",
            &proj,
            "--query",
            "Q(x)",
            "--sizes",
            "person=100",
            "--samples",
            "50",
            "--seed",
            "4",
        ],
        vec![
            "sample",
            &proj,
            "--size",
            "person=6",
            "--samples",
            "100",
            "--seed",
            "11",
        ],
        vec!["convert", &proj, "--size", "person=5", "--to", "unscaled"],
    ];
    for args in &runs {
        let (a, b) = (relscale_cli(args)?, relscale_cli(args)?);
        ensure(a == b, || format!("{args:?} is not reproducible"))?;
    }
    let sample = [
        "sample",
        &proj,
        "--size",
        "person=8",
        "--samples",
        "200",
        "--seed",
        "5",
        "--out",
        &data,
    ];
    relscale_cli(&sample)?;
    let first = relscale_cli(&["learn", &proj, &data])?;
    relscale_cli(&sample)?;
    ensure(relscale_cli(&["learn", &proj, &data])? == first, || {
        "learn is not reproducible".into()
    })?;
    Ok(format!("{} commands reproduced byte for byte", runs.len() + 2))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("projectivity counterexample", Duration::from_secs(1), criterion_1),
        ("sigmoid-delta identity", Duration::from_secs(60), criterion_2),
        ("mln limits for P -> R(x)", Duration::from_secs(10), criterion_3),
        ("da-mln sandwich bounds", Duration::from_secs(30), criterion_4),
        ("mln trend for P & Q(x) & R(x, y)", Duration::from_secs(10), criterion_5),
        (
            "asymptotic algorithm vs sampling",
            Duration::from_secs(120),
            criterion_6,
        ),
        ("rlr and da-rlr conversion", Duration::from_secs(60), criterion_7),
        ("generic extension consistency", Duration::from_secs(30), criterion_8),
        ("projective fragment", Duration::from_secs(30), criterion_9),
        ("weight learning", Duration::from_secs(60), criterion_10),
        ("normalization and determinism", Duration::from_secs(120), criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            if took <= *budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {took:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name} [{took:.2?}]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{took:.2?}]: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
