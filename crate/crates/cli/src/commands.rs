use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use relscale::asymptotics::{asymptotic_report, empirical_limit_check, limit_csv};
use relscale::logic::{parse_model, parse_query, Model};
use relscale::mln::{self, domain_sweep, sweep_csv, SweepRow};
use relscale::rlr::{self, convert, forward_sample, learn_weights, read_samples, write_samples, Direction};
use relscale::{DomainAssignment, Engine, Formula, Signature};

use crate::args::{EngineArg, Format, RunArgs, Target};

/// A report that failed a check: printed in full, then the process exits 1.
#[derive(Debug)]
pub struct Rejected(pub String);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejected {}

pub fn load(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(parse_model(&text)?)
}

fn domains(sig: &Signature, run: &RunArgs) -> Result<DomainAssignment> {
    Ok(DomainAssignment::from_names(sig, &run.size_map()?, None)?)
}

fn formula(text: &str, sig: &Signature, d: Option<&DomainAssignment>) -> Result<Formula> {
    parse_query(text, sig, d).with_context(|| format!("in `{text}`"))
}

fn engine(run: &RunArgs, default: Engine) -> Engine {
    match run.engine {
        Some(EngineArg::Enumerate) => Engine::Enumerate,
        Some(EngineArg::Factorized) => Engine::Factorized,
        None => default,
    }
}

fn sizes_json(sig: &Signature, d: &DomainAssignment) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = sig
        .sorts()
        .map(|(id, name)| (name.to_string(), json!(d.size(id))))
        .collect();
    serde_json::Value::Object(map)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn rlr_model(model: Model) -> Result<relscale::RlrModel> {
    match model {
        Model::Rlr(m) => Ok(m),
        Model::Mln(_) => bail!("this command needs an rlr model"),
    }
}

/// One probability per domain assignment, by model kind.
fn probability(
    model: &Model,
    d: &DomainAssignment,
    query: &Formula,
    evidence: Option<&Formula>,
    e: Engine,
) -> Result<f64> {
    Ok(match model {
        Model::Mln(m) => mln::probability(m, d, query, evidence, e)?,
        Model::Rlr(m) => {
            if e == Engine::Factorized {
                bail!("the factorized engine evaluates mln models only");
            }
            let q = query.ground_free_variables();
            let ev = evidence.map(Formula::ground_free_variables);
            rlr::query_probability(m, d, &q, ev.as_ref())?
        }
    })
}

pub fn validate(path: &Path) -> Result<String> {
    let model = load(path)?;
    let sig = model.signature();
    match &model {
        Model::Mln(m) => Ok(format!(
            "ok: mln model, {} formulas, {} relations\n",
            m.formulas.len(),
            sig.num_relations()
        )),
        Model::Rlr(m) => {
            let violations = m.validate();
            if violations.is_empty() {
                let s = m.structure()?;
                let depth = s.index.iter().max().copied().unwrap_or(0);
                return Ok(format!("ok: rlr model, {} nodes, depth {depth}\n", m.nodes.len()));
            }
            let mut out = format!("{} violations:\n", violations.len());
            for v in &violations {
                let _ = writeln!(out, "  {v}");
            }
            Err(Rejected(out).into())
        }
    }
}

pub fn infer(path: &Path, run: &RunArgs) -> Result<String> {
    let model = load(path)?;
    let sig = model.signature().clone();
    let d = domains(&sig, run)?;
    let query = formula(run.query()?, &sig, Some(&d))?;
    let evidence = run
        .evidence
        .as_deref()
        .map(|t| formula(t, &sig, Some(&d)))
        .transpose()?;
    let e = engine(run, Engine::Enumerate);
    let p = probability(&model, &d, &query, evidence.as_ref(), e)?;
    Ok(match run.format.unwrap_or(Format::Table) {
        Format::Table => format!("{p}\n"),
        Format::Csv => format!("probability\n{p}\n"),
        Format::Json => pretty(&json!({
            "query": run.query()?,
            "evidence": run.evidence,
            "sizes": sizes_json(&sig, &d),
            "engine": e.keyword(),
            "probability": p,
        })),
    })
}

pub fn sweep(path: &Path, run: &RunArgs) -> Result<String> {
    let model = load(path)?;
    let sig = model.signature().clone();
    let (sort_name, ns) = run.sizes.clone().ok_or_else(|| anyhow!("--sizes is required"))?;
    let sort = sig
        .sort_id(&sort_name)
        .ok_or_else(|| relscale::Error::Undeclared(sort_name.clone()))?;
    let mut fixed = run.size_map()?;
    fixed.entry(sort_name.clone()).or_insert(ns[0]);
    let base = DomainAssignment::from_names(&sig, &fixed, None)?;
    let query = formula(run.query()?, &sig, None)?;
    let evidence = run.evidence.as_deref().map(|t| formula(t, &sig, None)).transpose()?;
    let e = engine(run, Engine::Factorized);
    let rows = match &model {
        Model::Mln(m) => domain_sweep(m, &base, Some(sort), &ns, &query, evidence.as_ref(), e)?,
        Model::Rlr(_) => ns
            .iter()
            .map(|&n| {
                let mut sizes = base.sizes().to_vec();
                sizes[sort.0] = n;
                let d = DomainAssignment::new(sizes)?;
                let probability = probability(&model, &d, &query, evidence.as_ref(), e)?;
                Ok(SweepRow { n, probability })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(match run.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep_csv(&rows),
        Format::Table => {
            let mut out = format!("{:>6}  probability\n", sort_name);
            for r in &rows {
                let _ = writeln!(out, "{:>6}  {}", r.n, r.probability);
            }
            out
        }
        Format::Json => pretty(&json!({
            "query": run.query()?,
            "evidence": run.evidence,
            "engine": e.keyword(),
            "sort": sort_name,
            "rows": rows.iter().map(|r| json!({"n": r.n, "probability": r.probability})).collect::<Vec<_>>(),
        })),
    })
}

pub fn asymptotic(path: &Path, run: &RunArgs) -> Result<String> {
    let model = rlr_model(load(path)?)?;
    let sig = model.signature.clone();
    let query = formula(run.query()?, &sig, None)?;
    let evidence = run.evidence.as_deref().map(|t| formula(t, &sig, None)).transpose()?;
    if let Some(samples) = run.samples {
        return empirical(&model, &query, evidence.is_some(), samples, run);
    }
    let report = asymptotic_report(&model, &query, evidence.as_ref())?;
    Ok(match run.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            s
        }
        Format::Table | Format::Csv => {
            let mut out = format!("query: {}\n", report.query);
            if let Some(e) = &report.evidence {
                let _ = writeln!(out, "evidence: {e}");
            }
            let _ = writeln!(out, "value: {}", report.value);
            for f in &report.flags {
                let _ = writeln!(out, "flag: {f}");
            }
            for row in &report.proposition_distribution {
                let v: Vec<String> = row
                    .valuation
                    .iter()
                    .map(|(k, b)| if *b { k.clone() } else { format!("!{k}") })
                    .collect();
                let _ = writeln!(out, "valuation {{{}}}: {}", v.join(", "), row.probability);
            }
            out
        }
    })
}

fn empirical(
    model: &relscale::RlrModel,
    query: &Formula,
    conditioned: bool,
    samples: usize,
    run: &RunArgs,
) -> Result<String> {
    if conditioned {
        bail!("the empirical check takes no evidence");
    }
    let seed = run.seed.ok_or_else(|| anyhow!("--seed is required when sampling"))?;
    let (_, ns) = run
        .sizes
        .clone()
        .ok_or_else(|| anyhow!("--sizes is required with --samples"))?;
    let rows = empirical_limit_check(model, query, &ns, samples, seed)?;
    Ok(match run.format.unwrap_or(Format::Csv) {
        Format::Csv | Format::Table => format!("# seed: {seed}\n# samples: {samples}\n{}", limit_csv(&rows)),
        Format::Json => pretty(&json!({
            "seed": seed,
            "samples": samples,
            "query": run.query()?,
            "rows": rows.iter().map(|r| json!({
                "n": r.n,
                "empirical": r.empirical,
                "algorithmic": r.algorithmic,
                "gap": r.gap,
                "tolerance": r.tolerance,
            })).collect::<Vec<_>>(),
        })),
    })
}

pub fn sample(path: &Path, run: &RunArgs) -> Result<String> {
    let model = rlr_model(load(path)?)?;
    let d = domains(&model.signature, run)?;
    let seed = run.seed.ok_or_else(|| anyhow!("--seed is required when sampling"))?;
    let count = run.samples.ok_or_else(|| anyhow!("--samples is required"))?;
    let batch = forward_sample(&model, &d, seed, count)?;
    Ok(write_samples(&batch, &model.signature))
}

pub fn learn(path: &Path, data: &Path, run: &RunArgs) -> Result<String> {
    let structure = rlr_model(load(path)?)?;
    let text = fs::read_to_string(data).with_context(|| format!("cannot read {}", data.display()))?;
    let sizes = run.size_map()?;
    let d = if sizes.is_empty() {
        None
    } else {
        Some(DomainAssignment::from_names(&structure.signature, &sizes, None)?)
    };
    let batch = read_samples(&text, &structure.signature, d.as_ref())?;
    let (learned, report) = learn_weights(&structure, &batch)?;
    for node in &report.nodes {
        for c in &node.clamped {
            eprintln!(
                "warning: node {} condition {} is unbounded, weight clamped to {}",
                node.node,
                c + 1,
                node.weights[*c]
            );
        }
    }
    Ok(match run.format.unwrap_or(Format::Table) {
        Format::Table | Format::Csv => {
            let mut out = String::new();
            if let Some(seed) = batch.seed {
                let _ = writeln!(out, "// seed: {seed}");
            }
            let _ = writeln!(out, "// learned from {} worlds", batch.len());
            for n in &report.nodes {
                let _ = writeln!(
                    out,
                    "// node {}: {} iterations, gradient norm {:e}{}",
                    n.node,
                    n.iterations,
                    n.gradient_norm,
                    if n.clamped.is_empty() { "" } else { ", clamped" }
                );
            }
            let _ = writeln!(out, "{learned}");
            out
        }
        Format::Json => pretty(&json!({
            "seed": batch.seed,
            "worlds": batch.len(),
            "model": learned.to_string(),
            "nodes": report.nodes.iter().map(|n| json!({
                "node": n.node,
                "weights": n.weights,
                "iterations": n.iterations,
                "gradient_norm": n.gradient_norm,
                "converged": n.converged,
                "clamped": n.clamped,
            })).collect::<Vec<_>>(),
        })),
    })
}

pub fn convert_model(path: &Path, run: &RunArgs, to: Target) -> Result<String> {
    let model = rlr_model(load(path)?)?;
    let d = domains(&model.signature, run)?;
    let direction = match to {
        Target::Unscaled => Direction::DaToUnscaled,
        Target::Da => Direction::UnscaledToDa,
    };
    Ok(format!("{}\n", convert(&model, &d, direction)))
}
