use std::fmt::Write as _;

use rayon::prelude::*;

use super::distribution::query_probability;
use super::factorized::factorized_probability;
use super::model::MlnModel;
use crate::error::{Error, Result};
use crate::logic::{DomainAssignment, Formula, SortId, DEFAULT_ATOM_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Enumerate,
    Factorized,
}

impl Engine {
    pub fn keyword(self) -> &'static str {
        match self {
            Engine::Enumerate => "enumerate",
            Engine::Factorized => "factorized",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "enumerate" => Some(Engine::Enumerate),
            "factorized" => Some(Engine::Factorized),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub probability: f64,
}

/// Answers a query with the chosen engine. Free query variables stand for
/// distinct generic elements.
pub fn probability(
    model: &MlnModel,
    domains: &DomainAssignment,
    query: &Formula,
    evidence: Option<&Formula>,
    engine: Engine,
) -> Result<f64> {
    let query = query.ground_free_variables();
    let evidence = evidence.map(Formula::ground_free_variables);
    match engine {
        Engine::Enumerate => query_probability(model, domains, &query, evidence.as_ref(), DEFAULT_ATOM_CAP),
        Engine::Factorized => factorized_probability(model, domains, &query, evidence.as_ref()),
    }
}

/// One row per `n`: the swept sort (every sort when `sort` is `None`) has
/// size `n`, the others keep their size in `base`. Rows keep the order of
/// `ns`.
pub fn domain_sweep(
    model: &MlnModel,
    base: &DomainAssignment,
    sort: Option<SortId>,
    ns: &[usize],
    query: &Formula,
    evidence: Option<&Formula>,
    engine: Engine,
) -> Result<Vec<SweepRow>> {
    if base.sizes().len() != model.signature.num_sorts() {
        return Err(Error::InvalidArgument("domain sizes do not match the signature".into()));
    }
    ns.par_iter()
        .map(|&n| {
            let sizes = base
                .sizes()
                .iter()
                .enumerate()
                .map(|(s, k)| if sort.is_none_or(|t| t.0 == s) { n } else { *k })
                .collect();
            let d = DomainAssignment::new(sizes)?;
            Ok(SweepRow {
                n,
                probability: probability(model, &d, query, evidence, engine)?,
            })
        })
        .collect()
}

/// `n,probability` rows with round-trip float formatting.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n,probability\n");
    for r in rows {
        writeln!(out, "{},{}", r.n, r.probability).unwrap();
    }
    out
}
