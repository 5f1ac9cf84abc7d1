//! Exact limits of domain-aware relational logistic regression as every
//! domain grows without bound, and a sampling check against them.
//!
//! A proportion `p_{psi,C}` is the probability of `psi` with its free
//! variables replaced by fresh constants, in the generic extension by those
//! constants, given the proposition values `C`. Propositions are evaluated
//! by the chain rule in index order, each conditional being the sigmoid of
//! the weighted proportions of its conditions. Every condition of a
//! proposition has lower index, so the recursion ends at the roots.

mod empirical;
mod engine;

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use empirical::{empirical_limit_check, limit_csv, world_proportion, LimitRow, EXACT_TUPLE_LIMIT, TUPLE_SAMPLES};
pub use engine::{AsymptoticEngine, ProportionRecord, PropositionLaw, Valuation, PROPOSITION_CAP};

use crate::error::{Error, Result};
use crate::logic::{Formula, RelId, Signature};
use crate::rlr::RlrModel;

pub fn asymptotic_query(model: &RlrModel, query: &Formula, evidence: Option<&Formula>) -> Result<f64> {
    AsymptoticEngine::new(model)?.query(query, evidence)
}

pub fn asymptotic_proportion(model: &RlrModel, psi: &Formula, valuation: &Valuation) -> Result<f64> {
    if let Some(r) = valuation
        .keys()
        .find(|r| !model.signature.relation(**r).sorts.is_empty())
    {
        return Err(Error::InvalidArgument(format!(
            "`{}` is not a proposition",
            model.signature.relation(*r).name
        )));
    }
    AsymptoticEngine::new(model)?.proportion(psi, valuation)
}

pub fn asymptotic_proposition_distribution(model: &RlrModel) -> Result<PropositionLaw> {
    AsymptoticEngine::new(model)?.proposition_distribution()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValuationRow {
    pub valuation: BTreeMap<String, bool>,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProportionRow {
    pub formula: String,
    pub valuation: BTreeMap<String, bool>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub model_sha256: String,
    pub constants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub query: String,
    pub evidence: Option<String>,
    pub value: f64,
    pub proposition_distribution: Vec<ValuationRow>,
    pub proportion_table: Vec<ProportionRow>,
    pub flags: Vec<String>,
    pub provenance: Provenance,
}

fn named(sig: &Signature, v: &[(RelId, bool)]) -> BTreeMap<String, bool> {
    v.iter().map(|(r, b)| (sig.relation(*r).name.clone(), *b)).collect()
}

/// Hex SHA-256 of the model's canonical text.
pub fn model_hash(model: &RlrModel) -> String {
    Sha256::digest(model.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// The query's limit together with the proposition law, every proportion
/// evaluated on the way and the constants the extension needed.
pub fn asymptotic_report(model: &RlrModel, query: &Formula, evidence: Option<&Formula>) -> Result<AsymptoticReport> {
    let mut engine = AsymptoticEngine::new(model)?;
    let law = engine.proposition_distribution()?;
    let value = engine.query(query, evidence)?;
    let mut flags = Vec::new();
    if engine.mixes_levels(query, evidence) {
        flags.push("marginalized".to_string());
    }
    if law.iter().any(|(_, p)| *p == 0.0) {
        flags.push("zero-probability-valuation".to_string());
    }
    let sig = engine.signature();
    Ok(AsymptoticReport {
        query: query.display(&model.signature).to_string(),
        evidence: evidence.map(|e| e.display(&model.signature).to_string()),
        value,
        proposition_distribution: law
            .iter()
            .map(|(v, p)| ValuationRow {
                valuation: named(sig, v),
                probability: *p,
            })
            .collect(),
        proportion_table: engine
            .records()
            .iter()
            .map(|r| ProportionRow {
                formula: r.formula.display(sig).to_string(),
                valuation: named(sig, &r.valuation),
                value: r.value,
            })
            .collect(),
        flags,
        provenance: Provenance {
            model_sha256: model_hash(model),
            constants: engine
                .pool_constants()
                .into_iter()
                .map(|c| sig.constant(c).name.clone())
                .collect(),
        },
    })
}
