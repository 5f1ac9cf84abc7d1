use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use super::engine::AsymptoticEngine;
use crate::error::{Error, Result};
use crate::logic::{for_each_assignment, CompiledFormula, DomainAssignment, Formula, World};
use crate::rlr::{forward_sample, sample_rng, RlrModel};

/// Worlds with at most this many distinct-element tuples are counted
/// exactly; larger ones use `TUPLE_SAMPLES` random tuples.
pub const EXACT_TUPLE_LIMIT: usize = 100_000;
pub const TUPLE_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitRow {
    pub n: usize,
    pub empirical: f64,
    pub algorithmic: f64,
    pub gap: f64,
    /// Three binomial standard deviations of the empirical column.
    pub tolerance: f64,
}

/// Number of tuples of pairwise distinct elements (per sort) for `radix`
/// positions whose sorts are `sorts`.
fn injective_tuples(sorts: &[usize], radix: &[usize]) -> f64 {
    let mut used = std::collections::BTreeMap::new();
    let mut total = 1.0;
    for (s, n) in sorts.iter().zip(radix) {
        let k = used.entry(*s).or_insert(0usize);
        total *= n.saturating_sub(*k) as f64;
        *k += 1;
    }
    total
}

fn injective(sorts: &[usize], t: &[usize]) -> bool {
    (0..t.len()).all(|i| (0..i).all(|j| sorts[i] != sorts[j] || t[i] != t[j]))
}

/// Fraction of distinct-element tuples satisfying `query` in `world`.
pub fn world_proportion(world: &World, query: &Formula, seed: u64, stream: u64) -> Result<f64> {
    let vars = query.free_variables();
    let f = CompiledFormula::new(query, world.layout(), &vars)?;
    let bits = world.bits();
    let sorts: Vec<usize> = vars.iter().map(|v| v.sort.0).collect();
    let radix: Vec<usize> = vars.iter().map(|v| world.layout().domains().size(v.sort)).collect();
    let total = injective_tuples(&sorts, &radix);
    if total == 0.0 {
        return Err(Error::InvalidArgument(
            "domains are too small for distinct query elements".into(),
        ));
    }
    if total <= EXACT_TUPLE_LIMIT as f64 {
        let mut hits = 0usize;
        for_each_assignment(&radix, |t| {
            if injective(&sorts, t) && f.eval(bits, t) {
                hits += 1;
            }
        });
        return Ok(hits as f64 / total);
    }
    let mut rng = sample_rng(!seed, stream);
    let mut t = vec![0usize; radix.len()];
    let mut hits = 0usize;
    for _ in 0..TUPLE_SAMPLES {
        loop {
            for (slot, n) in t.iter_mut().zip(&radix) {
                *slot = rng.random_range(0..*n);
            }
            if injective(&sorts, &t) {
                break;
            }
        }
        if f.eval(bits, &t) {
            hits += 1;
        }
    }
    Ok(hits as f64 / TUPLE_SAMPLES as f64)
}

/// Sampled worlds at each size (every sort of size `n`) against the limit.
/// The empirical value averages per-world tuple proportions, or frequencies
/// for queries without variables.
pub fn empirical_limit_check(
    model: &RlrModel,
    query: &Formula,
    sizes: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<LimitRow>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is needed".into()));
    }
    let algorithmic = AsymptoticEngine::new(model)?.query(query, None)?;
    let first_order = !query.free_variables().is_empty();
    sizes
        .iter()
        .map(|&n| {
            let d = DomainAssignment::uniform(&model.signature, n)?;
            let batch = forward_sample(model, &d, seed, samples)?;
            let values = batch
                .worlds
                .par_iter()
                .enumerate()
                .map(|(i, w)| world_proportion(w, query, seed, i as u64))
                .collect::<Result<Vec<f64>>>()?;
            let empirical = values.iter().sum::<f64>() / samples as f64;
            let spread = if first_order { samples * n } else { samples };
            Ok(LimitRow {
                n,
                empirical,
                algorithmic,
                gap: (empirical - algorithmic).abs(),
                tolerance: 3.0 * (0.25 / spread as f64).sqrt(),
            })
        })
        .collect()
}

pub fn limit_csv(rows: &[LimitRow]) -> String {
    let mut out = String::from("n,empirical,algorithmic,gap,tolerance\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.n, r.empirical, r.algorithmic, r.gap, r.tolerance
        )
        .unwrap();
    }
    out
}
