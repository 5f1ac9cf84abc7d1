use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::inference::{decode_tuple, sigmoid, GroundRlr};
use super::model::RlrModel;
use crate::error::{Error, Result};
use crate::logic::{DomainAssignment, GroundLayout, Signature, World};

/// Worlds drawn from one model at one set of domain sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub worlds: Vec<World>,
    pub seed: Option<u64>,
    pub domains: DomainAssignment,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }
}

/// Random stream of sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl GroundRlr {
    /// Draws one world, atoms in evaluation order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> World {
        let mut world = World::empty(self.layout().clone());
        for rel in self.structure().order.clone() {
            let k = self.kernel(rel);
            let start = self.layout().relation_range(rel).start;
            let shared = k.shared_logit(world.bits());
            let mut head = vec![0usize; k.radix.len()];
            for t in 0..k.num_groundings() {
                decode_tuple(&k.radix, t, &mut head);
                let p = sigmoid(k.logit_with_shared(shared, world.bits(), &head));
                let u: f64 = rng.random();
                if u < p {
                    world.bits_mut().set(start + t, true);
                }
            }
        }
        world
    }
}

/// `count` independent worlds; sample `i` uses stream `i` of `seed`, so the
/// batch does not depend on scheduling.
pub fn forward_sample(model: &RlrModel, domains: &DomainAssignment, seed: u64, count: usize) -> Result<SampleBatch> {
    let g = GroundRlr::new(model, domains.clone())?;
    let worlds = (0..count)
        .into_par_iter()
        .map(|i| g.sample(&mut sample_rng(seed, i as u64)))
        .collect();
    Ok(SampleBatch {
        worlds,
        seed: Some(seed),
        domains: domains.clone(),
    })
}

/// Sum of log world probabilities over the batch.
pub fn log_likelihood(model: &RlrModel, batch: &SampleBatch) -> Result<f64> {
    let g = GroundRlr::new(model, batch.domains.clone())?;
    let mut total = 0.0;
    for w in &batch.worlds {
        if *w.layout().domains() != batch.domains || **w.signature() != *model.signature {
            return Err(Error::InvalidArgument("batch world does not match the model".into()));
        }
        total += g.log_world_probability(w.bits());
    }
    Ok(total)
}

/// Line-delimited batch: `#` header lines with seed and sizes, then one
/// canonical record per world.
pub fn write_samples(batch: &SampleBatch, signature: &Signature) -> String {
    let mut out = String::new();
    if let Some(seed) = batch.seed {
        let _ = writeln!(out, "# seed: {seed}");
    }
    for (id, name) in signature.sorts() {
        let _ = writeln!(out, "# size {name}={}", batch.domains.size(id));
    }
    for w in &batch.worlds {
        out.push_str(&w.to_record());
        out.push('\n');
    }
    out
}

fn parse_atom(sig: &Signature, layout: &GroundLayout, text: &str, line: usize) -> Result<usize> {
    let bad = |message: String| Error::SampleFormat { line, message };
    let (name, elems) = match text.find('(') {
        None => (text, vec![]),
        Some(open) => {
            let inner = text[open..]
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| bad(format!("malformed atom `{text}`")))?;
            let elems = inner
                .split(',')
                .map(|e| {
                    e.trim()
                        .strip_prefix('e')
                        .and_then(|d| d.parse::<usize>().ok())
                        .filter(|k| *k >= 1)
                        .map(|k| k - 1)
                        .ok_or_else(|| bad(format!("malformed element `{e}` in `{text}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            (&text[..open], elems)
        }
    };
    let rel = sig
        .relation_id(name.trim())
        .ok_or_else(|| bad(format!("unknown relation `{name}`")))?;
    layout.index_of(rel, &elems).map_err(|e| bad(e.to_string()))
}

/// Reads a batch written by [`write_samples`]. Sizes come from the header
/// unless `domains` is given.
pub fn read_samples(text: &str, signature: &Arc<Signature>, domains: Option<&DomainAssignment>) -> Result<SampleBatch> {
    let mut seed = None;
    let mut sizes = std::collections::BTreeMap::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(comment) = line.strip_prefix('#') {
            let c = comment.trim();
            if let Some(s) = c.strip_prefix("seed:") {
                seed = Some(s.trim().parse::<u64>().map_err(|_| Error::SampleFormat {
                    line: lineno,
                    message: format!("malformed seed `{}`", s.trim()),
                })?);
            } else if let Some(s) = c.strip_prefix("size ") {
                let (name, n) = s.split_once('=').ok_or_else(|| Error::SampleFormat {
                    line: lineno,
                    message: format!("malformed size `{s}`"),
                })?;
                let n = n.trim().parse::<usize>().map_err(|_| Error::SampleFormat {
                    line: lineno,
                    message: format!("malformed size `{s}`"),
                })?;
                sizes.insert(name.trim().to_string(), n);
            }
            continue;
        }
        records.push((lineno, line));
    }
    let domains = match domains {
        Some(d) => d.clone(),
        None => DomainAssignment::from_names(signature, &sizes, None)?,
    };
    let layout = GroundLayout::new(signature.clone(), domains.clone())?;
    let mut worlds = Vec::with_capacity(records.len());
    for (lineno, line) in records {
        let mut w = World::empty(layout.clone());
        for atom in line.split(';').map(str::trim).filter(|a| !a.is_empty()) {
            let idx = parse_atom(signature, &layout, atom, lineno)?;
            w.set(idx, true);
        }
        worlds.push(w);
    }
    Ok(SampleBatch { worlds, seed, domains })
}
