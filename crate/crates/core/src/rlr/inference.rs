use std::collections::BTreeSet;
use std::sync::Arc;

use bitvec::prelude::*;

use super::model::{RlrModel, Structure};
use crate::error::{Error, Result};
use crate::logic::{
    check_cap, for_each_assignment, CompiledFormula, DomainAssignment, Formula, GroundLayout, RelId, World,
    DEFAULT_ATOM_CAP,
};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(z)` without overflow.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct CondKernel {
    pub compiled: CompiledFormula,
    /// Feature multiplier: `prod |D_y|` over set variables absent from the
    /// formula, divided by `|D|_V` when proportional.
    pub scale: f64,
    pub weight: f64,
    /// The formula mentions no head variable, so its count is shared by all
    /// groundings of the head.
    pub head_free: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct NodeKernel {
    pub radix: Vec<usize>,
    pub conds: Vec<CondKernel>,
}

impl NodeKernel {
    pub fn feature(&self, k: usize, bits: &BitSlice<u64, Lsb0>, head: &[usize]) -> f64 {
        let c = &self.conds[k];
        let n = if c.head_free {
            c.compiled.count(bits)
        } else {
            c.compiled.count_with_prefix(bits, head)
        };
        c.scale * n as f64
    }

    /// Logit contributions of the head-free conditions.
    pub fn shared_logit(&self, bits: &BitSlice<u64, Lsb0>) -> f64 {
        self.conds
            .iter()
            .filter(|c| c.head_free)
            .map(|c| c.weight * c.scale * c.compiled.count(bits) as f64)
            .sum()
    }

    pub fn logit_with_shared(&self, shared: f64, bits: &BitSlice<u64, Lsb0>, head: &[usize]) -> f64 {
        shared
            + self
                .conds
                .iter()
                .filter(|c| !c.head_free)
                .map(|c| c.weight * c.scale * c.compiled.count_with_prefix(bits, head) as f64)
                .sum::<f64>()
    }

    pub fn logit(&self, bits: &BitSlice<u64, Lsb0>, head: &[usize]) -> f64 {
        self.logit_with_shared(self.shared_logit(bits), bits, head)
    }

    pub fn num_groundings(&self) -> usize {
        self.radix.iter().product()
    }
}

/// Decodes the `t`-th head tuple (lexicographic, last position fastest).
pub(crate) fn decode_tuple(radix: &[usize], mut t: usize, out: &mut [usize]) {
    for i in (0..radix.len()).rev() {
        out[i] = t % radix[i];
        t /= radix[i];
    }
}

/// A model bound to fixed domain sizes, with every condition compiled.
#[derive(Clone, Debug)]
pub struct GroundRlr {
    structure: Structure,
    layout: Arc<GroundLayout>,
    kernels: Vec<NodeKernel>,
}

impl GroundRlr {
    pub fn new(model: &RlrModel, domains: DomainAssignment) -> Result<Self> {
        let layout = GroundLayout::new(model.signature.clone(), domains)?;
        Self::with_layout(model, layout)
    }

    pub fn with_layout(model: &RlrModel, layout: Arc<GroundLayout>) -> Result<Self> {
        if **layout.signature() != *model.signature {
            return Err(Error::InvalidArgument(
                "world signature differs from the model signature".into(),
            ));
        }
        let structure = model.structure()?;
        let domains = layout.domains().clone();
        let mut kernels = Vec::with_capacity(model.signature.num_relations());
        for r in 0..model.signature.num_relations() {
            let node = &model.nodes[structure.node_of[r]];
            let head_vars = node.head_vars();
            let radix = head_vars.iter().map(|v| domains.size(v.sort)).collect();
            let mut conds = Vec::with_capacity(node.conditions.len());
            for c in &node.conditions {
                let head_free = !head_vars.iter().any(|v| c.formula.mentions_var(&v.name));
                let (used, absent): (Vec<_>, Vec<_>) =
                    c.over.iter().cloned().partition(|v| c.formula.mentions_var(&v.name));
                let mut slots = if head_free { vec![] } else { head_vars.clone() };
                slots.extend(used);
                let compiled = CompiledFormula::new(&c.formula, &layout, &slots)?;
                let scale = domains.product(&absent) as f64 / c.divisor(&domains);
                conds.push(CondKernel {
                    compiled,
                    scale,
                    weight: c.weight,
                    head_free,
                });
            }
            kernels.push(NodeKernel { radix, conds });
        }
        Ok(GroundRlr {
            structure,
            layout,
            kernels,
        })
    }

    pub fn layout(&self) -> &Arc<GroundLayout> {
        &self.layout
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub(crate) fn kernel(&self, rel: RelId) -> &NodeKernel {
        &self.kernels[rel.0]
    }

    /// `P(rel(head) | parents)` read off `bits`, which must interpret every
    /// parent atom the conditions touch.
    pub fn conditional_probability(&self, bits: &BitSlice<u64, Lsb0>, rel: RelId, head: &[usize]) -> f64 {
        sigmoid(self.kernels[rel.0].logit(bits, head))
    }

    fn for_each_atom(&self, bits: &BitSlice<u64, Lsb0>, mut f: impl FnMut(usize, f64)) {
        for rel in &self.structure.order {
            let k = &self.kernels[rel.0];
            let shared = k.shared_logit(bits);
            let start = self.layout.relation_range(*rel).start;
            let mut head = vec![0usize; k.radix.len()];
            for t in 0..k.num_groundings() {
                decode_tuple(&k.radix, t, &mut head);
                f(start + t, k.logit_with_shared(shared, bits, &head));
            }
        }
    }

    /// Product over ground atoms, in index order, of the conditional
    /// probability of the atom's value in `bits`.
    pub fn world_probability(&self, bits: &BitSlice<u64, Lsb0>) -> f64 {
        let mut p = 1.0;
        self.for_each_atom(bits, |i, z| {
            let s = sigmoid(z);
            p *= if bits[i] { s } else { 1.0 - s };
        });
        p
    }

    pub fn log_world_probability(&self, bits: &BitSlice<u64, Lsb0>) -> f64 {
        let mut lp = 0.0;
        self.for_each_atom(bits, |i, z| {
            lp += if bits[i] { log_sigmoid(z) } else { log_sigmoid(-z) };
        });
        lp
    }

    /// Ground atoms that the conditional probability of atom `index` reads.
    fn parent_atoms(&self, index: usize, out: &mut Vec<usize>) {
        let (rel, head) = self.layout.atom_at(index);
        for c in &self.kernels[rel.0].conds {
            let slots = c.compiled.slots();
            let k = if c.head_free { 0 } else { head.len() };
            let radix: Vec<usize> = slots[k..].iter().map(|v| self.layout.domains().size(v.sort)).collect();
            let mut buf = head[..k].to_vec();
            buf.resize(slots.len(), 0);
            for_each_assignment(&radix, |rest| {
                buf[k..].copy_from_slice(rest);
                c.compiled.atom_indices(&buf, out);
            });
        }
    }

    /// Ancestor closure of `seeds`, in evaluation order.
    pub fn ancestor_closure(&self, seeds: &[usize]) -> Vec<usize> {
        let mut seen: BTreeSet<usize> = seeds.iter().copied().collect();
        let mut stack: Vec<usize> = seen.iter().copied().collect();
        let mut buf = Vec::new();
        while let Some(i) = stack.pop() {
            buf.clear();
            self.parent_atoms(i, &mut buf);
            for &j in &buf {
                if seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        let mut out: Vec<usize> = seen.into_iter().collect();
        out.sort_by_key(|&i| {
            let (rel, _) = self.layout.atom_at(i);
            (self.structure.index[rel.0], i)
        });
        out
    }

    /// `P(query | evidence)` by enumerating the ancestor closure of the
    /// query and evidence atoms.
    pub fn query_probability(&self, query: &Formula, evidence: Option<&Formula>, cap: usize) -> Result<f64> {
        let q = CompiledFormula::new(query, &self.layout, &[])?;
        let e = evidence
            .map(|f| CompiledFormula::new(f, &self.layout, &[]))
            .transpose()?;
        let mut seeds = Vec::new();
        q.atom_indices(&[], &mut seeds);
        if let Some(e) = &e {
            e.atom_indices(&[], &mut seeds);
        }
        let order = self.ancestor_closure(&seeds);
        check_cap(order.len(), cap)?;
        let mut bits = bitvec![u64, Lsb0; 0; self.layout.num_atoms()];
        let (mut num, mut den) = (0.0, 0.0);
        self.enumerate(&order, 0, 1.0, &mut bits, &mut |bits, p| {
            if e.as_ref().is_none_or(|e| e.eval(bits, &[])) {
                den += p;
                if q.eval(bits, &[]) {
                    num += p;
                }
            }
        });
        if den <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        Ok((num / den).clamp(0.0, 1.0))
    }

    fn enumerate(
        &self,
        order: &[usize],
        k: usize,
        p: f64,
        bits: &mut BitVec<u64, Lsb0>,
        leaf: &mut dyn FnMut(&BitSlice<u64, Lsb0>, f64),
    ) {
        if k == order.len() {
            leaf(bits, p);
            return;
        }
        let i = order[k];
        let (rel, head) = self.layout.atom_at(i);
        let s = self.conditional_probability(bits, rel, &head);
        bits.set(i, true);
        self.enumerate(order, k + 1, p * s, bits, leaf);
        bits.set(i, false);
        self.enumerate(order, k + 1, p * (1.0 - s), bits, leaf);
    }
}

/// Conditional probability of the ground atom `rel(head)` given the parent
/// atoms of `world`.
pub fn conditional_probability(model: &RlrModel, rel: RelId, head: &[usize], world: &World) -> Result<f64> {
    let g = GroundRlr::with_layout(model, world.layout().clone())?;
    let arity = model.signature.relation(rel).arity();
    if head.len() != arity {
        return Err(Error::SortMismatch(format!(
            "`{}` expects {arity} arguments",
            model.signature.relation(rel).name
        )));
    }
    world.layout().index_of(rel, head)?;
    Ok(g.conditional_probability(world.bits(), rel, head))
}

pub fn world_probability(model: &RlrModel, world: &World) -> Result<f64> {
    let g = GroundRlr::with_layout(model, world.layout().clone())?;
    Ok(g.world_probability(world.bits()))
}

/// Exact `P(query | evidence)` for ground formulas.
pub fn query_probability(
    model: &RlrModel,
    domains: &DomainAssignment,
    query: &Formula,
    evidence: Option<&Formula>,
) -> Result<f64> {
    GroundRlr::new(model, domains.clone())?.query_probability(query, evidence, DEFAULT_ATOM_CAP)
}
