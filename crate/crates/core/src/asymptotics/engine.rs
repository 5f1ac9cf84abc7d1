use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::logic::{ConstId, Formula, RelId, Signature, SortId};
use crate::rlr::{derive_instance_nodes, sigmoid, substitute_constants, Mode, Node, RlrModel};

/// Free propositions enumerated by one `probability` evaluation.
pub const PROPOSITION_CAP: usize = 20;

/// Truth values for propositions, keyed by relation id.
pub type Valuation = BTreeMap<RelId, bool>;
/// Complete proposition valuations, each listed in index order, with their
/// limit probabilities.
pub type PropositionLaw = Vec<(Vec<(RelId, bool)>, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct ProportionRecord {
    pub formula: Formula,
    pub valuation: Vec<(RelId, bool)>,
    pub value: f64,
}

/// Limits of a domain-aware model as every domain grows. The generic
/// extension is built lazily: fresh constants and the instance nodes they
/// induce are added the first time a proportion needs them, and reused by
/// later proportions whose formulas do not already mention them.
pub struct AsymptoticEngine {
    base_relations: usize,
    sig: Signature,
    nodes: Vec<Node>,
    node_of: HashMap<RelId, usize>,
    index: Vec<Option<usize>>,
    ancestors: HashMap<RelId, Vec<RelId>>,
    pool: Vec<Vec<ConstId>>,
    cond_memo: HashMap<(RelId, Vec<bool>), f64>,
    proportion_memo: HashMap<(Formula, Vec<(RelId, bool)>), f64>,
    records: Vec<ProportionRecord>,
}

impl AsymptoticEngine {
    pub fn new(model: &RlrModel) -> Result<Self> {
        if model.mode() != Mode::DomainAware {
            let raw: Vec<String> = model
                .nodes
                .iter()
                .filter(|n| n.conditions.iter().any(|c| !c.proportional && c.is_scaled()))
                .map(|n| model.signature.relation(n.rel()).name.clone())
                .collect();
            return Err(Error::NoAsymptotics(format!(
                "raw conditions with variables in {}",
                raw.join(", ")
            )));
        }
        model.structure()?;
        let sig = (*model.signature).clone();
        let mut engine = AsymptoticEngine {
            base_relations: sig.num_relations(),
            pool: vec![Vec::new(); sig.num_sorts()],
            sig,
            nodes: model.nodes.clone(),
            node_of: HashMap::new(),
            index: Vec::new(),
            ancestors: HashMap::new(),
            cond_memo: HashMap::new(),
            proportion_memo: HashMap::new(),
            records: Vec::new(),
        };
        engine.sync();
        Ok(engine)
    }

    /// The signature of the extension built so far.
    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    /// Constants added to the extension so far.
    pub fn pool_constants(&self) -> Vec<ConstId> {
        let mut out: Vec<ConstId> = self.pool.iter().flatten().copied().collect();
        out.sort();
        out
    }

    /// Proportions evaluated so far, in evaluation order.
    pub fn records(&self) -> &[ProportionRecord] {
        &self.records
    }

    fn sync(&mut self) {
        for (i, n) in self.nodes.iter().enumerate().skip(self.node_of.len()) {
            self.node_of.insert(n.rel(), i);
        }
        self.index.resize(self.sig.num_relations(), None);
    }

    fn node(&self, rel: RelId) -> &Node {
        &self.nodes[self.node_of[&rel]]
    }

    fn is_prop(&self, rel: RelId) -> bool {
        self.sig.relation(rel).sorts.is_empty()
    }

    pub fn index_of(&mut self, rel: RelId) -> usize {
        if let Some(i) = self.index[rel.0] {
            return i;
        }
        let parents = self.node(rel).mentioned();
        let i = parents.into_iter().map(|p| self.index_of(p) + 1).max().unwrap_or(0);
        self.index[rel.0] = Some(i);
        i
    }

    pub fn formula_index(&mut self, f: &Formula) -> usize {
        f.relations().into_iter().map(|r| self.index_of(r)).max().unwrap_or(0)
    }

    fn order(&mut self, rels: impl IntoIterator<Item = RelId>) -> Vec<RelId> {
        let mut keyed: Vec<(usize, RelId)> = rels.into_iter().map(|r| (self.index_of(r), r)).collect();
        keyed.sort();
        keyed.dedup();
        keyed.into_iter().map(|(_, r)| r).collect()
    }

    /// Propositions strictly above `rel` in the DAG, reached through
    /// relations of any arity, in `(index, id)` order.
    fn prop_ancestors(&mut self, rel: RelId) -> Vec<RelId> {
        if let Some(a) = self.ancestors.get(&rel) {
            return a.clone();
        }
        let mut set = BTreeSet::new();
        for p in self.node(rel).mentioned() {
            if self.is_prop(p) {
                set.insert(p);
            }
            set.extend(self.prop_ancestors(p));
        }
        let out = self.order(set);
        self.ancestors.insert(rel, out.clone());
        out
    }

    /// Propositions among `rels` together with their proposition ancestors.
    fn closure(&mut self, rels: impl IntoIterator<Item = RelId>) -> Vec<RelId> {
        let mut set = BTreeSet::new();
        for r in rels {
            if self.is_prop(r) {
                set.insert(r);
            }
            set.extend(self.prop_ancestors(r));
        }
        self.order(set)
    }

    fn fresh(&mut self, sort: SortId, taken: &mut BTreeSet<ConstId>) -> ConstId {
        let c = match self.pool[sort.0].iter().find(|c| !taken.contains(c)) {
            Some(c) => *c,
            None => {
                let c = self.sig.add_pool_constants(sort, 1)[0];
                self.pool[sort.0].push(c);
                c
            }
        };
        taken.insert(c);
        c
    }

    /// Replaces the free variables of `formulas` by distinct constants that
    /// none of them mentions yet, one per variable name.
    fn ground(&mut self, formulas: &[&Formula]) -> Vec<Formula> {
        let mut taken: BTreeSet<ConstId> = formulas
            .iter()
            .flat_map(|f| f.relations())
            .flat_map(|r| self.sig.origin_of(r).constants().collect::<Vec<_>>())
            .collect();
        let mut map = BTreeMap::new();
        for f in formulas {
            for v in f.free_variables() {
                if let std::collections::btree_map::Entry::Vacant(e) = map.entry(v.name) {
                    e.insert(self.fresh(v.sort, &mut taken));
                }
            }
        }
        if map.is_empty() {
            return formulas.iter().map(|f| (*f).clone()).collect();
        }
        let out = formulas
            .iter()
            .map(|f| substitute_constants(&mut self.sig, f, &map))
            .collect();
        derive_instance_nodes(&mut self.sig, &mut self.nodes, false);
        self.sync();
        out
    }

    /// `sigmoid(sum_k w_k p_{psi_k, C})` for proposition `prop`; `val` must
    /// cover every proposition ancestor of `prop`.
    pub fn cond_probability(&mut self, prop: RelId, val: &Valuation) -> Result<f64> {
        let anc = self.prop_ancestors(prop);
        let key = (prop, anc.iter().map(|a| val[a]).collect::<Vec<_>>());
        if let Some(p) = self.cond_memo.get(&key) {
            return Ok(*p);
        }
        let ip = self.index_of(prop);
        let conds: Vec<(Formula, f64)> = self
            .node(prop)
            .conditions
            .iter()
            .map(|c| (c.formula.clone(), c.weight))
            .collect();
        let mut z = 0.0;
        for (psi, w) in conds {
            let i = self.formula_index(&psi);
            assert!(
                psi.relations().is_empty() || i < ip,
                "condition of index {i} under a proposition of index {ip}"
            );
            z += w * self.proportion(&psi, val)?;
        }
        let p = sigmoid(z);
        self.cond_memo.insert(key, p);
        Ok(p)
    }

    /// `p_{psi, C}`: the limiting proportion of tuples satisfying `psi` in
    /// worlds where the propositions in `val` hold as given.
    pub fn proportion(&mut self, psi: &Formula, val: &Valuation) -> Result<f64> {
        let closure = self.closure(psi.relations());
        let restricted: Vec<(RelId, bool)> = closure.iter().filter_map(|r| val.get(r).map(|b| (*r, *b))).collect();
        let key = (psi.clone(), restricted);
        if let Some(p) = self.proportion_memo.get(&key) {
            return Ok(*p);
        }
        let phi = self.ground(&[psi]).pop().expect("one formula in, one out");
        let fixed: Valuation = key.1.iter().copied().collect();
        let p = self.probability(&phi, &fixed, None)?;
        self.records.push(ProportionRecord {
            formula: psi.clone(),
            valuation: key.1.clone(),
            value: p,
        });
        self.proportion_memo.insert(key, p);
        Ok(p)
    }

    /// Limiting `P(phi | fixed, evidence)` for closed formulas, by the chain
    /// rule over the propositions they depend on.
    pub fn probability(&mut self, phi: &Formula, fixed: &Valuation, evidence: Option<&Formula>) -> Result<f64> {
        let mut rels: Vec<RelId> = phi.relations();
        if let Some(e) = evidence {
            rels.extend(e.relations());
        }
        rels.extend(fixed.keys().copied());
        if let Some(r) = rels.iter().find(|r| !self.is_prop(**r)) {
            return Err(Error::InvalidArgument(format!(
                "`{}` is not a proposition",
                self.sig.relation(*r).name
            )));
        }
        let order = self.closure(rels);
        let free = order.iter().filter(|r| !fixed.contains_key(r)).count();
        if free > PROPOSITION_CAP {
            return Err(Error::StateSpaceTooLarge {
                count: free,
                cap: PROPOSITION_CAP,
            });
        }
        let mut assign = Valuation::new();
        let (num, den) = self.chain(&order, 0, 1.0, &mut assign, fixed, phi, evidence)?;
        if den <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        Ok((num / den).clamp(0.0, 1.0))
    }

    #[allow(clippy::too_many_arguments)]
    fn chain(
        &mut self,
        order: &[RelId],
        i: usize,
        weight: f64,
        assign: &mut Valuation,
        fixed: &Valuation,
        phi: &Formula,
        evidence: Option<&Formula>,
    ) -> Result<(f64, f64)> {
        if weight == 0.0 {
            return Ok((0.0, 0.0));
        }
        if i == order.len() {
            let mut value = |a: &crate::logic::Atom| assign[&a.rel];
            if evidence.is_some_and(|e| !e.eval_with(&mut value)) {
                return Ok((0.0, 0.0));
            }
            let q = phi.eval_with(&mut value);
            return Ok((if q { weight } else { 0.0 }, weight));
        }
        let prop = order[i];
        let p = self.cond_probability(prop, assign)?;
        let values: &[bool] = match fixed.get(&prop) {
            Some(true) => &[true],
            Some(false) => &[false],
            None => &[true, false],
        };
        let (mut num, mut den) = (0.0, 0.0);
        for &v in values {
            assign.insert(prop, v);
            let (n, d) = self.chain(
                order,
                i + 1,
                weight * if v { p } else { 1.0 - p },
                assign,
                fixed,
                phi,
                evidence,
            )?;
            num += n;
            den += d;
        }
        assign.remove(&prop);
        Ok((num, den))
    }

    /// Propositions of the input model in `(index, id)` order.
    pub fn base_propositions(&mut self) -> Vec<RelId> {
        let props: Vec<RelId> = (0..self.base_relations)
            .map(RelId)
            .filter(|r| self.is_prop(*r))
            .collect();
        self.order(props)
    }

    /// Joint limiting law of the input model's propositions, one entry per
    /// complete valuation in `(index, id)` order with `true` first.
    pub fn proposition_distribution(&mut self) -> Result<PropositionLaw> {
        let props = self.base_propositions();
        if props.len() > PROPOSITION_CAP {
            return Err(Error::StateSpaceTooLarge {
                count: props.len(),
                cap: PROPOSITION_CAP,
            });
        }
        let mut out = Vec::with_capacity(1 << props.len());
        let mut assign = Valuation::new();
        self.joint(&props, 0, 1.0, &mut assign, &mut out)?;
        Ok(out)
    }

    fn joint(
        &mut self,
        props: &[RelId],
        i: usize,
        weight: f64,
        assign: &mut Valuation,
        out: &mut Vec<(Vec<(RelId, bool)>, f64)>,
    ) -> Result<()> {
        if i == props.len() {
            out.push((props.iter().map(|r| (*r, assign[r])).collect(), weight));
            return Ok(());
        }
        let p = if weight == 0.0 {
            0.0
        } else {
            self.cond_probability(props[i], assign)?
        };
        for v in [true, false] {
            assign.insert(props[i], v);
            self.joint(props, i + 1, weight * if v { p } else { 1.0 - p }, assign, out)?;
        }
        assign.remove(&props[i]);
        Ok(())
    }

    /// Limiting probability of `query` given `evidence`. Free variables of
    /// both stand for distinct generic elements shared between them.
    pub fn query(&mut self, query: &Formula, evidence: Option<&Formula>) -> Result<f64> {
        let mut grounded = match evidence {
            Some(e) => self.ground(&[query, e]),
            None => self.ground(&[query]),
        };
        let e = (grounded.len() == 2).then(|| grounded.pop().expect("two formulas"));
        let q = grounded.pop().expect("one formula");
        self.probability(&q, &Valuation::new(), e.as_ref())
    }

    /// True when the query's first-order part sits below a proposition it
    /// also mentions, so that proposition is marginalized rather than
    /// conditioned on.
    pub fn mixes_levels(&mut self, query: &Formula, evidence: Option<&Formula>) -> bool {
        let mut rels = query.relations();
        if let Some(e) = evidence {
            rels.extend(e.relations());
        }
        let (props, fo): (Vec<RelId>, Vec<RelId>) = rels.into_iter().partition(|r| self.is_prop(*r));
        if fo.is_empty() {
            return false;
        }
        let top = fo.into_iter().map(|r| self.index_of(r)).max().unwrap_or(0);
        props.into_iter().any(|p| self.index_of(p) > top)
    }
}
