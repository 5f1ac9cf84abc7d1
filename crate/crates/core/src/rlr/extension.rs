use std::collections::BTreeMap;
use std::sync::Arc;

use super::model::{Condition, Node, RlrModel};
use crate::error::{Error, Result};
use crate::logic::{Arg, Atom, ConstId, Formula, Origin, RelId, Signature, SortId, Term};

/// Rewrites `formula` with the variables in `subst` replaced by constants;
/// atoms touching a constant move to the corresponding instance symbol.
pub(crate) fn substitute_constants(
    sig: &mut Signature,
    formula: &Formula,
    subst: &BTreeMap<String, ConstId>,
) -> Formula {
    formula.map_atoms(&mut |a| Formula::Atom(substitute_atom(sig, a, subst)))
}

pub(crate) fn substitute_atom(sig: &mut Signature, atom: &Atom, subst: &BTreeMap<String, ConstId>) -> Atom {
    let args: Vec<Arg<Term>> = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => match subst.get(&v.name) {
                Some(c) => Arg::Const(*c),
                None => Arg::Term(t.clone()),
            },
            Term::Elem(_) => Arg::Term(t.clone()),
        })
        .collect();
    let (rel, rest) = sig
        .instantiate(atom.rel, &args)
        .expect("arity preserved by substitution");
    Atom::new(rel, rest)
}

/// Node of the instance symbol `rel`, obtained from the node of its base
/// relation by substituting the pattern's constants for head variables.
fn derive_node(sig: &mut Signature, base: &Node, origin: &Origin, rel: RelId) -> Option<Node> {
    let head_vars = base.head_vars();
    if head_vars.len() != base.head.args.len() || base.rel() != origin.base {
        return None;
    }
    let mut subst = BTreeMap::new();
    let mut rest = Vec::new();
    for (v, slot) in head_vars.iter().zip(&origin.pattern) {
        match slot {
            Some(c) => {
                subst.insert(v.name.clone(), *c);
            }
            None => rest.push(Term::Var(v.clone())),
        }
    }
    let conditions = base
        .conditions
        .iter()
        .map(|c| Condition {
            formula: substitute_constants(sig, &c.formula, &subst),
            weight: c.weight,
            over: c.over.clone(),
            proportional: c.proportional,
        })
        .collect();
    Some(Node {
        head: Atom::new(rel, rest),
        conditions,
        parents: None,
    })
}

/// Adds nodes for instance symbols that have none, deriving them from their
/// base nodes, until every instance reachable this way has a node. With
/// `all_patterns`, first creates an instance for every sort-matching
/// placement of every constant into every base relation.
pub(crate) fn derive_instance_nodes(sig: &mut Signature, nodes: &mut Vec<Node>, all_patterns: bool) {
    if sig.constants().len() == 0 {
        return;
    }
    if all_patterns {
        let bases: Vec<RelId> = sig
            .relations()
            .filter(|(_, r)| r.origin.is_none())
            .map(|(id, _)| id)
            .collect();
        for base in bases {
            let sorts = sig.relation(base).sorts.clone();
            let options: Vec<Vec<Option<ConstId>>> = sorts
                .iter()
                .map(|s| {
                    std::iter::once(None)
                        .chain(sig.constants().filter(|(_, c)| c.sort == *s).map(|(id, _)| Some(id)))
                        .collect()
                })
                .collect();
            let radix: Vec<usize> = options.iter().map(Vec::len).collect();
            let mut patterns = Vec::new();
            crate::logic::for_each_assignment(&radix, |a| {
                let pattern: Vec<_> = a.iter().zip(&options).map(|(i, o)| o[*i]).collect();
                if pattern.iter().any(Option::is_some) {
                    patterns.push(pattern);
                }
            });
            for pattern in patterns {
                sig.intern(Origin { base, pattern });
            }
        }
    }
    let mut i = 0;
    while i < sig.num_relations() {
        let rel = RelId(i);
        i += 1;
        let Some(origin) = sig.relation(rel).origin.clone() else {
            continue;
        };
        if nodes.iter().any(|n| n.rel() == rel) {
            continue;
        }
        let Some(base) = nodes.iter().find(|n| n.rel() == origin.base).cloned() else {
            continue;
        };
        if let Some(node) = derive_node(sig, &base, &origin, rel) {
            nodes.push(node);
        }
    }
}

/// Generic extension of a valid model by fresh constants, one per entry of
/// `sorts`: every relation gets instance symbols for every sort-matching
/// placement of constants, with labels rewritten accordingly. Returns the
/// extended model and the new constants.
pub fn generic_extension_with_constants(model: &RlrModel, sorts: &[SortId]) -> Result<(RlrModel, Vec<ConstId>)> {
    model.structure()?;
    let mut sig = (*model.signature).clone();
    for s in sorts {
        if s.0 >= sig.num_sorts() {
            return Err(Error::SortMismatch(format!("sort #{} is not declared", s.0)));
        }
    }
    let mut fresh = Vec::with_capacity(sorts.len());
    for s in sorts {
        fresh.extend(sig.add_pool_constants(*s, 1));
    }
    let mut nodes = model.nodes.clone();
    if !sorts.is_empty() {
        derive_instance_nodes(&mut sig, &mut nodes, true);
    }
    let ext = RlrModel::new(Arc::new(sig), nodes);
    ext.structure()?;
    Ok((ext, fresh))
}

/// Generic extension by one fresh constant per entry of `sorts`.
pub fn generic_extension(model: &RlrModel, sorts: &[SortId]) -> Result<RlrModel> {
    generic_extension_with_constants(model, sorts).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_model, Model};

    fn rlr(text: &str) -> RlrModel {
        match parse_model(text).unwrap() {
            Model::Rlr(m) => m,
            _ => unreachable!(),
        }
    }

    fn parents(m: &RlrModel, name: &str) -> Vec<String> {
        let sig = &m.signature;
        let mut v: Vec<String> = m
            .node(sig.relation_id(name).unwrap())
            .unwrap()
            .mentioned()
            .iter()
            .map(|r| sig.relation(*r).name.clone())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn same_variable_gives_disjoint_chains() {
        let m = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(x); } }");
        let ext = generic_extension(&m, &[SortId(0)]).unwrap();
        assert_eq!(parents(&ext, "Q"), ["R"]);
        assert_eq!(parents(&ext, "Q_a1"), ["R_a1"]);
        assert!(parents(&ext, "R_a1").is_empty());
        assert!(ext
            .signature
            .relation(ext.signature.relation_id("Q_a1").unwrap())
            .is_proposition());
    }

    #[test]
    fn other_variable_is_left_unchanged() {
        let m = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y); } }");
        let ext = generic_extension(&m, &[SortId(0)]).unwrap();
        assert_eq!(parents(&ext, "Q"), ["R"]);
        assert_eq!(parents(&ext, "Q_a1"), ["R"]);
        assert!(parents(&ext, "R_a1").is_empty());
    }

    #[test]
    fn zero_constants_is_identity() {
        let m = rlr("pred R(s); pred Q(s); rlr { node R(x) { 0 : true; } node Q(x) { 1 : R(y); } }");
        assert_eq!(generic_extension(&m, &[]).unwrap(), m);
    }

    #[test]
    fn binary_relations_get_all_placements() {
        let m = rlr("pred E(s, s); pred Q(s); rlr { node E(x, y) { 0 : true; } node Q(x) { 1 : E(x, y); } }");
        let ext = generic_extension(&m, &[SortId(0), SortId(0)]).unwrap();
        let sig = &ext.signature;
        // E: 3 * 3 - 1 instances, Q: 2
        assert_eq!(sig.num_relations(), 2 + 8 + 2);
        assert_eq!(parents(&ext, "Q_a1"), ["E_a1_"]);
        assert!(ext.validate().is_empty());
    }
}
