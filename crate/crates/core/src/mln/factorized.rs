//! Lifted evaluation of `ln Z` by recursive block decomposition.
//!
//! At each level every unforced proposition that a factor mentions is
//! enumerated. The remaining factors split into components that share no
//! relation. A component decomposes along one sort `s` when each factor has
//! a variable `x_f` of sort `s` that occurs exactly once in each of its
//! atoms, always at the same argument position `p_R` of a given relation
//! `R`. Fixing `x_f = e` then isolates the block of atoms with `e` at
//! position `p_R`. Blocks without forced atoms are isomorphic, so each such
//! block is solved once and counted `n - k` times.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::LN_2;

use super::distribution::{effective_weights, log_sum_exp};
use super::model::MlnModel;
use crate::error::{Error, Result};
use crate::logic::{Atom, DomainAssignment, Formula, RelId, SortId, Term, Var};

/// Unforced propositions enumerated at one level.
pub const PROPOSITION_CAP: usize = 20;

type Table = BTreeMap<RelId, Vec<SortId>>;
type Forced = BTreeMap<(RelId, Vec<usize>), bool>;

#[derive(Clone, Debug)]
struct Factor {
    weight: f64,
    formula: Formula,
    /// Unbound variables of the factor, each ranging over its whole sort.
    vars: Vec<Var>,
}

/// Constant folding under a partial valuation of atoms.
fn simplify(f: &Formula, value: &dyn Fn(&Atom) -> Option<bool>) -> Formula {
    use Formula::*;
    match f {
        True | False => f.clone(),
        Atom(a) => match value(a) {
            Some(true) => True,
            Some(false) => False,
            None => f.clone(),
        },
        Not(x) => match simplify(x, value) {
            True => False,
            False => True,
            g => Formula::not(g),
        },
        And(l, r) => match (simplify(l, value), simplify(r, value)) {
            (False, _) | (_, False) => False,
            (True, g) | (g, True) => g,
            (a, b) => Formula::and(a, b),
        },
        Or(l, r) => match (simplify(l, value), simplify(r, value)) {
            (True, _) | (_, True) => True,
            (False, g) | (g, False) => g,
            (a, b) => Formula::or(a, b),
        },
        Implies(l, r) => match (simplify(l, value), simplify(r, value)) {
            (False, _) | (_, True) => True,
            (True, g) => g,
            (g, False) => Formula::not(g),
            (a, b) => Formula::implies(a, b),
        },
    }
}

struct Solver<'a> {
    domains: &'a DomainAssignment,
}

impl Solver<'_> {
    fn atoms_of(&self, sorts: &[SortId]) -> f64 {
        sorts.iter().map(|s| self.domains.size(*s) as f64).product()
    }

    fn groundings(&self, vars: &[Var]) -> f64 {
        vars.iter().map(|v| self.domains.size(v.sort) as f64).product()
    }

    fn solve(&self, table: &Table, factors: &[Factor], forced: &Forced) -> Result<f64> {
        let mut props: Vec<RelId> = Vec::new();
        for f in factors {
            for a in f.formula.atoms() {
                if table[&a.rel].is_empty() && !forced.contains_key(&(a.rel, vec![])) && !props.contains(&a.rel) {
                    props.push(a.rel);
                }
            }
        }
        props.sort();
        if props.len() > PROPOSITION_CAP {
            return Err(Error::StateSpaceTooLarge {
                count: props.len(),
                cap: PROPOSITION_CAP,
            });
        }
        let mut terms = Vec::with_capacity(1 << props.len());
        for v in 0..1usize << props.len() {
            let value = |a: &Atom| -> Option<bool> {
                if !table[&a.rel].is_empty() {
                    return None;
                }
                forced
                    .get(&(a.rel, vec![]))
                    .copied()
                    .or_else(|| props.iter().position(|p| *p == a.rel).map(|i| v >> i & 1 == 1))
            };
            let mut total = 0.0;
            let mut rest = Vec::new();
            for f in factors {
                match simplify(&f.formula, &value) {
                    Formula::True => total += f.weight * self.groundings(&f.vars),
                    Formula::False => {}
                    g => {
                        let (kept, gone): (Vec<Var>, Vec<Var>) =
                            f.vars.iter().cloned().partition(|x| g.mentions_var(&x.name));
                        rest.push(Factor {
                            weight: f.weight * self.groundings(&gone),
                            formula: g,
                            vars: kept,
                        });
                    }
                }
            }
            let used: BTreeSet<RelId> = rest.iter().flat_map(|f| f.formula.relations()).collect();
            for (r, sorts) in table {
                if used.contains(r) || props.contains(r) {
                    continue;
                }
                let pinned = forced.keys().filter(|(q, _)| q == r).count() as f64;
                total += (self.atoms_of(sorts) - pinned) * LN_2;
            }
            for comp in components(rest) {
                total += self.decompose(table, &comp, forced)?;
            }
            terms.push(total);
        }
        Ok(log_sum_exp(terms))
    }

    fn decompose(&self, table: &Table, factors: &[Factor], forced: &Forced) -> Result<f64> {
        let rels: BTreeSet<RelId> = factors.iter().flat_map(|f| f.formula.relations()).collect();
        for s in 0..self.domains.sizes().len() {
            let sort = SortId(s);
            let mut pos = BTreeMap::new();
            let mut xs = Vec::new();
            if !assign(factors, sort, 0, &mut pos, &mut xs) {
                continue;
            }
            let sub_table: Table = rels
                .iter()
                .map(|r| {
                    let mut sorts = table[r].clone();
                    sorts.remove(pos[r]);
                    (*r, sorts)
                })
                .collect();
            let sub_factors: Vec<Factor> = factors
                .iter()
                .zip(&xs)
                .map(|(f, x)| Factor {
                    weight: f.weight,
                    formula: f.formula.map_atoms(&mut |a| {
                        let mut args = a.args.clone();
                        args.remove(pos[&a.rel]);
                        Formula::Atom(Atom::new(a.rel, args))
                    }),
                    vars: f.vars.iter().filter(|v| v.name != *x).cloned().collect(),
                })
                .collect();
            let mut blocks: BTreeMap<usize, Forced> = BTreeMap::new();
            for ((r, t), b) in forced {
                if let Some(p) = pos.get(r) {
                    let mut sub = t.clone();
                    let e = sub.remove(*p);
                    blocks.entry(e).or_default().insert((*r, sub), *b);
                }
            }
            let n = self.domains.size(sort);
            let mut total = 0.0;
            for block in blocks.values() {
                total += self.solve(&sub_table, &sub_factors, block)?;
            }
            if n > blocks.len() {
                total += (n - blocks.len()) as f64 * self.solve(&sub_table, &sub_factors, &Forced::new())?;
            }
            return Ok(total);
        }
        let text: Vec<String> = factors.iter().map(|f| format!("{:?}", f.formula)).collect();
        Err(Error::NotFactorizable(format!(
            "no sort separates the ground instances of {} factor(s) {}",
            factors.len(),
            text.join(", ")
        )))
    }
}

/// Groups factors that share a relation.
fn components(factors: Vec<Factor>) -> Vec<Vec<Factor>> {
    let mut groups: Vec<(BTreeSet<RelId>, Vec<Factor>)> = Vec::new();
    for f in factors {
        let rels: BTreeSet<RelId> = f.formula.relations().into_iter().collect();
        let mut merged = (rels, vec![f]);
        let mut i = 0;
        while i < groups.len() {
            if groups[i].0.is_disjoint(&merged.0) {
                i += 1;
            } else {
                let (r, fs) = groups.remove(i);
                merged.0.extend(r);
                merged.1.splice(0..0, fs);
            }
        }
        groups.push(merged);
    }
    groups.into_iter().map(|(_, fs)| fs).collect()
}

/// Picks `x_f` of `sort` for factors `i..` consistently with the block
/// positions fixed so far.
fn assign(factors: &[Factor], sort: SortId, i: usize, pos: &mut BTreeMap<RelId, usize>, xs: &mut Vec<String>) -> bool {
    let Some(f) = factors.get(i) else {
        return true;
    };
    for x in f.vars.iter().filter(|v| v.sort == sort) {
        let mut added = Vec::new();
        let mut ok = true;
        for a in f.formula.atoms() {
            let hits: Vec<usize> = a
                .args
                .iter()
                .enumerate()
                .filter(|(_, t)| matches!(t, Term::Var(v) if v.name == x.name))
                .map(|(k, _)| k)
                .collect();
            if hits.len() != 1 {
                ok = false;
                break;
            }
            match pos.get(&a.rel) {
                Some(p) if *p != hits[0] => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    pos.insert(a.rel, hits[0]);
                    added.push(a.rel);
                }
            }
        }
        if ok {
            xs.push(x.name.clone());
            if assign(factors, sort, i + 1, pos, xs) {
                return true;
            }
            xs.pop();
        }
        for r in added {
            pos.remove(&r);
        }
    }
    false
}

/// Ground literals of a conjunction; `None` when it contains `false`.
fn literals(f: &Formula, out: &mut Vec<(Atom, bool)>) -> Result<bool> {
    match f {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Atom(a) if a.is_ground() => {
            out.push((a.clone(), true));
            Ok(true)
        }
        Formula::Not(x) => match &**x {
            Formula::Atom(a) if a.is_ground() => {
                out.push((a.clone(), false));
                Ok(true)
            }
            Formula::True => Ok(false),
            Formula::False => Ok(true),
            _ => Err(not_literal()),
        },
        Formula::And(l, r) => Ok(literals(l, out)? & literals(r, out)?),
        _ => Err(not_literal()),
    }
}

fn not_literal() -> Error {
    Error::InvalidArgument("the factorized engine answers conjunctions of ground literals".into())
}

/// `ln Z` of the model restricted to worlds satisfying `pinned`; negative
/// infinity when no world does.
pub fn factorized_log_partition(model: &MlnModel, domains: &DomainAssignment, pinned: &[(Atom, bool)]) -> Result<f64> {
    let sig = &model.signature;
    if domains.sizes().len() != sig.num_sorts() {
        return Err(Error::InvalidArgument("domain sizes do not match the signature".into()));
    }
    let table: Table = sig.relations().map(|(id, r)| (id, r.sorts.clone())).collect();
    let mut forced = Forced::new();
    for (a, b) in pinned {
        let elems = a.elems().ok_or_else(not_literal)?;
        let sorts = &table[&a.rel];
        if elems.len() != sorts.len() || elems.iter().zip(sorts).any(|(e, s)| *e >= domains.size(*s)) {
            return Err(Error::InvalidArgument(format!(
                "ground atom {} is outside the domains",
                Formula::Atom(a.clone()).display(sig)
            )));
        }
        if *forced.entry((a.rel, elems)).or_insert(*b) != *b {
            return Ok(f64::NEG_INFINITY);
        }
    }
    let factors: Vec<Factor> = model
        .formulas
        .iter()
        .zip(effective_weights(model, domains))
        .filter(|(_, w)| *w != 0.0)
        .map(|(wf, w)| Factor {
            weight: w,
            formula: wf.formula.clone(),
            vars: wf.formula.free_variables(),
        })
        .collect();
    Solver { domains }.solve(&table, &factors, &forced)
}

/// `P(query | evidence)` where both are conjunctions of ground literals.
pub fn factorized_probability(
    model: &MlnModel,
    domains: &DomainAssignment,
    query: &Formula,
    evidence: Option<&Formula>,
) -> Result<f64> {
    let mut e = Vec::new();
    let e_ok = evidence.map_or(Ok(true), |f| literals(f, &mut e))?;
    let mut qe = e.clone();
    let q_ok = literals(query, &mut qe)?;
    let den = if e_ok {
        factorized_log_partition(model, domains, &e)?
    } else {
        f64::NEG_INFINITY
    };
    if den == f64::NEG_INFINITY {
        return Err(Error::ZeroProbabilityEvidence);
    }
    if !q_ok {
        return Ok(0.0);
    }
    let num = factorized_log_partition(model, domains, &qe)?;
    Ok((num - den).exp().clamp(0.0, 1.0))
}
