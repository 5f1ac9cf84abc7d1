use std::collections::BTreeMap;
use std::fmt;

use super::signature::{RelId, Signature, SortId};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: String,
    pub sort: SortId,
}

impl Var {
    pub fn new(name: impl Into<String>, sort: SortId) -> Self {
        Var {
            name: name.into(),
            sort,
        }
    }
}

/// A term is a variable or a (0-based) domain element of the sort required
/// by its argument place.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    Elem(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub rel: RelId,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(rel: RelId, args: Vec<Term>) -> Self {
        Atom { rel, args }
    }

    pub fn proposition(rel: RelId) -> Self {
        Atom { rel, args: vec![] }
    }

    pub fn ground(rel: RelId, elems: &[usize]) -> Self {
        Atom {
            rel,
            args: elems.iter().map(|e| Term::Elem(*e)).collect(),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Elem(_)))
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Elem(_) => None,
        })
    }

    /// Element tuple of a ground atom.
    pub fn elems(&self) -> Option<Vec<usize>> {
        self.args
            .iter()
            .map(|t| match t {
                Term::Elem(e) => Some(*e),
                Term::Var(_) => None,
            })
            .collect()
    }
}

/// Quantifier-free formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(a: Atom) -> Self {
        Formula::Atom(a)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    /// Atoms in left-to-right order, with repetitions.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut dyn FnMut(&'a Atom)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => f(a),
            Formula::Not(x) => x.visit_atoms(f),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.visit_atoms(f);
                r.visit_atoms(f);
            }
        }
    }

    /// Relation symbols in first-occurrence order.
    pub fn relations(&self) -> Vec<RelId> {
        let mut out = Vec::new();
        for a in self.atoms() {
            if !out.contains(&a.rel) {
                out.push(a.rel);
            }
        }
        out
    }

    /// Free variables in first-occurrence (left-to-right) order.
    pub fn free_variables(&self) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        for a in self.atoms() {
            for v in a.vars() {
                if !out.iter().any(|w| w.name == v.name) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn is_ground(&self) -> bool {
        self.atoms().iter().all(|a| a.is_ground())
    }

    pub fn mentions_var(&self, name: &str) -> bool {
        self.atoms().iter().any(|a| a.vars().any(|v| v.name == name))
    }

    /// Rewrites every atom with `f`.
    pub fn map_atoms(&self, f: &mut dyn FnMut(&Atom) -> Formula) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => f(a),
            Formula::Not(x) => Formula::not(x.map_atoms(f)),
            Formula::And(l, r) => Formula::and(l.map_atoms(f), r.map_atoms(f)),
            Formula::Or(l, r) => Formula::or(l.map_atoms(f), r.map_atoms(f)),
            Formula::Implies(l, r) => Formula::implies(l.map_atoms(f), r.map_atoms(f)),
        }
    }

    /// Replaces variables by terms according to `map` (by variable name).
    pub fn substitute(&self, map: &BTreeMap<String, Term>) -> Formula {
        self.map_atoms(&mut |a| {
            Formula::Atom(Atom {
                rel: a.rel,
                args: a
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => map.get(&v.name).cloned().unwrap_or_else(|| t.clone()),
                        Term::Elem(_) => t.clone(),
                    })
                    .collect(),
            })
        })
    }

    /// Grounds free variables to distinct elements in first-occurrence
    /// order per sort: the first `x` of a sort becomes `e1`, the next `e2`.
    pub fn ground_free_variables(&self) -> Formula {
        let mut next: BTreeMap<SortId, usize> = BTreeMap::new();
        let map = self
            .free_variables()
            .into_iter()
            .map(|v| {
                let k = next.entry(v.sort).or_insert(0);
                *k += 1;
                (v.name, Term::Elem(*k - 1))
            })
            .collect();
        self.substitute(&map)
    }

    /// Truth-functional evaluation given a valuation of atoms.
    pub fn eval_with(&self, value: &mut dyn FnMut(&Atom) -> bool) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => value(a),
            Formula::Not(x) => !x.eval_with(value),
            Formula::And(l, r) => l.eval_with(value) && r.eval_with(value),
            Formula::Or(l, r) => l.eval_with(value) || r.eval_with(value),
            Formula::Implies(l, r) => !l.eval_with(value) || r.eval_with(value),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(..) => 4,
            _ => 5,
        }
    }

    pub fn display<'a>(&'a self, sig: &'a Signature) -> FormulaDisplay<'a> {
        FormulaDisplay { formula: self, sig }
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    sig: &'a Signature,
}

/// Writes an atom; constant-instantiated symbols are printed through their
/// constants (`R(c, x)` rather than `R_c_(x)`) so printed text re-parses to
/// the same symbol.
fn write_atom(f: &mut fmt::Formatter<'_>, sig: &Signature, atom: &Atom) -> fmt::Result {
    let rel = sig.relation(atom.rel);
    let (name, parts): (&str, Vec<String>) = match &rel.origin {
        None => (&rel.name, atom.args.iter().map(term_text).collect()),
        Some(origin) => {
            let mut rest = atom.args.iter();
            let parts = origin
                .pattern
                .iter()
                .map(|slot| match slot {
                    Some(c) => sig.constant(*c).name.clone(),
                    None => term_text(rest.next().expect("arity")),
                })
                .collect();
            (&sig.relation(origin.base).name, parts)
        }
    };
    if parts.is_empty() {
        write!(f, "{name}")
    } else {
        write!(f, "{name}({})", parts.join(", "))
    }
}

fn term_text(t: &Term) -> String {
    match t {
        Term::Var(v) => v.name.clone(),
        Term::Elem(e) => format!("e{}", e + 1),
    }
}

impl FormulaDisplay<'_> {
    fn write(&self, f: &mut fmt::Formatter<'_>, formula: &Formula, min_prec: u8) -> fmt::Result {
        let prec = formula.precedence();
        let paren = prec < min_prec;
        if paren {
            write!(f, "(")?;
        }
        match formula {
            Formula::True => write!(f, "true")?,
            Formula::False => write!(f, "false")?,
            Formula::Atom(a) => write_atom(f, self.sig, a)?,
            Formula::Not(x) => {
                write!(f, "!")?;
                self.write(f, x, 4)?;
            }
            // & and | associate to the left, -> to the right
            Formula::And(l, r) => {
                self.write(f, l, 3)?;
                write!(f, " & ")?;
                self.write(f, r, 4)?;
            }
            Formula::Or(l, r) => {
                self.write(f, l, 2)?;
                write!(f, " | ")?;
                self.write(f, r, 3)?;
            }
            Formula::Implies(l, r) => {
                self.write(f, l, 2)?;
                write!(f, " -> ")?;
                self.write(f, r, 1)?;
            }
        }
        if paren {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.formula, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> (Signature, RelId, RelId, SortId) {
        let mut sig = Signature::new();
        let s = sig.add_sort("s").unwrap();
        let r = sig.add_relation("R", vec![s, s]).unwrap();
        let q = sig.add_relation("Q", vec![s]).unwrap();
        (sig, r, q, s)
    }

    fn v(name: &str, s: SortId) -> Term {
        Term::Var(Var::new(name, s))
    }

    #[test]
    fn free_variables_first_occurrence() {
        let (_, r, q, s) = sig();
        let f = Formula::and(
            Formula::atom(Atom::new(q, vec![v("x", s)])),
            Formula::atom(Atom::new(q, vec![v("y", s)])),
        );
        let names: Vec<_> = f.free_variables().into_iter().map(|v| v.name).collect();
        assert_eq!(names, ["x", "y"]);

        let f = Formula::or(
            Formula::atom(Atom::new(r, vec![v("x", s), v("y", s)])),
            Formula::atom(Atom::new(r, vec![v("y", s), v("x", s)])),
        );
        let names: Vec<_> = f.free_variables().into_iter().map(|v| v.name).collect();
        assert_eq!(names, ["x", "y"]);
        assert!(Formula::True.free_variables().is_empty());
    }

    #[test]
    fn display_minimal_parentheses() {
        let (sig, _, q, s) = sig();
        let a = Formula::atom(Atom::new(q, vec![v("x", s)]));
        let b = Formula::atom(Atom::new(q, vec![Term::Elem(0)]));
        let f = Formula::implies(
            Formula::and(a.clone(), Formula::or(b.clone(), Formula::True)),
            Formula::not(Formula::and(a.clone(), b.clone())),
        );
        assert_eq!(f.display(&sig).to_string(), "Q(x) & (Q(e1) | true) -> !(Q(x) & Q(e1))");
        let g = Formula::implies(Formula::implies(a.clone(), b.clone()), a);
        assert_eq!(g.display(&sig).to_string(), "(Q(x) -> Q(e1)) -> Q(x)");
    }
}
