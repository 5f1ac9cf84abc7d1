use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SortId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstId(pub usize);

/// Where a constant-instantiated relation symbol comes from: `base` is the
/// relation without constants and `pattern` records, per argument place of
/// `base`, the constant substituted there (`None` = still a free place).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Origin {
    pub base: RelId,
    pub pattern: Vec<Option<ConstId>>,
}

impl Origin {
    pub fn constants(&self) -> impl Iterator<Item = ConstId> + '_ {
        self.pattern.iter().flatten().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub name: String,
    pub sorts: Vec<SortId>,
    pub origin: Option<Origin>,
}

impl Relation {
    pub fn arity(&self) -> usize {
        self.sorts.len()
    }

    pub fn is_proposition(&self) -> bool {
        self.sorts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub name: String,
    pub sort: SortId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symbol {
    Sort(SortId),
    Relation(RelId),
    Constant(ConstId),
}

/// An argument during instantiation: either a regular term or a constant that
/// is compiled away into a fresh relation symbol.
#[derive(Clone, Debug, PartialEq)]
pub enum Arg<T> {
    Term(T),
    Const(ConstId),
}

/// Multi-sorted relational signature. Symbols are append-only, so ids stay
/// valid in every extension of a signature.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Signature {
    sorts: Vec<String>,
    relations: Vec<Relation>,
    constants: Vec<Constant>,
    symbols: HashMap<String, Symbol>,
    instances: HashMap<Origin, RelId>,
}

const RESERVED: [&str; 2] = ["true", "false"];

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_fresh(&self, name: &str) -> Result<()> {
        if RESERVED.contains(&name) || self.symbols.contains_key(name) {
            return Err(Error::Duplicate(name.to_string()));
        }
        Ok(())
    }

    pub fn add_sort(&mut self, name: &str) -> Result<SortId> {
        self.check_fresh(name)?;
        let id = SortId(self.sorts.len());
        self.sorts.push(name.to_string());
        self.symbols.insert(name.to_string(), Symbol::Sort(id));
        Ok(id)
    }

    /// Returns the sort with this name, declaring it if needed.
    pub fn ensure_sort(&mut self, name: &str) -> Result<SortId> {
        match self.symbols.get(name) {
            Some(Symbol::Sort(id)) => Ok(*id),
            Some(_) => Err(Error::Duplicate(name.to_string())),
            None => self.add_sort(name),
        }
    }

    pub fn add_relation(&mut self, name: &str, sorts: Vec<SortId>) -> Result<RelId> {
        self.check_fresh(name)?;
        if let Some(bad) = sorts.iter().find(|s| s.0 >= self.sorts.len()) {
            return Err(Error::Undeclared(format!("sort #{}", bad.0)));
        }
        let id = RelId(self.relations.len());
        self.relations.push(Relation {
            name: name.to_string(),
            sorts,
            origin: None,
        });
        self.symbols.insert(name.to_string(), Symbol::Relation(id));
        Ok(id)
    }

    pub fn add_constant(&mut self, name: &str, sort: SortId) -> Result<ConstId> {
        self.check_fresh(name)?;
        let id = ConstId(self.constants.len());
        self.constants.push(Constant {
            name: name.to_string(),
            sort,
        });
        self.symbols.insert(name.to_string(), Symbol::Constant(id));
        Ok(id)
    }

    /// Adds `count` constants of `sort` named from the reserved pool
    /// `a1, a2, ...`, skipping names already taken.
    pub fn add_pool_constants(&mut self, sort: SortId, count: usize) -> Vec<ConstId> {
        let mut out = Vec::with_capacity(count);
        let mut k = 1;
        while out.len() < count {
            let name = format!("a{k}");
            k += 1;
            if let Ok(id) = self.add_constant(&name, sort) {
                out.push(id);
            }
        }
        out
    }

    pub fn sorts(&self) -> impl ExactSizeIterator<Item = (SortId, &str)> {
        self.sorts.iter().enumerate().map(|(i, s)| (SortId(i), s.as_str()))
    }

    pub fn num_sorts(&self) -> usize {
        self.sorts.len()
    }

    pub fn sort_name(&self, id: SortId) -> &str {
        &self.sorts[id.0]
    }

    pub fn sort_id(&self, name: &str) -> Option<SortId> {
        match self.symbols.get(name) {
            Some(Symbol::Sort(id)) => Some(*id),
            _ => None,
        }
    }

    pub fn relations(&self) -> impl ExactSizeIterator<Item = (RelId, &Relation)> {
        self.relations.iter().enumerate().map(|(i, r)| (RelId(i), r))
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relation(&self, id: RelId) -> &Relation {
        &self.relations[id.0]
    }

    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        match self.symbols.get(name) {
            Some(Symbol::Relation(id)) => Some(*id),
            _ => None,
        }
    }

    pub fn constants(&self) -> impl ExactSizeIterator<Item = (ConstId, &Constant)> {
        self.constants.iter().enumerate().map(|(i, c)| (ConstId(i), c))
    }

    pub fn constant(&self, id: ConstId) -> &Constant {
        &self.constants[id.0]
    }

    pub fn constant_id(&self, name: &str) -> Option<ConstId> {
        match self.symbols.get(name) {
            Some(Symbol::Constant(id)) => Some(*id),
            _ => None,
        }
    }

    /// Base relation and full constant pattern of `rel`.
    pub fn origin_of(&self, rel: RelId) -> Origin {
        match &self.relations[rel.0].origin {
            Some(o) => o.clone(),
            None => Origin {
                base: rel,
                pattern: vec![None; self.relations[rel.0].arity()],
            },
        }
    }

    /// Composes the pattern of `rel` with `args`, returning the full origin
    /// and the remaining (non-constant) arguments.
    fn compose<T: Clone>(&self, rel: RelId, args: &[Arg<T>]) -> Result<(Origin, Vec<T>)> {
        let relation = &self.relations[rel.0];
        if args.len() != relation.arity() {
            return Err(Error::SortMismatch(format!(
                "`{}` expects {} arguments, got {}",
                relation.name,
                relation.arity(),
                args.len()
            )));
        }
        let mut origin = self.origin_of(rel);
        let mut rest = Vec::new();
        let mut args = args.iter();
        for slot in origin.pattern.iter_mut() {
            if slot.is_some() {
                continue;
            }
            match args.next().expect("arity checked") {
                Arg::Term(t) => rest.push(t.clone()),
                Arg::Const(c) => *slot = Some(*c),
            }
        }
        Ok((origin, rest))
    }

    fn instance_name(&self, origin: &Origin) -> String {
        let mut name = self.relations[origin.base.0].name.clone();
        for slot in &origin.pattern {
            name.push('_');
            if let Some(c) = slot {
                name.push_str(&self.constants[c.0].name);
            }
        }
        while self.symbols.contains_key(&name) {
            name.push('_');
        }
        name
    }

    /// Replaces constant arguments by a relation symbol of reduced arity,
    /// creating it on first use.
    pub fn instantiate<T: Clone>(&mut self, rel: RelId, args: &[Arg<T>]) -> Result<(RelId, Vec<T>)> {
        let (origin, rest) = self.compose(rel, args)?;
        Ok((self.intern(origin), rest))
    }

    /// Like [`instantiate`](Self::instantiate) but never creates symbols.
    pub fn lookup_instance<T: Clone>(&self, rel: RelId, args: &[Arg<T>]) -> Result<(RelId, Vec<T>)> {
        let (origin, rest) = self.compose(rel, args)?;
        self.find_instance(&origin)
            .map(|id| (id, rest))
            .ok_or_else(|| Error::Undeclared(self.instance_name(&origin)))
    }

    pub fn find_instance(&self, origin: &Origin) -> Option<RelId> {
        if origin.pattern.iter().all(Option::is_none) {
            return Some(origin.base);
        }
        self.instances.get(origin).copied()
    }

    pub(crate) fn intern(&mut self, origin: Origin) -> RelId {
        if let Some(id) = self.find_instance(&origin) {
            return id;
        }
        let base = &self.relations[origin.base.0];
        let sorts = base
            .sorts
            .iter()
            .zip(&origin.pattern)
            .filter(|(_, c)| c.is_none())
            .map(|(s, _)| *s)
            .collect();
        let name = self.instance_name(&origin);
        let id = RelId(self.relations.len());
        self.relations.push(Relation {
            name: name.clone(),
            sorts,
            origin: Some(origin.clone()),
        });
        self.symbols.insert(name, Symbol::Relation(id));
        self.instances.insert(origin, id);
        id
    }

    /// Signature restricted to the named relations (sorts and constants are
    /// kept). Used for reducts.
    pub fn restrict(&self, names: &[&str]) -> Result<Signature> {
        let mut sub = Signature::new();
        for (_, s) in self.sorts() {
            sub.add_sort(s)?;
        }
        for (_, c) in self.constants() {
            sub.add_constant(&c.name, c.sort)?;
        }
        for name in names {
            let id = self
                .relation_id(name)
                .ok_or_else(|| Error::Undeclared(name.to_string()))?;
            let r = self.relation(id);
            sub.add_relation(&r.name, r.sorts.clone())?;
        }
        Ok(sub)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (_, s) in self.sorts() {
            writeln!(f, "sort {s};")?;
        }
        for (_, r) in self.relations() {
            if r.origin.is_some() {
                continue;
            }
            if r.is_proposition() {
                writeln!(f, "prop {};", r.name)?;
            } else {
                let sorts: Vec<_> = r.sorts.iter().map(|s| self.sort_name(*s)).collect();
                writeln!(f, "pred {}({});", r.name, sorts.join(", "))?;
            }
        }
        for (_, c) in self.constants() {
            writeln!(f, "const {} : {};", c.name, self.sort_name(c.sort))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut sig = Signature::new();
        let s = sig.add_sort("person").unwrap();
        sig.add_relation("R", vec![s]).unwrap();
        assert!(matches!(sig.add_relation("R", vec![]), Err(Error::Duplicate(_))));
        assert!(matches!(sig.add_constant("R", s), Err(Error::Duplicate(_))));
        assert!(matches!(sig.add_relation("true", vec![]), Err(Error::Duplicate(_))));
    }

    #[test]
    fn instantiation_composes_patterns() {
        let mut sig = Signature::new();
        let s = sig.add_sort("s").unwrap();
        let r = sig.add_relation("R", vec![s, s]).unwrap();
        let c = sig.add_constant("c", s).unwrap();
        let d = sig.add_constant("d", s).unwrap();

        let (rc, rest) = sig.instantiate(r, &[Arg::Const(c), Arg::Term("x")]).unwrap();
        assert_eq!(sig.relation(rc).name, "R_c_");
        assert_eq!(rest, vec!["x"]);

        let (rcd, rest) = sig.instantiate(rc, &[Arg::<&str>::Const(d)]).unwrap();
        assert!(rest.is_empty());
        let (direct, _) = sig.instantiate::<&str>(r, &[Arg::Const(c), Arg::Const(d)]).unwrap();
        assert_eq!(rcd, direct);
        assert_eq!(sig.relation(rcd).name, "R_c_d");
        assert!(sig.relation(rcd).is_proposition());

        let (same, _) = sig.instantiate(r, &[Arg::Term(1), Arg::Term(2)]).unwrap();
        assert_eq!(same, r);
    }

    #[test]
    fn pool_constants_skip_taken_names() {
        let mut sig = Signature::new();
        let s = sig.add_sort("s").unwrap();
        sig.add_constant("a1", s).unwrap();
        let pool = sig.add_pool_constants(s, 2);
        let names: Vec<_> = pool.iter().map(|c| sig.constant(*c).name.clone()).collect();
        assert_eq!(names, ["a2", "a3"]);
    }
}
