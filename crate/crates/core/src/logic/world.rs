use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use bitvec::prelude::*;

use super::formula::{Atom, Formula, Term, Var};
use super::signature::{RelId, Signature, SortId};
use crate::error::{Error, Result};

/// Default cap on the number of ground atoms for exhaustive enumeration.
pub const DEFAULT_ATOM_CAP: usize = 24;

/// Domain sizes per sort; elements of a sort of size n are `e1..en`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DomainAssignment {
    sizes: Vec<usize>,
}

impl DomainAssignment {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument("every sort needs at least one element".into()));
        }
        Ok(DomainAssignment { sizes })
    }

    /// Every sort gets `n` elements.
    pub fn uniform(sig: &Signature, n: usize) -> Result<Self> {
        Self::new(vec![n; sig.num_sorts()])
    }

    /// Sizes by sort name; sorts missing from `sizes` fall back to
    /// `default`, or are an error when no default is given.
    pub fn from_names(sig: &Signature, sizes: &BTreeMap<String, usize>, default: Option<usize>) -> Result<Self> {
        for name in sizes.keys() {
            if sig.sort_id(name).is_none() {
                return Err(Error::Undeclared(name.clone()));
            }
        }
        let v = sig
            .sorts()
            .map(|(_, name)| {
                sizes
                    .get(name)
                    .copied()
                    .or(default)
                    .ok_or_else(|| Error::MissingDomainSize(name.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(v)
    }

    pub fn size(&self, sort: SortId) -> usize {
        self.sizes[sort.0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn product(&self, vars: &[Var]) -> usize {
        vars.iter().map(|v| self.size(v.sort)).product()
    }
}

/// Mixed-radix counter over assignments, last position fastest, so the
/// visiting order is lexicographic.
pub(crate) fn for_each_assignment(radix: &[usize], mut f: impl FnMut(&[usize])) {
    if radix.contains(&0) {
        return;
    }
    let mut cur = vec![0usize; radix.len()];
    loop {
        f(&cur);
        let mut i = radix.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < radix[i] {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Fixed ordering of all ground atoms: relations in declaration order,
/// tuples lexicographic.
#[derive(Debug, PartialEq)]
pub struct GroundLayout {
    signature: Arc<Signature>,
    domains: DomainAssignment,
    offsets: Vec<usize>,
    strides: Vec<Vec<usize>>,
    total: usize,
}

impl GroundLayout {
    pub fn new(signature: Arc<Signature>, domains: DomainAssignment) -> Result<Arc<Self>> {
        if domains.sizes.len() != signature.num_sorts() {
            return Err(Error::InvalidArgument(format!(
                "{} domain sizes for {} sorts",
                domains.sizes.len(),
                signature.num_sorts()
            )));
        }
        let mut offsets = Vec::with_capacity(signature.num_relations());
        let mut strides = Vec::with_capacity(signature.num_relations());
        let mut total = 0usize;
        for (_, rel) in signature.relations() {
            offsets.push(total);
            let mut st = vec![1usize; rel.arity()];
            let mut acc = 1usize;
            for i in (0..rel.arity()).rev() {
                st[i] = acc;
                acc = acc
                    .checked_mul(domains.size(rel.sorts[i]))
                    .ok_or_else(|| Error::InvalidArgument("ground atom count overflow".into()))?;
            }
            strides.push(st);
            total = total
                .checked_add(acc)
                .ok_or_else(|| Error::InvalidArgument("ground atom count overflow".into()))?;
        }
        Ok(Arc::new(GroundLayout {
            signature,
            domains,
            offsets,
            strides,
            total,
        }))
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.signature
    }

    pub fn domains(&self) -> &DomainAssignment {
        &self.domains
    }

    pub fn num_atoms(&self) -> usize {
        self.total
    }

    pub fn relation_range(&self, rel: RelId) -> std::ops::Range<usize> {
        let start = self.offsets[rel.0];
        let len = self
            .signature
            .relation(rel)
            .sorts
            .iter()
            .map(|s| self.domains.size(*s))
            .product::<usize>();
        start..start + len
    }

    pub fn index_of(&self, rel: RelId, elems: &[usize]) -> Result<usize> {
        let r = self.signature.relation(rel);
        if elems.len() != r.arity() {
            return Err(Error::SortMismatch(format!(
                "`{}` expects {} arguments",
                r.name,
                r.arity()
            )));
        }
        let mut idx = self.offsets[rel.0];
        for (i, &e) in elems.iter().enumerate() {
            if e >= self.domains.size(r.sorts[i]) {
                return Err(Error::InvalidArgument(format!(
                    "element e{} outside domain of sort `{}`",
                    e + 1,
                    self.signature.sort_name(r.sorts[i])
                )));
            }
            idx += e * self.strides[rel.0][i];
        }
        Ok(idx)
    }

    pub fn atom_index(&self, atom: &Atom) -> Result<usize> {
        let elems = atom
            .elems()
            .ok_or_else(|| Error::InvalidArgument("atom is not ground".into()))?;
        self.index_of(atom.rel, &elems)
    }

    pub fn atom_at(&self, index: usize) -> (RelId, Vec<usize>) {
        let r = match self.offsets.binary_search(&index) {
            Ok(mut i) => {
                // skip relations with empty ranges sharing this offset
                while i + 1 < self.offsets.len() && self.offsets[i + 1] == index {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        };
        let mut rest = index - self.offsets[r];
        let elems = self.strides[r]
            .iter()
            .map(|&st| {
                let e = rest / st;
                rest %= st;
                e
            })
            .collect();
        (RelId(r), elems)
    }

    pub fn ground_atom(&self, index: usize) -> Atom {
        let (rel, elems) = self.atom_at(index);
        Atom::ground(rel, &elems)
    }

    pub(crate) fn strides(&self, rel: RelId) -> &[usize] {
        &self.strides[rel.0]
    }

    pub(crate) fn offset(&self, rel: RelId) -> usize {
        self.offsets[rel.0]
    }
}

/// Canonical text of a ground atom: `R(e1,e3)` or `P`.
pub fn ground_atom_text(sig: &Signature, rel: RelId, elems: &[usize]) -> String {
    let name = &sig.relation(rel).name;
    if elems.is_empty() {
        name.clone()
    } else {
        let args: Vec<_> = elems.iter().map(|e| format!("e{}", e + 1)).collect();
        format!("{name}({})", args.join(","))
    }
}

/// Finite structure: the set of true ground atoms over a layout. `true` and
/// `false` are evaluated structurally and never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    layout: Arc<GroundLayout>,
    bits: BitVec<u64, Lsb0>,
}

impl World {
    pub fn empty(layout: Arc<GroundLayout>) -> Self {
        let bits = bitvec![u64, Lsb0; 0; layout.num_atoms()];
        World { layout, bits }
    }

    /// World whose atom `k` is true iff bit `k` of `index` is set.
    pub fn from_index(layout: Arc<GroundLayout>, index: u64) -> Self {
        let mut w = World::empty(layout);
        for k in 0..w.bits.len().min(64) {
            if index >> k & 1 == 1 {
                w.bits.set(k, true);
            }
        }
        w
    }

    pub fn layout(&self) -> &Arc<GroundLayout> {
        &self.layout
    }

    pub fn signature(&self) -> &Arc<Signature> {
        self.layout.signature()
    }

    pub fn bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut BitSlice<u64, Lsb0> {
        &mut self.bits
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.bits.set(index, value);
    }

    pub fn is_true(&self, rel: RelId, elems: &[usize]) -> Result<bool> {
        Ok(self.bits[self.layout.index_of(rel, elems)?])
    }

    pub fn set_atom(&mut self, rel: RelId, elems: &[usize], value: bool) -> Result<()> {
        let i = self.layout.index_of(rel, elems)?;
        self.bits.set(i, value);
        Ok(())
    }

    /// Indices of true ground atoms in canonical order.
    pub fn true_atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    /// Canonical single-line record, e.g. `R(e1,e3);Q(e2);P`.
    pub fn to_record(&self) -> String {
        let sig = self.layout.signature();
        self.true_atoms()
            .map(|i| {
                let (rel, elems) = self.layout.atom_at(i);
                ground_atom_text(sig, rel, &elems)
            })
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Copy of this world with one atom forced to `value`.
    pub fn with(&self, index: usize, value: bool) -> World {
        let mut w = self.clone();
        w.bits.set(index, value);
        w
    }
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

/// Mapping from variable names to element indices.
pub type GroundingMap = BTreeMap<String, usize>;

#[derive(Clone, Debug)]
enum Node {
    Const(bool),
    Atom { base: usize, slots: Vec<(usize, usize)> },
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Implies(Box<Node>, Box<Node>),
}

/// Formula compiled against a layout: variables become slot indices and
/// atoms become arithmetic on the ground-atom index.
#[derive(Clone, Debug)]
pub struct CompiledFormula {
    slots: Vec<Var>,
    radix: Vec<usize>,
    root: Node,
}

impl CompiledFormula {
    /// Compiles `formula` with variables bound, in order, to `slots`.
    pub fn new(formula: &Formula, layout: &GroundLayout, slots: &[Var]) -> Result<Self> {
        let root = Self::compile(formula, layout, slots)?;
        let radix = slots.iter().map(|v| layout.domains().size(v.sort)).collect();
        Ok(CompiledFormula {
            slots: slots.to_vec(),
            radix,
            root,
        })
    }

    /// Compiles with slots = the formula's free variables.
    pub fn with_free_variables(formula: &Formula, layout: &GroundLayout) -> Result<Self> {
        Self::new(formula, layout, &formula.free_variables())
    }

    fn compile(f: &Formula, layout: &GroundLayout, slots: &[Var]) -> Result<Node> {
        Ok(match f {
            Formula::True => Node::Const(true),
            Formula::False => Node::Const(false),
            Formula::Atom(a) => {
                let r = layout.signature().relation(a.rel);
                if r.arity() != a.args.len() {
                    return Err(Error::SortMismatch(format!(
                        "`{}` expects {} arguments",
                        r.name,
                        r.arity()
                    )));
                }
                let strides = layout.strides(a.rel);
                let mut base = layout.offset(a.rel);
                let mut sl = Vec::new();
                for (i, t) in a.args.iter().enumerate() {
                    match t {
                        Term::Elem(e) => {
                            if *e >= layout.domains().size(r.sorts[i]) {
                                return Err(Error::InvalidArgument(format!(
                                    "element e{} outside domain of sort `{}`",
                                    e + 1,
                                    layout.signature().sort_name(r.sorts[i])
                                )));
                            }
                            base += e * strides[i];
                        }
                        Term::Var(v) => {
                            let s = slots
                                .iter()
                                .position(|w| w.name == v.name)
                                .ok_or_else(|| Error::UnboundVariable(v.name.clone()))?;
                            if slots[s].sort != r.sorts[i] {
                                return Err(Error::SortMismatch(format!("variable `{}`", v.name)));
                            }
                            sl.push((s, strides[i]));
                        }
                    }
                }
                Node::Atom { base, slots: sl }
            }
            Formula::Not(x) => Node::Not(Box::new(Self::compile(x, layout, slots)?)),
            Formula::And(l, r) => Node::And(
                Box::new(Self::compile(l, layout, slots)?),
                Box::new(Self::compile(r, layout, slots)?),
            ),
            Formula::Or(l, r) => Node::Or(
                Box::new(Self::compile(l, layout, slots)?),
                Box::new(Self::compile(r, layout, slots)?),
            ),
            Formula::Implies(l, r) => Node::Implies(
                Box::new(Self::compile(l, layout, slots)?),
                Box::new(Self::compile(r, layout, slots)?),
            ),
        })
    }

    pub fn slots(&self) -> &[Var] {
        &self.slots
    }

    /// Number of possible groundings of the slots.
    pub fn num_groundings(&self) -> usize {
        self.radix.iter().product()
    }

    pub fn eval(&self, bits: &BitSlice<u64, Lsb0>, assignment: &[usize]) -> bool {
        fn go(n: &Node, bits: &BitSlice<u64, Lsb0>, a: &[usize]) -> bool {
            match n {
                Node::Const(b) => *b,
                Node::Atom { base, slots } => {
                    let idx = slots.iter().fold(*base, |acc, (s, st)| acc + a[*s] * st);
                    bits[idx]
                }
                Node::Not(x) => !go(x, bits, a),
                Node::And(l, r) => go(l, bits, a) && go(r, bits, a),
                Node::Or(l, r) => go(l, bits, a) || go(r, bits, a),
                Node::Implies(l, r) => !go(l, bits, a) || go(r, bits, a),
            }
        }
        go(&self.root, bits, assignment)
    }

    /// Number of slot assignments under which the formula holds.
    pub fn count(&self, bits: &BitSlice<u64, Lsb0>) -> usize {
        let mut n = 0;
        for_each_assignment(&self.radix, |a| {
            if self.eval(bits, a) {
                n += 1;
            }
        });
        n
    }

    /// Counts assignments of the trailing slots with the leading slots fixed
    /// to `prefix`.
    pub fn count_with_prefix(&self, bits: &BitSlice<u64, Lsb0>, prefix: &[usize]) -> usize {
        let k = prefix.len();
        let mut buf = prefix.to_vec();
        buf.resize(self.slots.len(), 0);
        let mut n = 0;
        for_each_assignment(&self.radix[k..], |rest| {
            buf[k..].copy_from_slice(rest);
            if self.eval(bits, &buf) {
                n += 1;
            }
        });
        n
    }

    /// Ground atom indices touched by the grounding `assignment`.
    pub fn atom_indices(&self, assignment: &[usize], out: &mut Vec<usize>) {
        fn go(n: &Node, a: &[usize], out: &mut Vec<usize>) {
            match n {
                Node::Const(_) => {}
                Node::Atom { base, slots } => out.push(slots.iter().fold(*base, |acc, (s, st)| acc + a[*s] * st)),
                Node::Not(x) => go(x, a, out),
                Node::And(l, r) | Node::Or(l, r) | Node::Implies(l, r) => {
                    go(l, a, out);
                    go(r, a, out);
                }
            }
        }
        go(&self.root, assignment, out)
    }
}

/// Truth of `formula` in `world` under `grounding`.
pub fn holds(world: &World, formula: &Formula, grounding: &GroundingMap) -> Result<bool> {
    let slots = formula.free_variables();
    let mut assignment = Vec::with_capacity(slots.len());
    for v in &slots {
        let e = *grounding
            .get(&v.name)
            .ok_or_else(|| Error::UnboundVariable(v.name.clone()))?;
        if e >= world.layout().domains().size(v.sort) {
            return Err(Error::InvalidArgument(format!(
                "element e{} outside domain of `{}`",
                e + 1,
                v.name
            )));
        }
        assignment.push(e);
    }
    let c = CompiledFormula::new(formula, world.layout(), &slots)?;
    Ok(c.eval(world.bits(), &assignment))
}

/// Number of sort-respecting groundings of the free variables of `formula`
/// under which it holds (0 or 1 for variable-free formulas).
pub fn count_true_groundings(world: &World, formula: &Formula) -> Result<usize> {
    let c = CompiledFormula::with_free_variables(formula, world.layout())?;
    Ok(c.count(world.bits()))
}

/// Iterator over all worlds of a layout in index order.
pub struct Worlds {
    layout: Arc<GroundLayout>,
    next: u64,
    end: u64,
}

impl Iterator for Worlds {
    type Item = World;

    fn next(&mut self) -> Option<World> {
        if self.next >= self.end {
            return None;
        }
        let w = World::from_index(self.layout.clone(), self.next);
        self.next += 1;
        Some(w)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Worlds {}

pub(crate) fn check_cap(atoms: usize, cap: usize) -> Result<()> {
    if atoms > cap || atoms >= 64 {
        return Err(Error::StateSpaceTooLarge { count: atoms, cap });
    }
    Ok(())
}

/// All `2^(#ground atoms)` worlds, atom `k` being bit `k` of the world index.
pub fn enumerate_worlds(signature: Arc<Signature>, domains: DomainAssignment, cap: usize) -> Result<Worlds> {
    let layout = GroundLayout::new(signature, domains)?;
    check_cap(layout.num_atoms(), cap)?;
    let end = 1u64 << layout.num_atoms();
    Ok(Worlds { layout, next: 0, end })
}

/// Restriction of `world` to the relations of `sub` (matched by name).
pub fn reduct(world: &World, sub: &Arc<Signature>) -> Result<World> {
    let sig = world.signature();
    let mut sizes = Vec::with_capacity(sub.num_sorts());
    for (_, name) in sub.sorts() {
        let id = sig.sort_id(name).ok_or_else(|| Error::Undeclared(name.to_string()))?;
        sizes.push(world.layout().domains().size(id));
    }
    let layout = GroundLayout::new(sub.clone(), DomainAssignment::new(sizes)?)?;
    let mut out = World::empty(layout.clone());
    for (rel, r) in sub.relations() {
        let src = sig
            .relation_id(&r.name)
            .ok_or_else(|| Error::Undeclared(r.name.clone()))?;
        let src_sorts: Vec<_> = sig.relation(src).sorts.iter().map(|s| sig.sort_name(*s)).collect();
        let dst_sorts: Vec<_> = r.sorts.iter().map(|s| sub.sort_name(*s)).collect();
        if src_sorts != dst_sorts {
            return Err(Error::SortMismatch(format!("`{}` in reduct", r.name)));
        }
        let src_range = world.layout().relation_range(src);
        let dst_range = layout.relation_range(rel);
        for (i, j) in src_range.zip(dst_range) {
            out.bits.set(j, world.bits[i]);
        }
    }
    Ok(out)
}
