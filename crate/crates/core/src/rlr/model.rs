use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::logic::{Atom, DomainAssignment, Formula, RelId, Signature, Term, Var};

/// One weighted condition `(psi, w, V)` of a node label. `proportional`
/// divides the weight by `|D|_V`.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub formula: Formula,
    pub weight: f64,
    pub over: Vec<Var>,
    pub proportional: bool,
}

impl Condition {
    pub fn root(weight: f64) -> Self {
        Condition {
            formula: Formula::True,
            weight,
            over: vec![],
            proportional: true,
        }
    }

    /// `|D|_V` when proportional, otherwise 1.
    pub fn divisor(&self, domains: &DomainAssignment) -> f64 {
        if self.proportional {
            self.over.iter().map(|v| domains.size(v.sort) as f64).product()
        } else {
            1.0
        }
    }

    /// True when the domain sizes actually influence this condition.
    pub fn is_scaled(&self) -> bool {
        !self.over.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub head: Atom,
    pub conditions: Vec<Condition>,
    /// Parents as written in the model text, if any were written.
    pub parents: Option<Vec<RelId>>,
}

impl Node {
    pub fn rel(&self) -> RelId {
        self.head.rel
    }

    pub fn head_vars(&self) -> Vec<Var> {
        self.head.vars().cloned().collect()
    }

    /// Relation symbols occurring in the conditions.
    pub fn mentioned(&self) -> Vec<RelId> {
        let mut out = Vec::new();
        for c in &self.conditions {
            for r in c.formula.relations() {
                if !out.contains(&r) {
                    out.push(r);
                }
            }
        }
        out
    }

    pub fn is_root(&self) -> bool {
        self.mentioned().is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Unscaled,
    DomainAware,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    MissingNode,
    DuplicateNode,
    HeadNotDistinctVariables,
    HeadVariableInSet(String),
    UnboundVariable(String),
    NonParentSymbol(String),
    UnusedParent(String),
    Cycle(Vec<String>),
    RootLabel,
    ElementInModel,
}

/// A structural problem with a node or one of its conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub node: String,
    pub condition: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.node)?;
        if let Some(i) = self.condition {
            write!(f, ", condition {}", i + 1)?;
        }
        write!(f, ": ")?;
        match &self.kind {
            ViolationKind::MissingNode => write!(f, "relation has no node"),
            ViolationKind::DuplicateNode => write!(f, "relation has more than one node"),
            ViolationKind::HeadNotDistinctVariables => write!(f, "head atom must have distinct variables"),
            ViolationKind::HeadVariableInSet(v) => write!(f, "head variable `{v}` occurs in the variable set"),
            ViolationKind::UnboundVariable(v) => {
                write!(f, "variable `{v}` is neither in the head nor in the variable set")
            }
            ViolationKind::NonParentSymbol(r) => write!(f, "`{r}` is not a declared parent"),
            ViolationKind::UnusedParent(r) => write!(f, "declared parent `{r}` does not occur in any condition"),
            ViolationKind::Cycle(path) => write!(f, "cycle {}", path.join(" -> ")),
            ViolationKind::RootLabel => write!(
                f,
                "root nodes take exactly one condition `true` with an empty variable set"
            ),
            ViolationKind::ElementInModel => write!(f, "domain elements may not appear in model formulas"),
        }
    }
}

/// DAG facts of a valid model.
#[derive(Clone, Debug, PartialEq)]
pub struct Structure {
    /// Longest path from a root, per relation.
    pub index: Vec<usize>,
    /// Node position per relation.
    pub node_of: Vec<usize>,
    /// Relations by index, ties by declaration order.
    pub order: Vec<RelId>,
}

impl Structure {
    pub fn formula_index(&self, f: &Formula) -> usize {
        f.relations().iter().map(|r| self.index[r.0]).max().unwrap_or(0)
    }
}

/// Relational logistic regression over a DAG of relation symbols. Each
/// condition carries its own proportional flag: all-proportional is DA-RLR,
/// all-raw is plain RLR, anything else is mixed.
#[derive(Clone, Debug, PartialEq)]
pub struct RlrModel {
    pub signature: Arc<Signature>,
    pub nodes: Vec<Node>,
}

impl RlrModel {
    pub fn new(signature: Arc<Signature>, nodes: Vec<Node>) -> Self {
        RlrModel { signature, nodes }
    }

    pub fn mode(&self) -> Mode {
        let scaled = self.nodes.iter().flat_map(|n| &n.conditions).filter(|c| c.is_scaled());
        let (mut prop, mut raw) = (false, false);
        for c in scaled {
            if c.proportional {
                prop = true;
            } else {
                raw = true;
            }
        }
        match (prop, raw) {
            (_, false) => Mode::DomainAware,
            (false, true) => Mode::Unscaled,
            (true, true) => Mode::Mixed,
        }
    }

    /// Sets every proportional flag.
    pub fn with_all_flags(mut self, proportional: bool) -> Self {
        for c in self.nodes.iter_mut().flat_map(|n| n.conditions.iter_mut()) {
            c.proportional = proportional;
        }
        self
    }

    pub fn node(&self, rel: RelId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.rel() == rel)
    }

    pub fn node_mut(&mut self, rel: RelId) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.rel() == rel)
    }

    /// All structural violations; empty means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let sig = &self.signature;
        let name = |r: RelId| sig.relation(r).name.clone();
        let mut out = Vec::new();
        let mut seen: HashMap<RelId, usize> = HashMap::new();
        for node in &self.nodes {
            *seen.entry(node.rel()).or_default() += 1;
        }
        for (rel, r) in sig.relations() {
            match seen.get(&rel) {
                None => out.push(Violation {
                    node: r.name.clone(),
                    condition: None,
                    kind: ViolationKind::MissingNode,
                }),
                Some(k) if *k > 1 => out.push(Violation {
                    node: r.name.clone(),
                    condition: None,
                    kind: ViolationKind::DuplicateNode,
                }),
                _ => {}
            }
        }

        for node in &self.nodes {
            let node_name = name(node.rel());
            let mut push = |condition, kind| {
                out.push(Violation {
                    node: node_name.clone(),
                    condition,
                    kind,
                })
            };
            let head_vars = node.head_vars();
            let distinct: BTreeSet<_> = head_vars.iter().map(|v| &v.name).collect();
            if head_vars.len() != node.head.args.len() || distinct.len() != head_vars.len() {
                push(None, ViolationKind::HeadNotDistinctVariables);
            }
            let mentioned = node.mentioned();
            if let Some(declared) = &node.parents {
                for r in &mentioned {
                    if !declared.contains(r) {
                        push(None, ViolationKind::NonParentSymbol(name(*r)));
                    }
                }
                for r in declared {
                    if !mentioned.contains(r) {
                        push(None, ViolationKind::UnusedParent(name(*r)));
                    }
                }
            }
            if mentioned.is_empty() {
                let ok = node.conditions.len() == 1
                    && node.conditions[0].formula == Formula::True
                    && node.conditions[0].over.is_empty();
                if !ok {
                    push(None, ViolationKind::RootLabel);
                }
            }
            for (i, c) in node.conditions.iter().enumerate() {
                for v in &c.over {
                    if distinct.contains(&v.name) {
                        push(Some(i), ViolationKind::HeadVariableInSet(v.name.clone()));
                    }
                }
                for v in c.formula.free_variables() {
                    if !distinct.contains(&v.name) && !c.over.iter().any(|w| w.name == v.name) {
                        push(Some(i), ViolationKind::UnboundVariable(v.name.clone()));
                    }
                }
                if c.formula
                    .atoms()
                    .iter()
                    .any(|a| a.args.iter().any(|t| matches!(t, Term::Elem(_))))
                {
                    push(Some(i), ViolationKind::ElementInModel);
                }
            }
        }

        if let Some(cycle) = self.find_cycle() {
            let path: Vec<_> = cycle.iter().map(|r| name(*r)).collect();
            out.push(Violation {
                node: path[0].clone(),
                condition: None,
                kind: ViolationKind::Cycle(path),
            });
        }
        out
    }

    fn parents_of(&self, rel: RelId) -> Vec<RelId> {
        self.node(rel).map(|n| n.mentioned()).unwrap_or_default()
    }

    fn find_cycle(&self) -> Option<Vec<RelId>> {
        let n = self.signature.num_relations();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut stack = Vec::new();
        fn dfs(m: &RlrModel, r: usize, state: &mut [u8], stack: &mut Vec<RelId>) -> Option<Vec<RelId>> {
            state[r] = 1;
            stack.push(RelId(r));
            for p in m.parents_of(RelId(r)) {
                match state[p.0] {
                    1 => {
                        let start = stack.iter().position(|x| *x == p).unwrap();
                        let mut cyc: Vec<RelId> = stack[start..].to_vec();
                        cyc.reverse();
                        cyc.insert(0, p);
                        return Some(cyc);
                    }
                    0 => {
                        if let Some(c) = dfs(m, p.0, state, stack) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            stack.pop();
            state[r] = 2;
            None
        }
        for r in 0..n {
            if state[r] == 0 {
                if let Some(c) = dfs(self, r, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Index, node positions and evaluation order; fails on any violation.
    pub fn structure(&self) -> Result<Structure> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations.iter().map(|v| v.to_string()).collect()));
        }
        let n = self.signature.num_relations();
        let mut node_of = vec![usize::MAX; n];
        for (i, node) in self.nodes.iter().enumerate() {
            node_of[node.rel().0] = i;
        }
        let mut index = vec![usize::MAX; n];
        fn idx(m: &RlrModel, r: usize, index: &mut [usize]) -> usize {
            if index[r] != usize::MAX {
                return index[r];
            }
            let v = m
                .parents_of(RelId(r))
                .iter()
                .map(|p| idx(m, p.0, index) + 1)
                .max()
                .unwrap_or(0);
            index[r] = v;
            v
        }
        for r in 0..n {
            idx(self, r, &mut index);
        }
        let mut order: Vec<RelId> = (0..n).map(RelId).collect();
        order.sort_by_key(|r| (index[r.0], r.0));
        Ok(Structure { index, node_of, order })
    }
}

impl fmt::Display for RlrModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = &self.signature;
        write!(f, "{sig}")?;
        writeln!(f)?;
        writeln!(f, "rlr {{")?;
        for node in &self.nodes {
            let head = Formula::Atom(node.head.clone());
            writeln!(f, "  node {} {{", head.display(sig))?;
            if let Some(ps) = &node.parents {
                let names: Vec<_> = ps.iter().map(|r| sig.relation(*r).name.as_str()).collect();
                writeln!(f, "    parents {};", names.join(", "))?;
            }
            for c in &node.conditions {
                let flag = if c.proportional { "prop" } else { "raw" };
                write!(f, "    {:?} {flag} : {}", c.weight, c.formula.display(sig))?;
                if !c.over.is_empty() {
                    let vars: Vec<_> = c
                        .over
                        .iter()
                        .map(|v| {
                            if c.formula.mentions_var(&v.name) {
                                v.name.clone()
                            } else {
                                format!("{}: {}", v.name, sig.sort_name(v.sort))
                            }
                        })
                        .collect();
                    write!(f, " over {{{}}}", vars.join(", "))?;
                }
                writeln!(f, ";")?;
            }
            writeln!(f, "  }}")?;
        }
        writeln!(f, "}}")
    }
}
