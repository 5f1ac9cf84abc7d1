use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::formula::{Atom, Formula, Term, Var};
use super::signature::{Arg, Signature, SortId};
use super::world::DomainAssignment;
use super::{ParseError, ParseErrorKind};
use crate::error::{Error, Result};
use crate::mln::{Aggregator, MlnModel, Scaling, WeightedFormula};
use crate::rlr::{Condition, Node, RlrModel};

/// A parsed model file.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mln(MlnModel),
    Rlr(RlrModel),
}

impl Model {
    pub fn signature(&self) -> &Arc<Signature> {
        match self {
            Model::Mln(m) => &m.signature,
            Model::Rlr(m) => &m.signature,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Mln(m) => m.fmt(f),
            Model::Rlr(m) => m.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Semi,
    Colon,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    And,
    Or,
    Not,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(x) => write!(f, "number {x}"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::And => write!(f, "`&`"),
            Tok::Or => write!(f, "`|`"),
            Tok::Not => write!(f, "`!`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: String) -> ParseError {
    ParseError {
        line,
        column,
        kind: ParseErrorKind::Syntax,
        message,
    }
}

fn lex(text: &str) -> std::result::Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok, len: usize, i: &mut usize, col: &mut usize| {
            out.push(Token {
                tok,
                line: tl,
                column: tc,
            });
            *i += len;
            *col += len;
        };
        let next = chars.get(i + 1).copied();
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '/' if next == Some('/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            ';' => push(Tok::Semi, 1, &mut i, &mut col),
            ':' => push(Tok::Colon, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '{' => push(Tok::LBrace, 1, &mut i, &mut col),
            '}' => push(Tok::RBrace, 1, &mut i, &mut col),
            '&' | '∧' => push(Tok::And, 1, &mut i, &mut col),
            '|' | '∨' => push(Tok::Or, 1, &mut i, &mut col),
            '!' | '~' | '¬' => push(Tok::Not, 1, &mut i, &mut col),
            '→' => push(Tok::Arrow, 1, &mut i, &mut col),
            '⊤' => push(Tok::Ident("true".into()), 1, &mut i, &mut col),
            '⊥' => push(Tok::Ident("false".into()), 1, &mut i, &mut col),
            '-' if next == Some('>') => push(Tok::Arrow, 2, &mut i, &mut col),
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                let mut j = i;
                if chars[j] == '-' || chars[j] == '+' {
                    j += 1;
                }
                let mut digits = 0;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                    digits += 1;
                }
                if j < chars.len() && chars[j] == '.' {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                        digits += 1;
                    }
                }
                if digits == 0 {
                    return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                        k += 1;
                    }
                    let exp_start = k;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k == exp_start {
                        return Err(syntax(tl, tc, "malformed exponent".into()));
                    }
                    j = k;
                }
                let s: String = chars[start..j].iter().collect();
                let x: f64 = s
                    .parse()
                    .map_err(|_| syntax(tl, tc, format!("malformed number `{s}`")))?;
                if !x.is_finite() {
                    return Err(syntax(tl, tc, format!("number `{s}` is not finite")));
                }
                push(Tok::Number(x), j - start, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'') {
                    j += 1;
                }
                let s: String = chars[start..j].iter().collect();
                push(Tok::Ident(s), j - start, &mut i, &mut col);
            }
            c => return Err(syntax(tl, tc, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

/// `e1`, `e2`, ... as 0-based element indices.
fn element_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('e')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

enum Sig<'a> {
    Mut(&'a mut Signature),
    Ref(&'a Signature),
}

impl Sig<'_> {
    fn get(&self) -> &Signature {
        match self {
            Sig::Mut(s) => s,
            Sig::Ref(s) => s,
        }
    }
}

type Scope = HashMap<String, SortId>;

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    sig: Sig<'a>,
    query: bool,
    domains: Option<&'a DomainAssignment>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.column)
    }

    fn error(&self, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        let (line, column) = self.here();
        ParseError {
            line,
            column,
            kind,
            message: message.into(),
        }
    }

    fn error_at(&self, at: (usize, usize), kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError {
            line: at.0,
            column: at.1,
            kind,
            message: message.into(),
        }
    }

    fn lift(&self, at: (usize, usize), e: Error) -> ParseError {
        let kind = match &e {
            Error::Duplicate(_) => ParseErrorKind::Duplicate,
            Error::SortMismatch(_) => ParseErrorKind::SortMismatch,
            Error::Undeclared(_) => ParseErrorKind::Undeclared,
            Error::Parse(p) => return p.clone(),
            _ => ParseErrorKind::Syntax,
        };
        self.error_at(at, kind, e.to_string())
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> std::result::Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(ParseErrorKind::Syntax, format!("expected {tok}, found {}", self.peek())))
        }
    }

    fn ident(&mut self) -> std::result::Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => Err(self.error(ParseErrorKind::Syntax, format!("expected identifier, found {t}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> std::result::Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            t => Err(self.error(ParseErrorKind::Syntax, format!("expected `{kw}`, found {t}"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn number(&mut self) -> std::result::Result<f64, ParseError> {
        match self.peek().clone() {
            Tok::Number(x) => {
                self.bump();
                Ok(x)
            }
            t => Err(self.error(ParseErrorKind::Syntax, format!("expected number, found {t}"))),
        }
    }

    fn sig_mut(&mut self) -> &mut Signature {
        match &mut self.sig {
            Sig::Mut(s) => s,
            Sig::Ref(_) => unreachable!("declarations only occur in model files"),
        }
    }

    // ---- declarations ----

    fn declaration(&mut self) -> std::result::Result<bool, ParseError> {
        let kw = match self.peek() {
            Tok::Ident(s) if matches!(s.as_str(), "sort" | "pred" | "prop" | "const") => s.clone(),
            _ => return Ok(false),
        };
        self.bump();
        let at = self.here();
        let name = self.ident()?;
        match kw.as_str() {
            "sort" => {
                let r = self.sig_mut().add_sort(&name);
                r.map_err(|e| self.lift(at, e))?;
            }
            "prop" => {
                let r = self.sig_mut().add_relation(&name, vec![]);
                r.map_err(|e| self.lift(at, e))?;
            }
            "pred" => {
                let mut sorts = Vec::new();
                self.expect(Tok::LParen)?;
                if *self.peek() != Tok::RParen {
                    loop {
                        let sat = self.here();
                        let s = self.ident()?;
                        let r = self.sig_mut().ensure_sort(&s);
                        sorts.push(r.map_err(|e| self.lift(sat, e))?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                let r = self.sig_mut().add_relation(&name, sorts);
                r.map_err(|e| self.lift(at, e))?;
            }
            _ => {
                self.expect(Tok::Colon)?;
                let sat = self.here();
                let s = self.ident()?;
                let r = self.sig_mut().ensure_sort(&s);
                let sort = r.map_err(|e| self.lift(sat, e))?;
                let r = self.sig_mut().add_constant(&name, sort);
                r.map_err(|e| self.lift(at, e))?;
            }
        }
        self.expect(Tok::Semi)?;
        Ok(true)
    }

    // ---- formulas ----

    fn formula(&mut self, scope: &mut Scope) -> std::result::Result<Formula, ParseError> {
        let lhs = self.disjunction(scope)?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula(scope)?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self, scope: &mut Scope) -> std::result::Result<Formula, ParseError> {
        let mut f = self.conjunction(scope)?;
        while *self.peek() == Tok::Or {
            self.bump();
            f = Formula::or(f, self.conjunction(scope)?);
        }
        Ok(f)
    }

    fn conjunction(&mut self, scope: &mut Scope) -> std::result::Result<Formula, ParseError> {
        let mut f = self.unary(scope)?;
        while *self.peek() == Tok::And {
            self.bump();
            f = Formula::and(f, self.unary(scope)?);
        }
        Ok(f)
    }

    fn unary(&mut self, scope: &mut Scope) -> std::result::Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary(scope)?))
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula(scope)?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::Ident(_) => Ok(Formula::Atom(self.atom(scope)?)),
            t => Err(self.error(ParseErrorKind::Syntax, format!("expected a formula, found {t}"))),
        }
    }

    fn atom(&mut self, scope: &mut Scope) -> std::result::Result<Atom, ParseError> {
        let at = self.here();
        let name = self.ident()?;
        let rel = self.sig.get().relation_id(&name).ok_or_else(|| {
            self.error_at(
                at,
                ParseErrorKind::Undeclared,
                format!("`{name}` is not a declared relation"),
            )
        })?;
        let sorts = self.sig.get().relation(rel).sorts.clone();
        let mut args: Vec<Arg<Term>> = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                loop {
                    let place = args.len();
                    let tat = self.here();
                    let tname = self.ident()?;
                    let sort = *sorts.get(place).ok_or_else(|| {
                        self.error_at(
                            tat,
                            ParseErrorKind::SortMismatch,
                            format!("`{name}` takes {} arguments", sorts.len()),
                        )
                    })?;
                    args.push(self.term(tat, &tname, sort, scope)?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        if args.len() != sorts.len() {
            return Err(self.error_at(
                at,
                ParseErrorKind::SortMismatch,
                format!("`{name}` takes {} arguments, got {}", sorts.len(), args.len()),
            ));
        }
        let (rel, terms) = match &mut self.sig {
            Sig::Mut(s) => s.instantiate(rel, &args),
            Sig::Ref(s) => s.lookup_instance(rel, &args),
        }
        .map_err(|e| self.lift(at, e))?;
        Ok(Atom::new(rel, terms))
    }

    fn term(
        &self,
        at: (usize, usize),
        name: &str,
        sort: SortId,
        scope: &mut Scope,
    ) -> std::result::Result<Arg<Term>, ParseError> {
        let sig = self.sig.get();
        if let Some(c) = sig.constant_id(name) {
            let cs = sig.constant(c).sort;
            if cs != sort {
                return Err(self.error_at(
                    at,
                    ParseErrorKind::SortMismatch,
                    format!(
                        "constant `{name}` has sort `{}`, expected `{}`",
                        sig.sort_name(cs),
                        sig.sort_name(sort)
                    ),
                ));
            }
            return Ok(Arg::Const(c));
        }
        if let Some(e) = element_index(name) {
            if !self.query {
                return Err(self.error_at(
                    at,
                    ParseErrorKind::Syntax,
                    format!("domain element `{name}` may only appear in queries"),
                ));
            }
            if let Some(d) = self.domains {
                if e >= d.size(sort) {
                    return Err(self.error_at(
                        at,
                        ParseErrorKind::SortMismatch,
                        format!(
                            "`{name}` is outside the domain of sort `{}` (size {})",
                            sig.sort_name(sort),
                            d.size(sort)
                        ),
                    ));
                }
            }
            return Ok(Arg::Term(Term::Elem(e)));
        }
        if name == "true" || name == "false" {
            return Err(self.error_at(at, ParseErrorKind::Syntax, format!("`{name}` is not a term")));
        }
        match scope.get(name) {
            Some(&s) if s != sort => Err(self.error_at(
                at,
                ParseErrorKind::SortMismatch,
                format!(
                    "variable `{name}` used with sorts `{}` and `{}`",
                    sig.sort_name(s),
                    sig.sort_name(sort)
                ),
            )),
            _ => {
                scope.insert(name.to_string(), sort);
                Ok(Arg::Term(Term::Var(Var::new(name, sort))))
            }
        }
    }

    // ---- blocks ----

    fn mln_block(&mut self) -> std::result::Result<(Vec<WeightedFormula>, Scaling), ParseError> {
        self.keyword("mln")?;
        self.expect(Tok::LBrace)?;
        let mut scaling = Scaling::None;
        if self.at_keyword("scaling") && *self.peek_at(1) == Tok::Colon {
            self.bump();
            self.bump();
            let at = self.here();
            match self.ident()?.as_str() {
                "none" => {}
                "da" => scaling = Scaling::DomainAware(Aggregator::Max),
                other => {
                    return Err(self.error_at(at, ParseErrorKind::Syntax, format!("unknown scaling `{other}`")));
                }
            }
            if self.at_keyword("aggregator") {
                self.bump();
                self.expect(Tok::Colon)?;
                let at = self.here();
                let kw = self.ident()?;
                let agg = Aggregator::from_keyword(&kw)
                    .ok_or_else(|| self.error_at(at, ParseErrorKind::Syntax, format!("unknown aggregator `{kw}`")))?;
                if let Scaling::DomainAware(_) = scaling {
                    scaling = Scaling::DomainAware(agg);
                }
            }
            self.expect(Tok::Semi)?;
        }
        let mut formulas = Vec::new();
        while *self.peek() != Tok::RBrace {
            let weight = self.number()?;
            self.expect(Tok::Colon)?;
            let formula = self.formula(&mut Scope::new())?;
            self.expect(Tok::Semi)?;
            formulas.push(WeightedFormula { formula, weight });
        }
        self.expect(Tok::RBrace)?;
        Ok((formulas, scaling))
    }

    fn rlr_block(&mut self) -> std::result::Result<Vec<Node>, ParseError> {
        self.keyword("rlr")?;
        self.expect(Tok::LBrace)?;
        let mut nodes = Vec::new();
        while *self.peek() != Tok::RBrace {
            nodes.push(self.node()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(nodes)
    }

    fn node(&mut self) -> std::result::Result<Node, ParseError> {
        self.keyword("node")?;
        let mut head_scope = Scope::new();
        let head = self.atom(&mut head_scope)?;
        self.expect(Tok::LBrace)?;
        let mut parents = None;
        if self.at_keyword("parents") {
            self.bump();
            let mut ps = Vec::new();
            loop {
                let at = self.here();
                let name = self.ident()?;
                let rel = self.sig.get().relation_id(&name).ok_or_else(|| {
                    self.error_at(
                        at,
                        ParseErrorKind::Undeclared,
                        format!("`{name}` is not a declared relation"),
                    )
                })?;
                if !ps.contains(&rel) {
                    ps.push(rel);
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
            parents = Some(ps);
        }
        let mut conditions = Vec::new();
        while *self.peek() != Tok::RBrace {
            conditions.push(self.label(&head, &head_scope)?);
        }
        self.expect(Tok::RBrace)?;
        Ok(Node {
            head,
            conditions,
            parents,
        })
    }

    fn label(&mut self, head: &Atom, head_scope: &Scope) -> std::result::Result<Condition, ParseError> {
        let weight = self.number()?;
        let mut proportional = true;
        if self.at_keyword("prop") {
            self.bump();
        } else if self.at_keyword("raw") {
            self.bump();
            proportional = false;
        }
        self.expect(Tok::Colon)?;
        let mut scope = head_scope.clone();
        let formula = self.formula(&mut scope)?;
        let over = if self.at_keyword("over") {
            self.bump();
            self.expect(Tok::LBrace)?;
            let mut vars: Vec<Var> = Vec::new();
            if *self.peek() != Tok::RBrace {
                loop {
                    let at = self.here();
                    let name = self.ident()?;
                    let annotated = if *self.peek() == Tok::Colon {
                        self.bump();
                        let sat = self.here();
                        let s = self.ident()?;
                        Some(self.sig.get().sort_id(&s).ok_or_else(|| {
                            self.error_at(sat, ParseErrorKind::Undeclared, format!("`{s}` is not a declared sort"))
                        })?)
                    } else {
                        None
                    };
                    let sort = match (scope.get(&name), annotated) {
                        (Some(&s), Some(a)) if s != a => {
                            return Err(self.error_at(
                                at,
                                ParseErrorKind::SortMismatch,
                                format!("variable `{name}` has sort `{}`", self.sig.get().sort_name(s)),
                            ))
                        }
                        (Some(&s), _) => s,
                        (None, Some(a)) => a,
                        (None, None) if self.sig.get().num_sorts() == 1 => SortId(0),
                        (None, None) => {
                            return Err(self.error_at(
                                at,
                                ParseErrorKind::SortMismatch,
                                format!("cannot infer the sort of `{name}`; write `{name}: SORT`"),
                            ))
                        }
                    };
                    if vars.iter().any(|v| v.name == name) {
                        return Err(self.error_at(at, ParseErrorKind::Duplicate, format!("`{name}` listed twice")));
                    }
                    vars.push(Var::new(name, sort));
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RBrace)?;
            vars
        } else {
            let head_vars: Vec<&str> = head.vars().map(|v| v.name.as_str()).collect();
            formula
                .free_variables()
                .into_iter()
                .filter(|v| !head_vars.contains(&v.name.as_str()))
                .collect()
        };
        self.expect(Tok::Semi)?;
        Ok(Condition {
            formula,
            weight,
            over,
            proportional,
        })
    }
}

/// Parses a model file. RLR nodes for constant-instantiated relations that
/// the text does not define are derived from the nodes of their base
/// relations.
pub fn parse_model(text: &str) -> Result<Model> {
    let toks = lex(text)?;
    let mut sig = Signature::new();
    let mut p = Parser {
        toks,
        pos: 0,
        sig: Sig::Mut(&mut sig),
        query: false,
        domains: None,
    };
    while p.declaration()? {}
    let model = if p.at_keyword("mln") {
        let (formulas, scaling) = p.mln_block()?;
        p.expect(Tok::Eof)?;
        Model::Mln(MlnModel::new(Arc::new(sig), formulas, scaling))
    } else if p.at_keyword("rlr") {
        let mut nodes = p.rlr_block()?;
        p.expect(Tok::Eof)?;
        crate::rlr::derive_instance_nodes(&mut sig, &mut nodes, false);
        Model::Rlr(RlrModel::new(Arc::new(sig), nodes))
    } else {
        return Err(p
            .error(
                ParseErrorKind::Syntax,
                format!("expected a declaration, `mln` or `rlr`, found {}", p.peek()),
            )
            .into());
    };
    Ok(model)
}

/// Parses a query or evidence formula over an existing signature. Element
/// names `e1, e2, ...` are allowed and checked against `domains` when given;
/// free variables are returned as variables.
pub fn parse_query(text: &str, signature: &Signature, domains: Option<&DomainAssignment>) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        sig: Sig::Ref(signature),
        query: true,
        domains,
    };
    let f = p.formula(&mut Scope::new())?;
    p.expect(Tok::Eof)?;
    Ok(f)
}
