//! Multi-sorted relational logic: signatures, quantifier-free formulas,
//! finite structures and the model DSL.

mod formula;
mod parser;
mod signature;
mod world;

use std::fmt;

pub use formula::{Atom, Formula, FormulaDisplay, Term, Var};
pub use parser::{parse_model, parse_query, Model};
pub use signature::{Arg, ConstId, Constant, Origin, RelId, Relation, Signature, SortId};
pub use world::{
    count_true_groundings, enumerate_worlds, ground_atom_text, holds, reduct, CompiledFormula, DomainAssignment,
    GroundLayout, GroundingMap, World, Worlds, DEFAULT_ATOM_CAP,
};

pub(crate) use world::{check_cap, for_each_assignment};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    SortMismatch,
    Duplicate,
    Undeclared,
}

/// A DSL error with a 1-based source location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::SortMismatch => "sort mismatch",
            ParseErrorKind::Duplicate => "duplicate declaration",
            ParseErrorKind::Undeclared => "undeclared symbol",
        };
        write!(
            f,
            "{what} at line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

impl std::error::Error for ParseError {}
