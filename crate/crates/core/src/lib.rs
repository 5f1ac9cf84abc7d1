//! Weighted relational logic over finite domains.
//!
//! Markov logic networks (plain and domain-aware), relational logistic
//! regression (plain, proportional and mixed), exact inference by
//! enumeration, forward sampling, per-node weight learning and exact
//! limits of domain-aware relational logistic regression as the domains
//! grow.

pub mod asymptotics;
pub mod error;
pub mod logic;
pub mod mln;
pub mod rlr;

pub use asymptotics::{asymptotic_query, AsymptoticEngine, AsymptoticReport};
pub use error::{Error, Result};
pub use logic::{
    parse_model, parse_query, Atom, DomainAssignment, Formula, Model, ParseError, RelId, Signature, SortId, Term, Var,
    World,
};
pub use mln::{Aggregator, Engine, MlnModel, Scaling};
pub use rlr::{RlrModel, SampleBatch};
