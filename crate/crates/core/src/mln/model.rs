use std::fmt;
use std::sync::Arc;

use crate::logic::{Formula, Signature};

/// How a connection vector is collapsed into one scaling factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Aggregator {
    #[default]
    Max,
    Sum,
    GeometricMean,
}

impl Aggregator {
    pub fn keyword(self) -> &'static str {
        match self {
            Aggregator::Max => "max",
            Aggregator::Sum => "sum",
            Aggregator::GeometricMean => "geomean",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "max" => Some(Aggregator::Max),
            "sum" => Some(Aggregator::Sum),
            "geomean" => Some(Aggregator::GeometricMean),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Scaling {
    #[default]
    None,
    DomainAware(Aggregator),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFormula {
    pub formula: Formula,
    pub weight: f64,
}

/// Weighted quantifier-free formulas over a signature, optionally with
/// domain-size-aware weight scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct MlnModel {
    pub signature: Arc<Signature>,
    pub formulas: Vec<WeightedFormula>,
    pub scaling: Scaling,
}

impl MlnModel {
    pub fn new(signature: Arc<Signature>, formulas: Vec<WeightedFormula>, scaling: Scaling) -> Self {
        MlnModel {
            signature,
            formulas,
            scaling,
        }
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }
}

impl fmt::Display for MlnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signature)?;
        writeln!(f)?;
        writeln!(f, "mln {{")?;
        match self.scaling {
            Scaling::None => {}
            Scaling::DomainAware(agg) => writeln!(f, "  scaling: da aggregator: {};", agg.keyword())?,
        }
        for wf in &self.formulas {
            writeln!(f, "  {:?} : {};", wf.weight, wf.formula.display(&self.signature))?;
        }
        writeln!(f, "}}")
    }
}
