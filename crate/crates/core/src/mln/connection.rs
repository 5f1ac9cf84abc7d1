use super::model::Aggregator;
use crate::logic::{DomainAssignment, Formula};

/// Per literal (atom occurrence, left to right), `prod |D_x|` over the
/// formula's free variables that the literal does not contain.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionVector {
    pub entries: Vec<f64>,
}

pub fn connection_vector(formula: &Formula, domains: &DomainAssignment) -> ConnectionVector {
    let free = formula.free_variables();
    let entries = formula
        .atoms()
        .into_iter()
        .map(|a| {
            free.iter()
                .filter(|v| !a.vars().any(|w| w.name == v.name))
                .map(|v| domains.size(v.sort) as f64)
                .product()
        })
        .collect();
    ConnectionVector { entries }
}

impl ConnectionVector {
    /// Aggregate of the entries; 1 for a formula without literals.
    pub fn aggregate(&self, aggregator: Aggregator) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        match aggregator {
            Aggregator::Max => self.entries.iter().copied().fold(f64::MIN, f64::max),
            Aggregator::Sum => self.entries.iter().sum(),
            Aggregator::GeometricMean => {
                (self.entries.iter().map(|e| e.ln()).sum::<f64>() / self.entries.len() as f64).exp()
            }
        }
    }
}

/// `C_i`: the aggregated connection vector of `formula`.
pub fn scaling_factor(formula: &Formula, domains: &DomainAssignment, aggregator: Aggregator) -> f64 {
    connection_vector(formula, domains).aggregate(aggregator)
}
