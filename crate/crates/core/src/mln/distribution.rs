use std::sync::Arc;

use bitvec::prelude::*;
use rayon::prelude::*;

use super::connection::scaling_factor;
use super::model::{MlnModel, Scaling};
use crate::error::{Error, Result};
use crate::logic::{check_cap, CompiledFormula, DomainAssignment, Formula, GroundLayout, World};
use crate::rlr::sigmoid;

/// `w_i / C_i` per formula; `C_i = 1` without scaling.
pub fn effective_weights(model: &MlnModel, domains: &DomainAssignment) -> Vec<f64> {
    model
        .formulas
        .iter()
        .map(|wf| match model.scaling {
            Scaling::None => wf.weight,
            Scaling::DomainAware(agg) => wf.weight / scaling_factor(&wf.formula, domains, agg),
        })
        .collect()
}

/// A model compiled against one layout.
#[derive(Clone, Debug)]
pub struct GroundMln {
    layout: Arc<GroundLayout>,
    formulas: Vec<CompiledFormula>,
    weights: Vec<f64>,
}

impl GroundMln {
    pub fn new(model: &MlnModel, domains: DomainAssignment) -> Result<Self> {
        let layout = GroundLayout::new(model.signature.clone(), domains)?;
        Self::with_layout(model, layout)
    }

    pub fn with_layout(model: &MlnModel, layout: Arc<GroundLayout>) -> Result<Self> {
        if **layout.signature() != *model.signature {
            return Err(Error::InvalidArgument(
                "world signature differs from the model signature".into(),
            ));
        }
        let formulas = model
            .formulas
            .iter()
            .map(|wf| CompiledFormula::with_free_variables(&wf.formula, &layout))
            .collect::<Result<Vec<_>>>()?;
        let weights = effective_weights(model, layout.domains());
        Ok(GroundMln {
            layout,
            formulas,
            weights,
        })
    }

    pub fn layout(&self) -> &Arc<GroundLayout> {
        &self.layout
    }

    /// `sum_i (w_i / C_i) n_i`.
    pub fn log_weight(&self, bits: &BitSlice<u64, Lsb0>) -> f64 {
        self.formulas
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(f, w)| w * f.count(bits) as f64)
            .sum()
    }
}

pub fn world_log_weight(model: &MlnModel, world: &World) -> Result<f64> {
    Ok(GroundMln::with_layout(model, world.layout().clone())?.log_weight(world.bits()))
}

/// Natural log of a sum of exponentials, summed in slice order.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-weights of every world in enumeration order plus `ln Z`.
#[derive(Clone, Debug)]
pub struct LogWeightedDistribution {
    layout: Arc<GroundLayout>,
    log_weights: Vec<f64>,
    log_z: f64,
}

impl LogWeightedDistribution {
    pub fn layout(&self) -> &Arc<GroundLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    pub fn log_weight(&self, world: usize) -> f64 {
        self.log_weights[world]
    }

    pub fn probability(&self, world: usize) -> f64 {
        (self.log_weights[world] - self.log_z).exp()
    }

    pub fn world(&self, index: usize) -> World {
        World::from_index(self.layout.clone(), index as u64)
    }

    /// `P(query | evidence)` for ground formulas.
    pub fn query(&self, query: &Formula, evidence: Option<&Formula>) -> Result<f64> {
        let q = CompiledFormula::new(query, &self.layout, &[])?;
        let e = evidence
            .map(|f| CompiledFormula::new(f, &self.layout, &[]))
            .transpose()?;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.len() {
            let word = [i as u64];
            let bits = word.view_bits::<Lsb0>();
            if e.as_ref().is_none_or(|e| e.eval(bits, &[])) {
                let p = self.probability(i);
                den += p;
                if q.eval(bits, &[]) {
                    num += p;
                }
            }
        }
        if den <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        Ok((num / den).clamp(0.0, 1.0))
    }

    /// Marginal of one ground atom.
    pub fn marginal(&self, atom: usize) -> f64 {
        (0..self.len())
            .filter(|i| i >> atom & 1 == 1)
            .map(|i| self.probability(i))
            .sum()
    }

    /// `delta` of `atom` at world `i`, read off the table.
    pub fn delta_at(&self, world: usize, atom: usize) -> f64 {
        let bit = 1usize << atom;
        self.log_weights[world | bit] - self.log_weights[world & !bit]
    }
}

/// Exhaustive distribution over all worlds.
pub fn distribution(model: &MlnModel, domains: &DomainAssignment, cap: usize) -> Result<LogWeightedDistribution> {
    let g = GroundMln::new(model, domains.clone())?;
    check_cap(g.layout.num_atoms(), cap)?;
    let count = 1usize << g.layout.num_atoms();
    let log_weights: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let word = [i as u64];
            g.log_weight(word.view_bits::<Lsb0>())
        })
        .collect();
    let log_z = log_sum_exp(log_weights.iter().copied());
    Ok(LogWeightedDistribution {
        layout: g.layout,
        log_weights,
        log_z,
    })
}

pub fn query_probability(
    model: &MlnModel,
    domains: &DomainAssignment,
    query: &Formula,
    evidence: Option<&Formula>,
    cap: usize,
) -> Result<f64> {
    distribution(model, domains, cap)?.query(query, evidence)
}

/// Weight difference between the companions of `world` with ground atom
/// `atom` true and false.
pub fn delta(model: &MlnModel, world: &World, atom: usize) -> Result<f64> {
    if atom >= world.layout().num_atoms() {
        return Err(Error::InvalidArgument(format!("ground atom #{atom} does not exist")));
    }
    let g = GroundMln::with_layout(model, world.layout().clone())?;
    Ok(g.log_weight(world.with(atom, true).bits()) - g.log_weight(world.with(atom, false).bits()))
}

/// `(P(A), E[sigmoid(delta_A)])`, both by enumeration.
pub fn verify_sigmoid_identity(
    model: &MlnModel,
    domains: &DomainAssignment,
    atom: usize,
    cap: usize,
) -> Result<(f64, f64)> {
    let d = distribution(model, domains, cap)?;
    if atom >= d.layout.num_atoms() {
        return Err(Error::InvalidArgument(format!("ground atom #{atom} does not exist")));
    }
    let lhs = d.marginal(atom);
    let rhs = (0..d.len())
        .map(|i| d.probability(i) * sigmoid(d.delta_at(i, atom)))
        .sum();
    Ok((lhs, rhs))
}
