use super::model::RlrModel;
use crate::error::{Error, Result};
use crate::logic::DomainAssignment;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    DaToUnscaled,
    UnscaledToDa,
}

/// Moves between proportional and raw conditions at fixed domain sizes. A
/// proportional weight `w` reads `w / |D|_V` per true grounding, so the raw
/// weight is `w / |D|_V` and the reverse direction multiplies. Both models
/// define the same distribution on `domains`.
pub fn convert(model: &RlrModel, domains: &DomainAssignment, direction: Direction) -> RlrModel {
    let mut out = model.clone();
    for c in out.nodes.iter_mut().flat_map(|n| n.conditions.iter_mut()) {
        let size = domains.product(&c.over) as f64;
        match direction {
            Direction::DaToUnscaled if c.proportional => {
                c.weight /= size;
                c.proportional = false;
            }
            Direction::UnscaledToDa if !c.proportional => {
                c.weight *= size;
                c.proportional = true;
            }
            _ => {}
        }
    }
    out
}

/// Drops variables from each `V` that the condition's formula does not
/// mention. Proportional weights are unchanged; raw weights absorb the
/// dropped `|D_y|` factors, which requires `domains`.
pub fn normalize_variable_sets(model: &RlrModel, domains: Option<&DomainAssignment>) -> Result<RlrModel> {
    let mut out = model.clone();
    for c in out.nodes.iter_mut().flat_map(|n| n.conditions.iter_mut()) {
        let (kept, dropped): (Vec<_>, Vec<_>) = c.over.iter().cloned().partition(|v| c.formula.mentions_var(&v.name));
        if dropped.is_empty() {
            continue;
        }
        if !c.proportional {
            let d = domains
                .ok_or_else(|| Error::InvalidArgument("normalizing a raw condition needs domain sizes".into()))?;
            c.weight *= d.product(&dropped) as f64;
        }
        c.over = kept;
    }
    Ok(out)
}
