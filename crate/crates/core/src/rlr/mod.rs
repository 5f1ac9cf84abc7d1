//! Relational logistic regression with per-condition proportional flags:
//! validation, exact inference, sampling, learning, conversion and
//! generic extensions by constants.

mod convert;
mod extension;
mod inference;
mod learn;
mod model;
mod sampling;

pub use convert::{convert, normalize_variable_sets, Direction};
pub use extension::{generic_extension, generic_extension_with_constants};
pub use inference::{conditional_probability, log_sigmoid, query_probability, sigmoid, world_probability, GroundRlr};
pub use learn::{learn_weights, LearnReport, NodeReport, GRADIENT_TOLERANCE, WEIGHT_CLAMP};
pub use model::{Condition, Mode, Node, RlrModel, Structure, Violation, ViolationKind};
pub use sampling::{forward_sample, log_likelihood, read_samples, sample_rng, write_samples, SampleBatch};

pub(crate) use extension::{derive_instance_nodes, substitute_constants};
