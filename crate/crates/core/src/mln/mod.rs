//! Markov logic networks with optional domain-size-aware weight scaling:
//! exact enumeration, the delta kernel and a lifted evaluator.

mod connection;
mod distribution;
mod factorized;
mod model;
mod sweep;

pub use connection::{connection_vector, scaling_factor, ConnectionVector};
pub use distribution::{
    delta, distribution, effective_weights, log_sum_exp, query_probability, verify_sigmoid_identity, world_log_weight,
    GroundMln, LogWeightedDistribution,
};
pub use factorized::{factorized_log_partition, factorized_probability, PROPOSITION_CAP};
pub use model::{Aggregator, MlnModel, Scaling, WeightedFormula};
pub use sweep::{domain_sweep, probability, sweep_csv, Engine, SweepRow};
