//! Learning closed queuing-network models from queue-length traces.
//!
//! A network's routing probabilities and service rates are fitted by
//! differentiating through a forward-Euler discretization of its fluid
//! dynamics. The fitted model stays interpretable, so it can be queried for
//! what-if predictions under new populations, server counts and routing.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod fluid;
pub mod learner;
pub mod model;
pub mod seed;
pub mod ssa;
pub mod trace;

pub use analysis::{
    find_bottleneck, prediction_error, shift_bottleneck, steady_state, summarize_errors, whatif, ErrorSummary,
    Overrides, Scenario,
};
pub use error::{Error, Result};
pub use fluid::{fluid_rhs, forward_trajectory, FluidState};
pub use learner::{backward, loss, materialize, train, RawParams, TrainConfig, TrainReport};
pub use model::{
    load_balancer, random_model, selfloop_transform, validate_model, QnModel, RandomQnConfig, SelfLoopSpec, Violation,
};
pub use ssa::{ensemble_average, simulate_ssa, transition_rates, EnsembleConfig, JumpEvent, SamplePath};
pub use trace::{ingest_external_traces, Dataset, GridSpec, Manifest, Trace};
