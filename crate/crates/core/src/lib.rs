//! Relay selection and network-coding matrix optimization for compute-and-forward
//! uplinks, with the coalition game played between relays and the
//! centralized decoder.
//!
//! The pipeline is: [`candidates::build_family`] enumerates each relay's best
//! integer equations, [`engine::run`] walks the min-rate/sum-rate trade-off to
//! the best feasible sum rate, and [`game`] turns the result into coalition
//! values and payoffs. [`oracle`] is the exhaustive reference used to check
//! the engine, and [`sim`] drives Monte Carlo sweeps over Gaussian channels.

pub mod candidates;
pub mod engine;
pub mod error;
pub mod exact;
pub mod fixture;
pub mod game;
pub mod io;
pub mod model;
pub mod oracle;
pub mod sim;

pub use candidates::{
    build_family, enumerate_candidates, gram, CandidateSetFamily, GramMatrix, PolicyKind,
    TerminationPolicy,
};
pub use engine::{run, step1_max_min, weight, EngineResult, EngineTrace};
pub use error::{Error, Result};
pub use game::{EconParams, Partition, Player};
pub use model::{
    collinear_rate, computation_rate, derive_selection, meets_requirements, CandidateRef,
    CandidateVector, ChannelInstance, CodingSelection, RateRequirements,
};
pub use oracle::{enumerate_solutions, opt_max_min, opt_max_sum, pareto_frontier, SolutionSet};
pub use sim::{run_sweep, SweepConfig, SweepResult};
