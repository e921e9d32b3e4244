//! Value-function storage on growing self-organizing maps.
//!
//! A learned task leaves behind a linear action-value function. This crate
//! keeps those vectors in a [`gsom::SomGrid`] keyed on cosine similarity, so
//! that the map can later advise exploration on new tasks: instead of acting
//! uniformly at random, an agent can borrow the greedy action of the stored
//! policy most similar to its current estimate. The [`env`] module provides
//! the simulated navigation world the experiments run in, [`agent`] the
//! Watkins Q(lambda) learner and its exploration strategies, [`discovery`]
//! the online clustering that turns stimulus signatures into task candidates,
//! and [`harness`] the end-to-end experiment drivers behind the CLI.

pub mod agent;
pub mod discovery;
pub mod env;
pub mod error;
pub mod gsom;
pub mod harness;
mod seeding;
pub mod similarity;

pub use agent::{
    evaluate_policy, learn_task, learn_task_ppr, select_action, td_update, EpisodeRow, EvalSpec,
    ExplorationMode, LearnSpec, LearningParams, PprParams, TaskObjective, TaskValueFunction,
    Transition,
};
pub use discovery::{ClusterModel, ClusterTask};
pub use env::{AgentState, NavEnv, WorldLayout};
pub use error::{Error, Result};
pub use gsom::{GsomParams, SomGrid, TrainReport};
pub use similarity::{cosine_similarity, Similarity, WeightVector};

/// Derives a named sub-seed from a master seed; equal inputs always produce
/// the same output, distinct labels decorrelate the streams.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    seeding::derive(master, label)
}

/// Mixes an index into a base seed for per-item sub-streams.
pub fn mix_seed(base: u64, k: u64) -> u64 {
    seeding::mix(base, k)
}
