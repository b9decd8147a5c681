//! Quantified boolean Bayesian network.
//!
//! A key-value first-order calculus ([`calculus`], [`kb`]) is compiled at
//! query time into a bipartite AND/OR graph ([`graph`], [`network`]), whose
//! OR factors are fit by SGD ([`training`]) and queried by iterative belief
//! propagation ([`inference`]) or exhaustive enumeration ([`oracle`]).

pub mod calculus;
pub mod experiment;
pub mod factors;
pub mod graph;
pub mod inference;
pub mod kb;
pub mod network;
pub mod oracle;
pub mod record;
pub mod store;
pub mod training;
pub mod universe;

pub use calculus::{Argument, Constant, Predicate, Proposition, PropositionGroup, Variable};
pub use factors::WeightVector;
pub use graph::{build_graph, build_graph_multi, NodeId, PropositionGraph};
pub use inference::{Schedule, Session};
pub use kb::{ConjoinedImplicationLink, Feature, KnowledgeBase, LinkId, RoleSetMapping};
pub use network::{Network, Parameters};
pub use oracle::exact_marginals;
pub use record::KnowledgeBaseRecord;
pub use training::{sgd_train, TrainConfig, World};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Calculus(#[from] calculus::CalculusError),
    #[error(transparent)]
    Kb(#[from] kb::KbError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Factor(#[from] factors::FactorError),
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Inference(#[from] inference::InferenceError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Record(#[from] record::RecordError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
