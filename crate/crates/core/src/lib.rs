//! Intermediary-topic detection for microblog corpora.
//!
//! The pipeline builds per-user documents from a tweet dump, estimates each
//! user's stance on a sensitive issue from TF-IDF similarity to seed-user
//! stance vectors, measures homophily in two-way interactions, fits LDA over
//! the user documents and ranks topics of the resulting co-occurrence graph
//! by information (current-flow closeness) centrality. Topics above the
//! median centrality are reported as intermediary topics.

pub mod corpus;
pub mod error;
pub mod graphml;
pub mod homophily;
pub mod pipeline;
pub mod stance;
pub mod stats;
pub mod synth;
pub mod textproc;
pub mod topicgraph;
pub mod topicmodel;

pub use error::{Error, Result};
