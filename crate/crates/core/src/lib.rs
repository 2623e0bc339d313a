//! RDF2vec: knowledge graph embeddings from random walks.
//!
//! The pipeline parses N-Triples into a [`KnowledgeGraph`], extracts random
//! walks from every entity, and trains skip-gram embeddings on the walks.
//! Two training modes are available: [`Mode::Classic`] shares one output
//! matrix across the context window, [`Mode::Ordered`] keeps one output
//! matrix per window offset so that the position of a context token matters.
//! The [`eval`] module scores the resulting vectors on analogy, clustering,
//! classification and regression tasks.

pub mod eval;
pub mod graph;
pub mod model;
pub mod store;
pub mod synthetic;
pub mod train;
pub mod vocab;
pub mod walk;

#[cfg(test)]
mod testing;

pub use graph::{Edge, EntityId, GraphError, KnowledgeGraph, PredicateId, Triple};
pub use model::{EmbeddingModel, Mode, ModelError};
pub use store::{export_text, import_text, Embeddings, StoreError};
pub use train::{init_model, train, TrainConfig, TrainError, TrainOutput, WalkSource};
pub use vocab::{NegativeTable, TokenId, VocabError, Vocabulary};
pub use walk::{generate_walks, write_walks, Corpus, Walk, WalkConfig, WalkError};
