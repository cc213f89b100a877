//! Hierarchical text-to-museum retrieval.
//!
//! Virtual agricultural museums (rooms of topic-grouped videos) are encoded
//! bottom-up: frame embeddings pass through an in-domain adapter into a video
//! vector, video vectors through a room encoder, room vectors through a museum
//! encoder. Descriptions are encoded sentence by sentence and summarized by a
//! bidirectional GRU. Both sides are trained with a hardest-negative triplet
//! loss and compared by cosine similarity.

pub mod corpus;
pub mod embedstore;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod neural;
pub mod training;

pub use error::{Error, Result};
