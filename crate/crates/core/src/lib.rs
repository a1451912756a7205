//! Hierarchically quantized embedding hash codes.
//!
//! A compound hash code selects one of `d` branches per interior tree level
//! and `k_s` of `d` leaves at the bottom, addressing `d^k` buckets with only
//! `d*k` activations. Per-level code assignment over class means is solved
//! exactly as minimum cost flow; embeddings are trained with masked metric
//! losses against the assigned codes; retrieval hashes items into the
//! active leaf buckets and reranks candidates by base-embedding distance.

pub mod batch;
pub mod code;
pub mod config;
pub mod data;
pub mod error;
pub mod flownet;
pub mod gradcheck;
pub mod hashopt;
pub mod metric;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod retrieval;
pub mod trainer;

pub use batch::{class_means, ClassMeanSet, EmbeddingBatch};
pub use code::{dense_code, HierarchicalCode};
pub use config::{validate_config, HashConfig, DEFAULT_COST_SCALE};
pub use error::{HiqError, Result};
pub use partition::SiblingPartition;
