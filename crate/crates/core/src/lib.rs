//! Adversarial keyphrase generation.
//!
//! A catSeq-style generator (bi-GRU encoder, attentive GRU decoder with a
//! copy mechanism) is pretrained by maximum likelihood and then refined by
//! policy gradient against a hierarchical-attention discriminator that
//! scores each generated keyphrase. Evaluation covers F1@k, F1@M and
//! alpha-nDCG@k over present and absent keyphrases.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod discriminator;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Gradients, Graph, NodeId};
pub use params::ParamSet;
pub use tensor::Tensor;
