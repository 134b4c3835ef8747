//! Retrieve-and-read link prediction over knowledge graphs.
//!
//! A query `(source, relation, ?)` is answered in two stages. A retriever
//! pulls a small, budget-bounded subgraph around the source entity; a reader
//! encodes the query and that subgraph with two Transformer towers, fuses
//! them with cross-attention, and scores every entity in the graph.
//!
//! * [`kg`]: vocabularies, triples, the indexed graph and inverse relations.
//! * [`retriever`]: breadth-first, one-hop and path-union retrieval, beam search.
//! * [`reader`]: tokenization, the graph attention mask and the reader model.
//! * [`numerics`]: tensors, reverse-mode tape, Adamax and the lr schedule.
//! * [`train`]: batching, training, filtered ranking and ablations.
//! * [`synth`]: the desk fixture and a compositional synthetic generator.

pub mod error;
pub mod kg;
pub mod numerics;
pub mod reader;
pub mod retriever;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
