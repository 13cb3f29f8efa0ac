//! Retrieval-augmented question answering over an institutional web corpus.

pub mod analysis;
pub mod corpus;
pub mod index;
pub mod generation;
pub mod retrieval;
pub mod ingest;
pub mod dataset;
pub mod service;
pub mod app;
