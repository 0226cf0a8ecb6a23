//! Core algorithms for two-stage entity-level financial sentiment analysis
//! with self-aware in-context correction.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): span
//! alignment and BILOU codecs, strict/relaxed scoring, prompt rendering and
//! prediction parsing, the two-channel GAT example retriever with its
//! contrastive trainer, pseudo-label filtering, and the LSTM forecaster.
//! File formats, model endpoints and the command line live in the `silc`
//! companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod eval;
pub mod forecast;
pub mod gateway;
pub mod math;
pub mod optim;
pub mod pipeline;
pub mod retriever;

pub use corpus::{Dataset, Document, EntityAnnotation, Lang, Polarity};
pub use gateway::PredictionRecord;

