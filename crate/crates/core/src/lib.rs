//! Corpus engineering and evaluation toolkit for accented multi-speaker TTS.

pub mod corpus;
pub mod dsp;
pub mod textnorm;
pub mod metrics;
pub mod speaker;
pub mod split;
pub mod enhance;
pub mod service;
pub mod pipeline;
