//! Distributional analysis of a kinship lexicon.
//!
//! The pipeline trains skip-gram negative-sampling embeddings on one or more
//! corpora, stacks several seeded runs into ensemble vectors, and measures how
//! the geometry of a probe lexicon lines up with a componential feature
//! annotation: neighbor cohesion, regression of cosine similarity on trait
//! differences with ablation importance, and a t-SNE projection.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod rng;
pub mod kinship;
pub mod project;
pub mod regress;
pub mod semspace;
pub mod synth;
