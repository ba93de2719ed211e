//! Structural-concept prototypes over word representations, cross-lingual
//! alignability measures, and meta-learned alignment functions.
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration and the
//! command-line front end live in the `proto-align` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod featurestore;
pub mod geometry;
pub mod gradcheck;
pub mod linalg;
pub mod metalearn;
pub mod probe;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod treebank;
