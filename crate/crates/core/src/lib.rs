//! Convolutional RBM for symbolic music with structure-constrained sampling.
//!
//! * [`pianoroll`]: roll type, MIDI ingestion/export, corpus augmentation
//! * [`crbm`]: the time-convolutional model, Gibbs sampling, PCD training
//! * [`constraints`]: differentiable structure costs and template extraction
//! * [`sampler`]: annealed alternation of Gibbs and gradient-descent phases
//! * [`eval`]: Information Rate, key finding, SVG figures
//! * [`synth`]: seeded toy pieces with known repetition structure

mod binio;
pub mod constraints;
pub mod crbm;
pub mod error;
pub mod eval;
pub mod math;
pub mod pianoroll;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
