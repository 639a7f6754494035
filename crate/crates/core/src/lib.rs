//! Per-frame action segmentation of multimodal synthetic video with a pair
//! of coupled conditional GANs, a recurrent context extractor, a classifier
//! tap head, a bit-exact persistence layer, and a segmentation metrics suite.

pub mod codes;
pub mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod seeding;
pub mod synth;
pub mod trainer;
pub mod zoo;

pub use error::{Error, Result};
