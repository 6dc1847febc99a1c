//! Image privacy prediction from deep visual features and image tags.

pub mod annotate;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod gist;
pub mod svm;
pub mod taglab;
pub mod wordnet;

pub use error::{Error, Result};
