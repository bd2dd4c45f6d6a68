pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod lexicon_prefix;
pub mod objective;
pub mod optim;
pub mod run;
pub mod seed;
pub mod synth;
pub mod text;
pub mod trainer;

pub use data::{Dataset, Example, Lexicon, LexiconEntry, Polarity};
pub use error::{Error, Result};
