pub mod bags;
pub mod codec;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod ingest;
pub mod mil;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
