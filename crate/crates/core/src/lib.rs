pub mod gf;
pub mod recon;
pub mod sketch;

pub use sketch::{DecodeError, IdRange, Sketch, SketchError};
