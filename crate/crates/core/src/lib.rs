pub mod detector;
pub mod edges;
pub mod ellipse;
pub mod error;
pub mod harness;
pub mod image;
pub mod kv;
pub mod mser;
pub mod synth;
pub use error::{Error, Result};
