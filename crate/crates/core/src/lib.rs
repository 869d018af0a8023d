pub mod condense;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod sampler;
pub mod synth;
pub mod tca;
pub mod tensor;

pub use error::{Error, Result};
