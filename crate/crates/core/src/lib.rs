pub mod analysis;
pub mod attribution;
pub mod audio_io;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gmm;

pub use error::{Error, Result};
