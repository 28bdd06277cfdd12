pub mod codec;
pub mod dataprep;
pub mod decoder;
pub mod error;
pub mod lm;
pub mod numerics;
pub mod recurrent;
pub mod trainer;

pub use error::{Error, Result};
