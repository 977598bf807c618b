pub mod actnet;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod skeleton;
pub mod training;

pub use error::{Error, Result};
