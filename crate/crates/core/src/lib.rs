pub mod corpus;
pub mod error;
pub mod preprocess;
pub mod seed;

pub use error::{Error, Result};
pub mod encoding;
pub mod model;
pub mod evaluation;
pub mod synthetic;
pub mod training;
