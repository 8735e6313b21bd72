pub mod bits;
pub mod closedform;
pub mod codes;
pub mod decoder;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod experiment;
pub mod fisher;
pub mod identify;
pub mod noise;
pub mod numeric;
pub mod pauli;

pub use error::{Error, Result};
