pub mod cli_io;
pub mod counterfactual;
pub mod curve;
pub mod data;
pub mod error;
pub mod numeric;
pub mod rng;
pub mod estimation;
pub mod inference;
pub mod structural_model;

pub use curve::MteCurve;
pub use data::Dataset;
pub use error::{MteError, Result};
