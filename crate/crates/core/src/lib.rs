mod binio;
pub mod cli;
pub mod ctc;
pub mod datapipe;
pub mod error;
pub mod layers;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
