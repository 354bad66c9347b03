pub mod bev;
pub mod cloud;
pub mod error;
pub mod eval;
pub mod ground;
pub mod lift;
pub mod match2d;
pub mod pipeline;
pub mod solve;

pub use error::{Error, Result, Stage};
