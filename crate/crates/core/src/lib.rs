// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod implicit;
pub mod mesh;
pub mod network;
pub mod ribbon;
pub mod fitter;
pub mod refine;
pub mod tessellate;

pub use error::{Error, Result};
