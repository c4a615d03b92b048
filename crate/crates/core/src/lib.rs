#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod imgproc;
pub mod locate;
pub mod pipeline;
pub mod simulate;
pub mod smooth;

pub use error::{Error, Result};
