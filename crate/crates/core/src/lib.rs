//! Two-stage sticker composition: a type classifier decides between
//! full-canvas (filter-style) and localized (sticker-style) use, a dense
//! anchor-based predictor places sticker-style elements, and a compositor
//! renders the result.

pub mod error;
pub mod geometry;
pub mod nncore;

pub use error::{Error, Result};
pub mod compositor;
pub mod dataio;
pub mod raster;
pub mod classifier;
pub mod placement;
pub mod evalbench;
