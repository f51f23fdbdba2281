//! Geometry core for cache-guided camera-controlled video generation.
//!
//! A posed RGB-D frame is unprojected into a colored point cloud; clouds are
//! arranged into an `L x V` spatiotemporal cache, splatted along a camera
//! trajectory into guidance videos with disocclusion masks, and fused across
//! views before being handed to a pluggable [`fusion::Generator`]. Long videos
//! are produced chunk by chunk, with each chunk's last frame aligned against
//! the cache and appended as a new view.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and the session server live in the `geocache` crate.

#![no_std]
// `!(x > lo)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod align;
pub mod cache;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod splat;
pub mod sum;
pub mod synthworld;

pub use error::{Error, Result};
pub use nalgebra;
