//! File formats, command-line tools and the frame-streaming session server
//! around [`geocache_core`].
//!
//! - [`pfm`], [`ply`], [`raster`] and [`latent`]: depth maps, point clouds,
//!   PNG images/masks and the `G3CL` tensor container.
//! - [`schema`]: trajectory, camera and scene JSON.
//! - [`store`]: cache directories and frame sequences.
//! - [`view`]: the single render-and-encode path shared by the CLI and the
//!   server.
//! - [`cli`] and [`server`].

pub mod cli;
pub mod error;
pub mod latent;
pub mod pfm;
pub mod ply;
pub mod raster;
pub mod schema;
pub mod server;
pub mod store;
pub mod view;

pub use error::{Error, Result};
