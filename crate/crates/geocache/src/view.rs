//! The one code path that turns a cache and a camera into frame bytes, used
//! by both `render --union` and the session server.

use geocache_core::cache::{Cache3D, PointCloud};
use geocache_core::geometry::Camera;
use geocache_core::splat::{render_union, RenderedFrame};

use crate::error::Result;
use crate::raster::{encode_image_png, encode_mask_png};

/// All views of the cache at trajectory frame `t`, z-tested together.
pub fn render_view(cache: &Cache3D, camera: &Camera, t: usize, splat_radius: f64) -> Result<RenderedFrame> {
    let ti = cache.time_index(t)?;
    let clouds: Vec<&PointCloud> = cache.row(ti).iter().map(|c| c.as_ref()).collect();
    Ok(render_union(&clouds, camera, splat_radius))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub image_png: Vec<u8>,
    pub mask_png: Vec<u8>,
}

pub fn encode_frame(frame: &RenderedFrame) -> Result<EncodedFrame> {
    Ok(EncodedFrame {
        image_png: encode_image_png(&frame.image)?,
        mask_png: encode_mask_png(&frame.mask)?,
    })
}
