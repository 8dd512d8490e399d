//! FVOL1: little-endian binary container for one image's feature volume.
//!
//! ```text
//! magic        "FVOL1\0"                     6 bytes
//! layer_count  u32
//! image_width  u32
//! image_height u32
//! id_len       u32, then id_len bytes of UTF-8 image id
//! per layer:
//!   layer_id u32, channels u32, height u32, width u32,
//!   stride_px f32, rf_size_px f32, offset_px f32,
//!   channels*height*width f32 in (slice, row, column) order
//! ```

use std::fs;
use std::path::Path;

use super::volume::{FeatureVolume, Layer};
use crate::error::{Error, Result};
use crate::geometry::LayerGeometry;

pub const MAGIC: &[u8; 6] = b"FVOL1\0";

/// Upper bound on a single layer's element count accepted by the reader.
const MAX_ELEMENTS: usize = 1 << 31;

pub fn encode_volume(vol: &FeatureVolume) -> Vec<u8> {
    let payload: usize = vol.layers.iter().map(|l| 28 + 4 * l.data.len()).sum();
    let mut buf = Vec::with_capacity(22 + vol.image_id.len() + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(vol.layers.len() as u32).to_le_bytes());
    buf.extend_from_slice(&vol.image_width.to_le_bytes());
    buf.extend_from_slice(&vol.image_height.to_le_bytes());
    buf.extend_from_slice(&(vol.image_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(vol.image_id.as_bytes());
    for layer in &vol.layers {
        let g = &layer.geometry;
        for v in [g.layer_id, g.channels, g.height, g.width] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in [g.stride_px, g.rf_size_px, g.offset_px] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &layer.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    layer: Option<usize>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                layer: self.layer,
                message: format!(
                    "needed {n} bytes for {what} at offset {}, only {} left",
                    self.pos,
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_volume(buf: &[u8]) -> Result<FeatureVolume> {
    let mut r = Reader {
        buf,
        pos: 0,
        layer: None,
    };
    let magic = r.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            layer: None,
            message: format!("bad magic {:?}, expected \"FVOL1\\0\"", String::from_utf8_lossy(magic)),
        });
    }
    let layer_count = r.u32("layer_count")? as usize;
    let image_width = r.u32("image_width")?;
    let image_height = r.u32("image_height")?;
    let id_len = r.u32("image_id length")? as usize;
    let image_id = std::str::from_utf8(r.take(id_len, "image_id")?)
        .map_err(|e| Error::Format {
            layer: None,
            message: format!("image_id is not valid UTF-8: {e}"),
        })?
        .to_string();

    let mut layers = Vec::with_capacity(layer_count.min(64));
    for li in 0..layer_count {
        r.layer = Some(li);
        let geometry = LayerGeometry {
            layer_id: r.u32("layer_id")?,
            channels: r.u32("channels")?,
            height: r.u32("height")?,
            width: r.u32("width")?,
            stride_px: r.f32("stride_px")?,
            rf_size_px: r.f32("rf_size_px")?,
            offset_px: r.f32("offset_px")?,
        };
        let n = (geometry.channels as u64)
            .checked_mul(geometry.height as u64)
            .and_then(|v| v.checked_mul(geometry.width as u64))
            .filter(|&v| v as usize <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format {
                layer: Some(li),
                message: format!(
                    "dimension mismatch: {}x{}x{} is not a representable tensor",
                    geometry.channels, geometry.height, geometry.width
                ),
            })? as usize;
        let bytes = r.take(4 * n, "activation tensor")?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        layers.push(Layer::new(geometry, data));
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            layer: None,
            message: format!(
                "{} trailing bytes after the declared {layer_count} layers",
                buf.len() - r.pos
            ),
        });
    }
    Ok(FeatureVolume {
        image_id,
        image_width,
        image_height,
        layers,
    })
}

pub fn save_volume(vol: &FeatureVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(vol)).map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<FeatureVolume> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&buf)
}
