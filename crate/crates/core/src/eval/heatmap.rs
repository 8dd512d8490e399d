use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::feature_store::FeatureVolume;
use crate::parser::ParseGraph;

/// Per-cell sum of the raw activations of the units a parse chose on one
/// layer, at that layer's resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl Heatmap {
    /// Min-max scaling to 0..=255 with the minimum taken no higher than zero,
    /// so untouched cells stay dark. A flat map scales to all zeros.
    pub fn to_gray(&self) -> Vec<u8> {
        let lo = self.values.iter().copied().fold(0.0, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return vec![0; self.values.len()];
        }
        self.values
            .iter()
            .map(|v| (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

pub fn render_heatmap(parse: &ParseGraph, vol: &FeatureVolume, layer_id: u32) -> Result<Heatmap> {
    let layer = vol
        .layer(layer_id)
        .ok_or_else(|| Error::Lookup(format!("volume {} lacks layer {layer_id}", vol.image_id)))?;
    let g = layer.geometry;
    let mut values = vec![0.0; g.width as usize * g.height as usize];
    for r in parse.patterns.iter().filter(|r| r.layer == layer_id) {
        let [ix, iy] = r.unit;
        if ix >= g.width || iy >= g.height || r.slice >= g.channels {
            return Err(Error::Index {
                layer_id,
                ix: i64::from(ix),
                iy: i64::from(iy),
                width: g.width,
                height: g.height,
            });
        }
        values[(iy * g.width + ix) as usize] += f64::from(layer.at(r.slice, iy, ix));
    }
    Ok(Heatmap {
        width: g.width,
        height: g.height,
        values,
    })
}

/// Binary PGM (P5), 8 bits per pixel.
pub fn write_pgm(map: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    bytes.extend(map.to_gray());
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn heatmap_export(
    parse: &ParseGraph,
    vol: &FeatureVolume,
    layer_id: u32,
    path: impl AsRef<Path>,
) -> Result<Heatmap> {
    let map = render_heatmap(parse, vol, layer_id)?;
    write_pgm(&map, path)?;
    Ok(map)
}
