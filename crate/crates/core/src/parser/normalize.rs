use crate::error::{Error, Result};
use crate::feature_store::FeatureVolume;
use crate::geometry::LayerGeometry;

/// Z-scored responses of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLayer {
    pub geometry: LayerGeometry,
    pub x: Vec<f64>,
}

impl NormalizedLayer {
    #[inline]
    pub fn at(&self, slice: u32, iy: u32, ix: u32) -> f64 {
        let g = &self.geometry;
        self.x[(slice as usize * g.height as usize + iy as usize) * g.width as usize + ix as usize]
    }

    #[inline]
    pub fn at_mut(&mut self, slice: u32, iy: u32, ix: u32) -> &mut f64 {
        let g = &self.geometry;
        let i = (slice as usize * g.height as usize + iy as usize) * g.width as usize + ix as usize;
        &mut self.x[i]
    }
}

/// A volume whose activations have been replaced by normalized responses.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedVolume {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub layers: Vec<NormalizedLayer>,
}

impl NormalizedVolume {
    pub fn from_volume(vol: &FeatureVolume) -> Self {
        Self {
            image_id: vol.image_id.clone(),
            image_width: vol.image_width,
            image_height: vol.image_height,
            layers: vol
                .layers
                .iter()
                .map(|l| NormalizedLayer {
                    geometry: l.geometry,
                    x: zscore(&l.data),
                })
                .collect(),
        }
    }

    pub fn layer(&self, layer_id: u32) -> Option<&NormalizedLayer> {
        self.layers.iter().find(|l| l.geometry.layer_id == layer_id)
    }

    pub fn layer_mut(&mut self, layer_id: u32) -> Option<&mut NormalizedLayer> {
        self.layers
            .iter_mut()
            .find(|l| l.geometry.layer_id == layer_id)
    }
}

fn zscore(data: &[f32]) -> Vec<f64> {
    let n = data.len();
    if n == 0 {
        return Vec::new();
    }
    let first = data[0];
    if data.iter().all(|&v| v == first) {
        return vec![0.0; n];
    }
    let mean = data.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
    let var = data
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return vec![0.0; n];
    }
    data.iter().map(|&v| (f64::from(v) - mean) / sd).collect()
}

/// Per-image, per-layer z-score `(a - mean) / std` over every unit of the
/// layer (population std). A constant layer maps to all zeros.
pub fn normalize_responses(vol: &FeatureVolume, layer_id: u32) -> Result<Vec<f64>> {
    let layer = vol
        .layer(layer_id)
        .ok_or_else(|| Error::Lookup(format!("volume {} has no layer {layer_id}", vol.image_id)))?;
    Ok(zscore(&layer.data))
}
