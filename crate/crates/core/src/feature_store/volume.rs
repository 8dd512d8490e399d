use std::fmt;

use crate::geometry::LayerGeometry;

/// One exported conv layer: geometry plus a `channels x height x width`
/// activation tensor in (slice, row, column) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub geometry: LayerGeometry,
    pub data: Vec<f32>,
}

impl Layer {
    pub fn new(geometry: LayerGeometry, data: Vec<f32>) -> Self {
        Self { geometry, data }
    }

    pub fn zeros(geometry: LayerGeometry) -> Self {
        let n = geometry.element_count();
        Self::new(geometry, vec![0.0; n])
    }

    #[inline]
    pub fn index(&self, slice: u32, iy: u32, ix: u32) -> usize {
        let g = &self.geometry;
        (slice as usize * g.height as usize + iy as usize) * g.width as usize + ix as usize
    }

    #[inline]
    pub fn at(&self, slice: u32, iy: u32, ix: u32) -> f32 {
        self.data[self.index(slice, iy, ix)]
    }

    #[inline]
    pub fn at_mut(&mut self, slice: u32, iy: u32, ix: u32) -> &mut f32 {
        let i = self.index(slice, iy, ix);
        &mut self.data[i]
    }
}

/// Conv activations of one (object-cropped) image across the exported layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub layers: Vec<Layer>,
}

impl FeatureVolume {
    pub fn layer(&self, layer_id: u32) -> Option<&Layer> {
        self.layers.iter().find(|l| l.geometry.layer_id == layer_id)
    }

    pub fn layer_mut(&mut self, layer_id: u32) -> Option<&mut Layer> {
        self.layers
            .iter_mut()
            .find(|l| l.geometry.layer_id == layer_id)
    }

    pub fn geometries(&self) -> Vec<LayerGeometry> {
        self.layers.iter().map(|l| l.geometry).collect()
    }
}

/// A broken invariant found by [`validate_volume`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyImage {
        width: u32,
        height: u32,
    },
    BadGeometry {
        layer_id: u32,
        reason: String,
    },
    ElementCount {
        layer_id: u32,
        expected: usize,
        actual: usize,
    },
    NonFinite {
        layer_id: u32,
        slice: u32,
        row: u32,
        col: u32,
    },
    LayerOrder {
        previous: u32,
        layer_id: u32,
    },
    StrideOrder {
        previous: u32,
        layer_id: u32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyImage { width, height } => {
                write!(f, "image size {width}x{height} must be at least 1x1")
            }
            Violation::BadGeometry { layer_id, reason } => {
                write!(f, "layer {layer_id}: {reason}")
            }
            Violation::ElementCount {
                layer_id,
                expected,
                actual,
            } => write!(
                f,
                "layer {layer_id}: tensor holds {actual} values, geometry implies {expected}"
            ),
            Violation::NonFinite {
                layer_id,
                slice,
                row,
                col,
            } => write!(
                f,
                "layer {layer_id}: non-finite activation at slice {slice}, row {row}, col {col}"
            ),
            Violation::LayerOrder { previous, layer_id } => write!(
                f,
                "layer ids must strictly increase: {layer_id} follows {previous}"
            ),
            Violation::StrideOrder { previous, layer_id } => write!(
                f,
                "stride of layer {layer_id} is smaller than stride of layer {previous}"
            ),
        }
    }
}

/// Checks every structural invariant of a volume. Returns an empty list iff
/// the volume is well-formed.
pub fn validate_volume(vol: &FeatureVolume) -> Vec<Violation> {
    let mut out = Vec::new();
    if vol.image_width == 0 || vol.image_height == 0 {
        out.push(Violation::EmptyImage {
            width: vol.image_width,
            height: vol.image_height,
        });
    }

    let mut prev: Option<&LayerGeometry> = None;
    for layer in &vol.layers {
        let g = &layer.geometry;
        let bad = |reason: &str| Violation::BadGeometry {
            layer_id: g.layer_id,
            reason: reason.to_string(),
        };
        if !(g.stride_px > 0.0) || !g.stride_px.is_finite() {
            out.push(bad("stride_px must be a positive finite number"));
        }
        if !(g.rf_size_px > 0.0) || !g.rf_size_px.is_finite() {
            out.push(bad("rf_size_px must be a positive finite number"));
        }
        if !g.offset_px.is_finite() {
            out.push(bad("offset_px must be finite"));
        }
        if g.channels == 0 || g.height == 0 || g.width == 0 {
            out.push(bad("channels, height and width must all be at least 1"));
        }

        if let Some(p) = prev {
            if g.layer_id <= p.layer_id {
                out.push(Violation::LayerOrder {
                    previous: p.layer_id,
                    layer_id: g.layer_id,
                });
            }
            if g.stride_px < p.stride_px {
                out.push(Violation::StrideOrder {
                    previous: p.layer_id,
                    layer_id: g.layer_id,
                });
            }
        }
        prev = Some(g);

        let expected = g.element_count();
        if layer.data.len() != expected {
            out.push(Violation::ElementCount {
                layer_id: g.layer_id,
                expected,
                actual: layer.data.len(),
            });
            continue;
        }
        for (i, v) in layer.data.iter().enumerate() {
            if !v.is_finite() {
                let w = g.width as usize;
                let hw = g.height as usize * w;
                out.push(Violation::NonFinite {
                    layer_id: g.layer_id,
                    slice: (i / hw) as u32,
                    row: ((i % hw) / w) as u32,
                    col: (i % w) as u32,
                });
            }
        }
    }
    out
}
