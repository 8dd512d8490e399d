//! Feature volumes: the FVOL1 container, validation, annotations and the
//! synthetic generator used as a test oracle.

mod annotation;
mod fvol;
mod synth;
mod volume;

pub use annotation::{load_annotations, save_annotations, PartAnnotation};
pub use fvol::{decode_volume, encode_volume, load_volume, save_volume, MAGIC};
pub use synth::{
    synth_generate, PlantedPattern, SignatureEntry, SynthDataset, SynthSpec, TemplateSignature,
};
pub use volume::{validate_volume, FeatureVolume, Layer, Violation};

use crate::error::Result;
use crate::geometry::{LayerGeometry, Point};

/// Image-plane center of unit `(ix, iy)` of a layer.
pub fn unit_center(geom: &LayerGeometry, ix: i64, iy: i64) -> Result<Point> {
    geom.unit_center(ix, iy)
}
