//! Synthetic feature volumes with planted part signatures.
//!
//! Every image is assigned a template (cycling through the templates), a part
//! center is sampled inside the template's center region, and each signature
//! entry of that template writes a truncated Gaussian bump into its conv-slice
//! at the unit nearest to `center + offset`. Everything else is zero-mean
//! Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::annotation::PartAnnotation;
use super::volume::{FeatureVolume, Layer};
use crate::error::{Error, Result};
use crate::geometry::{BBox, LayerGeometry, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureEntry {
    pub layer: u32,
    pub slice: u32,
    /// Bump position relative to the part center, in pixels.
    pub offset: Point,
    pub amplitude: f32,
    /// Truncation radius in units; the Gaussian has sigma = radius / 2.
    #[serde(default)]
    pub radius: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSignature {
    /// Part box (width, height) in pixels.
    pub part_size: Point,
    /// Overrides the dataset-wide center region for this template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_region: Option<BBox>,
    pub signature: Vec<SignatureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub images: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub layers: Vec<LayerGeometry>,
    /// Region the part center is sampled from (uniformly).
    pub center_region: BBox,
    pub templates: Vec<TemplateSignature>,
    /// Standard deviation of the background noise.
    pub noise: f32,
    pub seed: u64,
    #[serde(default = "default_part")]
    pub part_name: String,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_part() -> String {
    "part".to_string()
}

fn default_prefix() -> String {
    "img".to_string()
}

/// A signature entry's expected location: the unit nearest to the center of
/// its template's center region plus the entry offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPattern {
    pub template: usize,
    pub layer: u32,
    pub slice: u32,
    pub center: Point,
    pub unit: [u32; 2],
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub volumes: Vec<FeatureVolume>,
    pub annotations: Vec<PartAnnotation>,
    pub ground_truth: Vec<PlantedPattern>,
}

impl SynthSpec {
    pub fn template_region(&self, t: usize) -> BBox {
        self.templates[t].center_region.unwrap_or(self.center_region)
    }

    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Argument(m));
        if self.images == 0 {
            return fail("images must be at least 1".into());
        }
        if self.templates.is_empty() {
            return fail("at least one template signature is required".into());
        }
        if self.image_width == 0 || self.image_height == 0 {
            return fail("image size must be positive".into());
        }
        if !(self.noise >= 0.0) {
            return fail(format!("noise level {} must be non-negative", self.noise));
        }
        let probe = FeatureVolume {
            image_id: String::new(),
            image_width: self.image_width,
            image_height: self.image_height,
            layers: self.layers.iter().map(|g| Layer::new(*g, Vec::new())).collect(),
        };
        for v in super::volume::validate_volume(&probe) {
            if !matches!(v, super::volume::Violation::ElementCount { .. }) {
                return fail(format!("layer geometry: {v}"));
            }
        }
        for (t, tpl) in self.templates.iter().enumerate() {
            if !(tpl.part_size.x > 0.0 && tpl.part_size.y > 0.0) {
                return fail(format!("template {t}: part_size must be positive"));
            }
            let r = self.template_region(t);
            if !(r.x1 <= r.x2 && r.y1 <= r.y2) {
                return fail(format!("template {t}: center region is inverted"));
            }
            for e in &tpl.signature {
                let Some(g) = self.layers.iter().find(|g| g.layer_id == e.layer) else {
                    return fail(format!("template {t}: signature references missing layer {}", e.layer));
                };
                if e.slice >= g.channels {
                    return fail(format!(
                        "template {t}: slice {} >= {} channels of layer {}",
                        e.slice, g.channels, e.layer
                    ));
                }
                if !(e.amplitude > self.noise) {
                    return fail(format!(
                        "template {t}: amplitude {} must exceed noise level {}",
                        e.amplitude, self.noise
                    ));
                }
                if !(e.radius >= 0.0) {
                    return fail(format!("template {t}: radius must be non-negative"));
                }
            }
        }
        Ok(())
    }
}

fn in_image(p: Point, w: u32, h: u32) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x < f64::from(w) && p.y < f64::from(h)
}

fn add_bump(layer: &mut Layer, slice: u32, ux: u32, uy: u32, amplitude: f32, radius: f32) {
    let g = layer.geometry;
    let r = f64::from(radius);
    let reach = r.floor() as i64;
    let two_sigma_sq = 2.0 * (0.5 * r) * (0.5 * r);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let x = i64::from(ux) + dx;
            let y = i64::from(uy) + dy;
            if x < 0 || y < 0 || x >= i64::from(g.width) || y >= i64::from(g.height) {
                continue;
            }
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > r * r {
                continue;
            }
            let w = if d2 == 0.0 { 1.0 } else { (-d2 / two_sigma_sq).exp() };
            *layer.at_mut(slice, y as u32, x as u32) += (f64::from(amplitude) * w) as f32;
        }
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = if spec.noise > 0.0 {
        Some(Normal::new(0.0f32, spec.noise).map_err(|e| Error::Argument(e.to_string()))?)
    } else {
        None
    };
    let m = spec.templates.len();
    // per (template, entry): number of images where the bump landed in-image
    let mut landed: Vec<Vec<usize>> = spec
        .templates
        .iter()
        .map(|t| vec![0; t.signature.len()])
        .collect();

    let mut volumes = Vec::with_capacity(spec.images);
    let mut annotations = Vec::with_capacity(spec.images);
    for i in 0..spec.images {
        let t = i % m;
        let tpl = &spec.templates[t];
        let region = spec.template_region(t);
        let sample = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let cx = sample(&mut rng, region.x1, region.x2);
        let cy = sample(&mut rng, region.y1, region.y2);
        let center = Point::new(cx, cy);

        let mut layers: Vec<Layer> = spec
            .layers
            .iter()
            .map(|g| {
                let mut l = Layer::zeros(*g);
                if let Some(n) = &noise {
                    for v in l.data.iter_mut() {
                        *v = n.sample(&mut rng);
                    }
                }
                l
            })
            .collect();

        for (k, e) in tpl.signature.iter().enumerate() {
            let p = center.add(e.offset);
            if !in_image(p, spec.image_width, spec.image_height) {
                continue;
            }
            landed[t][k] += 1;
            let layer = layers
                .iter_mut()
                .find(|l| l.geometry.layer_id == e.layer)
                .expect("checked by SynthSpec::check");
            let (ux, uy) = layer.geometry.nearest_unit(p);
            add_bump(layer, e.slice, ux, uy, e.amplitude, e.radius);
        }

        let id = format!("{}_{:04}", spec.id_prefix, i);
        let (w, h) = (f64::from(spec.image_width), f64::from(spec.image_height));
        let half = tpl.part_size.scale(0.5);
        let bbox = BBox::new(
            (cx - half.x).clamp(0.0, w),
            (cy - half.y).clamp(0.0, h),
            (cx + half.x).clamp(0.0, w),
            (cy + half.y).clamp(0.0, h),
        );
        annotations.push(PartAnnotation {
            image_id: id.clone(),
            part_name: spec.part_name.clone(),
            template_id: t,
            bbox,
        });
        volumes.push(FeatureVolume {
            image_id: id,
            image_width: spec.image_width,
            image_height: spec.image_height,
            layers,
        });
    }

    let mut ground_truth = Vec::new();
    for (t, tpl) in spec.templates.iter().enumerate() {
        let images_of_t = (0..spec.images).filter(|i| i % m == t).count();
        let region = spec.template_region(t);
        for (k, e) in tpl.signature.iter().enumerate() {
            if images_of_t > 0 && landed[t][k] == 0 {
                return Err(Error::Generation(format!(
                    "template {t} signature entry {k} (layer {}, slice {}) falls outside the image for every sampled center",
                    e.layer, e.slice
                )));
            }
            let g = spec
                .layers
                .iter()
                .find(|g| g.layer_id == e.layer)
                .expect("checked by SynthSpec::check");
            let (ux, uy) = g.nearest_unit(region.center().add(e.offset));
            ground_truth.push(PlantedPattern {
                template: t,
                layer: e.layer,
                slice: e.slice,
                center: g.center_unchecked(ux, uy),
                unit: [ux, uy],
            });
        }
    }

    Ok(SynthDataset {
        volumes,
        annotations,
        ground_truth,
    })
}
