//! The four-layer And-Or graph: semantic part (OR) → part templates (AND) →
//! latent patterns (OR) → CNN units (terminals).
//!
//! Terminals are not stored; a latent pattern owns every unit of its layer
//! whose center falls inside its square deformation range. All positions are
//! image-plane pixels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::PartAnnotation;
use crate::geometry::{LayerGeometry, Point};

pub const FORMAT_VERSION: u32 = 1;

/// Scalar weights of the scoring model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub lambda_rsp: f64,
    pub lambda_loc: f64,
    pub lambda_pair: f64,
    pub lambda_unsup: f64,
    pub lambda_close: f64,
    pub lambda_inf: f64,
    /// Response assigned to non-activated units (normalized response <= 0).
    pub s_none: f64,
    /// Saturation distance of the template vote penalty, in pixels.
    pub d_px: f64,
    /// Side of the square deformation range of a latent pattern, in pixels.
    pub deform_range_px: f64,
    /// Upper-layer neighbours consulted by the pairwise term.
    pub neighbor_count: usize,
    /// Measure the deformation penalty in units of the layer stride instead
    /// of pixels.
    #[serde(default)]
    pub loc_in_units: bool,
    /// Compare the unit's offset from an upper parse with `P̄ - P̄_upper`
    /// rather than `P̄_upper - P̄`.
    #[serde(default)]
    pub pair_relative: bool,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            lambda_rsp: 1.5,
            lambda_loc: 1.0 / 3.0,
            lambda_pair: 10.0,
            lambda_unsup: 5.0,
            lambda_close: 0.4,
            lambda_inf: 5.0,
            s_none: -3.0,
            d_px: 37.0,
            deform_range_px: 75.0,
            neighbor_count: 15,
            loc_in_units: false,
            pair_relative: false,
        }
    }
}

impl ScoreWeights {
    pub fn check(&self) -> Result<()> {
        let lambdas = [
            ("lambda_rsp", self.lambda_rsp),
            ("lambda_loc", self.lambda_loc),
            ("lambda_pair", self.lambda_pair),
            ("lambda_unsup", self.lambda_unsup),
            ("lambda_close", self.lambda_close),
            ("lambda_inf", self.lambda_inf),
        ];
        for (name, v) in lambdas {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Argument(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !self.s_none.is_finite() {
            return Err(Error::Argument("s_none must be finite".into()));
        }
        if !(self.d_px > 0.0) {
            return Err(Error::Argument(format!("d_px must be > 0, got {}", self.d_px)));
        }
        if !(self.deform_range_px > 0.0) {
            return Err(Error::Argument(format!(
                "deform_range_px must be > 0, got {}",
                self.deform_range_px
            )));
        }
        Ok(())
    }

    /// Multiplies every lambda by `k`, leaving `s_none`, `d_px` and the
    /// deformation range untouched.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            lambda_rsp: self.lambda_rsp * k,
            lambda_loc: self.lambda_loc * k,
            lambda_pair: self.lambda_pair * k,
            lambda_unsup: self.lambda_unsup * k,
            lambda_close: self.lambda_close * k,
            lambda_inf: self.lambda_inf * k,
            ..*self
        }
    }
}

/// Partial weight set read from config files; `None` keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverrides {
    pub lambda_rsp: Option<f64>,
    pub lambda_loc: Option<f64>,
    pub lambda_pair: Option<f64>,
    pub lambda_unsup: Option<f64>,
    pub lambda_close: Option<f64>,
    pub lambda_inf: Option<f64>,
    pub s_none: Option<f64>,
    pub d_px: Option<f64>,
    pub deform_range_px: Option<f64>,
    pub neighbor_count: Option<usize>,
    pub loc_in_units: Option<bool>,
    pub pair_relative: Option<bool>,
}

impl WeightOverrides {
    pub fn apply(&self, base: ScoreWeights) -> ScoreWeights {
        ScoreWeights {
            lambda_rsp: self.lambda_rsp.unwrap_or(base.lambda_rsp),
            lambda_loc: self.lambda_loc.unwrap_or(base.lambda_loc),
            lambda_pair: self.lambda_pair.unwrap_or(base.lambda_pair),
            lambda_unsup: self.lambda_unsup.unwrap_or(base.lambda_unsup),
            lambda_close: self.lambda_close.unwrap_or(base.lambda_close),
            lambda_inf: self.lambda_inf.unwrap_or(base.lambda_inf),
            s_none: self.s_none.unwrap_or(base.s_none),
            d_px: self.d_px.unwrap_or(base.d_px),
            deform_range_px: self.deform_range_px.unwrap_or(base.deform_range_px),
            neighbor_count: self.neighbor_count.unwrap_or(base.neighbor_count),
            loc_in_units: self.loc_in_units.unwrap_or(base.loc_in_units),
            pair_relative: self.pair_relative.unwrap_or(base.pair_relative),
        }
    }
}

/// A mined sub-part: one conv-slice of one layer, an ideal position and the
/// displacement from that position to the parent template's center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPattern {
    #[serde(rename = "layer")]
    pub layer_id: u32,
    #[serde(rename = "slice")]
    pub conv_slice: u32,
    #[serde(rename = "center")]
    pub ideal_center: Point,
    #[serde(rename = "dp")]
    pub displacement: Point,
    #[serde(rename = "score")]
    pub mined_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartTemplate {
    #[serde(rename = "id")]
    pub template_id: usize,
    /// Constant (width, height) of the template's region.
    pub scale: Point,
    /// Children grouped by layer, highest layer first.
    pub patterns: Vec<LatentPattern>,
}

impl PartTemplate {
    /// Layer ids used by this template, highest first.
    pub fn layers_desc(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.patterns.iter().map(|p| p.layer_id).collect();
        ids.sort_unstable_by(|a, b| b.cmp(a));
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCount {
    pub template: usize,
    pub layer: u32,
    pub n_k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub annotation_count: usize,
    #[serde(default)]
    pub image_width: u32,
    #[serde(default)]
    pub image_height: u32,
    /// Geometry of the layers the graph was grown on.
    #[serde(default)]
    pub layers: Vec<LayerGeometry>,
    #[serde(default)]
    pub epsilon_units: Option<u32>,
    #[serde(default)]
    pub n_k: Vec<LayerCount>,
    /// Per template: the localization-error weight `lambda_inf * sum_k n_k`
    /// that turns the joint objective into independent per-template sums.
    #[serde(default)]
    pub localization_weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aog {
    pub part_name: String,
    pub weights: ScoreWeights,
    pub templates: Vec<PartTemplate>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct AogDocument {
    version: u32,
    part: String,
    weights: ScoreWeights,
    templates: Vec<PartTemplate>,
    #[serde(default)]
    provenance: Provenance,
}

/// Mean of `values`, summed in sorted order so the result does not depend on
/// input order.
pub(crate) fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Creates one template per annotated template id, with its scale set to the
/// mean annotated box size. Templates have no children yet.
pub fn build_skeleton(annotations: &[PartAnnotation], weights: ScoreWeights) -> Result<Aog> {
    if annotations.is_empty() {
        return Err(Error::Argument("build_skeleton needs at least one annotation".into()));
    }
    weights.check()?;
    let mut names: Vec<&str> = annotations.iter().map(|a| a.part_name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != 1 {
        return Err(Error::Argument(format!(
            "annotations mix several part names: {names:?}"
        )));
    }

    let mut by_template: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for a in annotations {
        let e = by_template.entry(a.template_id).or_default();
        e.0.push(a.bbox.width());
        e.1.push(a.bbox.height());
    }
    let m = by_template.len();
    if by_template.keys().copied().ne(0..m) {
        return Err(Error::Argument(format!(
            "template ids must form the range 0..{m}, got {:?}",
            by_template.keys().collect::<Vec<_>>()
        )));
    }

    let templates = by_template
        .into_iter()
        .map(|(id, (mut ws, mut hs))| PartTemplate {
            template_id: id,
            scale: Point::new(order_free_mean(&mut ws), order_free_mean(&mut hs)),
            patterns: Vec::new(),
        })
        .collect();

    Ok(Aog {
        part_name: names[0].to_string(),
        weights,
        templates,
        provenance: Provenance {
            annotation_count: annotations.len(),
            ..Default::default()
        },
    })
}

impl Aog {
    pub fn to_json(&self) -> Result<String> {
        let doc = AogDocument {
            version: FORMAT_VERSION,
            part: self.part_name.clone(),
            weights: self.weights,
            templates: self.templates.clone(),
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Aog> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Document(format!("unsupported version {v}"))),
            None => return Err(Error::Document("missing integer field `version`".into())),
        }
        let doc: AogDocument =
            serde_json::from_value(value).map_err(|e| Error::Document(e.to_string()))?;
        let aog = Aog {
            part_name: doc.part,
            weights: doc.weights,
            templates: doc.templates,
            provenance: doc.provenance,
        };
        let problems = aog.validate();
        if !problems.is_empty() {
            return Err(Error::Document(problems.join("; ")));
        }
        Ok(aog)
    }

    pub fn pattern_count(&self) -> usize {
        self.templates.iter().map(|t| t.patterns.len()).sum()
    }

    pub fn layer_geometry(&self, layer_id: u32) -> Option<&LayerGeometry> {
        self.provenance.layers.iter().find(|g| g.layer_id == layer_id)
    }

    /// Structural problems; empty iff the graph is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.weights.check() {
            out.push(e.to_string());
        }
        if self.templates.is_empty() {
            out.push("graph has no part templates".into());
        }
        for (i, t) in self.templates.iter().enumerate() {
            if t.template_id != i {
                out.push(format!("template at position {i} has id {}", t.template_id));
            }
            if !(t.scale.x > 0.0 && t.scale.y > 0.0) {
                out.push(format!("template {i}: scale must be positive"));
            }
            for (j, p) in t.patterns.iter().enumerate() {
                let finite = [p.ideal_center.x, p.ideal_center.y, p.displacement.x, p.displacement.y, p.mined_score]
                    .iter()
                    .all(|v| v.is_finite());
                if !finite {
                    out.push(format!("template {i} pattern {j}: non-finite parameter"));
                }
                if !self.provenance.layers.is_empty() {
                    match self.layer_geometry(p.layer_id) {
                        None => out.push(format!(
                            "template {i} pattern {j}: unknown layer {}",
                            p.layer_id
                        )),
                        Some(g) if p.conv_slice >= g.channels => out.push(format!(
                            "template {i} pattern {j}: slice {} >= {} channels",
                            p.conv_slice, g.channels
                        )),
                        _ => {}
                    }
                }
                let (w, h) = (self.provenance.image_width, self.provenance.image_height);
                if w > 0 && h > 0 {
                    let c = p.ideal_center;
                    if c.x < 0.0 || c.y < 0.0 || c.x >= f64::from(w) || c.y >= f64::from(h) {
                        out.push(format!("template {i} pattern {j}: ideal center outside image"));
                    }
                }
            }
            for w in t.patterns.windows(2) {
                if w[1].layer_id > w[0].layer_id {
                    out.push(format!("template {i}: patterns not grouped highest layer first"));
                    break;
                }
            }
            if let Some(eps) = self.provenance.epsilon_units {
                out.extend(self.nms_conflicts(t, eps));
            }
        }
        out
    }

    fn nms_conflicts(&self, t: &PartTemplate, eps: u32) -> Vec<String> {
        let mut out = Vec::new();
        for (a, pa) in t.patterns.iter().enumerate() {
            for pb in &t.patterns[a + 1..] {
                if pa.layer_id != pb.layer_id || pa.conv_slice != pb.conv_slice {
                    continue;
                }
                let Some(g) = self.layer_geometry(pa.layer_id) else { continue };
                let s = f64::from(g.stride_px);
                let dx = ((pa.ideal_center.x - pb.ideal_center.x) / s).abs();
                let dy = ((pa.ideal_center.y - pb.ideal_center.y) / s).abs();
                let e = f64::from(eps) - 1e-6;
                if dx < e && dy < e {
                    out.push(format!(
                        "template {}: two patterns of layer {} slice {} share an {eps}x{eps} window",
                        t.template_id, pa.layer_id, pa.conv_slice
                    ));
                }
            }
        }
        out
    }
}

/// Children counts per graph layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AogStats {
    pub templates: usize,
    pub mean_patterns_per_template: f64,
    /// Mean number of units inside a pattern's deformation range; `None` when
    /// the graph carries no layer geometry.
    pub mean_units_per_pattern: Option<f64>,
}

pub fn aog_stats(aog: &Aog) -> AogStats {
    let templates = aog.templates.len();
    let patterns = aog.pattern_count();
    let mean_patterns_per_template = if templates == 0 {
        0.0
    } else {
        patterns as f64 / templates as f64
    };
    let mean_units_per_pattern = if aog.provenance.layers.is_empty() || patterns == 0 {
        None
    } else {
        let mut total = 0usize;
        for t in &aog.templates {
            for p in &t.patterns {
                if let Some(g) = aog.layer_geometry(p.layer_id) {
                    total += g.units_in_square(p.ideal_center, aog.weights.deform_range_px).len();
                }
            }
        }
        Some(total as f64 / patterns as f64)
    };
    AogStats {
        templates,
        mean_patterns_per_template,
        mean_units_per_pattern,
    }
}
