//! Bottom-up parsing: units → latent patterns (max) → template center
//! (truncated-quadratic vote search) → semantic part (max over templates).

use serde::{Deserialize, Serialize};

use super::normalize::{NormalizedLayer, NormalizedVolume};
use super::scoring::{deformation_range, nearest_upper, s_inf, terminal_unchecked, UpperParse};
use crate::aog::{Aog, LatentPattern, PartTemplate, ScoreWeights};
use crate::error::{Error, Result};
use crate::feature_store::FeatureVolume;
use crate::geometry::{BBox, Point, Region};

/// Spacing of the candidate template-center grid, in pixels.
pub const CENTER_GRID_PX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentParse {
    pub unit: (u32, u32),
    pub center: Point,
    pub score: f64,
}

/// Picks the best unit inside the pattern's deformation range. Ties go to
/// the smallest (row, column).
pub fn parse_latent(
    pattern: &LatentPattern,
    layer: &NormalizedLayer,
    upper: &[UpperParse],
    w: &ScoreWeights,
) -> Result<LatentParse> {
    let g = &layer.geometry;
    if pattern.conv_slice >= g.channels {
        return Err(Error::Lookup(format!(
            "pattern needs slice {} of layer {}, which has {} channels",
            pattern.conv_slice, g.layer_id, g.channels
        )));
    }
    let mut best: Option<LatentParse> = None;
    for (ix, iy) in deformation_range(g, pattern.ideal_center, w) {
        let c = g.center_unchecked(ix, iy);
        let s = terminal_unchecked(layer, ix, iy, c, pattern, upper, w);
        if best.is_none_or(|b| s > b.score) {
            best = Some(LatentParse {
                unit: (ix, iy),
                center: c,
                score: s,
            });
        }
    }
    best.ok_or_else(|| {
        Error::Parse(format!(
            "pattern (layer {}, slice {}, center {:?}) has no unit inside its deformation range",
            pattern.layer_id, pattern.conv_slice, pattern.ideal_center
        ))
    })
}

/// Candidate template centers: multiples of [`CENTER_GRID_PX`] inside the
/// image, row-major.
pub fn center_grid(width: u32, height: u32) -> Vec<Point> {
    let axis = |n: u32| -> Vec<f64> {
        (0..)
            .map(|i| f64::from(i) * CENTER_GRID_PX)
            .take_while(|&v| v < f64::from(n))
            .collect()
    };
    let xs = axis(width);
    let ys = axis(height);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push(Point::new(x, y));
        }
    }
    out
}

/// A child's contribution to a template: its latent score and its vote
/// `P̂ + ΔP` for the template center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildVote {
    pub latent_score: f64,
    pub parsed_center: Point,
    pub displacement: Point,
}

impl ChildVote {
    pub fn vote(&self) -> Point {
        self.parsed_center.add(self.displacement)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterSearch {
    pub grid_center: Point,
    pub grid_score: f64,
    pub center: Point,
    pub score: f64,
}

fn inference_sum(center: Point, children: &[ChildVote], w: &ScoreWeights) -> f64 {
    children
        .iter()
        .map(|c| s_inf(center, c.parsed_center, c.displacement, w))
        .sum()
}

/// Maximizes `sum_children [S_lat + S_inf(center)]` over the center grid,
/// then tries the mean of the votes within `d` of the grid optimum.
pub fn search_center(
    children: &[ChildVote],
    width: u32,
    height: u32,
    w: &ScoreWeights,
) -> Result<CenterSearch> {
    if children.is_empty() {
        return Err(Error::Parse("template has no latent patterns".into()));
    }
    let base: f64 = children.iter().map(|c| c.latent_score).sum();
    let mut best: Option<(Point, f64)> = None;
    for c in center_grid(width, height) {
        let s = base + inference_sum(c, children, w);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    let (grid_center, grid_score) =
        best.ok_or_else(|| Error::Parse(format!("empty center grid for a {width}x{height} image")))?;

    let inliers: Vec<Point> = children
        .iter()
        .map(ChildVote::vote)
        .filter(|v| v.dist(grid_center) <= w.d_px)
        .collect();
    let (mut center, mut score) = (grid_center, grid_score);
    if !inliers.is_empty() {
        let n = inliers.len() as f64;
        let mean = inliers
            .iter()
            .fold(Point::default(), |acc, v| acc.add(*v))
            .scale(1.0 / n)
            .clamp_to(f64::from(width), f64::from(height));
        let s = base + inference_sum(mean, children, w);
        if s > grid_score {
            center = mean;
            score = s;
        }
    }
    Ok(CenterSearch {
        grid_center,
        grid_score,
        center,
        score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    /// Index into the template's pattern list.
    pub pattern: usize,
    pub layer: u32,
    pub slice: u32,
    pub unit: [u32; 2],
    pub unit_center: Point,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateParse {
    pub template_id: usize,
    pub search: CenterSearch,
    pub region: Region,
    pub records: Vec<PatternRecord>,
}

/// Parse result for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseGraph {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub template_id: usize,
    pub part_region: Region,
    pub part_score: f64,
    /// Best center on the grid, before inlier-mean refinement.
    pub grid_center: Point,
    pub grid_score: f64,
    /// Records of the chosen template's patterns, in template order.
    pub patterns: Vec<PatternRecord>,
    /// Score of every template; `None` for templates without patterns.
    pub template_scores: Vec<Option<f64>>,
}

impl ParseGraph {
    pub fn center(&self) -> Point {
        self.part_region.center
    }

    pub fn bbox(&self) -> BBox {
        self.part_region.bbox()
    }

    /// Recomputes the part score from the leaf records alone.
    pub fn recompute_score(&self, aog: &Aog) -> f64 {
        let t = &aog.templates[self.template_id];
        self.patterns
            .iter()
            .map(|r| {
                let p = &t.patterns[r.pattern];
                r.score + s_inf(self.center(), r.unit_center, p.displacement, &aog.weights)
            })
            .sum()
    }

    pub fn to_report(&self) -> ParseReport {
        ParseReport {
            image: self.image_id.clone(),
            template: self.template_id,
            center: self.center(),
            bbox: self.bbox(),
            score: self.part_score,
            grid_center: self.grid_center,
            template_scores: self.template_scores.clone(),
            patterns: self
                .patterns
                .iter()
                .map(|r| ReportPattern {
                    layer: r.layer,
                    slice: r.slice,
                    unit: r.unit,
                    score: r.score,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPattern {
    pub layer: u32,
    pub slice: u32,
    pub unit: [u32; 2],
    pub score: f64,
}

/// JSON form of a parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub image: String,
    pub template: usize,
    pub center: Point,
    pub bbox: BBox,
    pub score: f64,
    pub patterns: Vec<ReportPattern>,
    pub grid_center: Point,
    pub template_scores: Vec<Option<f64>>,
}

/// Parsing order and pairwise neighbourhoods of one template.
#[derive(Debug, Clone)]
pub(crate) struct TemplatePlan {
    /// Pattern indices grouped by layer, highest layer first.
    pub order: Vec<usize>,
    /// For each pattern index: neighbour pattern indices in the next higher
    /// populated layer.
    pub neighbors: Vec<Vec<usize>>,
}

impl TemplatePlan {
    pub fn new(t: &PartTemplate, k: usize) -> Self {
        let layers = t.layers_desc();
        let mut order = Vec::with_capacity(t.patterns.len());
        let mut neighbors = vec![Vec::new(); t.patterns.len()];
        for (li, &layer) in layers.iter().enumerate() {
            let here: Vec<usize> = (0..t.patterns.len())
                .filter(|&i| t.patterns[i].layer_id == layer)
                .collect();
            if li > 0 {
                let upper_layer = layers[li - 1];
                let upper: Vec<usize> = (0..t.patterns.len())
                    .filter(|&i| t.patterns[i].layer_id == upper_layer)
                    .collect();
                let upper_pts: Vec<Point> =
                    upper.iter().map(|&i| t.patterns[i].ideal_center).collect();
                for &i in &here {
                    neighbors[i] = nearest_upper(t.patterns[i].ideal_center, &upper_pts, k)
                        .into_iter()
                        .map(|j| upper[j])
                        .collect();
                }
            }
            order.extend(here);
        }
        Self { order, neighbors }
    }
}

pub(crate) fn parse_template_planned(
    t: &PartTemplate,
    plan: &TemplatePlan,
    vol: &NormalizedVolume,
    w: &ScoreWeights,
) -> Result<TemplateParse> {
    if t.patterns.is_empty() {
        return Err(Error::Parse(format!("template {} has no latent patterns", t.template_id)));
    }
    let mut parsed: Vec<Option<LatentParse>> = vec![None; t.patterns.len()];
    let mut upper_buf = Vec::new();
    for &i in &plan.order {
        let p = &t.patterns[i];
        let layer = vol.layer(p.layer_id).ok_or_else(|| {
            Error::Lookup(format!("volume {} lacks layer {}", vol.image_id, p.layer_id))
        })?;
        upper_buf.clear();
        for &j in &plan.neighbors[i] {
            let up = parsed[j].expect("upper layers are parsed first");
            upper_buf.push(UpperParse {
                ideal_center: t.patterns[j].ideal_center,
                parsed_center: up.center,
            });
        }
        parsed[i] = Some(parse_latent(p, layer, &upper_buf, w)?);
    }
    let parsed: Vec<LatentParse> = parsed.into_iter().map(|p| p.expect("all parsed")).collect();
    let children: Vec<ChildVote> = t
        .patterns
        .iter()
        .zip(&parsed)
        .map(|(p, lp)| ChildVote {
            latent_score: lp.score,
            parsed_center: lp.center,
            displacement: p.displacement,
        })
        .collect();
    let search = search_center(&children, vol.image_width, vol.image_height, w)?;
    let records = t
        .patterns
        .iter()
        .zip(&parsed)
        .enumerate()
        .map(|(i, (p, lp))| PatternRecord {
            pattern: i,
            layer: p.layer_id,
            slice: p.conv_slice,
            unit: [lp.unit.0, lp.unit.1],
            unit_center: lp.center,
            score: lp.score,
        })
        .collect();
    Ok(TemplateParse {
        template_id: t.template_id,
        search,
        region: Region::new(search.center, t.scale),
        records,
    })
}

/// Parses one template: every child pattern top layer first, then the
/// template center.
pub fn parse_template(
    t: &PartTemplate,
    vol: &NormalizedVolume,
    w: &ScoreWeights,
) -> Result<TemplateParse> {
    parse_template_planned(t, &TemplatePlan::new(t, w.neighbor_count), vol, w)
}

/// Reusable parser over one graph; neighbourhoods are computed once.
#[derive(Debug, Clone)]
pub struct AogParser<'a> {
    aog: &'a Aog,
    plans: Vec<TemplatePlan>,
}

impl<'a> AogParser<'a> {
    pub fn new(aog: &'a Aog) -> Result<Self> {
        aog.weights.check()?;
        let plans = aog
            .templates
            .iter()
            .map(|t| TemplatePlan::new(t, aog.weights.neighbor_count))
            .collect();
        Ok(Self { aog, plans })
    }

    pub fn aog(&self) -> &Aog {
        self.aog
    }

    pub fn parse(&self, vol: &FeatureVolume) -> Result<ParseGraph> {
        check_requirements(self.aog, vol)?;
        self.parse_normalized(&NormalizedVolume::from_volume(vol))
    }

    pub fn parse_normalized(&self, vol: &NormalizedVolume) -> Result<ParseGraph> {
        let mut best: Option<TemplateParse> = None;
        let mut template_scores = Vec::with_capacity(self.aog.templates.len());
        for (t, plan) in self.aog.templates.iter().zip(&self.plans) {
            if t.patterns.is_empty() {
                log::debug!("template {} has no patterns; skipped", t.template_id);
                template_scores.push(None);
                continue;
            }
            let tp = parse_template_planned(t, plan, vol, &self.aog.weights)?;
            template_scores.push(Some(tp.search.score));
            if best.as_ref().is_none_or(|b| tp.search.score > b.search.score) {
                best = Some(tp);
            }
        }
        let best = best.ok_or_else(|| Error::Parse("no template has latent patterns".into()))?;
        Ok(ParseGraph {
            image_id: vol.image_id.clone(),
            image_width: vol.image_width,
            image_height: vol.image_height,
            template_id: best.template_id,
            part_region: best.region,
            part_score: best.search.score,
            grid_center: best.search.grid_center,
            grid_score: best.search.grid_score,
            patterns: best.records,
            template_scores,
        })
    }
}

/// Verifies that `vol` carries every layer and slice the graph refers to.
pub fn check_requirements(aog: &Aog, vol: &FeatureVolume) -> Result<()> {
    let mut missing = Vec::new();
    let mut need: Vec<(u32, u32)> = aog
        .templates
        .iter()
        .flat_map(|t| t.patterns.iter().map(|p| (p.layer_id, p.conv_slice)))
        .collect();
    need.sort_unstable();
    need.dedup();
    for (layer, slice) in need {
        match vol.layer(layer) {
            None => missing.push(format!("layer {layer}")),
            Some(l) if slice >= l.geometry.channels => {
                missing.push(format!("layer {layer} slice {slice}"))
            }
            _ => {}
        }
    }
    missing.dedup();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Lookup(format!(
            "volume {} lacks {}",
            vol.image_id,
            missing.join(", ")
        )))
    }
}

/// Full pipeline: normalize, parse every template top layer first, keep the
/// best template (ties go to the smaller id).
pub fn parse_semantic(aog: &Aog, vol: &FeatureVolume) -> Result<ParseGraph> {
    AogParser::new(aog)?.parse(vol)
}
