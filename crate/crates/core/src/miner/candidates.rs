use crate::aog::{LatentPattern, ScoreWeights};
use crate::error::{Error, Result};
use crate::geometry::{LayerGeometry, Point};
use crate::parser::{
    deformation_range, deformation_score, nearest_upper, parse_latent, response_score, s_inf,
    LatentParse, NormalizedVolume, UpperParse,
};

/// One enumerated latent pattern hypothesis and, once scored, its objective
/// value and per-image parses.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePattern {
    /// Position in enumeration order; used for deterministic tie-breaks.
    pub index: usize,
    pub layer_id: u32,
    pub conv_slice: u32,
    pub unit: (u32, u32),
    pub ideal_center: Point,
    pub displacement: Point,
    pub score: f64,
    pub annotated_term: f64,
    pub unannotated_term: f64,
    /// Parse on each annotated image of the template, in input order.
    pub parses: Vec<LatentParse>,
}

impl CandidatePattern {
    pub fn as_pattern(&self) -> LatentPattern {
        LatentPattern {
            layer_id: self.layer_id,
            conv_slice: self.conv_slice,
            ideal_center: self.ideal_center,
            displacement: self.displacement,
            mined_score: self.score,
        }
    }
}

/// One candidate per (slice, unit) of the layer whose center lies inside the
/// image. `anchor` is the mean annotated center of the template.
pub fn enumerate_candidates(
    anchor: Point,
    geom: &LayerGeometry,
    image_width: u32,
    image_height: u32,
) -> Vec<CandidatePattern> {
    let mut out = Vec::with_capacity(geom.element_count());
    for slice in 0..geom.channels {
        for iy in 0..geom.height {
            for ix in 0..geom.width {
                let c = geom.center_unchecked(ix, iy);
                if c.x < 0.0 || c.y < 0.0 || c.x >= f64::from(image_width) || c.y >= f64::from(image_height) {
                    continue;
                }
                out.push(CandidatePattern {
                    index: out.len(),
                    layer_id: geom.layer_id,
                    conv_slice: slice,
                    unit: (ix, iy),
                    ideal_center: c,
                    displacement: anchor.sub(c),
                    score: 0.0,
                    annotated_term: 0.0,
                    unannotated_term: 0.0,
                    parses: Vec::new(),
                });
            }
        }
    }
    out
}

/// An annotated image of the template being mined, with the parsed positions
/// of the patterns already selected in the layer above.
#[derive(Debug, Clone, Copy)]
pub struct AnnotatedView<'a> {
    pub vol: &'a NormalizedVolume,
    pub part_center: Point,
    /// Aligned with the `upper_selected` slice passed to [`score_candidate`].
    pub upper_parsed: &'a [Point],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub annotated_term: f64,
    pub unannotated_term: f64,
    pub total: f64,
    pub parses: Vec<LatentParse>,
}

/// Best `S_rsp + S_loc` over the deformation range on one image, ignoring
/// pairwise terms.
pub fn unsupervised_response(
    cand: &CandidatePattern,
    vol: &NormalizedVolume,
    w: &ScoreWeights,
) -> Result<f64> {
    let layer = vol
        .layer(cand.layer_id)
        .ok_or_else(|| Error::Lookup(format!("volume {} lacks layer {}", vol.image_id, cand.layer_id)))?;
    let g = &layer.geometry;
    let stride = f64::from(g.stride_px);
    let mut best = f64::NEG_INFINITY;
    for (ix, iy) in deformation_range(g, cand.ideal_center, w) {
        let c = g.center_unchecked(ix, iy);
        let s = response_score(layer.at(cand.conv_slice, iy, ix), w)
            + deformation_score(c, cand.ideal_center, stride, w);
        if s > best {
            best = s;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Parse(format!(
            "candidate at {:?} has an empty deformation range",
            cand.ideal_center
        )));
    }
    Ok(best)
}

/// `mean_annotated[S_lat + S_inf(annotated center)] + mean_all[S_unsup]`.
pub fn score_candidate(
    cand: &CandidatePattern,
    annotated: &[AnnotatedView<'_>],
    unannotated: &[&NormalizedVolume],
    upper_selected: &[LatentPattern],
    w: &ScoreWeights,
) -> Result<CandidateScore> {
    if annotated.is_empty() {
        return Err(Error::Argument("score_candidate needs at least one annotated image".into()));
    }
    let pattern = cand.as_pattern();
    let upper_ideal: Vec<Point> = upper_selected.iter().map(|p| p.ideal_center).collect();
    let neighbors = nearest_upper(cand.ideal_center, &upper_ideal, w.neighbor_count);

    let mut parses = Vec::with_capacity(annotated.len());
    let mut ann_sum = 0.0;
    let mut upper = Vec::with_capacity(neighbors.len());
    for view in annotated {
        let layer = view.vol.layer(cand.layer_id).ok_or_else(|| {
            Error::Lookup(format!("volume {} lacks layer {}", view.vol.image_id, cand.layer_id))
        })?;
        upper.clear();
        for &j in &neighbors {
            upper.push(UpperParse {
                ideal_center: upper_selected[j].ideal_center,
                parsed_center: view.upper_parsed[j],
            });
        }
        let lp = parse_latent(&pattern, layer, &upper, w)?;
        ann_sum += lp.score + s_inf(view.part_center, lp.center, cand.displacement, w);
        parses.push(lp);
    }
    let annotated_term = ann_sum / annotated.len() as f64;

    let unannotated_term = if unannotated.is_empty() {
        0.0
    } else {
        let closeness = w.lambda_close * cand.displacement.norm_sq();
        let mut sum = 0.0;
        for vol in unannotated {
            sum += w.lambda_unsup * (unsupervised_response(cand, vol, w)? - closeness);
        }
        sum / unannotated.len() as f64
    };

    Ok(CandidateScore {
        annotated_term,
        unannotated_term,
        total: annotated_term + unannotated_term,
        parses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> LayerGeometry {
        LayerGeometry {
            layer_id: 2,
            channels: 4,
            height: 6,
            width: 6,
            stride_px: 16.0,
            rf_size_px: 40.0,
            offset_px: 8.0,
        }
    }

    #[test]
    fn counts_and_positions() {
        let anchor = Point::new(50.0, 50.0);
        let c = enumerate_candidates(anchor, &geom(), 96, 96);
        assert_eq!(c.len(), 144);
        let k = c
            .iter()
            .find(|c| c.conv_slice == 1 && c.unit == (2, 3))
            .unwrap();
        assert_eq!(k.ideal_center, Point::new(40.0, 56.0));
        assert_eq!(k.displacement, Point::new(10.0, -6.0));
        assert!(c.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn centers_outside_image_are_skipped() {
        let c = enumerate_candidates(Point::default(), &geom(), 40, 96);
        // columns at x = 8, 24 only
        assert_eq!(c.len(), 4 * 6 * 2);
    }
}
