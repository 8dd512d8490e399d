//! Terminal-node and AND-node score terms.
//!
//! Note the two norms differ on purpose: the deformation term is a squared
//! distance, the pairwise term is a plain (unsquared) Euclidean distance.
//! The pairwise residual is `(P_unit - P̂_upper) - (P̄_upper - P̄)` by default,
//! or `(P_unit - P̂_upper) - (P̄ - P̄_upper)` with `pair_relative`, which is zero
//! for an undeformed configuration.

use super::normalize::NormalizedLayer;
use crate::aog::{LatentPattern, ScoreWeights};
use crate::error::{Error, Result};
use crate::geometry::{LayerGeometry, Point};

/// Ideal and parsed position of an already-parsed upper-layer neighbour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperParse {
    pub ideal_center: Point,
    pub parsed_center: Point,
}

#[inline]
pub fn response_score(x: f64, w: &ScoreWeights) -> f64 {
    if x > 0.0 {
        w.lambda_rsp * x
    } else {
        w.lambda_rsp * w.s_none
    }
}

#[inline]
pub fn deformation_score(unit: Point, ideal: Point, stride_px: f64, w: &ScoreWeights) -> f64 {
    let d2 = unit.dist_sq(ideal);
    if w.loc_in_units {
        -w.lambda_loc * d2 / (stride_px * stride_px)
    } else {
        -w.lambda_loc * d2
    }
}

pub fn pair_score(unit: Point, ideal: Point, upper: &[UpperParse], w: &ScoreWeights) -> f64 {
    if upper.is_empty() {
        return 0.0;
    }
    let total: f64 = upper
        .iter()
        .map(|u| {
            let expected = if w.pair_relative {
                ideal.sub(u.ideal_center)
            } else {
                u.ideal_center.sub(ideal)
            };
            unit.sub(u.parsed_center).sub(expected).norm()
        })
        .sum();
    -w.lambda_pair * total / upper.len() as f64
}

/// Units of `geom` inside the closed square deformation range centered at
/// `ideal`, row-major.
pub fn deformation_range(geom: &LayerGeometry, ideal: Point, w: &ScoreWeights) -> Vec<(u32, u32)> {
    geom.units_in_square(ideal, w.deform_range_px)
}

pub(crate) fn in_range(unit: Point, ideal: Point, w: &ScoreWeights) -> bool {
    let half = 0.5 * w.deform_range_px;
    (unit.x - ideal.x).abs() <= half && (unit.y - ideal.y).abs() <= half
}

/// `S(unit) = S_rsp + S_loc + S_pair` for unit `(ix, iy)` of `layer` chosen by
/// `pattern`.
pub fn score_terminal(
    layer: &NormalizedLayer,
    ix: u32,
    iy: u32,
    pattern: &LatentPattern,
    upper: &[UpperParse],
    w: &ScoreWeights,
) -> Result<f64> {
    let g = &layer.geometry;
    let unit = g.unit_center(i64::from(ix), i64::from(iy))?;
    if !in_range(unit, pattern.ideal_center, w) {
        return Err(Error::Contract(format!(
            "unit ({ix}, {iy}) at {:?} lies outside the deformation range of the pattern at {:?}",
            unit, pattern.ideal_center
        )));
    }
    if pattern.conv_slice >= g.channels {
        return Err(Error::Lookup(format!(
            "slice {} not present in layer {} ({} channels)",
            pattern.conv_slice, g.layer_id, g.channels
        )));
    }
    Ok(terminal_unchecked(layer, ix, iy, unit, pattern, upper, w))
}

#[inline]
pub(crate) fn terminal_unchecked(
    layer: &NormalizedLayer,
    ix: u32,
    iy: u32,
    unit: Point,
    pattern: &LatentPattern,
    upper: &[UpperParse],
    w: &ScoreWeights,
) -> f64 {
    let x = layer.at(pattern.conv_slice, iy, ix);
    response_score(x, w)
        + deformation_score(unit, pattern.ideal_center, f64::from(layer.geometry.stride_px), w)
        + pair_score(unit, pattern.ideal_center, upper, w)
}

/// Truncated-quadratic vote penalty of a template centered at
/// `template_center` given the pattern's parsed position.
#[inline]
pub fn s_inf(template_center: Point, parsed_center: Point, displacement: Point, w: &ScoreWeights) -> f64 {
    let vote = parsed_center.add(displacement);
    let d2 = vote.dist_sq(template_center);
    -w.lambda_inf * d2.min(w.d_px * w.d_px)
}

/// Indices of the (at most `k`) entries of `uppers` nearest to `ideal`;
/// ties keep the lower index.
pub fn nearest_upper(ideal: Point, uppers: &[Point], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..uppers.len()).collect();
    idx.sort_by(|&a, &b| {
        ideal
            .dist_sq(uppers[a])
            .total_cmp(&ideal.dist_sq(uppers[b]))
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}
