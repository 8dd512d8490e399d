//! Exhaustive reference parser for small instances.
//!
//! For every template it enumerates the joint unit assignment of each layer's
//! patterns (layers top-down, so pairwise terms see the already-fixed upper
//! assignment), then every grid center, then applies the inlier-mean
//! refinement. Only the scalar score terms are shared with the DP parser.

use super::dp::{ParseGraph, PatternRecord, CENTER_GRID_PX};
use super::normalize::NormalizedVolume;
use super::scoring::{in_range, s_inf, score_terminal, UpperParse};
use crate::aog::{Aog, PartTemplate, ScoreWeights};
use crate::error::{Error, Result};
use crate::feature_store::FeatureVolume;
use crate::geometry::{Point, Region};

/// Largest instance the oracle agrees to enumerate.
pub const BRUTE_FORCE_BOUND: u128 = 10_000_000;

struct Candidates {
    units: Vec<(u32, u32, Point)>,
}

fn range_of(vol: &NormalizedVolume, layer: u32, ideal: Point, w: &ScoreWeights) -> Result<Candidates> {
    let l = vol
        .layer(layer)
        .ok_or_else(|| Error::Lookup(format!("volume {} lacks layer {layer}", vol.image_id)))?;
    let g = &l.geometry;
    let mut units = Vec::new();
    for iy in 0..g.height {
        for ix in 0..g.width {
            let c = g.unit_center(i64::from(ix), i64::from(iy))?;
            if in_range(c, ideal, w) {
                units.push((ix, iy, c));
            }
        }
    }
    Ok(Candidates { units })
}

fn grid_points(width: u32, height: u32) -> Vec<Point> {
    let nx = (f64::from(width) / CENTER_GRID_PX).ceil() as u32;
    let ny = (f64::from(height) / CENTER_GRID_PX).ceil() as u32;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            out.push(Point::new(f64::from(i) * CENTER_GRID_PX, f64::from(j) * CENTER_GRID_PX));
        }
    }
    out
}

/// Number of configurations [`brute_force_parse`] would visit.
pub fn brute_force_size(aog: &Aog, vol: &FeatureVolume) -> Result<u128> {
    let nv = NormalizedVolume::from_volume(vol);
    let grid = grid_points(vol.image_width, vol.image_height).len() as u128;
    let mut total: u128 = 0;
    for t in &aog.templates {
        if t.patterns.is_empty() {
            continue;
        }
        for layer in t.layers_desc() {
            let mut prod: u128 = 1;
            for p in t.patterns.iter().filter(|p| p.layer_id == layer) {
                let n = range_of(&nv, layer, p.ideal_center, &aog.weights)?.units.len() as u128;
                prod = prod.saturating_mul(n.max(1));
            }
            total = total.saturating_add(prod);
        }
        total = total.saturating_add(grid);
    }
    Ok(total)
}

struct BruteTemplate {
    score: f64,
    grid_center: Point,
    grid_score: f64,
    center: Point,
    records: Vec<PatternRecord>,
}

fn brute_template(t: &PartTemplate, vol: &NormalizedVolume, w: &ScoreWeights) -> Result<BruteTemplate> {
    let n = t.patterns.len();
    let mut chosen: Vec<Option<(u32, u32, Point, f64)>> = vec![None; n];

    let mut layers: Vec<u32> = t.patterns.iter().map(|p| p.layer_id).collect();
    layers.sort_unstable();
    layers.dedup();
    layers.reverse();

    let mut upper_idx: Vec<usize> = Vec::new();
    for &layer in &layers {
        let members: Vec<usize> = (0..n).filter(|&i| t.patterns[i].layer_id == layer).collect();
        let nl = vol
            .layer(layer)
            .ok_or_else(|| Error::Lookup(format!("volume {} lacks layer {layer}", vol.image_id)))?;

        // neighbour sets: k nearest upper patterns by ideal-center distance
        let mut neigh: Vec<Vec<UpperParse>> = Vec::new();
        for &i in &members {
            let me = t.patterns[i].ideal_center;
            let mut ups: Vec<(f64, usize)> = upper_idx
                .iter()
                .map(|&j| (me.dist_sq(t.patterns[j].ideal_center), j))
                .collect();
            ups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neigh.push(
                ups.iter()
                    .take(w.neighbor_count)
                    .map(|&(_, j)| UpperParse {
                        ideal_center: t.patterns[j].ideal_center,
                        parsed_center: chosen[j].expect("upper layer fixed").2,
                    })
                    .collect(),
            );
        }

        let cands: Vec<Candidates> = members
            .iter()
            .map(|&i| range_of(vol, layer, t.patterns[i].ideal_center, w))
            .collect::<Result<_>>()?;
        if let Some(k) = cands.iter().position(|c| c.units.is_empty()) {
            let p = &t.patterns[members[k]];
            return Err(Error::Parse(format!(
                "pattern (layer {}, slice {}, center {:?}) has no unit inside its deformation range",
                p.layer_id, p.conv_slice, p.ideal_center
            )));
        }
        // per-member unit scores, so the odometer only sums
        let scores: Vec<Vec<f64>> = members
            .iter()
            .zip(&cands)
            .zip(&neigh)
            .map(|((&i, c), up)| {
                c.units
                    .iter()
                    .map(|&(ix, iy, _)| score_terminal(nl, ix, iy, &t.patterns[i], up, w))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;

        // odometer over the joint assignment, first member slowest
        let mut digits = vec![0usize; members.len()];
        let mut best: Option<(f64, Vec<usize>)> = None;
        'odometer: loop {
            let total: f64 = digits.iter().enumerate().map(|(m, &d)| scores[m][d]).sum();
            if best.as_ref().is_none_or(|(b, _)| total > *b) {
                best = Some((total, digits.clone()));
            }
            let mut pos = members.len();
            loop {
                if pos == 0 {
                    break 'odometer;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < cands[pos].units.len() {
                    continue 'odometer;
                }
                digits[pos] = 0;
            }
        }
        let (_, assign) = best.expect("non-empty product");
        for (m, &i) in members.iter().enumerate() {
            let (ix, iy, c) = cands[m].units[assign[m]];
            chosen[i] = Some((ix, iy, c, scores[m][assign[m]]));
        }
        upper_idx = members;
    }

    let chosen: Vec<(u32, u32, Point, f64)> = chosen.into_iter().map(|c| c.expect("all layers")).collect();
    let total_at = |c: Point| -> f64 {
        t.patterns
            .iter()
            .zip(&chosen)
            .map(|(p, &(_, _, pc, s))| s + s_inf(c, pc, p.displacement, w))
            .sum()
    };
    let mut best: Option<(Point, f64)> = None;
    for c in grid_points(vol.image_width, vol.image_height) {
        let s = total_at(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    let (grid_center, grid_score) =
        best.ok_or_else(|| Error::Parse("empty center grid".into()))?;

    let mut sum = Point::default();
    let mut k = 0usize;
    for (p, &(_, _, pc, _)) in t.patterns.iter().zip(&chosen) {
        let v = pc.add(p.displacement);
        if v.dist(grid_center) <= w.d_px {
            sum = sum.add(v);
            k += 1;
        }
    }
    let (mut center, mut score) = (grid_center, grid_score);
    if k > 0 {
        let m = sum
            .scale(1.0 / k as f64)
            .clamp_to(f64::from(vol.image_width), f64::from(vol.image_height));
        let s = total_at(m);
        if s > grid_score {
            center = m;
            score = s;
        }
    }

    let records = t
        .patterns
        .iter()
        .zip(&chosen)
        .enumerate()
        .map(|(i, (p, &(ix, iy, pc, s)))| PatternRecord {
            pattern: i,
            layer: p.layer_id,
            slice: p.conv_slice,
            unit: [ix, iy],
            unit_center: pc,
            score: s,
        })
        .collect();
    Ok(BruteTemplate {
        score,
        grid_center,
        grid_score,
        center,
        records,
    })
}

/// Exhaustive parse; refuses instances above [`BRUTE_FORCE_BOUND`].
pub fn brute_force_parse(aog: &Aog, vol: &FeatureVolume) -> Result<ParseGraph> {
    let configs = brute_force_size(aog, vol)?;
    if configs > BRUTE_FORCE_BOUND {
        return Err(Error::TooLarge {
            configs,
            bound: BRUTE_FORCE_BOUND,
        });
    }
    brute_force_parse_normalized(aog, &NormalizedVolume::from_volume(vol))
}

pub fn brute_force_parse_normalized(aog: &Aog, vol: &NormalizedVolume) -> Result<ParseGraph> {
    let mut best: Option<(usize, BruteTemplate)> = None;
    let mut template_scores = Vec::new();
    for (ti, t) in aog.templates.iter().enumerate() {
        if t.patterns.is_empty() {
            template_scores.push(None);
            continue;
        }
        let bt = brute_template(t, vol, &aog.weights)?;
        template_scores.push(Some(bt.score));
        if best.as_ref().is_none_or(|(_, b)| bt.score > b.score) {
            best = Some((ti, bt));
        }
    }
    let (ti, bt) = best.ok_or_else(|| Error::Parse("no template has latent patterns".into()))?;
    Ok(ParseGraph {
        image_id: vol.image_id.clone(),
        image_width: vol.image_width,
        image_height: vol.image_height,
        template_id: aog.templates[ti].template_id,
        part_region: Region::new(bt.center, aog.templates[ti].scale),
        part_score: bt.score,
        grid_center: bt.grid_center,
        grid_score: bt.grid_score,
        patterns: bt.records,
        template_scores,
    })
}
