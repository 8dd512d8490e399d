use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::candidates::{enumerate_candidates, score_candidate, AnnotatedView, CandidatePattern};
use super::rank_curve::{estimate_nk, fit_rank_curve, RankFit};
use super::select::{greedy_select, spatial_nms};
use super::{MinerConfig, NkMode};
use crate::aog::{order_free_mean, Aog, LatentPattern, LayerCount};
use crate::error::{Error, Result};
use crate::feature_store::{FeatureVolume, PartAnnotation};
use crate::geometry::{LayerGeometry, Point};
use crate::parser::NormalizedVolume;

/// What happened while mining one layer of one template.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub template: usize,
    pub layer: u32,
    pub candidates: usize,
    pub survivors: usize,
    /// Survivor scores, descending.
    pub ranked_scores: Vec<f64>,
    pub fit: Option<RankFit>,
    pub n_k: usize,
}

fn check_geometry(layers: &[LayerGeometry], vol: &FeatureVolume) -> Result<()> {
    for g in layers {
        match vol.layer(g.layer_id) {
            Some(l) if l.geometry == *g => {}
            Some(l) => {
                return Err(Error::Contract(format!(
                    "volume {} layer {} has geometry {:?}, expected {:?}",
                    vol.image_id, g.layer_id, l.geometry, g
                )))
            }
            None => {
                return Err(Error::Lookup(format!(
                    "volume {} lacks layer {}",
                    vol.image_id, g.layer_id
                )))
            }
        }
    }
    Ok(())
}

fn choose_nk(
    config: &MinerConfig,
    depth: usize,
    layer_count: usize,
    ranked: &[f64],
) -> Result<(usize, Option<RankFit>)> {
    let pool = ranked.len();
    match &config.nk {
        NkMode::Fixed(v) => {
            let n = match v.len() {
                1 => v[0],
                n if n == layer_count => v[depth],
                n => {
                    return Err(Error::Argument(format!(
                        "fixed n_k lists one value or one per mined layer ({layer_count}), got {n}"
                    )))
                }
            };
            Ok((n.min(pool), None))
        }
        NkMode::Auto => match fit_rank_curve(ranked) {
            Ok(fit) => Ok((estimate_nk(fit.beta, pool)?, Some(fit))),
            Err(Error::Fit(msg)) => {
                warn!("rank-curve fit failed ({msg}); using n_k = {}", config.nk_fallback);
                Ok((config.nk_fallback.min(pool), None))
            }
            Err(e) => Err(e),
        },
    }
}

/// Grows latent patterns under every template of `skeleton`, top layer first.
///
/// `annotated` pairs each annotation with its volume. `pool` is the image set
/// behind the unsupervised term; at most `config.unannotated_cap` of it is
/// used, subsampled with `config.seed`.
pub fn grow_aog(
    skeleton: Aog,
    annotated: &[(&FeatureVolume, &PartAnnotation)],
    pool: &[&FeatureVolume],
    config: &MinerConfig,
) -> Result<Aog> {
    grow_aog_traced(skeleton, annotated, pool, config).map(|(aog, _)| aog)
}

pub fn grow_aog_traced(
    mut aog: Aog,
    annotated: &[(&FeatureVolume, &PartAnnotation)],
    pool: &[&FeatureVolume],
    config: &MinerConfig,
) -> Result<(Aog, Vec<LayerTrace>)> {
    config.check()?;
    aog.weights.check()?;
    let Some(&(first, _)) = annotated.first() else {
        return Err(Error::Argument("mining needs at least one annotated image".into()));
    };
    let (iw, ih) = (first.image_width, first.image_height);

    let mut layers: Vec<LayerGeometry> = match &config.layers {
        Some(ids) => ids
            .iter()
            .map(|&id| {
                first
                    .layer(id)
                    .map(|l| l.geometry)
                    .ok_or_else(|| Error::Lookup(format!("volume {} lacks layer {id}", first.image_id)))
            })
            .collect::<Result<_>>()?,
        None => first.geometries(),
    };
    layers.sort_by(|a, b| b.layer_id.cmp(&a.layer_id));
    layers.dedup_by_key(|g| g.layer_id);
    if layers.is_empty() {
        return Err(Error::Argument("no layers to mine".into()));
    }
    for v in annotated.iter().map(|(v, _)| *v).chain(pool.iter().copied()) {
        if (v.image_width, v.image_height) != (iw, ih) {
            return Err(Error::Contract(format!(
                "volume {} is {}x{}, expected {iw}x{ih}",
                v.image_id, v.image_width, v.image_height
            )));
        }
        check_geometry(&layers, v)?;
    }
    for (v, a) in annotated {
        if v.image_id != a.image_id {
            return Err(Error::Argument(format!(
                "annotation for {} paired with volume {}",
                a.image_id, v.image_id
            )));
        }
    }

    let ann_norm: Vec<NormalizedVolume> = annotated
        .par_iter()
        .map(|(v, _)| NormalizedVolume::from_volume(v))
        .collect();
    let chosen: Vec<usize> = if pool.len() > config.unannotated_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut idx = sample(&mut rng, pool.len(), config.unannotated_cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..pool.len()).collect()
    };
    let pool_norm: Vec<NormalizedVolume> = chosen
        .par_iter()
        .map(|&i| NormalizedVolume::from_volume(pool[i]))
        .collect();
    let pool_refs: Vec<&NormalizedVolume> = pool_norm.iter().collect();

    let w = aog.weights;
    let mut traces = Vec::new();
    let mut counts = Vec::new();
    let mut loc_weight = Vec::new();
    for t in aog.templates.iter_mut() {
        let members: Vec<usize> = (0..annotated.len())
            .filter(|&i| annotated[i].1.template_id == t.template_id)
            .collect();
        if members.is_empty() {
            warn!("template {} has no annotations; leaving it empty", t.template_id);
            loc_weight.push(0.0);
            continue;
        }
        let mut xs: Vec<f64> = members.iter().map(|&i| annotated[i].1.bbox.center().x).collect();
        let mut ys: Vec<f64> = members.iter().map(|&i| annotated[i].1.bbox.center().y).collect();
        let anchor = Point::new(order_free_mean(&mut xs), order_free_mean(&mut ys));

        let mut patterns: Vec<LatentPattern> = Vec::new();
        let mut upper: Vec<LatentPattern> = Vec::new();
        // upper_parsed[image][pattern]
        let mut upper_parsed: Vec<Vec<Point>> = vec![Vec::new(); members.len()];

        for (depth, geom) in layers.iter().enumerate() {
            let views: Vec<AnnotatedView<'_>> = members
                .iter()
                .zip(&upper_parsed)
                .map(|(&i, up)| AnnotatedView {
                    vol: &ann_norm[i],
                    part_center: annotated[i].1.bbox.center(),
                    upper_parsed: up,
                })
                .collect();
            let mut cands = enumerate_candidates(anchor, geom, iw, ih);
            let scored: Vec<_> = cands
                .par_iter()
                .map(|c| score_candidate(c, &views, &pool_refs, &upper, &w))
                .collect::<Result<_>>()?;
            for (c, s) in cands.iter_mut().zip(scored) {
                c.score = s.total;
                c.annotated_term = s.annotated_term;
                c.unannotated_term = s.unannotated_term;
                c.parses = s.parses;
            }
            let survivors = spatial_nms(&cands, config.epsilon);
            let ranked: Vec<f64> = survivors.iter().map(|c| c.score).collect();
            let (n_k, fit) = choose_nk(config, depth, layers.len(), &ranked)?;
            let selected: Vec<CandidatePattern> = greedy_select(&survivors, n_k, config.epsilon);
            info!(
                "template {} layer {}: {} candidates, {} after nms, n_k = {}",
                t.template_id,
                geom.layer_id,
                cands.len(),
                survivors.len(),
                selected.len()
            );
            traces.push(LayerTrace {
                template: t.template_id,
                layer: geom.layer_id,
                candidates: cands.len(),
                survivors: survivors.len(),
                ranked_scores: ranked,
                fit,
                n_k: selected.len(),
            });
            counts.push(LayerCount {
                template: t.template_id,
                layer: geom.layer_id,
                n_k: selected.len(),
            });
            if selected.is_empty() {
                continue;
            }
            for (m, up) in upper_parsed.iter_mut().enumerate() {
                *up = selected.iter().map(|c| c.parses[m].center).collect();
            }
            upper = selected.iter().map(CandidatePattern::as_pattern).collect();
            patterns.extend(upper.iter().cloned());
        }
        loc_weight.push(w.lambda_inf * patterns.len() as f64);
        t.patterns = patterns;
    }

    if aog.pattern_count() == 0 {
        return Err(Error::Parse("mining selected no latent patterns".into()));
    }
    aog.provenance.image_width = iw;
    aog.provenance.image_height = ih;
    aog.provenance.layers = layers.iter().rev().copied().collect();
    aog.provenance.epsilon_units = Some(config.epsilon);
    aog.provenance.n_k = counts;
    aog.provenance.localization_weight = loc_weight;
    Ok((aog, traces))
}
