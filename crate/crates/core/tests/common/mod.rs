#![allow(dead_code)]

use partaog::aog::{build_skeleton, Aog, LatentPattern, PartTemplate, Provenance, ScoreWeights};
use partaog::eval::center_prediction;
use partaog::feature_store::{
    synth_generate, FeatureVolume, Layer, PartAnnotation, SignatureEntry, SynthDataset, SynthSpec,
    TemplateSignature,
};
use partaog::geometry::{BBox, LayerGeometry, Point};
use partaog::miner::{grow_aog, MinerConfig, NkMode};
use partaog::parser::AogParser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const TEMPLATE_CENTERS: [(f64, f64); 3] = [(40.0, 40.0), (88.0, 40.0), (56.0, 88.0)];
pub const PLANTED_PER_LAYER: usize = 2;

pub fn demo_layers() -> Vec<LayerGeometry> {
    vec![
        LayerGeometry {
            layer_id: 0,
            channels: 8,
            height: 16,
            width: 16,
            stride_px: 8.0,
            rf_size_px: 16.0,
            offset_px: 0.0,
        },
        LayerGeometry {
            layer_id: 1,
            channels: 8,
            height: 8,
            width: 8,
            stride_px: 16.0,
            rf_size_px: 40.0,
            offset_px: 8.0,
        },
    ]
}

/// Three templates at fixed positions (jittered by `jitter` px), each with two
/// bumps per layer on slices `2t` and `2t + 1`.
pub fn demo_spec(seed: u64, images: usize, noise: f32, prefix: &str) -> SynthSpec {
    let jitter = 3.0;
    let templates = TEMPLATE_CENTERS
        .iter()
        .enumerate()
        .map(|(t, &(cx, cy))| {
            let t = t as u32;
            let entry = |layer, slice| SignatureEntry {
                layer,
                slice,
                offset: Point::new(0.0, 0.0),
                amplitude: 1.0,
                radius: 1.0,
            };
            TemplateSignature {
                part_size: Point::new(32.0, 32.0),
                center_region: Some(BBox::new(cx - jitter, cy - jitter, cx + jitter, cy + jitter)),
                signature: vec![entry(1, 2 * t), entry(1, 2 * t + 1), entry(0, 2 * t), entry(0, 2 * t + 1)],
            }
        })
        .collect();
    SynthSpec {
        images,
        image_width: 128,
        image_height: 128,
        layers: demo_layers(),
        center_region: BBox::new(30.0, 30.0, 98.0, 98.0),
        templates,
        noise,
        seed,
        part_name: "part".into(),
        id_prefix: prefix.into(),
    }
}

pub fn demo_train(seed: u64) -> SynthDataset {
    synth_generate(&demo_spec(seed, 30, 0.25, &format!("train{seed}-"))).unwrap()
}

pub fn demo_heldout(seed: u64) -> SynthDataset {
    synth_generate(&demo_spec(1000 + seed, 100, 0.25, &format!("test{seed}-"))).unwrap()
}

pub fn fixed_config() -> MinerConfig {
    MinerConfig {
        nk: NkMode::Fixed(vec![PLANTED_PER_LAYER]),
        ..Default::default()
    }
}

/// Grows an AOG from the first `shots` annotations, with the whole training
/// set as the unannotated pool.
pub fn learn(train: &SynthDataset, shots: usize, config: &MinerConfig) -> Aog {
    let anns: Vec<PartAnnotation> = train.annotations[..shots].to_vec();
    let skeleton = build_skeleton(&anns, ScoreWeights::default()).unwrap();
    let pairs: Vec<(&FeatureVolume, &PartAnnotation)> = anns
        .iter()
        .map(|a| (train.volumes.iter().find(|v| v.image_id == a.image_id).unwrap(), a))
        .collect();
    let pool: Vec<&FeatureVolume> = train.volumes.iter().collect();
    grow_aog(skeleton, &pairs, &pool, config).unwrap()
}

pub fn center_rate(aog: &Aog, test: &SynthDataset) -> f64 {
    let parser = AogParser::new(aog).unwrap();
    let hits = test
        .volumes
        .iter()
        .zip(&test.annotations)
        .filter(|(v, a)| center_prediction(parser.parse(v).unwrap().center(), &a.bbox))
        .count();
    hits as f64 / test.volumes.len() as f64
}

/// (recovered, planted): a planted (layer, slice) counts when its template
/// holds a pattern on that slice whose ideal center sits within one unit
/// (Chebyshev) of the planted unit.
pub fn recovery(aog: &Aog, train: &SynthDataset) -> (usize, usize) {
    let layers = demo_layers();
    let mut found = 0;
    for g in &train.ground_truth {
        let geom = layers.iter().find(|l| l.layer_id == g.layer).unwrap();
        let hit = aog.templates[g.template].patterns.iter().any(|p| {
            let (ix, iy) = geom.nearest_unit(p.ideal_center);
            p.layer_id == g.layer
                && p.conv_slice == g.slice
                && ix.abs_diff(g.unit[0]) <= 1
                && iy.abs_diff(g.unit[1]) <= 1
        });
        if hit {
            found += 1;
        }
    }
    (found, train.ground_truth.len())
}

pub const SMALL_IMAGE: u32 = 80;

pub fn random_geometry(rng: &mut ChaCha8Rng, layer_id: u32) -> LayerGeometry {
    let stride = [8.0f32, 12.0][rng.random_range(0..2)];
    LayerGeometry {
        layer_id,
        channels: rng.random_range(1..=3),
        height: rng.random_range(2..=6),
        width: rng.random_range(2..=6),
        stride_px: stride,
        rf_size_px: stride * 2.0,
        offset_px: stride / 2.0,
    }
}

pub fn random_volume(rng: &mut ChaCha8Rng, id: &str, layers: &[LayerGeometry]) -> FeatureVolume {
    FeatureVolume {
        image_id: id.into(),
        image_width: SMALL_IMAGE,
        image_height: SMALL_IMAGE,
        layers: layers
            .iter()
            .map(|g| {
                let data = (0..g.element_count())
                    .map(|_| {
                        let v: f32 = StandardNormal.sample(rng);
                        v.max(0.0) * 2.0
                    })
                    .collect();
                Layer::new(*g, data)
            })
            .collect(),
    }
}

/// A random graph over `layers`: up to two templates with up to three
/// patterns each, centers on unit positions.
pub fn random_aog(rng: &mut ChaCha8Rng, layers: &[LayerGeometry], weights: ScoreWeights) -> Aog {
    let n_templates = rng.random_range(1..=2);
    let templates = (0..n_templates)
        .map(|t| {
            let n = rng.random_range(1..=3);
            let mut patterns: Vec<LatentPattern> = (0..n)
                .map(|_| {
                    let g = layers[rng.random_range(0..layers.len())];
                    let ix = rng.random_range(0..g.width);
                    let iy = rng.random_range(0..g.height);
                    LatentPattern {
                        layer_id: g.layer_id,
                        conv_slice: rng.random_range(0..g.channels),
                        ideal_center: g.unit_center(i64::from(ix), i64::from(iy)).unwrap(),
                        displacement: Point::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)),
                        mined_score: 0.0,
                    }
                })
                .collect();
            patterns.sort_by(|a, b| b.layer_id.cmp(&a.layer_id));
            PartTemplate {
                template_id: t,
                scale: Point::new(rng.random_range(10.0..40.0), rng.random_range(10.0..40.0)),
                patterns,
            }
        })
        .collect();
    Aog {
        part_name: "part".into(),
        weights,
        templates,
        provenance: Provenance {
            image_width: SMALL_IMAGE,
            image_height: SMALL_IMAGE,
            layers: layers.to_vec(),
            ..Default::default()
        },
    }
}

pub fn small_instance(seed: u64) -> (Aog, FeatureVolume) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = rng.random_range(1..=2);
    let layers: Vec<LayerGeometry> = (0..n_layers).map(|l| random_geometry(&mut rng, l)).collect();
    let aog = random_aog(&mut rng, &layers, ScoreWeights::default());
    let vol = random_volume(&mut rng, &format!("small{seed}"), &layers);
    (aog, vol)
}

/// Parses a small instance both ways; `Err` describes the first disagreement.
pub fn oracle_agrees(seed: u64) -> Result<(), String> {
    let (aog, vol) = small_instance(seed);
    let dp = partaog::parser::parse_semantic(&aog, &vol).map_err(|e| e.to_string())?;
    let bf = partaog::parser::brute_force_parse(&aog, &vol).map_err(|e| e.to_string())?;
    if dp.template_id != bf.template_id {
        return Err(format!("seed {seed}: template {} vs {}", dp.template_id, bf.template_id));
    }
    if dp.grid_center != bf.grid_center {
        return Err(format!("seed {seed}: grid center {:?} vs {:?}", dp.grid_center, bf.grid_center));
    }
    let units = |g: &partaog::parser::ParseGraph| g.patterns.iter().map(|r| r.unit).collect::<Vec<_>>();
    if units(&dp) != units(&bf) {
        return Err(format!("seed {seed}: units {:?} vs {:?}", units(&dp), units(&bf)));
    }
    if (dp.part_score - bf.part_score).abs() > 1e-9 {
        return Err(format!("seed {seed}: score {} vs {}", dp.part_score, bf.part_score));
    }
    Ok(())
}

/// Argmax of a small instance is unchanged when every lambda is scaled by `k`.
pub fn scaling_case(seed: u64, k: f64) -> Result<(), String> {
    use partaog::parser::{parse_semantic, ParseGraph};
    let (aog, vol) = small_instance(seed);
    let mut scaled = aog.clone();
    scaled.weights = aog.weights.scaled(k);
    let a = parse_semantic(&aog, &vol).map_err(|e| e.to_string())?;
    let b = parse_semantic(&scaled, &vol).map_err(|e| e.to_string())?;
    let units = |g: &ParseGraph| g.patterns.iter().map(|r| r.unit).collect::<Vec<_>>();
    if a.template_id != b.template_id || a.grid_center != b.grid_center || units(&a) != units(&b) {
        return Err(format!("seed {seed}, k {k}: argmax changed"));
    }
    if (b.part_score - k * a.part_score).abs() > 1e-6 * (1.0 + (k * a.part_score).abs()) {
        return Err(format!("seed {seed}, k {k}: score {} is not {k} x {}", b.part_score, a.part_score));
    }
    Ok(())
}

/// Zero background with random positive activations in a central window,
/// moved by `shift_px`.
fn interior_volume(rng: &mut ChaCha8Rng, shift_px: u32) -> FeatureVolume {
    let layers = demo_layers()
        .into_iter()
        .map(|g| {
            let mut l = Layer::zeros(g);
            let stride = g.stride_px as u32;
            let k = shift_px / stride;
            let (lo, hi) = (64 / stride - 2, 64 / stride + 2);
            for s in 0..g.channels {
                for iy in lo..=hi {
                    for ix in lo..=hi {
                        *l.at_mut(s, iy + k, ix + k) = rng.random_range(0.0..3.0);
                    }
                }
            }
            l
        })
        .collect();
    FeatureVolume {
        image_id: "shift".into(),
        image_width: 128,
        image_height: 128,
        layers,
    }
}

/// Moving the activations by 16 px (2 units of layer 0, 1 unit of layer 1)
/// together with the pattern positions moves the parsed center by 16 px.
pub fn translation_case(seed: u64, pair_relative: bool) -> Result<(), String> {
    let shift = 16.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vol_a = interior_volume(&mut rng.clone(), 0);
    let vol_b = interior_volume(&mut rng.clone(), shift as u32);
    let layers = demo_layers();
    let templates: Vec<PartTemplate> = (0..2)
        .map(|t| {
            let mut patterns: Vec<LatentPattern> = (0..3)
                .map(|_| {
                    let g = layers[rng.random_range(0..2)];
                    let s = f64::from(g.stride_px);
                    let o = f64::from(g.offset_px);
                    let ix = ((40.0 - o) / s).ceil() + f64::from(rng.random_range(0..2u32));
                    let iy = ((40.0 - o) / s).ceil() + f64::from(rng.random_range(0..2u32));
                    LatentPattern {
                        layer_id: g.layer_id,
                        conv_slice: rng.random_range(0..g.channels),
                        ideal_center: Point::new(o + s * ix, o + s * iy),
                        displacement: Point::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
                        mined_score: 0.0,
                    }
                })
                .collect();
            patterns.sort_by(|a, b| b.layer_id.cmp(&a.layer_id));
            PartTemplate {
                template_id: t,
                scale: Point::new(30.0, 30.0),
                patterns,
            }
        })
        .collect();
    let aog = Aog {
        part_name: "part".into(),
        weights: ScoreWeights {
            pair_relative,
            ..Default::default()
        },
        templates,
        provenance: Provenance {
            image_width: 128,
            image_height: 128,
            layers,
            ..Default::default()
        },
    };
    let mut moved_aog = aog.clone();
    for t in &mut moved_aog.templates {
        for p in &mut t.patterns {
            p.ideal_center = p.ideal_center.add(Point::new(shift, shift));
        }
    }
    let a = partaog::parser::parse_semantic(&aog, &vol_a).map_err(|e| e.to_string())?;
    let b = partaog::parser::parse_semantic(&moved_aog, &vol_b).map_err(|e| e.to_string())?;
    let moved = b.center().sub(a.center());
    if a.template_id != b.template_id
        || (moved.x - shift).abs() > 1e-9
        || (moved.y - shift).abs() > 1e-9
        || (a.part_score - b.part_score).abs() > 1e-9
    {
        return Err(format!("seed {seed}: center moved by {moved:?}, templates {} / {}", a.template_id, b.template_id));
    }
    Ok(())
}
