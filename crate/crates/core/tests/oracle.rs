mod common;

use partaog::aog::{Aog, LatentPattern, PartTemplate, Provenance, ScoreWeights};
use partaog::feature_store::{FeatureVolume, Layer};
use partaog::geometry::{LayerGeometry, Point};
use partaog::parser::{
    brute_force_parse, brute_force_size, parse_semantic, response_score, s_inf, BRUTE_FORCE_BOUND,
};
use partaog::Error;

#[test]
fn random_instances_agree() {
    for seed in 0..40 {
        common::oracle_agrees(seed).unwrap();
    }
}

#[test]
fn two_unit_hand_enumeration() {
    // one pattern, a 2x1 layer; both units inside the range
    let g = LayerGeometry {
        layer_id: 0,
        channels: 1,
        height: 1,
        width: 2,
        stride_px: 16.0,
        rf_size_px: 32.0,
        offset_px: 8.0,
    };
    let w = ScoreWeights::default();
    let aog = Aog {
        part_name: "p".into(),
        weights: w,
        templates: vec![PartTemplate {
            template_id: 0,
            scale: Point::new(16.0, 16.0),
            patterns: vec![LatentPattern {
                layer_id: 0,
                conv_slice: 0,
                ideal_center: Point::new(8.0, 8.0),
                displacement: Point::new(0.0, 0.0),
                mined_score: 0.0,
            }],
        }],
        provenance: Provenance {
            image_width: 32,
            image_height: 16,
            layers: vec![g],
            ..Default::default()
        },
    };
    let vol = FeatureVolume {
        image_id: "x".into(),
        image_width: 32,
        image_height: 16,
        layers: vec![Layer::new(g, vec![1.0, 3.0])],
    };
    // z-scores of [1, 3] are [-1, 1]
    let left = response_score(-1.0, &w);
    let right = response_score(1.0, &w) - w.lambda_loc * 16.0 * 16.0;
    let expect = left.max(right);
    let bf = brute_force_parse(&aog, &vol).unwrap();
    let dp = parse_semantic(&aog, &vol).unwrap();
    // the best center coincides with the vote, so s_inf vanishes after refinement
    let vote = if right > left { Point::new(24.0, 8.0) } else { Point::new(8.0, 8.0) };
    assert_eq!(s_inf(vote, vote, Point::new(0.0, 0.0), &w), 0.0);
    assert!((bf.part_score - expect).abs() < 1e-9, "{} vs {expect}", bf.part_score);
    assert!((dp.part_score - expect).abs() < 1e-9);
}

#[test]
fn refuses_oversized_instances() {
    let g = LayerGeometry {
        layer_id: 0,
        channels: 1,
        height: 10,
        width: 10,
        stride_px: 4.0,
        rf_size_px: 8.0,
        offset_px: 2.0,
    };
    let patterns = (0..6)
        .map(|i| LatentPattern {
            layer_id: 0,
            conv_slice: 0,
            ideal_center: Point::new(2.0 + 4.0 * i as f64, 20.0),
            displacement: Point::new(0.0, 0.0),
            mined_score: 0.0,
        })
        .collect();
    let aog = Aog {
        part_name: "p".into(),
        weights: ScoreWeights::default(),
        templates: vec![PartTemplate {
            template_id: 0,
            scale: Point::new(8.0, 8.0),
            patterns,
        }],
        provenance: Provenance {
            image_width: 40,
            image_height: 40,
            layers: vec![g],
            ..Default::default()
        },
    };
    let vol = FeatureVolume {
        image_id: "big".into(),
        image_width: 40,
        image_height: 40,
        layers: vec![Layer::new(g, vec![0.5; 100])],
    };
    assert!(brute_force_size(&aog, &vol).unwrap() > BRUTE_FORCE_BOUND);
    assert!(matches!(brute_force_parse(&aog, &vol), Err(Error::TooLarge { .. })));
    assert!(parse_semantic(&aog, &vol).is_ok());
}
