use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::{error, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{manifest_path_for, RunManifest};
use crate::aog::{build_skeleton, Aog, ScoreWeights, WeightOverrides};
use crate::error::{Error, Result};
use crate::eval::{evaluate, heatmap_export};
use crate::feature_store::{
    load_annotations, load_volume, save_annotations, save_volume, synth_generate, validate_volume,
    FeatureVolume, PartAnnotation, SynthSpec,
};
use crate::miner::{grow_aog, MinerConfig, NkMode};
use crate::parser::{AogParser, ParseReport};

/// Contents of the `--config` file of `learn`: the miner settings plus
/// weight overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub nk: NkMode,
    pub epsilon: u32,
    pub unannotated_cap: usize,
    pub seed: u64,
    pub nk_fallback: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<u32>>,
    pub weights: WeightOverrides,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let m = MinerConfig::default();
        Self {
            nk: m.nk,
            epsilon: m.epsilon,
            unannotated_cap: m.unannotated_cap,
            seed: m.seed,
            nk_fallback: m.nk_fallback,
            layers: m.layers,
            weights: WeightOverrides::default(),
        }
    }
}

impl LearnConfig {
    pub fn miner(&self) -> MinerConfig {
        MinerConfig {
            nk: self.nk.clone(),
            epsilon: self.epsilon,
            unannotated_cap: self.unannotated_cap,
            seed: self.seed,
            nk_fallback: self.nk_fallback,
            layers: self.layers.clone(),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_aog(path: &Path) -> Result<Aog> {
    Aog::from_json(&read_text(path)?)
}

fn load_checked(path: &Path) -> Result<FeatureVolume> {
    let vol = load_volume(path).inspect_err(|e| error!("{}: {e}", path.display()))?;
    let problems = validate_volume(&vol);
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|v| v.to_string()).collect();
        return Err(Error::Contract(format!("{}: {}", path.display(), list.join("; "))));
    }
    Ok(vol)
}

fn fvol_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "fvol") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// A single `.fvol` file, or every `.fvol` file of a directory, sorted by path.
fn load_features(path: &Path) -> Result<Vec<FeatureVolume>> {
    let files = if path.is_dir() {
        fvol_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Argument(format!("no .fvol files in {}", path.display())));
    }
    let vols: Vec<FeatureVolume> = files.par_iter().map(|p| load_checked(p)).collect::<Result<_>>()?;
    let mut seen = HashMap::new();
    for (v, p) in vols.iter().zip(&files) {
        if let Some(prev) = seen.insert(v.image_id.clone(), p) {
            return Err(Error::Argument(format!(
                "image id {} appears in {} and {}",
                v.image_id,
                prev.display(),
                p.display()
            )));
        }
    }
    Ok(vols)
}

fn match_annotations<'a>(
    anns: &'a [PartAnnotation],
    vols: &'a [FeatureVolume],
) -> Result<Vec<(&'a FeatureVolume, &'a PartAnnotation)>> {
    let by_id: HashMap<&str, &FeatureVolume> = vols.iter().map(|v| (v.image_id.as_str(), v)).collect();
    let mut missing: Vec<&str> = anns
        .iter()
        .filter(|a| !by_id.contains_key(a.image_id.as_str()))
        .map(|a| a.image_id.as_str())
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::Lookup(format!("no feature volume for images: {}", missing.join(", "))));
    }
    Ok(anns.iter().map(|a| (by_id[a.image_id.as_str()], a)).collect())
}

pub fn cmd_synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec: SynthSpec = serde_json::from_str(&read_text(spec_path)?)
        .map_err(|e| Error::Argument(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = synth_generate(&spec)?;
    let features = out_dir.join("features");
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;

    let mut manifest = RunManifest::new("synth", Some(spec.seed), serde_json::to_value(&spec)?);
    manifest.input(spec_path);
    for v in &data.volumes {
        let p = features.join(format!("{}.fvol", v.image_id));
        save_volume(v, &p)?;
        manifest.output(&p)?;
    }
    let ann = out_dir.join("annotations.json");
    save_annotations(&data.annotations, &ann)?;
    manifest.output(&ann)?;
    let gt = out_dir.join("ground_truth.json");
    write_text(&gt, &(serde_json::to_string_pretty(&data.ground_truth)? + "\n"))?;
    manifest.output(&gt)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    info!("wrote {} volumes to {}", data.volumes.len(), features.display());
    Ok(())
}

pub struct LearnArgs<'a> {
    pub features: &'a Path,
    pub annotations: &'a Path,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub nk: Option<NkMode>,
    pub epsilon: Option<u32>,
    /// Use only the first this-many annotations of the file.
    pub shots: Option<usize>,
}

pub fn cmd_learn(args: LearnArgs<'_>) -> Result<()> {
    let mut config: LearnConfig = match args.config {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Error::Argument(format!("{}: {e}", p.display())))?,
        None => LearnConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(nk) = args.nk {
        config.nk = nk;
    }
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
    let miner = config.miner();
    miner.check()?;

    let mut anns = load_annotations(args.annotations)?;
    if let Some(n) = args.shots {
        anns.truncate(n);
    }
    if anns.is_empty() {
        return Err(Error::Argument(format!("{} holds no annotations", args.annotations.display())));
    }
    let vols = load_features(args.features)?;
    let pairs = match_annotations(&anns, &vols)?;
    let m = anns.iter().map(|a| a.template_id).max().map_or(0, |t| t + 1);
    let mut problems = Vec::new();
    for (v, a) in &pairs {
        for p in a.check(v.image_width, v.image_height, m) {
            problems.push(format!("{}: {p}", a.image_id));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Argument(problems.join("; ")));
    }

    let weights = config.weights.apply(ScoreWeights::default());
    let skeleton = build_skeleton(&anns, weights)?;
    let pool: Vec<&FeatureVolume> = vols.iter().collect();
    let aog = grow_aog(skeleton, &pairs, &pool, &miner)?;
    write_text(args.out, &(aog.to_json()? + "\n"))?;

    let mut snapshot = serde_json::to_value(&config)?;
    if let Some(n) = args.shots {
        snapshot["shots"] = n.into();
    }
    let mut manifest = RunManifest::new("learn", Some(config.seed), snapshot);
    manifest.input(args.features);
    manifest.input(args.annotations);
    if let Some(c) = args.config {
        manifest.input(c);
    }
    manifest.output(args.out)?;
    manifest.write(&manifest_path_for(args.out))?;
    info!(
        "learned {} patterns over {} templates from {} annotations",
        aog.pattern_count(),
        aog.templates.len(),
        anns.len()
    );
    Ok(())
}

fn parse_all(aog: &Aog, vols: &[FeatureVolume]) -> Result<Vec<ParseReport>> {
    let parser = AogParser::new(aog)?;
    vols.par_iter()
        .map(|v| parser.parse(v).map(|g| g.to_report()))
        .collect()
}

pub fn cmd_parse(aog_path: &Path, features: &Path, out: &Path) -> Result<()> {
    let aog = load_aog(aog_path)?;
    let vols = load_features(features)?;
    let reports = parse_all(&aog, &vols)?;
    let text = if features.is_dir() {
        serde_json::to_string_pretty(&reports)?
    } else {
        serde_json::to_string_pretty(&reports[0])?
    };
    write_text(out, &(text + "\n"))?;

    let mut manifest = RunManifest::new("parse", None, serde_json::Value::Null);
    manifest.input(aog_path);
    manifest.input(features);
    manifest.output(out)?;
    manifest.write(&manifest_path_for(out))
}

pub fn cmd_eval(aog_path: &Path, features: &Path, annotations: &Path, out: &Path) -> Result<()> {
    let aog = load_aog(aog_path)?;
    let gt = load_annotations(annotations)?;
    if gt.is_empty() {
        return Err(Error::Argument(format!("{} holds no annotations", annotations.display())));
    }
    let vols = load_features(features)?;
    let pairs = match_annotations(&gt, &vols)?;
    let mut targets: Vec<FeatureVolume> = Vec::new();
    let mut seen = BTreeMap::new();
    for (v, _) in &pairs {
        if seen.insert(v.image_id.clone(), ()).is_none() {
            targets.push((*v).clone());
        }
    }
    let skipped = vols.len() - targets.len();
    if skipped > 0 {
        warn!("{skipped} volumes have no ground truth and are not evaluated");
    }
    let reports = parse_all(&aog, &targets)?;
    let dims: HashMap<String, (u32, u32)> = targets
        .iter()
        .map(|v| (v.image_id.clone(), (v.image_width, v.image_height)))
        .collect();
    let report = evaluate(&reports, &gt, &dims)?;
    write_text(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    info!(
        "{} images: detection {:.3}, center prediction {:.3}, normalized distance {:.4}",
        report.images, report.detection_rate, report.center_prediction_rate, report.mean_normalized_distance
    );

    let mut manifest = RunManifest::new("eval", None, serde_json::Value::Null);
    manifest.input(aog_path);
    manifest.input(features);
    manifest.input(annotations);
    manifest.output(out)?;
    manifest.write(&manifest_path_for(out))
}

pub fn cmd_heatmap(aog_path: &Path, features: &Path, layer: u32, out: &Path) -> Result<()> {
    let aog = load_aog(aog_path)?;
    let vol = load_checked(features)?;
    let parse = AogParser::new(&aog)?.parse(&vol)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    heatmap_export(&parse, &vol, layer, out)?;

    let mut manifest = RunManifest::new("heatmap", None, serde_json::json!({ "layer": layer }));
    manifest.input(aog_path);
    manifest.input(features);
    manifest.output(out)?;
    manifest.write(&manifest_path_for(out))
}

/// Checks `.fvol` files (or a directory of them) and AOG documents. Returns
/// the number of problems found; each is logged.
pub fn cmd_validate(path: &Path) -> Result<usize> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let files = if path.is_dir() { fvol_files(path)? } else { vec![path.to_path_buf()] };
    let mut problems = 0;
    for f in &files {
        if f.extension().is_some_and(|x| x == "json") {
            let text = read_text(f)?;
            if let Err(e) = Aog::from_json(&text) {
                error!("{}: {e}", f.display());
                problems += 1;
            }
            continue;
        }
        match load_volume(f) {
            Ok(v) => {
                for p in validate_volume(&v) {
                    error!("{}: {p}", f.display());
                    problems += 1;
                }
            }
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => {
                error!("{}: {e}", f.display());
                problems += 1;
            }
        }
    }
    info!("checked {} files, {problems} problems", files.len());
    Ok(problems)
}
