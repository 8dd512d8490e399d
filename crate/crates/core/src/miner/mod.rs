//! Growing latent patterns from a few annotated part boxes.
//!
//! Per template and layer (top layer first) every (slice, unit) becomes a
//! candidate pattern. Candidates are scored on the annotated images and on
//! an unannotated pool, thinned by spatial non-maximum suppression, and the
//! best `n_k` are kept. `n_k` comes either from the config or from a fit of
//! the score-rank curve.

mod candidates;
mod grow;
mod rank_curve;
mod select;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use candidates::{
    enumerate_candidates, score_candidate, unsupervised_response, AnnotatedView, CandidatePattern,
    CandidateScore,
};
pub use grow::{grow_aog, grow_aog_traced, LayerTrace};
pub use rank_curve::{estimate_nk, fit_rank_curve, RankFit, BETA_GRID, BETA_MAX, BETA_MIN, MIN_FIT_POINTS};
pub use select::{greedy_select, nms_conflict, spatial_nms};

/// How many patterns each layer keeps.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NkMode {
    /// Read off the score-rank curve.
    #[default]
    Auto,
    /// One value for every layer, or one per mined layer from the top down.
    Fixed(Vec<usize>),
}

impl Serialize for NkMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NkMode::Auto => s.serialize_str("auto"),
            NkMode::Fixed(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for NkMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            One(usize),
            List(Vec<usize>),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "auto" => Ok(NkMode::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "n_k must be \"auto\" or integers, got {w:?}"
            ))),
            Repr::One(n) => Ok(NkMode::Fixed(vec![n])),
            Repr::List(v) => Ok(NkMode::Fixed(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerConfig {
    pub nk: NkMode,
    /// NMS window side, in units.
    pub epsilon: u32,
    /// Upper bound on the unannotated pool.
    pub unannotated_cap: usize,
    /// Seeds the pool subsample.
    pub seed: u64,
    /// Pattern count used when the rank-curve fit has too few points.
    pub nk_fallback: usize,
    /// Layers to mine; all layers of the volumes when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<u32>>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            nk: NkMode::Auto,
            epsilon: 2,
            unannotated_cap: 256,
            seed: 0,
            nk_fallback: 3,
            layers: None,
        }
    }
}

impl MinerConfig {
    pub fn check(&self) -> Result<()> {
        if self.epsilon == 0 {
            return Err(Error::Argument("epsilon must be at least 1".into()));
        }
        if self.nk_fallback == 0 {
            return Err(Error::Argument("nk_fallback must be at least 1".into()));
        }
        if let NkMode::Fixed(v) = &self.nk {
            if v.is_empty() || v.contains(&0) {
                return Err(Error::Argument(format!("fixed n_k must be positive, got {v:?}")));
            }
        }
        Ok(())
    }
}
