//! Part parsing by dynamic programming over the graph, plus an exhaustive
//! oracle for small instances.

mod brute;
mod dp;
mod normalize;
mod scoring;

pub use brute::{brute_force_parse, brute_force_parse_normalized, brute_force_size, BRUTE_FORCE_BOUND};
pub use dp::{
    center_grid, check_requirements, parse_latent, parse_semantic, parse_template, search_center,
    AogParser, CenterSearch, ChildVote, LatentParse, ParseGraph, ParseReport, PatternRecord,
    ReportPattern, TemplateParse, CENTER_GRID_PX,
};
pub use normalize::{normalize_responses, NormalizedLayer, NormalizedVolume};
pub use scoring::{
    deformation_range, deformation_score, nearest_upper, pair_score, response_score,
    score_terminal, s_inf, UpperParse,
};
