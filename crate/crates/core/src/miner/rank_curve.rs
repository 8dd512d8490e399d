//! Fit of the score-rank curve `score(rank) ≈ alpha * exp(-sqrt(beta * rank)) + gamma`
//! and the pattern count derived from it.

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 8;
pub const BETA_MIN: f64 = 1e-4;
pub const BETA_MAX: f64 = 10.0;
pub const BETA_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sse: f64,
    /// Set when the data carry no decay (constant scores, or a fit with
    /// `alpha <= 0`).
    pub degenerate: bool,
}

/// Closed-form `(alpha, gamma, sse)` for a fixed beta.
fn solve_linear(scores: &[f64], beta: f64) -> (f64, f64, f64) {
    let n = scores.len() as f64;
    let basis: Vec<f64> = (1..=scores.len())
        .map(|r| (-(beta * r as f64).sqrt()).exp())
        .collect();
    let mean_e = basis.iter().sum::<f64>() / n;
    let mean_s = scores.iter().sum::<f64>() / n;
    let mut see = 0.0;
    let mut ses = 0.0;
    for (e, s) in basis.iter().zip(scores) {
        see += (e - mean_e) * (e - mean_e);
        ses += (e - mean_e) * (s - mean_s);
    }
    let alpha = if see > 0.0 { ses / see } else { 0.0 };
    let gamma = mean_s - alpha * mean_e;
    let sse = basis
        .iter()
        .zip(scores)
        .map(|(e, s)| {
            let r = s - alpha * e - gamma;
            r * r
        })
        .sum();
    (alpha, gamma, sse)
}

/// Least-squares fit over ranks `1..=n`: a log-spaced beta grid with the
/// linear parameters solved exactly per beta, then a golden-section polish
/// of log(beta) between the grid neighbours of the best point.
pub fn fit_rank_curve(scores_desc: &[f64]) -> Result<RankFit> {
    if scores_desc.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_POINTS} scores, got {}",
            scores_desc.len()
        )));
    }
    if scores_desc.iter().any(|s| !s.is_finite()) {
        return Err(Error::Fit("scores must be finite".into()));
    }
    let lo = scores_desc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores_desc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        let gamma = scores_desc.iter().sum::<f64>() / scores_desc.len() as f64;
        return Ok(RankFit {
            alpha: 0.0,
            beta: BETA_MAX,
            gamma,
            sse: 0.0,
            degenerate: true,
        });
    }

    let (la, lb) = (BETA_MIN.ln(), BETA_MAX.ln());
    let grid: Vec<f64> = (0..BETA_GRID)
        .map(|i| la + (lb - la) * i as f64 / (BETA_GRID - 1) as f64)
        .collect();
    let mut best_i = 0;
    let mut best_sse = f64::INFINITY;
    for (i, &lbeta) in grid.iter().enumerate() {
        let (_, _, sse) = solve_linear(scores_desc, lbeta.exp());
        if sse < best_sse {
            best_sse = sse;
            best_i = i;
        }
    }

    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(BETA_GRID - 1)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |lbeta: f64| solve_linear(scores_desc, lbeta.exp()).2;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let polished = 0.5 * (a + b);
    let mut lbeta = grid[best_i];
    if f(polished) < best_sse {
        lbeta = polished;
    }
    let beta = lbeta.exp();
    let (alpha, gamma, sse) = solve_linear(scores_desc, beta);
    Ok(RankFit {
        alpha,
        beta,
        gamma,
        sse,
        degenerate: alpha <= 0.0,
    })
}

/// `ceil(0.5 / beta)`, clamped to `[1, candidate_count]`.
pub fn estimate_nk(beta: f64, candidate_count: usize) -> Result<usize> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Argument(format!("beta must be a positive finite number, got {beta}")));
    }
    let raw = (0.5 / beta).ceil();
    let cap = candidate_count.max(1) as f64;
    Ok(raw.clamp(1.0, cap) as usize)
}
