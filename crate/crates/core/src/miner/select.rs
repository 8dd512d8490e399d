use super::candidates::CandidatePattern;

/// True when `a` and `b` fall in one `eps x eps` window of the same slice.
pub fn nms_conflict(a: &CandidatePattern, b: &CandidatePattern, eps: u32) -> bool {
    a.layer_id == b.layer_id
        && a.conv_slice == b.conv_slice
        && a.unit.0.abs_diff(b.unit.0) < eps
        && a.unit.1.abs_diff(b.unit.1) < eps
}

fn by_rank(a: &CandidatePattern, b: &CandidatePattern) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.index.cmp(&b.index))
}

/// Keeps, per conv-slice, only the best-scoring candidate of every
/// `eps x eps` neighbourhood. Output is ordered by descending score.
pub fn spatial_nms(candidates: &[CandidatePattern], eps: u32) -> Vec<CandidatePattern> {
    let mut order: Vec<&CandidatePattern> = candidates.iter().collect();
    order.sort_by(|a, b| by_rank(a, b));
    let mut kept: Vec<CandidatePattern> = Vec::new();
    for c in order {
        if !kept.iter().any(|k| nms_conflict(k, c, eps)) {
            kept.push(c.clone());
        }
    }
    kept
}

/// Repeatedly takes the best remaining candidate that is not suppressed by
/// an earlier pick, until `n_k` are chosen or the pool runs out.
pub fn greedy_select(candidates: &[CandidatePattern], n_k: usize, eps: u32) -> Vec<CandidatePattern> {
    let mut selected: Vec<CandidatePattern> = Vec::new();
    let mut taken = vec![false; candidates.len()];
    while selected.len() < n_k {
        let mut best: Option<usize> = None;
        for (i, c) in candidates.iter().enumerate() {
            if taken[i] || selected.iter().any(|s| nms_conflict(s, c, eps)) {
                continue;
            }
            if best.is_none_or(|b| by_rank(c, &candidates[b]).is_lt()) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        taken[b] = true;
        selected.push(candidates[b].clone());
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn cand(index: usize, slice: u32, ix: u32, iy: u32, score: f64) -> CandidatePattern {
        CandidatePattern {
            index,
            layer_id: 0,
            conv_slice: slice,
            unit: (ix, iy),
            ideal_center: Point::new(f64::from(ix), f64::from(iy)),
            displacement: Point::default(),
            score,
            annotated_term: score,
            unannotated_term: 0.0,
            parses: Vec::new(),
        }
    }

    fn scores(v: &[CandidatePattern]) -> Vec<f64> {
        v.iter().map(|c| c.score).collect()
    }

    #[test]
    fn adjacent_same_slice_keeps_best() {
        let c = vec![cand(0, 0, 3, 3, 3.0), cand(1, 0, 4, 3, 5.0)];
        assert_eq!(scores(&spatial_nms(&c, 2)), vec![5.0]);
    }

    #[test]
    fn different_slices_both_survive() {
        let c = vec![cand(0, 0, 3, 3, 3.0), cand(1, 1, 3, 3, 5.0)];
        assert_eq!(spatial_nms(&c, 2).len(), 2);
    }

    #[test]
    fn far_apart_is_identity() {
        let c = vec![cand(0, 0, 0, 0, 1.0), cand(1, 0, 2, 0, 2.0), cand(2, 0, 0, 2, 3.0)];
        assert_eq!(spatial_nms(&c, 2).len(), 3);
    }

    #[test]
    fn greedy_top_k() {
        let c = vec![cand(0, 0, 0, 0, 9.0), cand(1, 1, 0, 0, 7.0), cand(2, 2, 0, 0, 5.0)];
        assert_eq!(scores(&greedy_select(&c, 2, 2)), vec![9.0, 7.0]);
    }

    #[test]
    fn greedy_skips_suppressed() {
        let c = vec![cand(0, 0, 0, 0, 9.0), cand(1, 0, 1, 0, 8.0), cand(2, 1, 0, 0, 5.0)];
        assert_eq!(scores(&greedy_select(&c, 2, 2)), vec![9.0, 5.0]);
    }

    #[test]
    fn greedy_clamps_to_pool() {
        let c = vec![cand(0, 0, 0, 0, 1.0), cand(1, 1, 0, 0, 2.0)];
        assert_eq!(greedy_select(&c, 10, 2).len(), 2);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let c = vec![cand(0, 0, 1, 0, 4.0), cand(1, 0, 0, 0, 4.0)];
        let kept = spatial_nms(&c, 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].index, 0);
    }
}
