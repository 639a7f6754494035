//! Independent brute-force references for the metric implementations. These
//! deliberately avoid the production code paths (full-matrix DP instead of
//! two-row, per-threshold re-matching instead of a running pass, exhaustive
//! matching instead of greedy) so the verification suites compare two
//! different routes to the same value.

use super::map::Detection;
use super::timeline::{Segment, SegmentTimeline};
use crate::codes::ClassId;
use rand::Rng;

/// Textbook full-matrix Levenshtein distance.
pub fn levenshtein_full_matrix(a: &[ClassId], b: &[ClassId]) -> usize {
    let (m, n) = (a.len(), b.len());
    let mut d = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=n {
        d[0][j] = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + cost);
        }
    }
    d[m][n]
}

/// Edit score recomputed through the full-matrix DP.
pub fn edit_score_oracle(pred: &SegmentTimeline, truth: &SegmentTimeline) -> f64 {
    let p: Vec<ClassId> = pred.without_background().iter().map(|s| s.class).collect();
    let t: Vec<ClassId> = truth.without_background().iter().map(|s| s.class).collect();
    if p.is_empty() && t.is_empty() {
        return 100.0;
    }
    let d = levenshtein_full_matrix(&p, &t);
    (100.0 * (1.0 - d as f64 / p.len().max(t.len()) as f64)).max(0.0)
}

fn ranked_class_detections<'a>(
    class: ClassId,
    detections: &'a [Detection],
) -> Vec<&'a Detection> {
    let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.class == class).collect();
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.sequence.cmp(&b.sequence))
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    dets
}

/// Precision/recall of the detection prefix kept at one confidence
/// threshold, with the midpoint matching rerun from scratch.
fn prefix_pr(
    class: ClassId,
    prefix: &[&Detection],
    truths: &[SegmentTimeline],
    positives: usize,
) -> (f64, f64) {
    let mut matched: Vec<Vec<bool>> = truths
        .iter()
        .map(|t| vec![false; t.without_background().len()])
        .collect();
    let mut tp = 0usize;
    for d in prefix {
        let segs = truths[d.sequence].without_background();
        let mid = d.midpoint();
        let hit = segs
            .iter()
            .enumerate()
            .find(|(i, s)| s.class == class && !matched[d.sequence][*i] && s.start <= mid && mid < s.end)
            .map(|(i, _)| i);
        if let Some(i) = hit {
            matched[d.sequence][i] = true;
            tp += 1;
        }
    }
    let precision = if prefix.is_empty() { 0.0 } else { tp as f64 / prefix.len() as f64 };
    let recall = tp as f64 / positives as f64;
    (precision, recall)
}

/// AP via an exhaustive sweep: at every threshold (equivalently every prefix
/// of the ranked list) precision/recall are recomputed from scratch and the
/// recall increments are accumulated.
pub fn ap_threshold_sweep(
    class: ClassId,
    detections: &[Detection],
    truths: &[SegmentTimeline],
) -> f64 {
    let positives: usize = truths
        .iter()
        .map(|t| t.without_background().iter().filter(|s| s.class == class).count())
        .sum();
    if positives == 0 {
        return 0.0;
    }
    let dets = ranked_class_detections(class, detections);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=dets.len() {
        let (precision, recall) = prefix_pr(class, &dets[..k], truths, positives);
        if recall > prev_recall {
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
    }
    ap
}

/// Corpus mAP recomputed through the threshold sweep.
pub fn map_threshold_sweep(detections: &[Detection], truths: &[SegmentTimeline]) -> f64 {
    let mut classes = std::collections::BTreeSet::new();
    for t in truths {
        for s in t.without_background() {
            classes.insert(s.class);
        }
    }
    if classes.is_empty() {
        return if detections.is_empty() { 100.0 } else { 0.0 };
    }
    let sum: f64 = classes
        .iter()
        .map(|&c| ap_threshold_sweep(c, detections, truths))
        .sum();
    100.0 * sum / classes.len() as f64
}

/// Maximum-cardinality matching between prediction and truth segments with
/// same-class IoU >= tau edges (Kuhn's augmenting paths). Returns
/// (tp, fp, fn) under the *optimal* assignment.
pub fn optimal_f1_counts(
    pred: &SegmentTimeline,
    truth: &SegmentTimeline,
    tau: f64,
) -> (usize, usize, usize) {
    let ps = pred.without_background();
    let ts = truth.without_background();
    let adj: Vec<Vec<usize>> = ps
        .iter()
        .map(|p| {
            ts.iter()
                .enumerate()
                .filter(|(_, t)| t.class == p.class && p.iou(t) >= tau)
                .map(|(i, _)| i)
            .collect()
        })
        .collect();
    let mut match_t: Vec<Option<usize>> = vec![None; ts.len()];
    fn try_assign(
        p: usize,
        adj: &[Vec<usize>],
        match_t: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &t in &adj[p] {
            if visited[t] {
                continue;
            }
            visited[t] = true;
            if match_t[t].is_none()
                || try_assign(match_t[t].unwrap(), adj, match_t, visited)
            {
                match_t[t] = Some(p);
                return true;
            }
        }
        false
    }
    let mut tp = 0;
    for p in 0..ps.len() {
        let mut visited = vec![false; ts.len()];
        if try_assign(p, &adj, &mut match_t, &mut visited) {
            tp += 1;
        }
    }
    (tp, ps.len() - tp, ts.len() - tp)
}

/// Random contiguous timeline: up to `max_segments` runs over `k` classes
/// (class 0 = background), adjacent runs distinct.
pub fn random_timeline<R: Rng>(
    rng: &mut R,
    total_frames: usize,
    max_segments: usize,
    k: u16,
) -> SegmentTimeline {
    assert!(total_frames >= 1 && max_segments >= 1 && k >= 2);
    let nseg = rng.gen_range(1..=max_segments.min(total_frames));
    let mut cuts = std::collections::BTreeSet::new();
    while cuts.len() < nseg - 1 {
        cuts.insert(rng.gen_range(1..total_frames));
    }
    let mut bounds = vec![0usize];
    bounds.extend(cuts.into_iter());
    bounds.push(total_frames);
    let mut segments: Vec<Segment> = Vec::new();
    for w in bounds.windows(2) {
        let mut class = ClassId(rng.gen_range(0..k));
        if let Some(last) = segments.last() {
            while class == last.class {
                class = ClassId(rng.gen_range(0..k));
            }
        }
        segments.push(Segment { start: w[0], end: w[1], class });
    }
    SegmentTimeline { segments, total_frames }
}

/// Random detection set referencing `truths`, mixing jittered copies of real
/// segments with spurious ones.
pub fn random_detections<R: Rng>(
    rng: &mut R,
    truths: &[SegmentTimeline],
    k: u16,
) -> Vec<Detection> {
    let mut out = Vec::new();
    for (si, t) in truths.iter().enumerate() {
        for s in t.without_background() {
            if rng.gen_bool(0.8) {
                let jitter = rng.gen_range(0..=(s.len() / 2 + 1));
                let start = s.start.saturating_sub(jitter);
                let end = (s.end + rng.gen_range(0..=jitter.max(1))).min(t.total_frames);
                if end > start {
                    out.push(Detection {
                        sequence: si,
                        start,
                        end,
                        class: if rng.gen_bool(0.9) { s.class } else { ClassId(rng.gen_range(1..k)) },
                        confidence: rng.gen_range(0.05..1.0),
                    });
                }
            }
        }
        for _ in 0..rng.gen_range(0..4) {
            let start = rng.gen_range(0..t.total_frames);
            let end = (start + rng.gen_range(1..t.total_frames / 2 + 2)).min(t.total_frames);
            if end > start {
                out.push(Detection {
                    sequence: si,
                    start,
                    end,
                    class: ClassId(rng.gen_range(1..k)),
                    confidence: rng.gen_range(0.05..1.0),
                });
            }
        }
    }
    out
}
