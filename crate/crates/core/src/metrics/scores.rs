//! Frame accuracy, segmental F1@tau, and segmental edit score.

use super::timeline::SegmentTimeline;
use crate::codes::ClassId;
use crate::error::{Error, Result};

/// Percentage of frames (background included) whose classes match.
pub fn frame_accuracy(pred: &[ClassId], truth: &[ClassId]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Usage(format!(
            "frame_accuracy needs equal lengths, got {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Usage("frame_accuracy needs at least one frame".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Greedy TP/FP/FN counts for segmental F1 at one overlap threshold.
/// Background segments are removed first. Predicted segments are visited in
/// order; each is matched against the not-yet-consumed truth segment of the
/// same class with the highest IoU.
pub fn f1_counts(pred: &SegmentTimeline, truth: &SegmentTimeline, tau: f64) -> (usize, usize, usize) {
    let pred_segs = pred.without_background();
    let truth_segs = truth.without_background();
    let mut used = vec![false; truth_segs.len()];
    let mut tp = 0;
    let mut fp = 0;
    for p in &pred_segs {
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in truth_segs.iter().enumerate() {
            if used[ti] || t.class != p.class {
                continue;
            }
            let iou = p.iou(t);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((ti, iou));
            }
        }
        match best {
            Some((ti, iou)) if iou >= tau => {
                used[ti] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    let fn_ = used.iter().filter(|&&u| !u).count();
    (tp, fp, fn_)
}

/// Segmental F1 score at overlap ratio `tau`, as a percentage.
pub fn f1_at_k(pred: &SegmentTimeline, truth: &SegmentTimeline, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) || tau == 0.0 {
        return Err(Error::Parameter(format!("tau must be in (0,1], got {tau}")));
    }
    let (tp, fp, fn_) = f1_counts(pred, truth, tau);
    Ok(f1_from_counts(tp, fp, fn_))
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp == 0 && tp + fn_ == 0 {
        return 100.0; // both timelines empty of action segments
    }
    if tp + fp == 0 || tp + fn_ == 0 {
        return 0.0; // exactly one side empty
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

/// Two-row Levenshtein distance over class sequences.
fn levenshtein(a: &[ClassId], b: &[ClassId]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Segmental edit score: 100·(1 − Levenshtein/max(lengths)) over the ordered
/// class sequences with background removed, floored at 0. Durations are
/// irrelevant. Both-empty is 100 by convention.
pub fn edit_score(pred: &SegmentTimeline, truth: &SegmentTimeline) -> f64 {
    let p: Vec<ClassId> = pred.without_background().iter().map(|s| s.class).collect();
    let t: Vec<ClassId> = truth.without_background().iter().map(|s| s.class).collect();
    if p.is_empty() && t.is_empty() {
        return 100.0;
    }
    let d = levenshtein(&p, &t);
    let denom = p.len().max(t.len());
    (100.0 * (1.0 - d as f64 / denom as f64)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::timeline::Segment;

    fn ids(v: &[u16]) -> Vec<ClassId> {
        v.iter().map(|&c| ClassId(c)).collect()
    }

    fn timeline(spans: &[(usize, usize, u16)], total: usize) -> SegmentTimeline {
        SegmentTimeline {
            segments: spans
                .iter()
                .map(|&(start, end, c)| Segment { start, end, class: ClassId(c) })
                .collect(),
            total_frames: total,
        }
    }

    #[test]
    fn frame_accuracy_examples() {
        let a = ids(&[1, 2, 0, 3]);
        assert_eq!(frame_accuracy(&a, &a).unwrap(), 100.0);
        let b = ids(&[2, 3, 1, 0]);
        assert_eq!(frame_accuracy(&a, &b).unwrap(), 0.0);
        // Crafted half-matching pair.
        let c = ids(&[1, 2, 1, 0]);
        assert_eq!(frame_accuracy(&a, &c).unwrap(), 50.0);
        assert!(matches!(frame_accuracy(&a, &ids(&[1])), Err(Error::Usage(_))));
    }

    #[test]
    fn f1_identical_timelines_score_100_at_all_tau() {
        let t = timeline(&[(0, 30, 1), (30, 100, 2)], 100);
        for tau in [0.1, 0.25, 0.5, 0.99, 1.0] {
            assert_eq!(f1_at_k(&t, &t, tau).unwrap(), 100.0);
        }
    }

    #[test]
    fn f1_worked_example_from_hand_iou() {
        // IoU(A) = 30/50 = 0.6, IoU(B) = 50/70 ~= 0.714
        let pred = timeline(&[(0, 30, 1), (30, 100, 2)], 100);
        let truth = timeline(&[(0, 50, 1), (50, 100, 2)], 100);
        assert_eq!(f1_at_k(&pred, &truth, 0.50).unwrap(), 100.0);
        assert_eq!(f1_at_k(&pred, &truth, 0.25).unwrap(), 100.0);
        assert_eq!(f1_at_k(&pred, &truth, 0.65).unwrap(), 50.0);
    }

    #[test]
    fn f1_empty_conventions() {
        let empty = timeline(&[(0, 10, 0)], 10);
        let full = timeline(&[(0, 10, 1)], 10);
        assert_eq!(f1_at_k(&empty, &empty, 0.5).unwrap(), 100.0);
        assert_eq!(f1_at_k(&empty, &full, 0.5).unwrap(), 0.0);
        assert_eq!(f1_at_k(&full, &empty, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn edit_score_examples() {
        // Identical class sequences with different durations.
        let a = timeline(&[(0, 5, 1), (5, 9, 2), (9, 20, 1)], 20);
        let b = timeline(&[(0, 1, 1), (1, 15, 2), (15, 20, 1)], 20);
        assert_eq!(edit_score(&a, &b), 100.0);
        // [A,B,A] vs [A,B] -> distance 1 -> (1 - 1/3)*100
        let p = timeline(&[(0, 2, 1), (2, 4, 2), (4, 6, 1)], 6);
        let t = timeline(&[(0, 3, 1), (3, 6, 2)], 6);
        let got = edit_score(&p, &t);
        assert!((got - 100.0 * (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert!((got - 66.67).abs() < 0.01);
        // Disjoint single segments.
        let x = timeline(&[(0, 4, 2)], 4);
        let y = timeline(&[(0, 4, 1)], 4);
        assert_eq!(edit_score(&x, &y), 0.0);
        // Both empty after background removal.
        let bg = timeline(&[(0, 4, 0)], 4);
        assert_eq!(edit_score(&bg, &bg), 100.0);
    }
}
