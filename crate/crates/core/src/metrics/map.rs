//! Mean average precision with the midpoint hit criterion.

use super::timeline::SegmentTimeline;
use crate::codes::ClassId;
use std::collections::BTreeSet;

/// A scored action segment proposal within one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub sequence: usize,
    pub start: usize,
    pub end: usize,
    pub class: ClassId,
    pub confidence: f64,
}

impl Detection {
    pub fn midpoint(&self) -> usize {
        (self.start + self.end) / 2
    }
}

/// Deterministic ranking: descending confidence, ties by sequence then start.
fn sort_detections(dets: &mut [ &Detection ]) {
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.sequence.cmp(&b.sequence))
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
}

/// Average precision for one class, pooled over all sequences.
///
/// Detections are ranked by confidence; each is a hit if its midpoint frame
/// lies inside a not-yet-matched truth segment of the class in its own
/// sequence. AP is the precision-weighted sum over recall increments.
fn average_precision(class: ClassId, detections: &[Detection], truths: &[SegmentTimeline]) -> f64 {
    let mut positives = 0usize;
    for t in truths {
        positives += t.without_background().iter().filter(|s| s.class == class).count();
    }
    if positives == 0 {
        return 0.0;
    }
    let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.class == class).collect();
    sort_detections(&mut dets);
    // matched[seq] = set of consumed truth-segment indices
    let mut matched: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); truths.len()];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for d in dets {
        let hit = truths.get(d.sequence).and_then(|t| {
            t.without_background()
                .iter()
                .enumerate()
                .find(|(i, s)| {
                    s.class == class
                        && !matched[d.sequence].contains(i)
                        && s.start <= d.midpoint()
                        && d.midpoint() < s.end
                })
                .map(|(i, _)| i)
        });
        match hit {
            Some(i) => {
                matched[d.sequence].insert(i);
                tp += 1;
                let precision = tp as f64 / (tp + fp) as f64;
                let recall = tp as f64 / positives as f64;
                ap += precision * (recall - prev_recall);
                prev_recall = recall;
            }
            None => fp += 1,
        }
    }
    ap
}

/// Corpus-pooled mAP@mid as a percentage, averaged over the classes present
/// in the ground truth.
pub fn map_at_mid(detections: &[Detection], truths: &[SegmentTimeline]) -> f64 {
    let mut classes = BTreeSet::new();
    for t in truths {
        for s in t.without_background() {
            classes.insert(s.class);
        }
    }
    if classes.is_empty() {
        // Vacuously perfect only when there is nothing to detect.
        return if detections.is_empty() { 100.0 } else { 0.0 };
    }
    let sum: f64 = classes
        .iter()
        .map(|&c| average_precision(c, detections, truths))
        .sum();
    100.0 * sum / classes.len() as f64
}

/// Per-class AP for report breakdowns.
pub fn per_class_ap(detections: &[Detection], truths: &[SegmentTimeline]) -> Vec<(ClassId, f64)> {
    let mut classes = BTreeSet::new();
    for t in truths {
        for s in t.without_background() {
            classes.insert(s.class);
        }
    }
    classes
        .into_iter()
        .map(|c| (c, 100.0 * average_precision(c, detections, truths)))
        .collect()
}
