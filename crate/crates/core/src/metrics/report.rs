//! Aggregate evaluation over one or many sequences.

use super::map::{map_at_mid, per_class_ap, Detection};
use super::scores::{f1_counts, f1_from_counts, frame_accuracy};
use super::timeline::SegmentTimeline;
use crate::codes::ClassId;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_F1_TAUS: [u32; 3] = [10, 25, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub class: u16,
    pub average_precision: f64,
    pub frame_recall: f64,
    pub truth_frames: u64,
}

/// The Table-1 column set: frame accuracy, F1@{taus}, edit, mAP@mid, plus a
/// per-class breakdown. All values are percentages in [0,100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frame_accuracy: f64,
    /// (tau in percent, score) pairs, ascending tau.
    pub f1_at: Vec<(u32, f64)>,
    pub edit: f64,
    pub map_mid: f64,
    pub per_class: Vec<PerClassMetrics>,
}

impl MetricsReport {
    pub fn f1(&self, tau: u32) -> Option<f64> {
        self.f1_at.iter().find(|(t, _)| *t == tau).map(|(_, v)| *v)
    }

    pub fn in_range(&self) -> bool {
        let ok = |v: f64| (0.0..=100.0).contains(&v);
        ok(self.frame_accuracy)
            && ok(self.edit)
            && ok(self.map_mid)
            && self.f1_at.iter().all(|(_, v)| ok(*v))
            && self
                .per_class
                .iter()
                .all(|p| ok(p.average_precision) && ok(p.frame_recall))
    }
}

/// Per-frame predictions for one sequence: hard labels plus the class
/// distribution retained for detection confidences.
#[derive(Debug, Clone)]
pub struct SequencePrediction {
    pub labels: Vec<ClassId>,
    pub distributions: Vec<Vec<f32>>,
}

/// Detections for mAP: predicted action segments scored by the mean
/// predicted probability of the segment's class over its frames.
pub fn detections_from_prediction(seq: usize, pred: &SequencePrediction) -> Result<Vec<Detection>> {
    let timeline = SegmentTimeline::from_labels(&pred.labels)?;
    let mut out = Vec::new();
    for s in timeline.without_background() {
        let mut conf = 0.0f64;
        for t in s.start..s.end {
            let dist = pred.distributions.get(t).ok_or_else(|| {
                Error::Usage("prediction distributions shorter than labels".into())
            })?;
            conf += dist
                .get(s.class.index())
                .copied()
                .ok_or_else(|| Error::Usage("distribution shorter than class count".into()))?
                as f64;
        }
        out.push(Detection {
            sequence: seq,
            start: s.start,
            end: s.end,
            class: s.class,
            confidence: conf / s.len() as f64,
        });
    }
    Ok(out)
}

/// Evaluate predictions against ground truth over a corpus of sequences.
///
/// Frame accuracy, F1 counts, mAP, and per-class tallies pool over all
/// sequences; the edit score is averaged per sequence.
pub fn evaluate_corpus(
    preds: &[SequencePrediction],
    truths: &[Vec<ClassId>],
    f1_taus: &[u32],
) -> Result<MetricsReport> {
    if preds.len() != truths.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} truth sequences",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Usage("evaluation needs at least one sequence".into()));
    }
    let mut total_frames = 0usize;
    let mut hit_frames = 0usize;
    let mut counts: Vec<(usize, usize, usize)> = vec![(0, 0, 0); f1_taus.len()];
    let mut edit_sum = 0.0;
    let mut detections = Vec::new();
    let mut truth_timelines = Vec::new();
    let mut class_truth: std::collections::BTreeMap<u16, (u64, u64)> = Default::default();
    for (i, (pred, truth)) in preds.iter().zip(truths).enumerate() {
        if pred.labels.len() != truth.len() {
            return Err(Error::Usage(format!(
                "sequence {i}: {} predicted frames vs {} truth frames",
                pred.labels.len(),
                truth.len()
            )));
        }
        hit_frames += pred.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        total_frames += truth.len();
        let pt = SegmentTimeline::from_labels(&pred.labels)?;
        let tt = SegmentTimeline::from_labels(truth)?;
        for (ci, &tau) in f1_taus.iter().enumerate() {
            let (tp, fp, fn_) = f1_counts(&pt, &tt, tau as f64 / 100.0);
            counts[ci].0 += tp;
            counts[ci].1 += fp;
            counts[ci].2 += fn_;
        }
        edit_sum += super::scores::edit_score(&pt, &tt);
        detections.extend(detections_from_prediction(i, pred)?);
        for (p, t) in pred.labels.iter().zip(truth) {
            let e = class_truth.entry(t.0).or_insert((0, 0));
            e.0 += 1;
            if p == t {
                e.1 += 1;
            }
        }
        truth_timelines.push(tt);
    }
    let ap = per_class_ap(&detections, &truth_timelines);
    let per_class = class_truth
        .iter()
        .map(|(&class, &(frames, hits))| PerClassMetrics {
            class,
            average_precision: ap
                .iter()
                .find(|(c, _)| c.0 == class)
                .map(|(_, v)| *v)
                .unwrap_or(0.0),
            frame_recall: 100.0 * hits as f64 / frames as f64,
            truth_frames: frames,
        })
        .collect();
    Ok(MetricsReport {
        frame_accuracy: 100.0 * hit_frames as f64 / total_frames as f64,
        f1_at: f1_taus
            .iter()
            .zip(&counts)
            .map(|(&tau, &(tp, fp, fn_))| (tau, f1_from_counts(tp, fp, fn_)))
            .collect(),
        edit: edit_sum / preds.len() as f64,
        map_mid: map_at_mid(&detections, &truth_timelines),
        per_class,
    })
}

/// Single-sequence convenience wrapper.
pub fn evaluate_all(pred: &SequencePrediction, truth: &[ClassId]) -> Result<MetricsReport> {
    evaluate_corpus(
        std::slice::from_ref(pred),
        std::slice::from_ref(&truth.to_vec()),
        &DEFAULT_F1_TAUS,
    )
}

/// Frame accuracy over a corpus (convenience used by trainers/baselines).
pub fn corpus_frame_accuracy(preds: &[Vec<ClassId>], truths: &[Vec<ClassId>]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (p, t) in preds.iter().zip(truths) {
        let _ = frame_accuracy(p, t)?;
        hits += p.iter().zip(t).filter(|(a, b)| a == b).count();
        total += t.len();
    }
    if total == 0 {
        return Err(Error::Usage("no frames to evaluate".into()));
    }
    Ok(100.0 * hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_maxes_every_field() {
        let truth: Vec<ClassId> = [0u16, 0, 1, 1, 1, 0, 2, 2, 0]
            .iter()
            .map(|&c| ClassId(c))
            .collect();
        let k = 3;
        let dists: Vec<Vec<f32>> = truth
            .iter()
            .map(|c| {
                let mut d = vec![0.0; k];
                d[c.index()] = 1.0;
                d
            })
            .collect();
        let pred = SequencePrediction { labels: truth.clone(), distributions: dists };
        let report = evaluate_all(&pred, &truth).unwrap();
        assert_eq!(report.frame_accuracy, 100.0);
        assert_eq!(report.edit, 100.0);
        assert_eq!(report.map_mid, 100.0);
        for (_, v) in &report.f1_at {
            assert_eq!(*v, 100.0);
        }
        assert!(report.in_range());
    }

    #[test]
    fn mismatched_lengths_are_usage_errors() {
        let pred = SequencePrediction {
            labels: vec![ClassId(0), ClassId(1)],
            distributions: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let truth = vec![ClassId(0)];
        assert!(matches!(evaluate_all(&pred, &truth), Err(Error::Usage(_))));
    }
}
