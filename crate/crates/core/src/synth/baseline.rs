//! Reference baselines the benchmark is calibrated against.

use super::types::SequenceSample;
use crate::codes::ClassId;
use crate::error::{Error, Result};

/// Accuracy of always predicting the most frequent class in `truths`.
pub fn majority_class_accuracy(truths: &[Vec<ClassId>]) -> Result<f64> {
    let mut counts = std::collections::BTreeMap::new();
    let mut total = 0usize;
    for t in truths {
        for c in t {
            *counts.entry(c.0).or_insert(0usize) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Usage("no frames".into()));
    }
    let best = counts.values().max().copied().unwrap_or(0);
    Ok(100.0 * best as f64 / total as f64)
}

/// Pixel-threshold nearest-centroid classifier: binarize frames at
/// `threshold`, average per class over the training frames, and predict the
/// nearest centroid in L2. Verifies the benchmark is not single-frame easy.
pub fn nearest_centroid_accuracy(
    train: &[SequenceSample],
    test: &[SequenceSample],
    threshold: f32,
) -> Result<f64> {
    let first = train.first().ok_or_else(|| Error::Usage("empty training split".into()))?;
    let k = first.k as usize;
    let dim = first.rgb.shape()[1] * first.rgb.shape()[2] * 3;
    let mut centroids = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for s in train {
        let frame_len = dim;
        for (t, label) in s.labels.iter().enumerate() {
            let frame = &s.rgb.data()[t * frame_len..(t + 1) * frame_len];
            let acc = &mut centroids[label.index()];
            for (a, &v) in acc.iter_mut().zip(frame) {
                *a += f64::from(v > threshold);
            }
            counts[label.index()] += 1;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            for v in c.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in test {
        let frame_len = dim;
        for (t, label) in s.labels.iter().enumerate() {
            let frame = &s.rgb.data()[t * frame_len..(t + 1) * frame_len];
            let mut best = (f64::INFINITY, 0usize);
            for (ci, c) in centroids.iter().enumerate() {
                if counts[ci] == 0 {
                    continue;
                }
                let d: f64 = c
                    .iter()
                    .zip(frame)
                    .map(|(&cv, &fv)| {
                        let b = f64::from(fv > threshold);
                        (cv - b) * (cv - b)
                    })
                    .sum();
                if d < best.0 {
                    best = (d, ci);
                }
            }
            if best.1 == label.index() {
                hits += 1;
            }
            total += 1;
        }
    }
    Ok(100.0 * hits as f64 / total as f64)
}
