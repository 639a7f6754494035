//! Run-length view of per-frame labels.

use crate::codes::ClassId;
use crate::error::{Error, Result};

/// One maximal run of a single class: frames [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class: ClassId,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Intersection-over-union of the frame intervals.
    pub fn iou(&self, other: &Segment) -> f64 {
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Contiguous, non-overlapping segments covering [0, total_frames), with
/// adjacent segments always of different classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentTimeline {
    pub segments: Vec<Segment>,
    pub total_frames: usize,
}

impl SegmentTimeline {
    /// Run-length encode per-frame labels into maximal constant runs.
    pub fn from_labels(labels: &[ClassId]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Usage("cannot build a timeline from an empty label list".into()));
        }
        let mut segments = Vec::new();
        let mut start = 0;
        for t in 1..=labels.len() {
            if t == labels.len() || labels[t] != labels[start] {
                segments.push(Segment { start, end: t, class: labels[start] });
                start = t;
            }
        }
        Ok(SegmentTimeline { segments, total_frames: labels.len() })
    }

    /// Expand back to per-frame labels.
    pub fn to_labels(&self) -> Vec<ClassId> {
        let mut labels = Vec::with_capacity(self.total_frames);
        for s in &self.segments {
            labels.extend(std::iter::repeat(s.class).take(s.len()));
        }
        labels
    }

    /// Segments with the background class removed (segmental metrics operate
    /// on action segments only).
    pub fn without_background(&self) -> Vec<Segment> {
        self.segments
            .iter()
            .copied()
            .filter(|s| s.class != ClassId::BACKGROUND)
            .collect()
    }

    pub fn class_sequence(&self) -> Vec<ClassId> {
        self.segments.iter().map(|s| s.class).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u16]) -> Vec<ClassId> {
        v.iter().map(|&c| ClassId(c)).collect()
    }

    #[test]
    fn run_length_encoding_examples() {
        let t = SegmentTimeline::from_labels(&ids(&[7, 7, 3, 3, 3])).unwrap();
        assert_eq!(
            t.segments,
            vec![
                Segment { start: 0, end: 2, class: ClassId(7) },
                Segment { start: 2, end: 5, class: ClassId(3) },
            ]
        );
        let constant = SegmentTimeline::from_labels(&ids(&[4; 9])).unwrap();
        assert_eq!(constant.segments.len(), 1);
        assert!(matches!(
            SegmentTimeline::from_labels(&[]),
            Err(Error::Usage(_))
        ));
    }

    proptest! {
        #[test]
        fn labels_segments_labels_is_identity(labels in prop::collection::vec(0u16..6, 1..200)) {
            let labels = ids(&labels);
            let t = SegmentTimeline::from_labels(&labels).unwrap();
            prop_assert_eq!(t.to_labels(), labels);
            // Maximal runs: adjacent segments differ.
            for w in t.segments.windows(2) {
                prop_assert_ne!(w[0].class, w[1].class);
                prop_assert_eq!(w[0].end, w[1].start);
            }
            prop_assert_eq!(t.segments[0].start, 0);
            prop_assert_eq!(t.segments.last().unwrap().end, t.total_frames);
        }
    }
}
