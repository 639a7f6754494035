//! Temporal segmentation evaluation: frame accuracy, segmental F1@tau,
//! segmental edit score, and mAP with the midpoint hit criterion.

pub mod map;
pub mod oracles;
pub mod report;
pub mod scores;
pub mod timeline;

pub use map::{map_at_mid, per_class_ap, Detection};
pub use report::{
    corpus_frame_accuracy, detections_from_prediction, evaluate_all, evaluate_corpus,
    MetricsReport, PerClassMetrics, SequencePrediction, DEFAULT_F1_TAUS,
};
pub use scores::{edit_score, f1_at_k, f1_counts, f1_from_counts, frame_accuracy};
pub use timeline::{Segment, SegmentTimeline};

#[cfg(test)]
mod prop_tests {
    use super::*;
    use crate::codes::ClassId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn edit_matches_full_matrix_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..500 {
            let (na, nb) = (rng.gen_range(5..120), rng.gen_range(5..120));
            let a = oracles::random_timeline(&mut rng, na, 20, 6);
            let b = oracles::random_timeline(&mut rng, nb, 20, 6);
            let got = edit_score(&a, &b);
            let want = oracles::edit_score_oracle(&a, &b);
            assert!((got - want).abs() < 1e-9, "edit {got} vs oracle {want}");
        }
    }

    #[test]
    fn map_matches_threshold_sweep_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let nseq = rng.gen_range(1..4);
            let truths: Vec<SegmentTimeline> = (0..nseq)
                .map(|_| {
                    let n = rng.gen_range(10..100);
                    oracles::random_timeline(&mut rng, n, 12, 6)
                })
                .collect();
            let dets = oracles::random_detections(&mut rng, &truths, 6);
            let got = map_at_mid(&dets, &truths);
            let want = oracles::map_threshold_sweep(&dets, &truths);
            assert!((got - want).abs() < 1e-9, "map {got} vs oracle {want}");
        }
    }

    #[test]
    fn greedy_f1_never_beats_optimal_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut equal = 0;
        let mut lower = 0;
        for _ in 0..500 {
            let (np, nt) = (rng.gen_range(10..120), rng.gen_range(10..120));
            let pred = oracles::random_timeline(&mut rng, np, 15, 6);
            let truth = oracles::random_timeline(&mut rng, nt, 15, 6);
            let (gtp, gfp, gfn) = f1_counts(&pred, &truth, 0.5);
            let (otp, ofp, ofn) = oracles::optimal_f1_counts(&pred, &truth, 0.5);
            assert!(gtp <= otp, "greedy found more matches than optimal");
            assert_eq!(gtp + gfp, otp + ofp);
            assert_eq!(gtp + gfn, otp + ofn);
            if gtp == otp {
                equal += 1;
            } else {
                lower += 1;
            }
        }
        // Greedy equals optimal in the overwhelming majority of cases; the
        // rare shortfalls are a documented property of the procedure.
        assert!(equal > lower * 10, "greedy matched optimal only {equal}/500");
    }

    #[test]
    fn f1_is_non_increasing_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..200 {
            let (np, nt) = (rng.gen_range(10..120), rng.gen_range(10..120));
            let pred = oracles::random_timeline(&mut rng, np, 15, 5);
            let truth = oracles::random_timeline(&mut rng, nt, 15, 5);
            let taus = [0.1, 0.25, 0.5, 0.75, 0.9];
            let scores: Vec<f64> = taus
                .iter()
                .map(|&t| f1_at_k(&pred, &truth, t).unwrap())
                .collect();
            for w in scores.windows(2) {
                assert!(
                    w[0] >= w[1] - 1e-12,
                    "f1 increased with tau: {scores:?}"
                );
            }
        }
    }

    #[test]
    fn edit_depends_only_on_class_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..100 {
            let truth = oracles::random_timeline(&mut rng, 100, 10, 5);
            let pred = oracles::random_timeline(&mut rng, 100, 10, 5);
            let base = edit_score(&pred, &truth);
            // Re-time the prediction segments without changing their order.
            let mut labels = Vec::new();
            for s in &pred.segments {
                let stretched = rng.gen_range(1..=(2 * s.len()));
                labels.extend(std::iter::repeat(s.class).take(stretched));
            }
            let restretched = SegmentTimeline::from_labels(&labels).unwrap();
            assert_eq!(edit_score(&restretched, &truth), base);
        }
    }

    #[test]
    fn frame_accuracy_degrades_monotonically_under_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let truth: Vec<ClassId> = (0..400).map(|_| ClassId(rng.gen_range(0..5))).collect();
        let mut pred = truth.clone();
        let mut last = 100.0;
        let mut order: Vec<usize> = (0..truth.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for chunk in order.chunks(40) {
            for &i in chunk {
                pred[i] = ClassId((truth[i].0 + 1 + rng.gen_range(0..3)) % 5);
            }
            let acc = frame_accuracy(&pred, &truth).unwrap();
            assert!(acc <= last + 1e-12);
            last = acc;
        }
    }

    #[test]
    fn all_metrics_stay_in_range_on_fuzzed_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..100 {
            let total = rng.gen_range(5..150);
            let truth = oracles::random_timeline(&mut rng, total, 15, 6).to_labels();
            let pred_t = oracles::random_timeline(&mut rng, total, 15, 6);
            let labels = pred_t.to_labels();
            let dists: Vec<Vec<f32>> = labels
                .iter()
                .map(|c| {
                    let mut d = vec![0.1 / 5.0; 6];
                    d[c.index()] = 0.9;
                    d
                })
                .collect();
            let pred = SequencePrediction { labels, distributions: dists };
            let report = evaluate_all(&pred, &truth).unwrap();
            assert!(report.in_range(), "out-of-range report: {report:?}");
        }
    }
}
