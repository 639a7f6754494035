//! JSON report records. Floats are serialized with 17 significant digits so
//! every 64-bit value round-trips losslessly.

use super::atomic::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One epoch of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLogRecord {
    pub epoch: u32,
    pub learning_rate: f64,
    pub d1_loss: Option<f64>,
    pub d2_loss: Option<f64>,
    pub g1_adv: Option<f64>,
    pub g2_adv: Option<f64>,
    pub classifier_loss: Option<f64>,
    pub lambda1: f64,
    pub coupled_total: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAudit {
    pub kind: String,
    pub detail: String,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAudit {
    pub name: String,
    pub layers: Vec<LayerAudit>,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchAuditRecord {
    pub preset: String,
    pub variant: String,
    pub networks: Vec<NetworkAudit>,
    pub total_params: u64,
}

/// The three report kinds the pipeline emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportRecord {
    Metrics { label: String, report: MetricsReport },
    EpochLog { entry: EpochLogRecord },
    ArchAudit { audit: ArchAuditRecord },
}

/// serde_json formatter printing every f64 with 17 significant digits.
struct SigFigs;

impl serde_json::ser::Formatter for SigFigs {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}

pub fn record_to_string<T: Serialize>(record: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFigs);
    record
        .serialize(&mut ser)
        .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Format(format!("non-UTF-8 report: {e}")))
}

pub fn record_from_str<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Format(format!("report parse failed: {e}")))
}

pub fn write_report(path: &Path, record: &ReportRecord) -> Result<()> {
    let mut s = record_to_string(record)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ReportRecord> {
    record_from_str(&std::fs::read_to_string(path)?)
}

/// One record per line. Rewritten atomically as a whole.
pub fn write_report_lines(path: &Path, records: &[ReportRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&record_to_string(r)?);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_report_lines(path: &Path) -> Result<Vec<ReportRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(record_from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::PerClassMetrics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metrics_record(values: &[f64]) -> ReportRecord {
        ReportRecord::Metrics {
            label: "test".into(),
            report: MetricsReport {
                frame_accuracy: values[0],
                f1_at: vec![(10, values[1]), (25, values[2]), (50, values[3])],
                edit: values[4],
                map_mid: values[5],
                per_class: vec![PerClassMetrics {
                    class: 1,
                    average_precision: values[5],
                    frame_recall: values[0],
                    truth_frames: 123,
                }],
            },
        }
    }

    #[test]
    fn the_92_6_fixture_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let rec = metrics_record(&[92.6, 92.8, 91.7, 86.2, 89.1, 89.8]);
        let path = dir.path().join("m.report.json");
        write_report(&path, &rec).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back, rec);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("9.2599999999999994e1"), "17-digit form missing: {text}");
    }

    #[test]
    fn empty_per_class_table_serializes() {
        let dir = tempfile::tempdir().unwrap();
        let rec = ReportRecord::Metrics {
            label: "empty".into(),
            report: MetricsReport {
                frame_accuracy: 100.0,
                f1_at: vec![],
                edit: 100.0,
                map_mid: 100.0,
                per_class: vec![],
            },
        };
        let path = dir.path().join("e.report.json");
        write_report(&path, &rec).unwrap();
        assert_eq!(read_report(&path).unwrap(), rec);
    }

    #[test]
    fn randomized_records_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let dir = tempfile::tempdir().unwrap();
        for i in 0..200 {
            let rec = match rng.gen_range(0..3) {
                0 => metrics_record(&[
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                ]),
                1 => ReportRecord::EpochLog {
                    entry: EpochLogRecord {
                        epoch: rng.gen_range(0..500),
                        learning_rate: rng.gen_range(1e-6..1.0),
                        d1_loss: if rng.gen_bool(0.5) { Some(rng.gen_range(-10.0..10.0)) } else { None },
                        d2_loss: Some(rng.gen::<f64>() * 3.0),
                        g1_adv: Some(rng.gen::<f64>().ln().abs()),
                        g2_adv: None,
                        classifier_loss: Some(rng.gen_range(0.0..5.0)),
                        lambda1: 1.0,
                        coupled_total: rng.gen_range(-20.0..0.0),
                        wall_secs: rng.gen_range(0.0..1e4),
                    },
                },
                _ => ReportRecord::ArchAudit {
                    audit: ArchAuditRecord {
                        preset: "desk32".into(),
                        variant: "h".into(),
                        networks: vec![NetworkAudit {
                            name: "g_rgb".into(),
                            layers: vec![LayerAudit {
                                kind: "conv2d".into(),
                                detail: format!("{}ch", rng.gen_range(1..64)),
                                params: rng.gen_range(0..1_000_000),
                            }],
                            params: rng.gen_range(0..10_000_000),
                        }],
                        total_params: rng.gen(),
                    },
                },
            };
            let path = dir.path().join(format!("r{i}.json"));
            write_report(&path, &rec).unwrap();
            assert_eq!(read_report(&path).unwrap(), rec, "round-trip failed for {rec:?}");
        }
    }

    #[test]
    fn report_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<ReportRecord> = (0..5)
            .map(|i| ReportRecord::EpochLog {
                entry: EpochLogRecord {
                    epoch: i,
                    learning_rate: 2e-4,
                    d1_loss: Some(0.1 * i as f64),
                    d2_loss: None,
                    g1_adv: Some(1.0 / (i + 1) as f64),
                    g2_adv: None,
                    classifier_loss: Some(1.7),
                    lambda1: 1.0,
                    coupled_total: -2.77,
                    wall_secs: 0.25,
                },
            })
            .collect();
        let path = dir.path().join("log.jsonl");
        write_report_lines(&path, &recs).unwrap();
        assert_eq!(read_report_lines(&path).unwrap(), recs);
    }

    #[test]
    fn sequence_magic_is_rejected_by_report_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq_as_report");
        std::fs::write(&path, b"SEQ1\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_report(&path), Err(Error::Format(_))));
    }
}
