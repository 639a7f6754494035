//! Bit-exact file formats: SEQ1 sequences, CAGN checkpoints, JSON reports.

pub mod atomic;
pub mod checkpoint;
pub mod report;
pub mod seqfile;

pub use atomic::write_atomic;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RawTensor, CKPT_MAGIC};
pub use report::{
    read_report, read_report_lines, record_from_str, record_to_string, write_report,
    write_report_lines, ArchAuditRecord, EpochLogRecord, LayerAudit, NetworkAudit, ReportRecord,
};
pub use seqfile::{read_sequence, write_sequence, SEQ_MAGIC};
