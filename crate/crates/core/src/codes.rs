//! Integer-scaled action codes: the length-k vectors in [0,255] that the
//! generators emit and the discriminators consume. Class 0 is background.

use crate::error::{Error, Result};

pub const CODE_MAX: f32 = 255.0;

/// Class index in [0, k). Background is class 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u16);

impl ClassId {
    pub const BACKGROUND: ClassId = ClassId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Length-k vector with entries in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCode {
    values: Vec<f32>,
}

impl ActionCode {
    pub fn zeros(k: usize) -> Self {
        ActionCode { values: vec![0.0; k] }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn is_valid(&self) -> bool {
        self.values.len() >= 2 && self.values.iter().all(|&v| (0.0..=CODE_MAX).contains(&v))
    }
}

/// Scaled one-hot ground-truth code: 255 at the class index, 0 elsewhere.
pub fn encode(class: ClassId, k: usize) -> Result<ActionCode> {
    if k < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {k}")));
    }
    if class.index() >= k {
        return Err(Error::Parameter(format!(
            "class {} out of range for k={k}",
            class.0
        )));
    }
    let mut values = vec![0.0; k];
    values[class.index()] = CODE_MAX;
    Ok(ActionCode { values })
}

/// Argmax class of a code; ties break toward the smallest index.
pub fn decode(code: &ActionCode) -> ClassId {
    let mut best = 0usize;
    for (i, &v) in code.values.iter().enumerate() {
        if v > code.values[best] {
            best = i;
        }
    }
    ClassId(best as u16)
}

/// Clamp a raw generator output into code range. Idempotent.
pub fn clamp_generated(raw: &[f32]) -> ActionCode {
    ActionCode {
        values: raw.iter().map(|&v| v.clamp(0.0, CODE_MAX)).collect(),
    }
}
