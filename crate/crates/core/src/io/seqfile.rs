//! SEQ1 sequence files.
//!
//! Layout (little-endian): magic "SEQ1"; u32 T, H, W, C_rgb, C_aux, k;
//! rgb payload (T*H*W*C_rgb f32, row-major); aux payload; labels (T u16).

use super::atomic::write_atomic;
use crate::codes::ClassId;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::synth::SequenceSample;
use std::path::Path;

pub const SEQ_MAGIC: &[u8; 4] = b"SEQ1";

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corruption {
                offset: self.pos as u64,
                msg: format!(
                    "truncated while reading {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn write_sequence(path: &Path, sample: &SequenceSample) -> Result<()> {
    sample.validate()?;
    let t = sample.frames();
    let h = sample.rgb.shape()[1];
    let w = sample.rgb.shape()[2];
    let c_aux = sample.aux_channels();
    let mut buf = Vec::with_capacity(4 + 24 + 4 * (sample.rgb.numel() + sample.aux.numel()) + 2 * t);
    buf.extend_from_slice(SEQ_MAGIC);
    for v in [t as u32, h as u32, w as u32, 3u32, c_aux as u32, sample.k as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in sample.rgb.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in sample.aux.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for c in &sample.labels {
        buf.extend_from_slice(&c.0.to_le_bytes());
    }
    write_atomic(path, &buf)
}

pub fn read_sequence(path: &Path) -> Result<SequenceSample> {
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != SEQ_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            &magic, SEQ_MAGIC
        )));
    }
    let t = cur.u32("T")? as usize;
    let h = cur.u32("H")? as usize;
    let w = cur.u32("W")? as usize;
    let c_rgb = cur.u32("C_rgb")? as usize;
    let c_aux = cur.u32("C_aux")? as usize;
    let k = cur.u32("k")?;
    if c_rgb != 3 {
        return Err(Error::Format(format!("C_rgb must be 3, got {c_rgb}")));
    }
    if k > u16::MAX as u32 {
        return Err(Error::Format(format!("k {k} exceeds u16 range")));
    }
    let rgb_len = t * h * w * c_rgb;
    let aux_len = t * h * w * c_aux;
    let mut rgb = Vec::with_capacity(rgb_len);
    for chunk in cur.take(rgb_len * 4, "rgb payload")?.chunks_exact(4) {
        rgb.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let mut aux = Vec::with_capacity(aux_len);
    for chunk in cur.take(aux_len * 4, "aux payload")?.chunks_exact(4) {
        aux.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let mut labels = Vec::with_capacity(t);
    for chunk in cur.take(t * 2, "labels")?.chunks_exact(2) {
        labels.push(ClassId(u16::from_le_bytes(chunk.try_into().unwrap())));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Corruption {
            offset: cur.pos as u64,
            msg: format!("{} trailing bytes after payload", bytes.len() - cur.pos),
        });
    }
    for (i, c) in labels.iter().enumerate() {
        if c.0 as u32 >= k {
            return Err(Error::Corruption {
                offset: (bytes.len() - 2 * (t - i)) as u64,
                msg: format!("label {} at frame {i} out of range for k={k}", c.0),
            });
        }
    }
    Ok(SequenceSample {
        rgb: Tensor::new(vec![t, h, w, c_rgb], rgb)?,
        aux: Tensor::new(vec![t, h, w, c_aux], aux)?,
        labels,
        k: k as u16,
    })
}
