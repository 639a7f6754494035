//! Sequence assembly, dataset splits, and the dataset manifest.

use super::auxiliary::derive_aux;
use super::render::render_frame;
use super::script::{runs_to_labels, sample_runs};
use super::types::{ActivityScriptConfig, SequenceSample};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_sequence, write_atomic, write_sequence};
use crate::seeding::derive_seed2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

const STREAM_SEQUENCE: u64 = 0x5e9;

/// Render one full sequence from its derived seed.
pub fn render_sequence(cfg: &ActivityScriptConfig, sequence_index: u64) -> Result<SequenceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(cfg.seed, STREAM_SEQUENCE, sequence_index));
    let runs = sample_runs(cfg, &mut rng)?;
    let hw = cfg.image_hw;
    let mut rgb_frames = Vec::with_capacity(cfg.sequence_length);
    let mut masks = Vec::with_capacity(cfg.sequence_length);
    for run in &runs {
        for j in 0..run.frames {
            let phase = if run.frames > 1 {
                j as f64 / (run.frames - 1) as f64
            } else {
                0.0
            };
            let jitter = if cfg.global_jitter {
                (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
            } else {
                (0.0, 0.0)
            };
            let f = render_frame(run.class, phase, cfg, jitter, &mut rng);
            rgb_frames.push(f.rgb);
            masks.push(f.mask);
        }
    }
    let labels = runs_to_labels(&runs);
    let aux_frames = derive_aux(&rgb_frames, &masks, hw, cfg.aux_mode)?;
    let t = labels.len();
    let rgb: Vec<f32> = rgb_frames.into_iter().flatten().collect();
    let aux: Vec<f32> = aux_frames.into_iter().flatten().collect();
    let sample = SequenceSample {
        rgb: Tensor::new(vec![t, hw, hw, 3], rgb)?,
        aux: Tensor::new(vec![t, hw, hw, cfg.aux_mode.channels()], aux)?,
        labels,
        k: cfg.k,
    };
    sample.validate()?;
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: ActivityScriptConfig,
    pub config_hash: String,
    pub count: usize,
    pub splits: SplitIds,
    pub label_histogram: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[SequenceSample]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Usage(format!("unknown split {other:?}"))),
        }
    }
}

pub fn config_hash(cfg: &ActivityScriptConfig) -> Result<String> {
    let json = crate::io::record_to_string(cfg)?;
    Ok(hex32(&Sha256::digest(json.as_bytes()).into()))
}

pub fn hex32(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Generate `count` sequences and split them train/val/test.
/// Floor rule: val and test get floor(count*ratio); the remainder trains.
pub fn generate_dataset(
    cfg: &ActivityScriptConfig,
    count: usize,
    ratios: (f64, f64, f64),
) -> Result<(Dataset, DatasetManifest)> {
    cfg.validate()?;
    if count < 3 {
        return Err(Error::Usage(format!("dataset needs at least 3 sequences, got {count}")));
    }
    let (rt, rv, rs) = ratios;
    if (rt + rv + rs - 1.0).abs() > 1e-9 || rt <= 0.0 || rv < 0.0 || rs < 0.0 {
        return Err(Error::Usage(format!("split ratios must sum to 1, got {ratios:?}")));
    }
    let n_val = (count as f64 * rv).floor() as usize;
    let n_test = (count as f64 * rs).floor() as usize;
    let n_train = count - n_val - n_test;
    let samples: Vec<SequenceSample> = (0..count as u64)
        .into_par_iter()
        .map(|i| render_sequence(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let mut histogram = vec![0u64; cfg.k as usize];
    for s in &samples {
        for l in &s.labels {
            histogram[l.index()] += 1;
        }
    }
    let ids: Vec<String> = (0..count).map(|i| format!("seq_{i:03}")).collect();
    let splits = SplitIds {
        train: ids[..n_train].to_vec(),
        val: ids[n_train..n_train + n_val].to_vec(),
        test: ids[n_train + n_val..].to_vec(),
    };
    let mut it = samples.into_iter();
    let train: Vec<_> = (&mut it).take(n_train).collect();
    let val: Vec<_> = (&mut it).take(n_val).collect();
    let test: Vec<_> = it.collect();
    let manifest = DatasetManifest {
        config: cfg.clone(),
        config_hash: config_hash(cfg)?,
        count,
        splits,
        label_histogram: histogram,
    };
    Ok((Dataset { train, val, test }, manifest))
}

pub fn write_dataset(dir: &Path, ds: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    for (split, samples, ids) in [
        ("train", &ds.train, &manifest.splits.train),
        ("val", &ds.val, &manifest.splits.val),
        ("test", &ds.test, &manifest.splits.test),
    ] {
        let sub = dir.join(split);
        std::fs::create_dir_all(&sub)?;
        for (s, id) in samples.iter().zip(ids) {
            write_sequence(&sub.join(format!("{id}.seq")), s)?;
        }
    }
    let json = crate::io::record_to_string(manifest)?;
    write_atomic(&dir.join("manifest.json"), json.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    crate::io::record_from_str(&text)
}

pub fn load_dataset(dir: &Path) -> Result<(Dataset, DatasetManifest)> {
    let manifest = read_manifest(dir)?;
    let load_split = |split: &str, ids: &[String]| -> Result<Vec<SequenceSample>> {
        ids.iter()
            .map(|id| read_sequence(&dir.join(split).join(format!("{id}.seq"))))
            .collect()
    };
    let ds = Dataset {
        train: load_split("train", &manifest.splits.train)?,
        val: load_split("val", &manifest.splits.val)?,
        test: load_split("test", &manifest.splits.test)?,
    };
    Ok((ds, manifest))
}
