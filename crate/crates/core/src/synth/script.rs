//! Action scripts: alternating action/background runs driven by the
//! transition matrix and per-class duration ranges.

use super::types::ActivityScriptConfig;
use crate::codes::ClassId;
use crate::error::Result;
use rand::Rng;

/// One run of a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub class: ClassId,
    pub frames: usize,
}

fn draw_duration<R: Rng>(cfg: &ActivityScriptConfig, class: ClassId, rng: &mut R) -> usize {
    let d = cfg.durations[class.index()];
    rng.gen_range(d.min..=d.max)
}

/// Next action class: the previous class's transition row restricted to the
/// action columns and renormalized.
fn draw_action<R: Rng>(cfg: &ActivityScriptConfig, prev: ClassId, rng: &mut R) -> ClassId {
    let row = &cfg.transition_matrix[prev.index()];
    let total: f64 = row[1..].iter().sum();
    if total <= 0.0 {
        // Sink row: fall back to a uniform action draw.
        return ClassId(rng.gen_range(1..cfg.k));
    }
    let mut u = rng.gen_range(0.0..total);
    for (j, &p) in row.iter().enumerate().skip(1) {
        if u < p {
            return ClassId(j as u16);
        }
        u -= p;
    }
    ClassId(cfg.k - 1)
}

/// Runs alternating background/action, truncated to `sequence_length`.
pub fn sample_runs<R: Rng>(cfg: &ActivityScriptConfig, rng: &mut R) -> Result<Vec<Run>> {
    cfg.validate()?;
    let mut runs: Vec<Run> = Vec::new();
    let mut frames = 0usize;
    let mut prev = ClassId::BACKGROUND;
    let mut next_is_background = true;
    while frames < cfg.sequence_length {
        let class = if next_is_background {
            ClassId::BACKGROUND
        } else {
            let a = draw_action(cfg, prev, rng);
            prev = a;
            a
        };
        let mut dur = draw_duration(cfg, class, rng);
        dur = dur.min(cfg.sequence_length - frames);
        runs.push(Run { class, frames: dur });
        frames += dur;
        next_is_background = !next_is_background;
    }
    Ok(runs)
}

pub fn runs_to_labels(runs: &[Run]) -> Vec<ClassId> {
    let mut labels = Vec::new();
    for r in runs {
        labels.extend(std::iter::repeat(r.class).take(r.frames));
    }
    labels
}

pub fn sample_script<R: Rng>(cfg: &ActivityScriptConfig, rng: &mut R) -> Result<Vec<ClassId>> {
    Ok(runs_to_labels(&sample_runs(cfg, rng)?))
}

/// Stationary distribution of the action-level chain (rows restricted to
/// action columns and renormalized) via power iteration.
pub fn action_stationary(cfg: &ActivityScriptConfig) -> Vec<f64> {
    let k = cfg.k as usize;
    let n = k - 1;
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let row = &cfg.transition_matrix[i + 1];
        let total: f64 = row[1..].iter().sum();
        for j in 0..n {
            p[i][j] = if total > 0.0 { row[j + 1] / total } else { 1.0 / n as f64 };
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += pi[i] * p[i][j];
            }
        }
        let norm: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= norm;
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-14 {
            break;
        }
    }
    pi
}
