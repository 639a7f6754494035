//! Central-difference verification of analytic gradients.
//!
//! Finite differences are only a valid oracle where the loss is locally
//! smooth and the component's gradient is above the measurement noise, so
//! each probed component is double-checked at eps and eps/2: estimates that
//! disagree (a relu kink inside the stencil) or magnitudes below
//! `min_magnitude` (under the rounding-noise floor of the element type) are
//! excluded from the reported maximum and counted separately. A genuinely
//! wrong gradient produces *consistent* difference estimates that disagree
//! with the analytic value, so the guards never mask real defects.

use super::scalar::Scalar;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One checked parameter component.
#[derive(Debug, Clone)]
pub struct GradCheckSample {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<GradCheckSample>,
    /// Components that passed both validity guards.
    pub samples: Vec<GradCheckSample>,
    /// Components where the two difference estimates disagreed (non-smooth
    /// stencil) and components below the resolvability floor.
    pub skipped_nonsmooth: usize,
    pub skipped_small: usize,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOpts {
    pub eps: f64,
    pub max_checks: usize,
    pub seed: u64,
    /// Components where both the analytic and numeric magnitudes fall below
    /// this are under the oracle's resolution and are not scored.
    pub min_magnitude: f64,
}

impl GradCheckOpts {
    pub fn single_precision() -> Self {
        GradCheckOpts { eps: 3e-3, max_checks: 48, seed: 0, min_magnitude: 5e-2 }
    }

    pub fn double_precision() -> Self {
        GradCheckOpts { eps: 1e-5, max_checks: 48, seed: 0, min_magnitude: 1e-5 }
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compare analytic gradients of a scalar loss against central differences.
///
/// `forward` must be a deterministic function of the mounted parameter
/// leaves (dropout off or masks fixed). At most `max_checks` components per
/// parameter are probed; larger tensors are subsampled deterministically.
pub fn grad_check<E, F>(
    params: &mut [(String, &mut Tensor<E>)],
    mut forward: F,
    opts: GradCheckOpts,
) -> Result<GradCheckReport>
where
    E: Scalar,
    F: FnMut(&mut Tape<E>, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-2).contains(&opts.eps) {
        return Err(Error::Parameter(format!(
            "grad_check eps must be in [1e-6,1e-2], got {}",
            opts.eps
        )));
    }
    // Analytic pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|(name, t)| tape.leaf_named((*t).clone(), true, name))
        .collect();
    let loss = forward(&mut tape, &vars)?;
    if !tape.value(loss).all_finite() {
        return Err(Error::Numeric("grad_check: loss is not finite".into()));
    }
    tape.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    for ((name, t), &v) in params.iter().zip(&vars) {
        let g = tape
            .grad(v)
            .map(|g| g.iter().map(|x| x.to_f64()).collect::<Vec<f64>>())
            .unwrap_or_else(|| vec![0.0; t.numel()]);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("grad_check: non-finite gradient in {name}")));
        }
        analytic.push(g);
    }
    drop(tape);

    let eval = |params: &mut [(String, &mut Tensor<E>)], forward: &mut F| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params
            .iter()
            .map(|(_, t)| tape.leaf((*t).clone(), false))
            .collect();
        let loss = forward(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0].to_f64())
    };

    let mut samples = Vec::new();
    let mut skipped_nonsmooth = 0;
    let mut skipped_small = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for pi in 0..params.len() {
        let numel = params[pi].1.numel();
        let indices: Vec<usize> = if numel <= opts.max_checks {
            (0..numel).collect()
        } else {
            let mut set = std::collections::BTreeSet::new();
            while set.len() < opts.max_checks {
                set.insert(rng.gen_range(0..numel));
            }
            set.into_iter().collect()
        };
        for idx in indices {
            let orig = params[pi].1.data()[idx];
            let mut probe = |delta: f64| -> Result<f64> {
                params[pi].1.data_mut()[idx] = E::from_f64(orig.to_f64() + delta);
                let l = eval(params, &mut forward);
                params[pi].1.data_mut()[idx] = orig;
                l
            };
            let lp = probe(opts.eps)?;
            let lm = probe(-opts.eps)?;
            let lph = probe(opts.eps / 2.0)?;
            let lmh = probe(-opts.eps / 2.0)?;
            if ![lp, lm, lph, lmh].iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "grad_check: non-finite loss while perturbing {}",
                    params[pi].0
                )));
            }
            let fd_full = (lp - lm) / (2.0 * opts.eps);
            let fd_half = (lph - lmh) / opts.eps;
            let a = analytic[pi][idx];
            if a.abs().max(fd_half.abs()) < opts.min_magnitude {
                skipped_small += 1;
                continue;
            }
            let agree_tol = (0.1 * fd_full.abs().max(fd_half.abs())).max(opts.min_magnitude);
            if (fd_full - fd_half).abs() > agree_tol {
                skipped_nonsmooth += 1;
                continue;
            }
            samples.push(GradCheckSample {
                param: params[pi].0.clone(),
                index: idx,
                analytic: a,
                numeric: fd_half,
            });
        }
    }
    let mut max_rel = 0.0;
    let mut worst = None;
    for s in &samples {
        let r = rel_error(s.analytic, s.numeric);
        if r > max_rel {
            max_rel = r;
            worst = Some(s.clone());
        }
    }
    Ok(GradCheckReport { max_rel_error: max_rel, worst, samples, skipped_nonsmooth, skipped_small })
}
