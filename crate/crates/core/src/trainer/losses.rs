//! Loss algebra over measured probabilities, in f64. The tape composes the
//! same expressions for backprop; these pure forms feed reports and the
//! dual-path verification.

use super::variant::VariantId;
use crate::error::{Error, Result};

/// Probabilities are clamped to [1e-7, 1-1e-7] before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn mean_ln(ps: &[f64]) -> f64 {
    ps.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / ps.len() as f64
}

fn mean_ln_one_minus(ps: &[f64]) -> f64 {
    ps.iter().map(|&p| clamp_prob(1.0 - p).ln()).sum::<f64>() / ps.len() as f64
}

/// Conditional-GAN value function: mean ln D(real) + mean ln(1 - D(fake)).
/// The discriminator ascends this; its training loss is the negation.
pub fn cgan_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    mean_ln(d_real) + mean_ln_one_minus(d_fake)
}

/// Batch-averaged negative log-likelihood of the true classes.
pub fn classifier_loss(distributions: &[Vec<f64>], classes: &[usize]) -> Result<f64> {
    if distributions.len() != classes.len() || distributions.is_empty() {
        return Err(Error::Usage("classifier_loss needs one distribution per class".into()));
    }
    let mut acc = 0.0;
    for (dist, &c) in distributions.iter().zip(classes) {
        let p = dist
            .get(c)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("class {c} out of range")))?;
        acc -= clamp_prob(p).ln();
    }
    Ok(acc / classes.len() as f64)
}

/// Generator minimization objective: the non-saturating adversarial term
/// mean(-ln D(fake)) plus lambda1 * l_c when the classifier is active. The
/// saturating form mean(ln(1 - D(fake))) is available for fidelity runs.
pub fn generator_objective(
    d_fake: &[f64],
    l_c: Option<f64>,
    lambda1: f64,
    saturating: bool,
) -> Result<f64> {
    if lambda1 < 0.0 {
        return Err(Error::Parameter(format!("lambda1 must be non-negative, got {lambda1}")));
    }
    let adv = if saturating { mean_ln_one_minus(d_fake) } else { -mean_ln(d_fake) };
    Ok(match l_c {
        Some(lc) => adv + lambda1 * lc,
        None => adv,
    })
}

/// Discriminator probabilities for one stream.
#[derive(Debug, Clone, Copy)]
pub struct StreamProbs<'a> {
    pub real: &'a [f64],
    pub fake: &'a [f64],
}

/// Per-step loss summary. `coupled_total` is the coupled value function:
/// the rgb stream's classifier-reinforced objective plus the auxiliary
/// stream's plain adversarial objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub d1_loss: Option<f64>,
    pub d2_loss: Option<f64>,
    pub g1_adv: Option<f64>,
    pub g2_adv: Option<f64>,
    pub classifier_loss: Option<f64>,
    pub lambda1: f64,
    pub coupled_total: f64,
}

/// Composed route: V*_rgb + V_aux with V*_rgb = V_rgb + lambda1 * l_c
/// (l_c is the negative log-likelihood, so adding it subtracts the paper's
/// log-likelihood term).
pub fn coupled_total_composed(
    rgb: Option<StreamProbs>,
    aux: Option<StreamProbs>,
    l_c: Option<f64>,
    lambda1: f64,
) -> f64 {
    let v_rgb = rgb.map(|s| cgan_loss(s.real, s.fake)).unwrap_or(0.0);
    let v_star = v_rgb + lambda1 * l_c.unwrap_or(0.0);
    let v_aux = aux.map(|s| cgan_loss(s.real, s.fake)).unwrap_or(0.0);
    v_star + v_aux
}

/// Expanded route: the four expectation terms summed left to right, then the
/// classifier term.
pub fn coupled_total_expanded(
    rgb: Option<StreamProbs>,
    aux: Option<StreamProbs>,
    l_c: Option<f64>,
    lambda1: f64,
) -> f64 {
    let mut total = 0.0;
    if let Some(s) = rgb {
        total += mean_ln(s.real);
        total += mean_ln_one_minus(s.fake);
    }
    if let Some(s) = aux {
        total += mean_ln(s.real);
        total += mean_ln_one_minus(s.fake);
    }
    total + lambda1 * l_c.unwrap_or(0.0)
}

/// Assemble the coupled loss report for a step. Streams must match the
/// variant: the coupled variant needs both, the supervised coupling (c)
/// needs neither but keeps the classifier term.
pub fn coupled_loss(
    variant: VariantId,
    rgb: Option<StreamProbs>,
    aux: Option<StreamProbs>,
    l_c: Option<f64>,
    lambda1: f64,
) -> Result<LossReport> {
    let flags = variant.flags();
    if flags.has_discriminators && rgb.is_none() {
        return Err(Error::Usage(format!("variant {variant} needs rgb discriminator outputs")));
    }
    if flags.has_discriminators && flags.has_aux && aux.is_none() {
        return Err(Error::Usage(format!("variant {variant} needs aux discriminator outputs")));
    }
    if flags.has_classifier && l_c.is_none() {
        return Err(Error::Usage(format!("variant {variant} needs a classifier loss")));
    }
    if lambda1 < 0.0 {
        return Err(Error::Parameter(format!("lambda1 must be non-negative, got {lambda1}")));
    }
    let total = coupled_total_composed(rgb, aux, l_c, lambda1);
    Ok(LossReport {
        d1_loss: rgb.map(|s| -cgan_loss(s.real, s.fake)),
        d2_loss: aux.map(|s| -cgan_loss(s.real, s.fake)),
        g1_adv: rgb.map(|s| -mean_ln(s.fake)),
        g2_adv: aux.map(|s| -mean_ln(s.fake)),
        classifier_loss: l_c,
        lambda1,
        coupled_total: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cgan_value_at_half_half_is_two_ln_half() {
        let v = cgan_loss(&[0.5], &[0.5]);
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((v + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminator_approaches_zero() {
        let v = cgan_loss(&[1.0], &[0.0]);
        assert!(v.abs() < 1e-5, "supremum should be ~0, got {v}");
        assert!(v <= 0.0);
    }

    #[test]
    fn cgan_value_is_maximized_at_half_for_tied_probabilities() {
        // Scalar calculus: f(p) = ln p + ln(1-p) peaks at p = 0.5.
        let f = |p: f64| cgan_loss(&[p], &[p]);
        let peak = f(0.5);
        for p in [0.05, 0.2, 0.35, 0.65, 0.8, 0.95] {
            assert!(f(p) < peak, "f({p}) = {} >= peak {peak}", f(p));
        }
    }

    #[test]
    fn classifier_loss_examples() {
        let exact = classifier_loss(&[vec![0.0, 1.0, 0.0]], &[1]).unwrap();
        assert!(exact < 1e-6);
        let uniform = classifier_loss(&[vec![1.0 / 6.0; 6]], &[3]).unwrap();
        assert!((uniform - 6.0f64.ln()).abs() < 1e-12);
        assert!((uniform - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn classifier_loss_decreases_as_true_probability_grows() {
        let mut last = f64::INFINITY;
        for i in 1..40 {
            let p = i as f64 / 40.0;
            let dist = vec![p, 1.0 - p];
            let l = classifier_loss(&[dist], &[0]).unwrap();
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn generator_objective_examples() {
        // lambda1 = 0 reduces to the pure adversarial term.
        let g = generator_objective(&[0.25], None, 0.0, false).unwrap();
        assert!((g + 0.25f64.ln()).abs() < 1e-15);
        // ln 2 + 1 at d_fake=0.5, l_c=1, lambda1=1.
        let g = generator_objective(&[0.5], Some(1.0), 1.0, false).unwrap();
        assert!((g - (2.0f64.ln() + 1.0)).abs() < 1e-15);
        assert!((g - 1.6931).abs() < 1e-4);
        assert!(matches!(
            generator_objective(&[0.5], Some(1.0), -0.1, false),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn generator_objective_strictly_decreases_in_d_fake() {
        let mut last = f64::INFINITY;
        for i in 1..60 {
            let p = i as f64 / 60.0;
            let g = generator_objective(&[p], Some(0.7), 1.0, false).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn objective_is_affine_in_classifier_loss_with_slope_lambda1() {
        // Bitwise identity: f(d, l, lambda) == f(d, 0, lambda) + lambda*l
        // because the implementation is exactly this affine form.
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..1000 {
            let d = vec![rng.gen_range(0.01..0.99)];
            let l = rng.gen_range(0.0..5.0);
            let lambda = rng.gen_range(0.0..3.0);
            let full = generator_objective(&d, Some(l), lambda, false).unwrap();
            let base = generator_objective(&d, Some(0.0), lambda, false).unwrap();
            assert_eq!(full, base + lambda * l);
        }
    }

    #[test]
    fn coupled_fixture_all_half_is_four_ln_half() {
        let real = [0.5, 0.5];
        let fake = [0.5, 0.5];
        let rgb = StreamProbs { real: &real, fake: &fake };
        let aux = StreamProbs { real: &real, fake: &fake };
        let total = coupled_total_composed(Some(rgb), Some(aux), Some(0.0), 1.0);
        assert!((total - 4.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_reduces_to_two_plain_objectives() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        for _ in 0..100 {
            let mk = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..4).map(|_| rng.gen_range(0.01..0.99)).collect()
            };
            let (r1, f1, r2, f2) = (mk(&mut rng), mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let rgb = StreamProbs { real: &r1, fake: &f1 };
            let aux = StreamProbs { real: &r2, fake: &f2 };
            let total = coupled_total_composed(Some(rgb), Some(aux), Some(3.7), 0.0);
            let plain = cgan_loss(&r1, &f1) + cgan_loss(&r2, &f2);
            assert!((total - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn composed_and_expanded_routes_agree_within_1e12() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..8);
            let mk = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(1e-9..1.0 - 1e-9)).collect()
            };
            let (r1, f1, r2, f2) = (mk(&mut rng), mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let rgb = Some(StreamProbs { real: &r1, fake: &f1 });
            let aux = Some(StreamProbs { real: &r2, fake: &f2 });
            let l_c = Some(rng.gen_range(0.0..8.0));
            let lambda = rng.gen_range(0.0..4.0);
            let a = coupled_total_composed(rgb, aux, l_c, lambda);
            let b = coupled_total_expanded(rgb, aux, l_c, lambda);
            assert!((a - b).abs() < 1e-12, "dual-path mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn coupled_loss_validates_variant_components() {
        let real = [0.5];
        let fake = [0.4];
        let s = StreamProbs { real: &real, fake: &fake };
        assert!(matches!(
            coupled_loss(VariantId::H, Some(s), None, Some(1.0), 1.0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            coupled_loss(VariantId::H, Some(s), Some(s), None, 1.0),
            Err(Error::Usage(_))
        ));
        let ok = coupled_loss(VariantId::H, Some(s), Some(s), Some(0.5), 1.0).unwrap();
        assert!(ok.d1_loss.is_some() && ok.d2_loss.is_some());
        // Supervised coupling: no adversarial terms.
        let c = coupled_loss(VariantId::C, None, None, Some(0.5), 1.0).unwrap();
        assert_eq!(c.coupled_total, 0.5);
    }
}
