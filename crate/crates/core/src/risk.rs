//! Mixture-of-GPs slip distributions, the slip-as-risk transform, and
//! EV / VaR / CVaR statistics.
//!
//! A mixture fuses the class-conditional GP predictives at an edge, weighted
//! by the classification likelihoods at a vertex. Risk statistics of the
//! transformed distribution are estimated by Monte Carlo (except the
//! expectation, which has a closed form).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gp::GPModel;
use crate::{Error, Result};

/// Mixture weights below this threshold are dropped before renormalization.
pub const WEIGHT_DROP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// A weighted set of Gaussian slip components for one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSlipDistribution {
    components: Vec<MixtureComponent>,
}

impl MixtureSlipDistribution {
    /// Validate components, drop negligible weights, renormalize to one.
    pub fn new(raw: Vec<MixtureComponent>) -> Result<Self> {
        if raw.iter().any(|c| !c.weight.is_finite() || c.weight < 0.0) {
            return Err(Error::data("mixture weights must be non-negative and finite"));
        }
        if raw
            .iter()
            .any(|c| c.weight >= WEIGHT_DROP && (!(c.variance > 0.0) || !c.mean.is_finite()))
        {
            return Err(Error::data("mixture components need positive variance and finite mean"));
        }
        let mut components: Vec<MixtureComponent> =
            raw.into_iter().filter(|c| c.weight >= WEIGHT_DROP).collect();
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(Error::data("mixture has no usable components"));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Ok(MixtureSlipDistribution { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Closed-form mixture mean.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Closed-form mixture variance (law of total variance, centered form).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.variance + (c.mean - m) * (c.mean - m)))
            .sum::<f64>()
    }

    /// Component index for a uniform draw `u` in [0, 1).
    fn component_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return i;
            }
        }
        self.components.len() - 1
    }

    /// Flattened (cumulative weight, mean, std) view for tight sample loops.
    fn sampler(&self) -> Vec<(f64, f64, f64)> {
        let mut acc = 0.0;
        self.components
            .iter()
            .map(|c| {
                acc += c.weight;
                (acc, c.mean, c.variance.sqrt())
            })
            .collect()
    }
}

#[inline]
fn pick(view: &[(f64, f64, f64)], u: f64) -> usize {
    for (i, &(cum, _, _)) in view.iter().enumerate() {
        if u < cum {
            return i;
        }
    }
    view.len() - 1
}

/// Build the slip mixture for an edge: one component per class, weighted by
/// the classification likelihood at the vertex and carrying that class GP's
/// predictive mean/variance at the edge pitch.
pub fn mixture_at_edge(
    weights: &[f64],
    models: &[GPModel],
    phi: f64,
) -> Result<MixtureSlipDistribution> {
    let predictions: Vec<Option<(f64, f64)>> = (0..weights.len())
        .map(|c| models.get(c).map(|m| m.predict(phi)))
        .collect();
    mixture_from_options(weights, &predictions)
}

/// Same as [`mixture_at_edge`], but from precomputed per-class predictions.
pub fn mixture_from_predictions(
    weights: &[f64],
    predictions: &[(f64, f64)],
) -> Result<MixtureSlipDistribution> {
    let options: Vec<Option<(f64, f64)>> = predictions.iter().map(|&p| Some(p)).collect();
    mixture_from_options(weights, &options)
}

fn mixture_from_options(
    weights: &[f64],
    predictions: &[Option<(f64, f64)>],
) -> Result<MixtureSlipDistribution> {
    let mut raw = Vec::with_capacity(weights.len());
    for (c, &w) in weights.iter().enumerate() {
        if w < WEIGHT_DROP {
            continue;
        }
        let (mean, variance) = predictions.get(c).copied().flatten().ok_or_else(|| {
            Error::config(format!("no fitted GP for class {c} carrying weight {w}"))
        })?;
        raw.push(MixtureComponent { weight: w, mean, variance });
    }
    MixtureSlipDistribution::new(raw)
}

/// How the descending slip-as-risk transform pairs its two draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassDraw {
    /// One class draw shared by the flat-ground and pitched slips (class
    /// identity belongs to the location, not to the noise).
    Shared,
    /// Independent class draws for the two slips.
    Independent,
}

/// Risk-statistic configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// CVaR/VaR level in [0, 1]; 0 is the expectation, 1 the worst case.
    pub alpha: f64,
    /// Monte-Carlo samples per edge.
    pub mc_samples: usize,
    /// Root seed of the per-edge sample streams.
    pub seed: u64,
    /// Descending-transform pairing mode.
    pub class_draw: ClassDraw,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig { alpha: 0.99, mc_samples: 20_000, seed: 0, class_draw: ClassDraw::Shared }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::param(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.mc_samples == 0 {
            return Err(Error::param("mc_samples must be at least 1"));
        }
        // Tail resolution guard: deep tails need samples.
        if self.alpha > 0.9 && self.mc_samples < 1000 {
            return Err(Error::param(format!(
                "alpha {} > 0.9 requires mc_samples >= 1000, got {}",
                self.alpha, self.mc_samples
            )));
        }
        Ok(())
    }
}

/// Draw `n` samples from a mixture.
pub fn mixture_samples(
    mix: &MixtureSlipDistribution,
    rng: &mut ChaCha8Rng,
    n: usize,
) -> Vec<f64> {
    let view = mix.sampler();
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let (_, mean, std) = view[pick(&view, u)];
            let z: f64 = rng.sample(StandardNormal);
            mean + std * z
        })
        .collect()
}

/// Draw `n` samples of the slip-as-risk variable at pitch `phi`.
///
/// Ascending (`phi >= 0`) samples the pitched mixture directly. Descending
/// flips the slip around flat-ground behavior, `2*s(0) - s(phi)`, drawing
/// the two slips from `mix_zero` and `mix_phi` with independent Gaussian
/// noise and the class pairing given by `mode`.
pub fn slip_as_risk_samples(
    mix_phi: &MixtureSlipDistribution,
    mix_zero: &MixtureSlipDistribution,
    phi: f64,
    rng: &mut ChaCha8Rng,
    n: usize,
    mode: ClassDraw,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    if phi >= 0.0 {
        return Ok(mixture_samples(mix_phi, rng, n));
    }
    if mode == ClassDraw::Shared && mix_phi.components().len() != mix_zero.components().len() {
        return Err(Error::config(
            "shared class draw requires aligned pitched and flat mixtures",
        ));
    }
    let zero_view = mix_zero.sampler();
    let phi_view = mix_phi.sampler();
    let samples = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let c_zero = pick(&zero_view, u);
            let c_phi = match mode {
                ClassDraw::Shared => c_zero,
                ClassDraw::Independent => {
                    let u2: f64 = rng.gen();
                    pick(&phi_view, u2)
                }
            };
            let z0: f64 = rng.sample(StandardNormal);
            let zp: f64 = rng.sample(StandardNormal);
            let (_, zero_mean, zero_std) = zero_view[c_zero];
            let (_, phi_mean, phi_std) = phi_view[c_phi];
            let s_zero = zero_mean + zero_std * z0;
            let s_phi = phi_mean + phi_std * zp;
            2.0 * s_zero - s_phi
        })
        .collect();
    Ok(samples)
}

/// Closed-form expectation of the slip-as-risk variable.
pub fn analytic_risk_mean(
    mix_phi: &MixtureSlipDistribution,
    mix_zero: &MixtureSlipDistribution,
    phi: f64,
) -> f64 {
    if phi >= 0.0 {
        mix_phi.mean()
    } else {
        2.0 * mix_zero.mean() - mix_phi.mean()
    }
}

// ── sample statistics ────────────────────────────────────────────────────────

/// Arithmetic mean.
pub fn expected_value(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("expected_value of empty sample set"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Index of the VaR order statistic: ceil(alpha * n) - 1, clamped to the
/// sample range. The small slack absorbs ties like 0.9 * 100 landing a hair
/// above the integer.
fn var_index(n: usize, alpha: f64) -> usize {
    let k = (alpha * n as f64 - 1e-9).ceil() as i64;
    (k.max(1) as usize).min(n) - 1
}

/// Empirical value at risk: the (1-alpha) upper quantile of the samples.
/// `alpha = 0` returns the minimum (so that CVaR at 0 is the expectation),
/// `alpha = 1` the maximum.
pub fn var(samples: &[f64], alpha: f64) -> Result<f64> {
    let mut buf = samples.to_vec();
    var_mut(&mut buf, alpha)
}

/// [`var`] on a caller-owned buffer; avoids the copy in per-edge loops.
/// The buffer is partially reordered.
pub fn var_mut(samples: &mut [f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("var of empty sample set"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let idx = var_index(samples.len(), alpha);
    let (_, v, _) = samples.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*v)
}

/// Empirical conditional value at risk: the mean of the samples strictly
/// above the VaR, or the VaR itself when nothing exceeds it (ties at the
/// maximum). At `alpha = 0` this is the sample mean exactly; at `alpha = 1`
/// the maximum.
pub fn cvar(samples: &[f64], alpha: f64) -> Result<f64> {
    let mut buf = samples.to_vec();
    cvar_mut(&mut buf, alpha)
}

/// [`cvar`] on a caller-owned buffer; the buffer is partially reordered.
pub fn cvar_mut(samples: &mut [f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("cvar of empty sample set"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return expected_value(samples);
    }
    let threshold = var_mut(samples, alpha)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for &s in samples.iter() {
        if s > threshold {
            sum += s;
            count += 1;
        }
    }
    if count == 0 {
        Ok(threshold)
    } else {
        Ok(sum / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn mix(parts: &[(f64, f64, f64)]) -> MixtureSlipDistribution {
        MixtureSlipDistribution::new(
            parts
                .iter()
                .map(|&(weight, mean, variance)| MixtureComponent { weight, mean, variance })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn one_hot_mixture_reduces_to_single_gaussian() {
        let m = mix(&[(1.0, 0.4, 0.02)]);
        assert_eq!(m.components().len(), 1);
        assert_eq!(m.mean(), 0.4);
        assert_eq!(m.variance(), 0.02);
    }

    // Oracle: law of total variance by hand.
    #[test]
    fn two_component_moments_match_hand_computation() {
        let m = mix(&[(0.5, 0.0, 1.0), (0.5, 1.0, 1.0)]);
        assert!((m.mean() - 0.5).abs() < 1e-15);
        assert!((m.variance() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn tiny_weights_are_dropped_and_renormalized() {
        let m = mix(&[(0.4995, 0.0, 1.0), (0.4995, 1.0, 1.0), (1e-13, 5.0, 1.0)]);
        assert_eq!(m.components().len(), 2);
        let total: f64 = m.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_components_are_rejected() {
        assert!(MixtureSlipDistribution::new(vec![MixtureComponent {
            weight: -0.1,
            mean: 0.0,
            variance: 1.0
        }])
        .is_err());
        assert!(MixtureSlipDistribution::new(vec![MixtureComponent {
            weight: 0.5,
            mean: 0.0,
            variance: 0.0
        }])
        .is_err());
        assert!(MixtureSlipDistribution::new(vec![]).is_err());
    }

    #[test]
    fn missing_model_for_weighted_class_is_config_error() {
        let weights = [0.5, 0.5];
        let predictions = [(0.1, 0.01)];
        let opts: Vec<Option<(f64, f64)>> = vec![Some(predictions[0]), None];
        let err = super::mixture_from_options(&weights, &opts).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        // Unweighted classes may lack models.
        let opts = vec![Some((0.1, 0.01)), None];
        assert!(super::mixture_from_options(&[1.0, 0.0], &opts).is_ok());
    }

    #[test]
    fn flat_pitch_uses_the_ascending_branch() {
        let m = mix(&[(0.7, 0.1, 0.05), (0.3, 0.6, 0.1)]);
        let mut a = derive_stream(5, &[1]);
        let mut b = derive_stream(5, &[1]);
        let risk =
            slip_as_risk_samples(&m, &m, 0.0, &mut a, 64, ClassDraw::Shared).unwrap();
        let plain = mixture_samples(&m, &mut b, 64);
        assert_eq!(risk, plain);
    }

    #[test]
    fn degenerate_descending_transform_is_arithmetic() {
        // Means 0.1 at flat and -0.3 at pitch, vanishing variance:
        // every sample is 2*0.1 - (-0.3) = 0.5.
        let at_zero = mix(&[(1.0, 0.1, 1e-18)]);
        let at_phi = mix(&[(1.0, -0.3, 1e-18)]);
        let mut rng = derive_stream(2, &[7]);
        let s = slip_as_risk_samples(&at_phi, &at_zero, -0.4, &mut rng, 100, ClassDraw::Shared)
            .unwrap();
        for v in s {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    // Oracle: analytic mixture mean.
    #[test]
    fn ascending_sample_mean_tracks_mixture_mean() {
        let m = mix(&[(0.4, 0.1, 0.04), (0.6, 0.7, 0.09)]);
        let mut rng = derive_stream(3, &[9]);
        let s = slip_as_risk_samples(&m, &m, 0.35, &mut rng, 100_000, ClassDraw::Shared).unwrap();
        let mean = expected_value(&s).unwrap();
        let se = (m.variance() / s.len() as f64).sqrt();
        assert!((mean - m.mean()).abs() < 4.0 * se);
    }

    #[test]
    fn descending_mean_matches_closed_form_in_both_modes() {
        let at_zero = mix(&[(0.5, 0.05, 0.02), (0.5, 0.2, 0.08)]);
        let at_phi = mix(&[(0.5, -0.3, 0.05), (0.5, -0.1, 0.12)]);
        let expect = analytic_risk_mean(&at_phi, &at_zero, -0.3);
        for mode in [ClassDraw::Shared, ClassDraw::Independent] {
            let mut rng = derive_stream(4, &[11]);
            let s =
                slip_as_risk_samples(&at_phi, &at_zero, -0.3, &mut rng, 200_000, mode).unwrap();
            let mean = expected_value(&s).unwrap();
            // Shared-mode variance is bounded by 4 var(S0) + var(Sphi) plus
            // the between-class spread; 0.5 is a generous cap.
            let se = (0.5f64 / s.len() as f64).sqrt();
            assert!(
                (mean - expect).abs() < 4.0 * se,
                "{mode:?}: mean {mean} vs analytic {expect}"
            );
        }
    }

    #[test]
    fn expected_value_handles_basics() {
        assert_eq!(expected_value(&[0.3, 0.3, 0.3]).unwrap(), 0.3);
        assert!(expected_value(&[]).is_err());
    }

    // Oracle: brute-force quantile on the explicit list.
    #[test]
    fn var_on_explicit_list() {
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(var(&samples, 0.9).unwrap(), 90.0);
        assert_eq!(var(&samples, 1.0).unwrap(), 100.0);
        assert_eq!(var(&samples, 0.0).unwrap(), 1.0);
        let constant = vec![2.5; 10];
        for a in [0.0, 0.3, 0.9, 1.0] {
            assert_eq!(var(&constant, a).unwrap(), 2.5);
        }
    }

    #[test]
    fn cvar_at_zero_is_exactly_the_sample_mean() {
        let mut rng = derive_stream(8, &[3]);
        let m = mix(&[(0.5, -0.2, 0.3), (0.5, 0.5, 0.1)]);
        let s = mixture_samples(&m, &mut rng, 10_001);
        assert_eq!(cvar(&s, 0.0).unwrap().to_bits(), expected_value(&s).unwrap().to_bits());
    }

    // Oracle: Gaussian closed form mu + sigma * pdf(z_alpha) / (1 - alpha).
    #[test]
    fn cvar_matches_gaussian_closed_form() {
        use statrs::distribution::{Continuous, ContinuousCDF, Normal};
        let normal = Normal::new(0.0, 1.0).unwrap();
        let alpha = 0.99;
        let z = normal.inverse_cdf(alpha);
        let closed = normal.pdf(z) / (1.0 - alpha); // 2.665 for N(0, 1)
        assert!((closed - 2.665).abs() < 0.001);

        let m = mix(&[(1.0, 0.0, 1.0)]);
        let mut rng = derive_stream(10, &[5]);
        let s = mixture_samples(&m, &mut rng, 1_000_000);
        let estimate = cvar(&s, alpha).unwrap();
        assert!((estimate - closed).abs() < 0.03, "cvar {estimate} vs closed {closed}");
    }

    #[test]
    fn cvar_of_constants_is_the_constant() {
        let s = vec![0.7; 50];
        for a in [0.3, 0.9, 0.99, 1.0] {
            assert_eq!(cvar(&s, a).unwrap(), 0.7);
        }
        // alpha = 0 goes through the sample mean, which accumulates in f64.
        assert!((cvar(&s, 0.0).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cvar_dominates_var_and_is_monotone_in_alpha() {
        let mut rng = derive_stream(12, &[4]);
        for case in 0..20 {
            let m = mix(&[
                (0.3, -0.1 * case as f64 / 20.0, 0.05),
                (0.4, 0.3, 0.02 + 0.01 * case as f64),
                (0.3, 0.8, 0.1),
            ]);
            let s = mixture_samples(&m, &mut rng, 2000);
            let mut prev = f64::NEG_INFINITY;
            for a in [0.0, 0.3, 0.6, 0.9, 0.99] {
                let v = var(&s, a).unwrap();
                let c = cvar(&s, a).unwrap();
                assert!(c >= v, "alpha {a}: cvar {c} < var {v}");
                assert!(c >= prev - 1e-12, "alpha {a}: cvar not monotone");
                prev = c;
            }
        }
    }

    #[test]
    fn cvar_near_one_reaches_the_maximum() {
        let mut rng = derive_stream(13, &[6]);
        let m = mix(&[(1.0, 0.0, 1.0)]);
        let s = mixture_samples(&m, &mut rng, 5000);
        let alpha = 1.0 - 1.0 / s.len() as f64;
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(cvar(&s, alpha).unwrap(), max);
        assert_eq!(cvar(&s, 1.0).unwrap(), max);
    }

    #[test]
    fn risk_config_guards_tail_resolution() {
        let mut cfg = RiskConfig::default();
        cfg.validate().unwrap();
        cfg.mc_samples = 500;
        assert!(cfg.validate().is_err()); // alpha 0.99 with 500 samples
        cfg.alpha = 0.5;
        cfg.validate().unwrap();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn statistics_are_seed_deterministic() {
        let m = mix(&[(0.6, 0.1, 0.05), (0.4, 0.5, 0.2)]);
        let run = || {
            let mut rng = derive_stream(77, &[1, 2, 3]);
            let s = slip_as_risk_samples(&m, &m, -0.2, &mut rng, 5000, ClassDraw::Shared)
                .unwrap();
            (
                expected_value(&s).unwrap().to_bits(),
                var(&s, 0.95).unwrap().to_bits(),
                cvar(&s, 0.95).unwrap().to_bits(),
            )
        };
        assert_eq!(run(), run());
    }
}
