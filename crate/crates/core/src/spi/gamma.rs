//! Maximum-likelihood gamma fitting and the special functions it needs.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma_lr};

use super::SpiError;

/// Fewest positive samples accepted by [`fit_gamma`].
pub const MIN_FIT_SAMPLES: usize = 10;

const MAX_NEWTON_STEPS: usize = 20;
const NEWTON_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_cdf(x, self.shape, self.scale)
    }
}

/// Gamma CDF with the given shape and scale.
pub fn gamma_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(shape, x / scale)
    }
}

/// Trigamma ψ'(x) for x > 0: upward recurrence to x >= 12, then the
/// asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc + r
        + r2 / 2.0
        + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 / 30.0)))
}

/// Fits a two-parameter gamma distribution by maximum likelihood.
///
/// Starts from Thom's approximation
/// `α₀ = (1 + sqrt(1 + 4A/3)) / (4A)` with `A = ln(mean) − mean(ln x)`,
/// then runs up to 20 Newton steps on `ln α − ψ(α) = A` until
/// `|Δα| < 1e-10`. The scale is `mean / α`.
pub fn fit_gamma(samples: &[f64]) -> Result<GammaFit, SpiError> {
    if let Some(&bad) = samples.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(SpiError::NonPositiveSample(bad));
    }
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(SpiError::DegenerateSample(format!(
            "{} positive samples, need {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(SpiError::DegenerateSample("all samples equal".into()));
    }

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_ln = samples.iter().map(|v| v.ln()).sum::<f64>() / n;
    let a = mean.ln() - mean_ln;
    if !(a > 0.0) {
        // Nearly equal samples can round A to zero.
        return Err(SpiError::DegenerateSample(format!("log-mean gap {a}")));
    }

    let mut shape = (1.0 + (1.0 + 4.0 * a / 3.0).sqrt()) / (4.0 * a);
    for _ in 0..MAX_NEWTON_STEPS {
        let f = shape.ln() - digamma(shape) - a;
        let df = 1.0 / shape - trigamma(shape);
        let next = shape - f / df;
        // Newton can overshoot below zero from a poor start; halve instead.
        let next = if next > 0.0 { next } else { shape / 2.0 };
        let step = (next - shape).abs();
        shape = next;
        if step < NEWTON_TOLERANCE {
            break;
        }
    }
    Ok(GammaFit {
        shape,
        scale: mean / shape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma};

    #[test]
    fn trigamma_known_values() {
        // ψ'(1) = π²/6, ψ'(1/2) = π²/2
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        assert!((trigamma(30.0) - 0.0338950603577399).abs() < 1e-12);
    }

    #[test]
    fn recovers_gamma_2_3() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_200_201);
        let dist = Gamma::new(2.0, 3.0).unwrap();
        let samples: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let fit = fit_gamma(&samples).unwrap();
        assert!((1.9..=2.1).contains(&fit.shape), "{fit:?}");
        assert!((2.85..=3.15).contains(&fit.scale), "{fit:?}");
    }

    #[test]
    fn newton_solves_the_likelihood_equation() {
        let samples: Vec<f64> = (1..=40).map(|i| (i as f64 * 0.37).exp().ln() + 0.1).collect();
        let fit = fit_gamma(&samples).unwrap();
        let n = samples.len() as f64;
        let a = (samples.iter().sum::<f64>() / n).ln()
            - samples.iter().map(|v| v.ln()).sum::<f64>() / n;
        assert!((fit.shape.ln() - digamma(fit.shape) - a).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(
            fit_gamma(&[5.0; 20]),
            Err(SpiError::DegenerateSample(_))
        ));
        assert!(matches!(
            fit_gamma(&[1.0, 2.0, 3.0]),
            Err(SpiError::DegenerateSample(_))
        ));
        let mut with_zero = vec![1.0; 12];
        with_zero[3] = 0.0;
        with_zero[4] = 2.0;
        assert!(matches!(
            fit_gamma(&with_zero),
            Err(SpiError::NonPositiveSample(v)) if v == 0.0
        ));
    }

    #[test]
    fn cdf_edges() {
        assert_eq!(gamma_cdf(0.0, 2.0, 3.0), 0.0);
        assert_eq!(gamma_cdf(f64::INFINITY, 2.0, 3.0), 1.0);
        // Shape 1 is exponential.
        assert!((gamma_cdf(2.0, 1.0, 4.0) - (1.0 - (-0.5f64).exp())).abs() < 1e-14);
    }
}
