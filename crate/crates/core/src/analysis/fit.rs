//! Maximum-likelihood fits of exponential waiting-time models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ks::{ks_one_sample, KsResult};
use super::AnalysisError;

/// Two-exponential mixture `w f e^{-f x} + (1-w) s e^{-s x}` fitted to
/// `x = t - onset` over samples with `t > onset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub fast_rate: f64,
    pub slow_rate: f64,
    /// Weight of the fast component.
    pub weight: f64,
    /// KS distance between the samples and the fitted mixture.
    pub goodness: f64,
    pub onset: f64,
    pub samples: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn cdf(&self, t: f64) -> f64 {
        let x = (t - self.onset).max(0.0);
        1.0 - self.weight * (-self.fast_rate * x).exp() - (1.0 - self.weight) * (-self.slow_rate * x).exp()
    }

    /// Draws `n` samples from the fitted density.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let rate = if rng.random::<f64>() < self.weight { self.fast_rate } else { self.slow_rate };
                let u: f64 = rng.random();
                self.onset - (1.0 - u).ln() / rate
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Samples at or below this time are discarded; the rest are shifted
    /// by it. Exponential tails are unchanged by the shift.
    pub onset: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Minimum number of samples entering the fit.
    pub min_samples: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            onset: 0.0,
            max_iterations: 200,
            tolerance: 1e-9,
            min_samples: 100,
        }
    }
}

/// Expectation-maximization fit of a two-exponential mixture.
pub fn fit_waiting_distribution(samples: &[f64]) -> Result<FitResult, AnalysisError> {
    fit_waiting_distribution_with(samples, &FitOptions::default())
}

pub fn fit_waiting_distribution_with(samples: &[f64], opts: &FitOptions) -> Result<FitResult, AnalysisError> {
    let mut x: Vec<f64> = samples
        .iter()
        .filter(|&&t| t > opts.onset && t.is_finite())
        .map(|&t| t - opts.onset)
        .collect();
    if x.len() < opts.min_samples.max(10) {
        return Err(AnalysisError::TooFewSamples {
            needed: opts.min_samples.max(10),
            found: x.len(),
        });
    }
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let lower_half = &x[..x.len() / 2];
    let upper_tail = &x[x.len() * 19 / 20..];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut fast = 1.0 / mean(lower_half).max(f64::MIN_POSITIVE);
    let mut slow = 1.0 / mean(upper_tail).max(f64::MIN_POSITIVE);
    if slow >= fast {
        slow = 0.5 * fast;
    }
    let mut w = 0.9;
    let mut last_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut resp = vec![0.0; x.len()];
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let mut ll = 0.0;
        for (r, &xi) in resp.iter_mut().zip(&x) {
            let pf = w * fast * (-fast * xi).exp();
            let ps = (1.0 - w) * slow * (-slow * xi).exp();
            let total = pf + ps;
            ll += total.max(f64::MIN_POSITIVE).ln();
            *r = if total > 0.0 { pf / total } else if xi * fast < xi * slow { 1.0 } else { 0.0 };
        }
        let (mut rf, mut rfx, mut rsx) = (0.0, 0.0, 0.0);
        for (&r, &xi) in resp.iter().zip(&x) {
            rf += r;
            rfx += r * xi;
            rsx += (1.0 - r) * xi;
        }
        let rs = n - rf;
        w = rf / n;
        if rfx > 0.0 && rf > 0.0 {
            fast = rf / rfx;
        }
        if rsx > 0.0 && rs > 0.0 {
            slow = rs / rsx;
        }
        if ((ll - last_ll) / ll.abs().max(1.0)).abs() < opts.tolerance {
            last_ll = ll;
            break;
        }
        last_ll = ll;
    }
    if slow > fast {
        std::mem::swap(&mut fast, &mut slow);
        w = 1.0 - w;
    }
    let fast_count = w * n;
    let slow_count = (1.0 - w) * n;
    if !(fast > 0.0 && slow > 0.0) || fast < 2.0 * slow || fast_count < 5.0 || slow_count < 5.0 {
        return Err(AnalysisError::DegenerateFit {
            fast_rate: fast,
            slow_rate: slow,
            weight: w,
        });
    }
    let mut fit = FitResult {
        fast_rate: fast,
        slow_rate: slow,
        weight: w,
        goodness: 0.0,
        onset: opts.onset,
        samples: x.len(),
        log_likelihood: last_ll,
        iterations,
    };
    let shifted: Vec<f64> = x.iter().map(|v| v + opts.onset).collect();
    fit.goodness = ks_one_sample(&shifted, |t| fit.cdf(t)).statistic;
    Ok(fit)
}

/// Single-exponential fit of the excess over `onset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialTailFit {
    pub rate: f64,
    pub onset: f64,
    pub samples: usize,
    pub ks: KsResult,
}

impl ExponentialTailFit {
    /// Mean of the untruncated exponential.
    pub fn mean(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Maximum-likelihood rate of a left-truncated exponential sample, with a
/// KS test against the fitted truncated exponential.
pub fn fit_exponential_tail(samples: &[f64], onset: f64) -> Result<ExponentialTailFit, AnalysisError> {
    let x: Vec<f64> = samples.iter().filter(|&&t| t > onset).map(|&t| t - onset).collect();
    if x.len() < 10 {
        return Err(AnalysisError::TooFewSamples {
            needed: 10,
            found: x.len(),
        });
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let rate = 1.0 / mean;
    let ks = ks_one_sample(&x, |v| 1.0 - (-rate * v).exp());
    Ok(ExponentialTailFit {
        rate,
        onset,
        samples: x.len(),
        ks,
    })
}
