//! Brute-force reference rates for the next-photon waiting-time density.
//!
//! Integrates the full three-level V amplitude equations with decay from a
//! reset in the ground level, with its own fixed-step RK4, and reads the
//! two dominant exponentials off the density `gamma_strong |c1(t)|^2` of
//! the next photon being strong.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheme::{ConfigurationKind, LevelScheme};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphParams {
    /// Twice the fast decay rate of the waiting-time density.
    pub beta1: f64,
    /// Slow decay rate: the rate of leaving the shelved level.
    pub lambda2: f64,
    /// Share of the next-strong-photon probability in the fast term.
    pub weight: f64,
}

impl TelegraphParams {
    pub fn fast_rate(&self) -> f64 {
        0.5 * self.beta1
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("the telegraph oracle needs a V configuration, got {0}")]
    NotV(ConfigurationKind),
    #[error("no slow plateau before t = {0}; rates are not separated enough to extract two exponentials")]
    NoPlateau(f64),
    #[error("fast rate {fast} is not at least twice the slow rate {slow}; use a scheme with larger rate separation")]
    Indistinguishable { fast: f64, slow: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

type State = [Complex64; 3];

/// e-folds below its peak the density must fall before the slow rate is read.
const PLATEAU_DROP: f64 = 60.0;

struct VEquations {
    gamma_strong: f64,
    gamma_weak: f64,
    half_omega_strong: f64,
    half_omega_weak: f64,
}

impl VEquations {
    fn derivative(&self, c: &State) -> State {
        let i = Complex64::new(0.0, 1.0);
        [
            -i * (self.half_omega_strong * c[1] + self.half_omega_weak * c[2]),
            -i * self.half_omega_strong * c[0] - 0.5 * self.gamma_strong * c[1],
            -i * self.half_omega_weak * c[0] - 0.5 * self.gamma_weak * c[2],
        ]
    }

    fn rk4(&self, c: &State, h: f64) -> State {
        let add = |a: &State, b: &State, s: f64| [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s];
        let k1 = self.derivative(c);
        let k2 = self.derivative(&add(c, &k1, 0.5 * h));
        let k3 = self.derivative(&add(c, &k2, 0.5 * h));
        let k4 = self.derivative(&add(c, &k3, h));
        let mut out = *c;
        for j in 0..3 {
            out[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
        }
        out
    }
}

/// Least-squares slope and intercept of `y` against `x`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Local decay rates of `log_values` sampled every `dt`, by central
/// differences over `span` samples on each side. Entry `i` belongs to
/// sample `i + span`.
fn local_rates(log_values: &[f64], span: usize, dt: f64) -> Vec<f64> {
    (span..log_values.len().saturating_sub(span))
        .map(|m| -(log_values[m + span] - log_values[m - span]) / (2.0 * span as f64 * dt))
        .collect()
}

/// Whether `rate[i..=i+window]` stays within `tol` (relative) of `rate[i]`.
fn stable_at(rate: &[f64], i: usize, window: usize, tol: f64) -> bool {
    let r0 = rate[i];
    r0 > 0.0 && rate[i..=i + window].iter().all(|r| (r - r0).abs() <= tol * r0)
}

/// Extracts the fast and slow rates of the next-strong-photon density.
///
/// The slow term is identified on the amplitude `c1(t)` once every faster
/// term has decayed by [`PLATEAU_DROP`] e-folds; subtracting it from the
/// amplitude (not the density) leaves no fast-slow cross term, and the
/// fast rate is read off the remainder.
pub fn telegraph_oracle(scheme: &LevelScheme) -> Result<TelegraphParams, OracleError> {
    if scheme.config != ConfigurationKind::V {
        return Err(OracleError::NotV(scheme.config));
    }
    let eq = VEquations {
        gamma_strong: scheme.gamma_strong,
        gamma_weak: scheme.gamma_weak,
        half_omega_strong: 0.5 * scheme.omega_strong,
        half_omega_weak: 0.5 * scheme.omega_weak,
    };
    let omega_max = scheme.omega_strong.max(scheme.omega_weak);
    let h = (0.02 / scheme.gamma_strong).min(2.0 * std::f64::consts::PI / (200.0 * omega_max));
    // Bright-period time scale: mean spacing of strong photons.
    let bright_time = 1.0 / scheme.bright_emission_rate();
    let sample_every = ((0.05 * bright_time / h).round() as usize).max(1);
    let dt_sample = sample_every as f64 * h;
    let window = ((3.0 * bright_time / dt_sample).round() as usize).max(8);
    let t_limit = 1e5 * bright_time;
    let span = 4usize;

    let mut c: State = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    let mut times = vec![0.0];
    let mut amp = vec![Complex64::new(0.0, 0.0)];
    let mut log_density = vec![f64::NEG_INFINITY];
    let mut integral = 0.0;
    let mut prev = 0.0;
    let mut step = 0usize;
    let mut first_rate: Option<f64> = None;
    let plateau = loop {
        for _ in 0..sample_every {
            c = eq.rk4(&c, h);
            step += 1;
            let f = eq.gamma_strong * c[1].norm_sqr();
            integral += 0.5 * (prev + f) * h;
            prev = f;
        }
        let t = step as f64 * h;
        times.push(t);
        amp.push(c[1]);
        log_density.push(prev.ln());
        if t > t_limit || prev == 0.0 {
            return Err(OracleError::NoPlateau(t));
        }
        let k = log_density.len();
        if k < 2 * span + window + 2 || k % 16 != 0 {
            continue;
        }
        let rates = local_rates(&log_density[k - 2 * span - window - 1..], span, dt_sample);
        if !stable_at(&rates, 0, window, 1e-3) {
            continue;
        }
        // The first stretch of steady decay sets how long to wait for the
        // slow term to stand alone.
        let r_first = *first_rate.get_or_insert(rates[0]);
        if t * r_first >= PLATEAU_DROP && stable_at(&rates, 0, window, 1e-6) {
            break k - window - span - 1;
        }
    };
    let p1 = (plateau + window).min(times.len() - 1);
    let tw = &times[plateau..=p1];
    let log_mod: Vec<f64> = amp[plateau..=p1].iter().map(|z| z.norm().ln()).collect();
    let mut phase: Vec<f64> = amp[plateau..=p1].iter().map(|z| z.arg()).collect();
    for i in 1..phase.len() {
        let two_pi = 2.0 * std::f64::consts::PI;
        while phase[i] - phase[i - 1] > std::f64::consts::PI {
            phase[i] -= two_pi;
        }
        while phase[i] - phase[i - 1] < -std::f64::consts::PI {
            phase[i] += two_pi;
        }
    }
    let (decay, log_a) = line_fit(tw, &log_mod);
    let (freq, phase0) = line_fit(tw, &phase);
    let lambda2 = -2.0 * decay;
    let slow = |t: f64| Complex64::from_polar((log_a + decay * t).exp(), phase0 + freq * t);

    let log_residual: Vec<f64> = (0..plateau)
        .map(|i| (eq.gamma_strong * (amp[i] - slow(times[i])).norm_sqr()).max(f64::MIN_POSITIVE).ln())
        .collect();
    // Residual is trustworthy while well above the rounding floor of c1.
    let usable = (1..plateau)
        .find(|&i| (amp[i] - slow(times[i])).norm() < 1e-6 * amp[i].norm())
        .unwrap_or(plateau);
    let res_rates = local_rates(&log_residual[..usable], span, dt_sample);
    let fast_window = (window / 2).max(8);
    let candidates = 0..res_rates.len().saturating_sub(fast_window);
    let f0 = candidates
        .clone()
        .find(|&i| stable_at(&res_rates, i, fast_window, 1e-5))
        .or_else(|| {
            candidates
                .filter(|&i| res_rates[i] > 0.0 && res_rates[i + fast_window] > 0.0)
                .min_by(|&a, &b| {
                    let spread = |i: usize| (res_rates[i + fast_window] - res_rates[i]).abs() / res_rates[i];
                    spread(a).total_cmp(&spread(b))
                })
        })
        .ok_or(OracleError::Indistinguishable { fast: f64::NAN, slow: lambda2 })?
        + span;
    let f1 = (f0 + fast_window).min(usable - 1);
    let (fast_slope, _) = line_fit(&times[f0..=f1], &log_residual[f0..=f1]);
    let fast = -fast_slope;
    if !(lambda2 > 0.0) || !(fast >= 2.0 * lambda2) {
        return Err(OracleError::Indistinguishable { fast, slow: lambda2 });
    }
    // Probability mass: integrated density plus the analytic slow tail.
    let slow_amp = eq.gamma_strong * (2.0 * log_a).exp();
    let t_end = *times.last().expect("samples");
    let total = integral + slow_amp * (-lambda2 * t_end).exp() / lambda2;
    let slow_mass = slow_amp / lambda2;
    let weight = ((total - slow_mass) / total).clamp(0.0, 1.0);
    Ok(TelegraphParams {
        beta1: 2.0 * fast,
        lambda2,
        weight,
    })
}

/// Golden file name for a scheme.
pub fn golden_file_name(scheme: &LevelScheme) -> String {
    format!("oracle_{}.json", scheme.content_hash())
}

pub fn write_golden(dir: &Path, scheme: &LevelScheme, params: &TelegraphParams) -> Result<PathBuf, OracleError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(golden_file_name(scheme));
    fs::write(&path, serde_json::to_string_pretty(params)? + "\n")?;
    Ok(path)
}

pub fn read_golden(path: &Path) -> Result<TelegraphParams, OracleError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
