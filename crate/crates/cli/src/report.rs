//! Analysis report over an emissions file.

use serde::Serialize;
use shelving::analysis::{
    ensemble_waiting_times, fit_exponential_tail, fit_waiting_distribution_with, ordering_summary, segment_periods,
    ExponentialTailFit, FitOptions, FitResult, OrderingSummary, PeriodKind, WaitingRule,
};
use shelving::models::{build_configuration, EmissionOrdering};
use shelving::oracle::TelegraphParams;
use shelving::{Channel, EmissionRecord, LevelScheme};

use crate::Failure;

/// Relative tolerance on fitted rates and the mean dark time.
pub const RATE_TOLERANCE: f64 = 0.1;
/// Smallest KS p-value accepted for exponential dark durations.
pub const DARK_KS_P: f64 = 0.01;
/// Smallest share of dark periods with the weak photon on the expected side.
pub const ORDERING_FRACTION: f64 = 0.99;

#[derive(Debug, Serialize)]
pub struct Segmentation {
    pub gap_threshold: f64,
    pub bright_periods: usize,
    pub dark_periods: usize,
    pub interior_dark_periods: usize,
    pub mean_bright: Option<f64>,
    pub mean_interior_dark: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Ordering {
    pub expected: EmissionOrdering,
    pub summary: OrderingSummary,
    pub fraction: f64,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub scheme_hash: String,
    pub configuration: String,
    pub trajectories: usize,
    pub t_max: f64,
    pub strong_emissions: usize,
    pub weak_emissions: usize,
    pub segmentation: Segmentation,
    pub strong_waits: usize,
    pub weak_waits: usize,
    pub strong_fit: Option<FitResult>,
    pub strong_fit_skipped: Option<String>,
    pub dark_fit: Option<ExponentialTailFit>,
    pub dark_fit_skipped: Option<String>,
    pub ordering: Option<Ordering>,
    pub oracle: Option<TelegraphParams>,
    pub oracle_skipped: Option<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn relative_check(name: &'static str, value: f64, target: f64) -> Check {
    let err = value / target - 1.0;
    Check {
        name,
        passed: err.abs() <= RATE_TOLERANCE,
        detail: format!("{value:.6} vs {target:.6} ({:+.1}%)", 100.0 * err),
    }
}

/// Segments, fits and checks `records` against `oracle` when given.
pub fn analyze(
    scheme: &LevelScheme,
    records: &[EmissionRecord],
    oracle: Option<TelegraphParams>,
    gap_threshold: f64,
) -> Result<Report, Failure> {
    let analysis = |e: shelving::analysis::AnalysisError| Failure::analysis(e.to_string());
    let (mut bright, mut interior, mut dark_count) = (Vec::new(), Vec::new(), 0);
    for r in records {
        let seg = segment_periods(r, gap_threshold).map_err(analysis)?;
        bright.extend(seg.of_kind(PeriodKind::Bright).map(|p| p.duration));
        dark_count += seg.of_kind(PeriodKind::Dark).count();
        interior.extend(seg.interior_darks().map(|p| p.duration));
    }
    let segmentation = Segmentation {
        gap_threshold,
        bright_periods: bright.len(),
        dark_periods: dark_count,
        interior_dark_periods: interior.len(),
        mean_bright: mean(&bright),
        mean_interior_dark: mean(&interior),
    };

    let mut strong = ensemble_waiting_times(records, Channel::Strong, WaitingRule::NextOfChannel);
    let weak = ensemble_waiting_times(records, Channel::Weak, WaitingRule::NextOfChannel);
    let (strong_fit, strong_fit_skipped) = if strong.is_empty() {
        (None, Some("no strong waiting times".to_string()))
    } else {
        strong.sort_by(f64::total_cmp);
        // Skip the antibunching rise at short delays.
        let opts = FitOptions {
            onset: 2.5 * strong[strong.len() / 2],
            ..FitOptions::default()
        };
        match fit_waiting_distribution_with(&strong, &opts) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let (dark_fit, dark_fit_skipped) = match fit_exponential_tail(&interior, gap_threshold) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let ordering = match build_configuration(scheme).expected_ordering {
        Some(expected) => {
            let summary = ordering_summary(records, gap_threshold).map_err(analysis)?;
            Some(Ordering {
                expected,
                fraction: summary.fraction(expected),
                summary,
            })
        }
        None => None,
    };

    let mut checks = Vec::new();
    if let (Some(fit), Some(o)) = (&strong_fit, &oracle) {
        checks.push(relative_check("fast rate", fit.fast_rate, o.fast_rate()));
        checks.push(relative_check("slow rate", fit.slow_rate, o.lambda2));
    }
    if let Some(fit) = &dark_fit {
        checks.push(Check {
            name: "dark durations exponential",
            passed: fit.ks.p_value > DARK_KS_P,
            detail: format!("KS p {:.4} over {} darks", fit.ks.p_value, fit.samples),
        });
        if let Some(o) = &oracle {
            checks.push(relative_check("mean dark time", fit.mean(), 1.0 / o.lambda2));
        }
    }
    if let Some(o) = ordering.as_ref().filter(|o| o.summary.with_weak() > 0) {
        checks.push(Check {
            name: "weak photon ordering",
            passed: o.fraction >= ORDERING_FRACTION,
            detail: format!(
                "{:.2}% of {} dark periods: {}",
                100.0 * o.fraction,
                o.summary.with_weak(),
                o.expected
            ),
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(Report {
        scheme_hash: scheme.content_hash(),
        configuration: scheme.config.to_string(),
        trajectories: records.len(),
        t_max: records.first().map_or(0.0, |r| r.t_max),
        strong_emissions: records.iter().map(|r| r.count(Channel::Strong)).sum(),
        weak_emissions: records.iter().map(|r| r.count(Channel::Weak)).sum(),
        segmentation,
        strong_waits: strong.len(),
        weak_waits: weak.len(),
        strong_fit,
        strong_fit_skipped,
        dark_fit,
        dark_fit_skipped,
        ordering,
        oracle,
        oracle_skipped: None,
        checks,
        passed,
    })
}
