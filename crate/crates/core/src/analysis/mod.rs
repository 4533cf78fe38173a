//! Observables of emission records: bright/dark segmentation, waiting
//! times, mixture fits and cross-ensemble comparison.

pub mod fit;
pub mod ks;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Channel;
use crate::models::EmissionOrdering;
use crate::record::{Emission, EmissionRecord};

pub use fit::{
    fit_exponential_tail, fit_waiting_distribution, fit_waiting_distribution_with, ExponentialTailFit,
    FitOptions, FitResult,
};
pub use ks::{ks_one_sample, ks_two_sample, KsResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error(
        "degenerate fit (fast {fast_rate}, slow {slow_rate}, weight {weight}): rates not separated; \
         use a scheme with larger rate separation or more samples"
    )]
    DegenerateFit { fast_rate: f64, slow_rate: f64, weight: f64 },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("gap threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("record times are not sorted")]
    Unsorted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodKind {
    Bright,
    Dark,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub kind: PeriodKind,
    pub start: f64,
    pub duration: f64,
}

impl Period {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Alternating bright and dark periods tiling `[0, t_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodSegmentation {
    pub t_max: f64,
    pub periods: Vec<Period>,
}

impl PeriodSegmentation {
    pub fn total_duration(&self) -> f64 {
        self.periods.iter().map(|p| p.duration).sum()
    }

    pub fn of_kind(&self, kind: PeriodKind) -> impl Iterator<Item = &Period> + '_ {
        self.periods.iter().filter(move |p| p.kind == kind)
    }

    /// Dark periods bounded by strong photons on both sides.
    pub fn interior_darks(&self) -> impl Iterator<Item = &Period> + '_ {
        let last = self.periods.len().saturating_sub(1);
        self.periods
            .iter()
            .enumerate()
            .filter(move |&(i, p)| p.kind == PeriodKind::Dark && i != 0 && i != last)
            .map(|(_, p)| p)
    }
}

/// Splits `[0, t_max]` at strong-photon gaps of at least `gap_threshold`.
/// A bright period spans a maximal run of strong photons; the stretches
/// before the first and after the last photon count as dark when they are
/// at least `gap_threshold` long.
pub fn segment_periods(record: &EmissionRecord, gap_threshold: f64) -> Result<PeriodSegmentation, AnalysisError> {
    if !(gap_threshold > 0.0) {
        return Err(AnalysisError::BadThreshold(gap_threshold));
    }
    let t_max = record.t_max;
    let strong = record.times(Channel::Strong);
    if strong.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::Unsorted);
    }
    let mut periods = Vec::new();
    let mut push = |kind, start: f64, end: f64| {
        periods.push(Period {
            kind,
            start,
            duration: end - start,
        })
    };
    if strong.is_empty() {
        push(PeriodKind::Dark, 0.0, t_max);
        return Ok(PeriodSegmentation { t_max, periods });
    }
    let mut bright_start = if strong[0] >= gap_threshold {
        push(PeriodKind::Dark, 0.0, strong[0]);
        strong[0]
    } else {
        0.0
    };
    for w in strong.windows(2) {
        if w[1] - w[0] >= gap_threshold {
            push(PeriodKind::Bright, bright_start, w[0]);
            push(PeriodKind::Dark, w[0], w[1]);
            bright_start = w[1];
        }
    }
    let last = *strong.last().expect("nonempty");
    if t_max - last >= gap_threshold {
        push(PeriodKind::Bright, bright_start, last);
        push(PeriodKind::Dark, last, t_max);
    } else {
        push(PeriodKind::Bright, bright_start, t_max.max(last));
    }
    Ok(PeriodSegmentation { t_max, periods })
}

/// How a reset photon is paired with a later photon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitingRule {
    /// From every photon to the next photon of the requested channel,
    /// regardless of photons in between.
    #[default]
    NextOfChannel,
    /// From every photon to the photon immediately after it, kept when
    /// that photon is of the requested channel.
    NextPhoton,
}

/// Waiting times from each reset photon to a later photon of `channel`.
pub fn waiting_times(record: &EmissionRecord, channel: Channel) -> Vec<f64> {
    waiting_times_with(&record.events, channel, WaitingRule::NextOfChannel)
}

pub fn waiting_times_with(events: &[Emission], channel: Channel, rule: WaitingRule) -> Vec<f64> {
    let mut out = Vec::new();
    if events.len() < 2 {
        return out;
    }
    match rule {
        WaitingRule::NextOfChannel => {
            // Scan backwards keeping the earliest later photon of the channel.
            let mut next: Option<f64> = None;
            let mut pending: Vec<f64> = Vec::with_capacity(events.len());
            let mut i = events.len();
            while i > 0 {
                // Photons sharing a time stamp are not resets for each other.
                let t = events[i - 1].time;
                let mut j = i;
                while j > 0 && events[j - 1].time == t {
                    j -= 1;
                }
                for _ in j..i {
                    if let Some(n) = next {
                        pending.push(n - t);
                    }
                }
                if events[j..i].iter().any(|e| e.channel == channel) {
                    next = Some(t);
                }
                i = j;
            }
            pending.reverse();
            out = pending;
        }
        WaitingRule::NextPhoton => {
            for (i, e) in events.iter().enumerate() {
                if let Some(n) = events[i + 1..].iter().find(|n| n.time > e.time) {
                    if n.channel == channel {
                        out.push(n.time - e.time);
                    }
                }
            }
        }
    }
    out
}

/// Waiting times pooled over an ensemble.
pub fn ensemble_waiting_times(records: &[EmissionRecord], channel: Channel, rule: WaitingRule) -> Vec<f64> {
    records
        .iter()
        .flat_map(|r| waiting_times_with(&r.events, channel, rule))
        .collect()
}

/// Interior dark durations pooled over an ensemble.
pub fn dark_durations(records: &[EmissionRecord], gap_threshold: f64) -> Result<Vec<f64>, AnalysisError> {
    let mut out = Vec::new();
    for r in records {
        out.extend(segment_periods(r, gap_threshold)?.interior_darks().map(|p| p.duration));
    }
    Ok(out)
}

/// Where the weak photon of one dark period sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DarkPlacement {
    Before,
    After,
    /// No weak photon inside the dark period.
    None,
}

/// Places each interior dark period by the weak photon closest to one of
/// its edges.
pub fn classify_darks(record: &EmissionRecord, gap_threshold: f64) -> Result<Vec<DarkPlacement>, AnalysisError> {
    let seg = segment_periods(record, gap_threshold)?;
    let weak = record.times(Channel::Weak);
    let mut out = Vec::new();
    for dark in seg.interior_darks() {
        let (a, b) = (dark.start, dark.end());
        let lo = weak.partition_point(|&t| t <= a);
        let hi = weak.partition_point(|&t| t < b);
        let mut best: Option<(f64, DarkPlacement)> = None;
        for &w in &weak[lo..hi] {
            for (d, place) in [(w - a, DarkPlacement::Before), (b - w, DarkPlacement::After)] {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, place));
                }
            }
        }
        out.push(best.map_or(DarkPlacement::None, |(_, p)| p));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderingSummary {
    pub before: usize,
    pub after: usize,
    pub without_weak: usize,
}

impl OrderingSummary {
    pub fn with_weak(&self) -> usize {
        self.before + self.after
    }

    /// Fraction of dark periods containing a weak photon that place it on
    /// the expected side.
    pub fn fraction(&self, expected: EmissionOrdering) -> f64 {
        let hits = match expected {
            EmissionOrdering::Before => self.before,
            EmissionOrdering::After => self.after,
        };
        if self.with_weak() == 0 {
            0.0
        } else {
            hits as f64 / self.with_weak() as f64
        }
    }
}

pub fn ordering_summary(records: &[EmissionRecord], gap_threshold: f64) -> Result<OrderingSummary, AnalysisError> {
    let mut s = OrderingSummary::default();
    for r in records {
        for p in classify_darks(r, gap_threshold)? {
            match p {
                DarkPlacement::Before => s.before += 1,
                DarkPlacement::After => s.after += 1,
                DarkPlacement::None => s.without_weak += 1,
            }
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub gap_threshold: f64,
    pub rule: WaitingRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub strong: Option<KsResult>,
    pub weak: Option<KsResult>,
    /// Mean bright duration of `a` over that of `b`.
    pub bright_mean_ratio: Option<f64>,
    /// Mean interior dark duration of `a` over that of `b`.
    pub dark_mean_ratio: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn period_means(records: &[EmissionRecord], threshold: f64) -> Result<(Option<f64>, Option<f64>), AnalysisError> {
    let (mut bright, mut dark) = (Vec::new(), Vec::new());
    for r in records {
        let seg = segment_periods(r, threshold)?;
        bright.extend(seg.of_kind(PeriodKind::Bright).map(|p| p.duration));
        dark.extend(seg.interior_darks().map(|p| p.duration));
    }
    Ok((mean(&bright), mean(&dark)))
}

/// Two-sample KS per channel plus bright/dark mean ratios.
pub fn compare_records(
    a: &[EmissionRecord],
    b: &[EmissionRecord],
    opts: &CompareOptions,
) -> Result<Comparison, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptyEnsemble);
    }
    let ks = |channel| {
        let x = ensemble_waiting_times(a, channel, opts.rule);
        let y = ensemble_waiting_times(b, channel, opts.rule);
        (!x.is_empty() && !y.is_empty()).then(|| ks_two_sample(&x, &y))
    };
    let (ba, da) = period_means(a, opts.gap_threshold)?;
    let (bb, db) = period_means(b, opts.gap_threshold)?;
    let ratio = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) if y > 0.0 => Some(x / y),
        _ => None,
    };
    Ok(Comparison {
        strong: ks(Channel::Strong),
        weak: ks(Channel::Weak),
        bright_mean_ratio: ratio(ba, bb),
        dark_mean_ratio: ratio(da, db),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

/// Equal-width histogram over `[0, max(samples)]`.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let top = samples.iter().copied().fold(0.0, f64::max);
    let width = if top > 0.0 { top / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for &s in samples {
        let i = ((s / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_left: i as f64 * width,
            bin_right: (i + 1) as f64 * width,
            count,
        })
        .collect()
}

pub fn write_histogram_csv<W: Write>(out: W, bins: &[HistogramBin]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(t_max: f64, events: &[(f64, Channel)]) -> EmissionRecord {
        EmissionRecord {
            t_max,
            events: events.iter().map(|&(time, channel)| Emission { time, channel }).collect(),
        }
    }

    use Channel::{Strong as S, Weak as W};

    #[test]
    fn bright_then_dark() {
        let r = record(500.0, &[(1.0, S), (2.0, S), (3.0, S), (500.0, S)]);
        let seg = segment_periods(&r, 50.0).unwrap();
        assert_eq!(seg.periods[0], Period { kind: PeriodKind::Bright, start: 0.0, duration: 3.0 });
        assert_eq!(seg.periods[1], Period { kind: PeriodKind::Dark, start: 3.0, duration: 497.0 });
        assert_eq!(seg.periods.len(), 3);
        assert_eq!(seg.periods[2].duration, 0.0);
    }

    #[test]
    fn no_gap_is_one_bright_period() {
        let r = record(10.0, &[(1.0, S), (2.0, S), (9.0, S)]);
        let seg = segment_periods(&r, 50.0).unwrap();
        assert_eq!(seg.periods, vec![Period { kind: PeriodKind::Bright, start: 0.0, duration: 10.0 }]);
    }

    #[test]
    fn empty_record_is_one_dark_period() {
        let seg = segment_periods(&record(42.0, &[]), 5.0).unwrap();
        assert_eq!(seg.periods, vec![Period { kind: PeriodKind::Dark, start: 0.0, duration: 42.0 }]);
        assert_eq!(seg.interior_darks().count(), 0);
    }

    #[test]
    fn waiting_time_rules() {
        let r = record(10.0, &[(1.0, S), (4.0, W), (6.0, S)]);
        assert_eq!(waiting_times(&r, S), vec![5.0, 2.0]);
        assert_eq!(waiting_times_with(&r.events, S, WaitingRule::NextPhoton), vec![2.0]);
        assert_eq!(waiting_times_with(&r.events, W, WaitingRule::NextPhoton), vec![3.0]);
        assert!(waiting_times(&record(10.0, &[(1.0, S)]), S).is_empty());
    }

    #[test]
    fn dark_placement() {
        // Weak photon just after the dark starts, then just before it ends.
        let r = record(
            1000.0,
            &[(1.0, S), (2.0, W), (300.0, S), (301.0, S), (590.0, W), (600.0, S), (601.0, S), (900.0, S)],
        );
        assert_eq!(
            classify_darks(&r, 100.0).unwrap(),
            vec![DarkPlacement::Before, DarkPlacement::After, DarkPlacement::None]
        );
        let s = ordering_summary(&[r], 100.0).unwrap();
        assert_eq!((s.before, s.after, s.without_weak), (1, 1, 1));
        assert_eq!(s.fraction(EmissionOrdering::After), 0.5);
    }

    #[test]
    fn comparison_with_itself() {
        let r = record(100.0, &[(1.0, S), (4.0, W), (6.0, S), (9.0, S), (50.0, W), (70.0, S)]);
        let c = compare_records(&[r.clone()], &[r], &CompareOptions { gap_threshold: 20.0, rule: WaitingRule::NextOfChannel })
            .unwrap();
        assert_eq!(c.strong.unwrap().statistic, 0.0);
        assert_eq!(c.weak.unwrap().statistic, 0.0);
        assert_eq!(c.dark_mean_ratio, Some(1.0));
        assert!(compare_records(&[], &[], &CompareOptions { gap_threshold: 1.0, rule: WaitingRule::NextPhoton }).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.5, 1.0, 2.0], 2);
        assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), 4);
        assert_eq!(h[1].bin_right, 2.0);
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &h).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("bin_left,bin_right,count\n0.0,1.0,2\n"));
    }

    fn arb_record() -> impl Strategy<Value = EmissionRecord> {
        (1.0f64..1e4, prop::collection::vec((0.0f64..1.0, any::<bool>()), 0..200)).prop_map(|(t_max, raw)| {
            let mut events: Vec<Emission> = raw
                .into_iter()
                .map(|(u, strong)| Emission {
                    time: u * t_max,
                    channel: if strong { S } else { W },
                })
                .collect();
            events.sort_by(|a, b| a.time.total_cmp(&b.time));
            EmissionRecord { t_max, events }
        })
    }

    proptest! {
        #[test]
        fn periods_tile_the_window(r in arb_record(), threshold in 0.1f64..500.0) {
            let seg = segment_periods(&r, threshold).unwrap();
            prop_assert!((seg.total_duration() - r.t_max).abs() <= 1e-9 * r.t_max);
            prop_assert_eq!(seg.periods[0].start, 0.0);
            for w in seg.periods.windows(2) {
                prop_assert!(w[0].kind != w[1].kind);
                prop_assert!((w[0].end() - w[1].start).abs() <= 1e-9 * r.t_max);
            }
            for p in &seg.periods {
                prop_assert!(p.duration >= 0.0);
                if p.kind == PeriodKind::Dark {
                    prop_assert!(p.duration >= threshold);
                }
            }
        }

        #[test]
        fn waiting_times_are_positive(r in arb_record()) {
            for rule in [WaitingRule::NextOfChannel, WaitingRule::NextPhoton] {
                for ch in [S, W] {
                    prop_assert!(waiting_times_with(&r.events, ch, rule).iter().all(|&w| w > 0.0));
                }
            }
        }
    }
}
