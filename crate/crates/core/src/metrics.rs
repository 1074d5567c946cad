//! Evaluation metrics: histogram intersection against uniform, the quantile
//! shift function, and task metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default trailing window for windowed HI scores.
pub const DEFAULT_HI_WINDOW: usize = 1_000;

/// Deciles 0.1..=0.9.
pub const DECILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("interval index {index} out of range for {bins} bins")]
    IndexOutOfRange { index: usize, bins: usize },
    #[error("window must be > 0")]
    ZeroWindow,
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFiniteSample,
    #[error("probabilities must be strictly increasing inside (0, 1)")]
    InvalidProbabilities,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Activation counts per interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl IntervalHistogram {
    pub fn new(bins: usize) -> Result<Self, MetricsError> {
        if bins == 0 {
            return Err(MetricsError::NoBins);
        }
        Ok(Self {
            counts: vec![0; bins],
            total: 0,
        })
    }

    pub fn from_counts(counts: Vec<u64>) -> Result<Self, MetricsError> {
        if counts.is_empty() {
            return Err(MetricsError::NoBins);
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn record(&mut self, index: usize) -> Result<(), MetricsError> {
        let bins = self.counts.len();
        let slot = self
            .counts
            .get_mut(index)
            .ok_or(MetricsError::IndexOutOfRange { index, bins })?;
        *slot += 1;
        self.total += 1;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

/// Counts the last `min(window, outputs.len())` interval indices.
pub fn interval_histogram(outputs: &[usize], bins: usize, window: usize) -> Result<IntervalHistogram, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let mut hist = IntervalHistogram::new(bins)?;
    let start = outputs.len().saturating_sub(window);
    for &index in &outputs[start..] {
        hist.record(index)?;
    }
    Ok(hist)
}

/// Histogram intersection with the exact uniform distribution over the
/// histogram's bins: `sum_i min(c_i / total, 1 / M)`.
pub fn hi_score(observed: &IntervalHistogram) -> Result<f64, MetricsError> {
    if observed.total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let total = observed.total as f64;
    let uniform = 1.0 / observed.bins() as f64;
    Ok(observed.counts.iter().map(|&c| (c as f64 / total).min(uniform)).sum())
}

/// Trailing-window interval counts maintained in O(1) per observation.
#[derive(Debug, Clone)]
pub struct WindowedHistogram {
    ring: Vec<usize>,
    head: usize,
    filled: usize,
    hist: IntervalHistogram,
}

impl WindowedHistogram {
    pub fn new(bins: usize, window: usize) -> Result<Self, MetricsError> {
        if window == 0 {
            return Err(MetricsError::ZeroWindow);
        }
        Ok(Self {
            ring: vec![0; window],
            head: 0,
            filled: 0,
            hist: IntervalHistogram::new(bins)?,
        })
    }

    pub fn push(&mut self, index: usize) -> Result<(), MetricsError> {
        self.hist.record(index)?;
        if self.filled == self.ring.len() {
            let evicted = self.ring[self.head];
            self.hist.counts[evicted] -= 1;
            self.hist.total -= 1;
        } else {
            self.filled += 1;
        }
        self.ring[self.head] = index;
        self.head = (self.head + 1) % self.ring.len();
        Ok(())
    }

    pub fn histogram(&self) -> &IntervalHistogram {
        &self.hist
    }

    pub fn hi_score(&self) -> Result<f64, MetricsError> {
        hi_score(&self.hist)
    }
}

/// Per-quantile difference between two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProfile {
    pub probs: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl ShiftProfile {
    /// CSV with columns `prob,delta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("prob,delta\n");
        for (p, d) in self.probs.iter().zip(&self.deltas) {
            out.push_str(&format!("{p},{d}\n"));
        }
        out
    }
}

fn sorted_finite(sample: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if sample.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFiniteSample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Linear interpolation between order statistics at position `p * (n - 1)`.
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Empirical quantile of an unsorted sample.
pub fn empirical_quantile(sample: &[f64], p: f64) -> Result<f64, MetricsError> {
    Ok(quantile_sorted(&sorted_finite(sample)?, p))
}

/// `deltas[k] = Q_target(probs[k]) - Q_source(probs[k])`.
pub fn shift_function(source: &[f64], target: &[f64], probs: &[f64]) -> Result<ShiftProfile, MetricsError> {
    let valid = !probs.is_empty() && probs.iter().all(|&p| p > 0.0 && p < 1.0) && probs.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(MetricsError::InvalidProbabilities);
    }
    let source = sorted_finite(source)?;
    let target = sorted_finite(target)?;
    let deltas = probs
        .iter()
        .map(|&p| quantile_sorted(&target, p) - quantile_sorted(&source, p))
        .collect();
    Ok(ShiftProfile {
        probs: probs.to_vec(),
        deltas,
    })
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let sum: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean and sample standard deviation over independent runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample SD (n - 1 denominator); 0 when `n == 1`.
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n })
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3} (n={})", self.mean, self.sd, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: &[u64]) -> IntervalHistogram {
        IntervalHistogram::from_counts(counts.to_vec()).unwrap()
    }

    #[test]
    fn hi_score_examples() {
        assert_eq!(hi_score(&hist(&[5, 5, 5, 5])).unwrap(), 1.0);
        assert_eq!(hi_score(&hist(&[10, 0, 0, 0])).unwrap(), 0.25);
        assert_eq!(hi_score(&hist(&[2, 2, 0, 0])).unwrap(), 0.5);
        assert_eq!(hi_score(&hist(&[0, 0])).unwrap_err(), MetricsError::EmptyHistogram);
    }

    #[test]
    fn histogram_windowing() {
        assert_eq!(interval_histogram(&[0, 1, 2, 3], 4, 4).unwrap().counts(), &[1, 1, 1, 1]);
        assert_eq!(interval_histogram(&[0, 0, 0, 1], 2, 2).unwrap().counts(), &[1, 1]);
        let h = interval_histogram(&[0, 0, 1], 2, 100).unwrap();
        assert_eq!(h.counts(), &[2, 1]);
        assert_eq!(h.total(), 3);
        assert_eq!(
            interval_histogram(&[0, 4], 4, 10).unwrap_err(),
            MetricsError::IndexOutOfRange { index: 4, bins: 4 }
        );
        assert_eq!(interval_histogram(&[0], 4, 0).unwrap_err(), MetricsError::ZeroWindow);
    }

    #[test]
    fn windowed_histogram_matches_batch() {
        let outputs: Vec<usize> = (0..257).map(|i| (i * 7 + i / 3) % 8).collect();
        let mut w = WindowedHistogram::new(8, 50).unwrap();
        for (i, &o) in outputs.iter().enumerate() {
            w.push(o).unwrap();
            let batch = interval_histogram(&outputs[..=i], 8, 50).unwrap();
            assert_eq!(w.histogram(), &batch);
        }
    }

    #[test]
    fn shift_function_examples() {
        let s = [3.0, -1.0, 4.0, 1.5, 9.0, 2.6];
        let same = shift_function(&s, &s, &DECILES).unwrap();
        assert!(same.deltas.iter().all(|&d| d == 0.0));
        // With 11 points every decile lands on an order statistic, so the
        // translation is exact.
        let base = [1.0, 2.0, 3.0, 4.0, 10.0, -2.0, 0.5, 7.0, 7.0, 3.25, 11.0];
        let shifted: Vec<f64> = base.iter().map(|x| x + 5.0).collect();
        let p = shift_function(&base, &shifted, &DECILES).unwrap();
        assert!(p.deltas.iter().all(|&d| d == 5.0), "{:?}", p.deltas);
        let short = [1.0, 2.0, 3.0, 4.0, 10.0];
        let shifted: Vec<f64> = short.iter().map(|x| x + 5.0).collect();
        let p = shift_function(&short, &shifted, &DECILES).unwrap();
        assert!(p.deltas.iter().all(|&d| (d - 5.0).abs() < 1e-12), "{:?}", p.deltas);
        assert_eq!(
            shift_function(&[], &s, &DECILES).unwrap_err(),
            MetricsError::EmptySample
        );
        assert_eq!(
            shift_function(&s, &s, &[0.5, 0.4]).unwrap_err(),
            MetricsError::InvalidProbabilities
        );
        assert_eq!(
            shift_function(&s, &s, &[0.0]).unwrap_err(),
            MetricsError::InvalidProbabilities
        );
    }

    #[test]
    fn quantile_endpoints_and_interpolation() {
        let s = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(empirical_quantile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&s, 1.0).unwrap(), 4.0);
        assert_eq!(empirical_quantile(&s, 0.5).unwrap(), 2.5);
        assert_eq!(empirical_quantile(&[7.0], 0.3).unwrap(), 7.0);
    }

    #[test]
    fn task_metrics() {
        assert_eq!(accuracy(&[1, 2, 0], &[1, 2, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[0, 1]).unwrap(), 0.5);
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
        assert_eq!(
            mse(&[1.0], &[0.0, 0.0]).unwrap_err(),
            MetricsError::LengthMismatch(1, 2)
        );
        assert_eq!(accuracy(&[], &[]).unwrap_err(), MetricsError::EmptySample);
    }

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sd, 1.0);
        let one = MeanSd::of(&[0.7]).unwrap();
        assert_eq!((one.sd, one.n), (0.0, 1));
        assert!(MeanSd::of(&[]).is_none());
    }
}
