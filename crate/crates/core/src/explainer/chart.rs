use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHART_SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("no values to chart")]
    EmptyValues,
    #[error("values must be finite numbers")]
    NonFinite,
    #[error("bin count must be at least 1")]
    ZeroBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Histogram,
}

/// Declarative chart for the UI. `counts[i]` covers
/// `[bin_edges[i], bin_edges[i+1])`, the last bin closed on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub version: u32,
    pub kind: ChartKind,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub title: String,
    pub x_label: String,
}

/// Sturges' rule: `ceil(log2 n) + 1`.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    (n as f64).log2().ceil() as usize + 1
}

/// Equal-width histogram over `[min, max]`. A zero-width range is widened to
/// one unit centered on the value.
pub fn make_histogram(values: &[f64], bins: Option<usize>) -> Result<ChartSpec, ChartError> {
    if values.is_empty() {
        return Err(ChartError::EmptyValues);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ChartError::NonFinite);
    }
    let k = bins.unwrap_or_else(|| sturges_bins(values.len()));
    if k == 0 {
        return Err(ChartError::ZeroBins);
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / k as f64;
    let mut edges: Vec<f64> = (0..=k).map(|i| lo + width * i as f64).collect();
    edges[k] = hi;
    let mut counts = vec![0u64; k];
    for &v in values {
        let mut i = (((v - lo) / width).floor().max(0.0) as usize).min(k - 1);
        // Float rounding can put a value one bin off its edges.
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < k && v >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Ok(ChartSpec {
        version: CHART_SPEC_VERSION,
        kind: ChartKind::Histogram,
        bin_edges: edges,
        counts,
        title: String::new(),
        x_label: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_values_spread_evenly() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(make_histogram(&values, Some(5)).unwrap().counts, [2, 2, 2, 2, 2]);
    }

    #[test]
    fn degenerate_range() {
        let h = make_histogram(&[3.0, 3.0, 3.0], Some(4)).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
        let i = h.counts.iter().position(|&c| c == 3).unwrap();
        assert!(h.bin_edges[i] <= 3.0 && 3.0 <= h.bin_edges[i + 1]);
        assert_eq!(make_histogram(&[], None), Err(ChartError::EmptyValues));
    }

    #[test]
    fn sturges() {
        assert_eq!(sturges_bins(100), 8);
        assert_eq!(sturges_bins(1), 1);
    }
}
