//! Segment statistics and histograms over raw records, in dollars and
//! months.
//!
//! Customer lifetime value is taken to be `TotalCharges`, the only
//! cumulative-revenue column; blank cells are filled with the same
//! contract × tenure × monthly product the preprocessing pipeline uses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RawCustomerRecord, RawDataset};
use crate::pipeline::{contract_code, impute_total_charges};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EdaError {
    #[error("no {0} customers in the dataset")]
    MissingSegment(Segment),
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Churned,
    Retained,
}

impl Segment {
    pub fn of(r: &RawCustomerRecord) -> Segment {
        if r.churned() {
            Segment::Churned
        } else {
            Segment::Retained
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Churned => "churned",
            Segment::Retained => "retained",
        }
    }
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub segment: Segment,
    pub field: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SegmentStats {
    fn compute(segment: Segment, field: &str, values: &[f64]) -> Result<SegmentStats, EdaError> {
        if values.is_empty() {
            return Err(EdaError::MissingSegment(segment));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Ok(SegmentStats {
            segment,
            field: field.to_string(),
            count: n,
            mean,
            median,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

/// Uniform-width bins; every bin is `[lo, hi)` except the last, which also
/// includes its upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub field: String,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn with_edges(field: &str, edges: Vec<f64>, values: &[f64]) -> Histogram {
        assert!(edges.len() >= 2 && edges.windows(2).all(|w| w[0] < w[1]));
        let bins = edges.len() - 1;
        let (lo, hi) = (edges[0], edges[bins]);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0; bins];
        for &v in values {
            let mut b = ((v - lo) / width).floor().max(0.0) as usize;
            b = b.min(bins - 1);
            // guard against rounding at the edges
            while b > 0 && v < edges[b] {
                b -= 1;
            }
            while b + 1 < bins && v >= edges[b + 1] {
                b += 1;
            }
            counts[b] += 1;
        }
        Histogram {
            field: field.to_string(),
            edges,
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(e, &c)| (e[0], e[1], c))
    }
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect()
}

fn by_segment(ds: &RawDataset, value: impl Fn(&RawCustomerRecord) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut churned = Vec::new();
    let mut retained = Vec::new();
    for r in &ds.records {
        match Segment::of(r) {
            Segment::Churned => churned.push(value(r)),
            Segment::Retained => retained.push(value(r)),
        }
    }
    (churned, retained)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeDifferential {
    pub churned: SegmentStats,
    pub retained: SegmentStats,
    /// `(churned mean − retained mean) / retained mean × 100`.
    pub premium_percent: f64,
}

pub fn charge_differential(ds: &RawDataset) -> Result<ChargeDifferential, EdaError> {
    let (c, r) = by_segment(ds, |r| r.monthly_charges);
    let churned = SegmentStats::compute(Segment::Churned, "MonthlyCharges", &c)?;
    let retained = SegmentStats::compute(Segment::Retained, "MonthlyCharges", &r)?;
    let premium_percent = (churned.mean - retained.mean) / retained.mean * 100.0;
    Ok(ChargeDifferential {
        churned,
        retained,
        premium_percent,
    })
}

/// `TotalCharges`, imputed when blank.
pub fn lifetime_value(r: &RawCustomerRecord) -> f64 {
    r.total_charges.unwrap_or_else(|| {
        impute_total_charges(
            contract_code(r.contract),
            f64::from(r.tenure),
            r.monthly_charges,
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClvDistribution {
    pub churned: SegmentStats,
    pub retained: SegmentStats,
    pub churned_histogram: Histogram,
    pub retained_histogram: Histogram,
}

pub const CLV_BINS: usize = 30;

/// Both histograms share edges spanning the combined range.
pub fn clv_distribution(ds: &RawDataset) -> Result<ClvDistribution, EdaError> {
    let (c, r) = by_segment(ds, lifetime_value);
    let churned = SegmentStats::compute(Segment::Churned, "TotalCharges", &c)?;
    let retained = SegmentStats::compute(Segment::Retained, "TotalCharges", &r)?;
    let edges = uniform_edges(
        churned.min.min(retained.min),
        churned.max.max(retained.max),
        CLV_BINS,
    );
    Ok(ClvDistribution {
        churned_histogram: Histogram::with_edges("TotalCharges", edges.clone(), &c),
        retained_histogram: Histogram::with_edges("TotalCharges", edges, &r),
        churned,
        retained,
    })
}

/// Integer-month bins `[k·w, (k+1)·w)` covering `0..=max tenure`.
pub fn tenure_histogram(ds: &RawDataset, bin_width: u32) -> Result<Histogram, EdaError> {
    if ds.is_empty() {
        return Err(EdaError::Empty);
    }
    let w = bin_width.max(1);
    let max = ds.records.iter().map(|r| r.tenure).max().unwrap_or(0);
    let bins = max / w + 1;
    let edges: Vec<f64> = (0..=bins).map(|k| f64::from(k * w)).collect();
    let mut counts = vec![0; bins as usize];
    for r in &ds.records {
        counts[(r.tenure / w) as usize] += 1;
    }
    Ok(Histogram {
        field: "tenure".into(),
        edges,
        counts,
    })
}

pub fn charges_csv(d: &ChargeDifferential) -> String {
    let mut out = String::from("segment,count,mean,median,std,min,max\n");
    for s in [&d.churned, &d.retained] {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.segment, s.count, s.mean, s.median, s.std, s.min, s.max
        ));
    }
    out
}

pub fn clv_csv(d: &ClvDistribution) -> String {
    let mut out = String::from("segment,bin_lower,bin_upper,count\n");
    for (segment, h) in [
        (Segment::Churned, &d.churned_histogram),
        (Segment::Retained, &d.retained_histogram),
    ] {
        for (lo, hi, c) in h.bins() {
            out.push_str(&format!("{segment},{lo},{hi},{c}\n"));
        }
    }
    out
}

pub fn tenure_csv(h: &Histogram) -> String {
    let mut out = String::from("tenure_lower,tenure_upper,count\n");
    for (lo, hi, c) in h.bins() {
        out.push_str(&format!("{lo},{hi},{c}\n"));
    }
    out
}
