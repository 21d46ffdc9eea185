//! Equal-frequency label bins over a central coverage mass.
//!
//! `edges` holds `class_count + 1` values: the lower coverage bound, the
//! `class_count - 1` interior edges and the upper coverage bound. Class `k`
//! is the interval `(edges[k], edges[k + 1]]`; values outside the coverage
//! bounds fall into the first or last class.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub edges: Vec<f64>,
    pub class_count: usize,
    /// Requested central mass.
    pub coverage: f64,
    /// Fraction of the fitting sample inside the coverage bounds.
    pub coverage_achieved: f64,
}

/// Inverse empirical CDF on sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64 - 1e-9).ceil() as isize - 1;
    sorted[rank.clamp(0, n as isize - 1) as usize]
}

pub fn make_bins(values: &[f64], class_count: usize, coverage: f64) -> Result<BinSpec, IngestError> {
    if values.is_empty() {
        return Err(IngestError::InvalidBins("no values".into()));
    }
    if class_count < 2 {
        return Err(IngestError::InvalidBins("need at least two classes".into()));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(IngestError::InvalidBins(format!("coverage {coverage} outside (0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(IngestError::InvalidBins("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < class_count {
        return Err(IngestError::TooFewDistinct { distinct: distinct.len(), classes: class_count });
    }
    let lo = (1.0 - coverage) / 2.0;
    let step = coverage / class_count as f64;
    let mut interior: Vec<f64> = Vec::with_capacity(class_count - 1);
    for k in 1..class_count {
        let mut e = quantile(&sorted, lo + step * k as f64);
        if let Some(&prev) = interior.last() {
            if e <= prev {
                let next = distinct.partition_point(|&d| d <= prev);
                e = distinct[next.min(distinct.len() - 1)];
            }
        }
        interior.push(e);
    }
    // Every class above edge i needs a distinct value of its own.
    let spare = distinct.len() - class_count;
    for (i, e) in interior.iter_mut().enumerate() {
        *e = e.min(distinct[spare + i]);
    }
    let last = interior[class_count - 2];
    let lower = quantile(&sorted, lo).min(interior[0]);
    let upper = quantile(&sorted, lo + coverage).max(distinct[distinct.partition_point(|&d| d <= last)]);
    let inside = sorted.iter().filter(|&&v| v >= lower && v <= upper).count();
    let mut edges = Vec::with_capacity(class_count + 1);
    edges.push(lower);
    edges.extend(interior);
    edges.push(upper);
    Ok(BinSpec { edges, class_count, coverage, coverage_achieved: inside as f64 / sorted.len() as f64 })
}

impl BinSpec {
    pub fn interior(&self) -> &[f64] {
        &self.edges[1..self.class_count]
    }

    pub fn assign(&self, value: f64) -> usize {
        self.interior().partition_point(|&e| e < value)
    }

    pub fn is_overflow(&self, value: f64) -> bool {
        value < self.edges[0] || value > self.edges[self.class_count]
    }

    /// Integer value drawn uniformly from the class interval; the first class
    /// includes its lower bound.
    pub fn decode<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> i64 {
        let k = class.min(self.class_count - 1);
        let hi = self.edges[k + 1].floor() as i64;
        let lo = if k == 0 { self.edges[0].ceil() as i64 } else { self.edges[k].floor() as i64 + 1 };
        if lo >= hi {
            return hi;
        }
        rng.random_range(lo..=hi)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.edges.len() != self.class_count + 1 {
            return Err(IngestError::InvalidBins("edge count does not match class count".into()));
        }
        let interior = self.interior();
        if interior.windows(2).any(|w| w[0] >= w[1]) || self.edges[0] > interior[0] || self.edges[self.class_count] <= interior[interior.len() - 1] {
            return Err(IngestError::InvalidBins("edges are not increasing".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    #[test]
    fn uniform_coverage_counts() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        let spec = make_bins(&v, 20, 0.8).unwrap();
        spec.validate().unwrap();
        let mut counts = vec![0usize; 20];
        for &x in &v {
            if !spec.is_overflow(x) {
                counts[spec.assign(x)] += 1;
            }
        }
        assert!(counts.iter().all(|&c| (38..=42).contains(&c)), "{counts:?}");
        assert!((spec.coverage_achieved - 0.8).abs() < 0.01);
    }

    #[test]
    fn median_split_and_edges() {
        let spec = make_bins(&[1.0, 2.0, 3.0, 4.0], 2, 1.0).unwrap();
        assert_eq!(spec.interior(), &[2.0]);
        assert_eq!(spec.assign(2.0), 0);
        assert_eq!(spec.assign(3.0), 1);
        assert_eq!(spec.assign(-5.0), 0);
        assert_eq!(spec.assign(1e9), 1);
        assert!(matches!(make_bins(&[3.0; 50], 2, 0.8), Err(IngestError::TooFewDistinct { .. })));
        assert!(make_bins(&[1.0, 2.0], 2, 1.0).is_ok());
    }

    #[test]
    fn skewed_data_keeps_edges_increasing() {
        let mut v = vec![1.0; 900];
        v.extend((2..=101).map(f64::from));
        let spec = make_bins(&v, 20, 0.8).unwrap();
        spec.validate().unwrap();
        let mut rng = rng_for(1, "bins");
        for k in 0..20 {
            let d = spec.decode(k, &mut rng) as f64;
            assert_eq!(spec.assign(d), k, "class {k} decoded to {d}");
        }
    }
}
