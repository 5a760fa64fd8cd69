//! Exact density-of-states histograms: per-criterion 1D binning and the
//! joint 2D occupancy over (CVE, FE).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform linear binning of an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Validation("axis needs at least one bin".into()));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::Validation(format!(
                "invalid axis range [{min}, {max}]"
            )));
        }
        Ok(Axis { min, max, bins })
    }

    /// Axis spanning the observed values. A degenerate (single-valued) range
    /// is widened symmetrically so the histogram stays well defined.
    pub fn covering(values: impl IntoIterator<Item = f64>, bins: usize) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Validation("cannot bin an empty or non-finite value set".into()));
        }
        if min == max {
            let pad = 0.5 * min.abs().max(1.0);
            min -= pad;
            max += pad;
        }
        Axis::new(min, max, bins)
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.bins as f64
    }

    /// Bin holding `v`, or `None` when `v` lies outside the range. The right
    /// edge belongs to the last bin.
    pub fn bin_index(&self, v: f64) -> Option<usize> {
        if !v.is_finite() || v < self.min || v > self.max {
            return None;
        }
        let idx = ((v - self.min) / (self.max - self.min) * self.bins as f64) as usize;
        Some(idx.min(self.bins - 1))
    }

    pub fn bin_lo(&self, idx: usize) -> f64 {
        self.min + idx as f64 * self.width()
    }

    pub fn bin_hi(&self, idx: usize) -> f64 {
        self.min + (idx + 1) as f64 * self.width()
    }

    pub fn bin_center(&self, idx: usize) -> f64 {
        self.min + (idx as f64 + 0.5) * self.width()
    }
}

/// Exact 1D density of states: integer counts per energy bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dos1d {
    pub axis: Axis,
    pub counts: Vec<u64>,
}

impl Dos1d {
    pub fn new(axis: Axis) -> Self {
        let counts = vec![0; axis.bins];
        Dos1d { axis, counts }
    }

    pub fn record(&mut self, v: f64) -> Result<()> {
        let idx = self.axis.bin_index(v).ok_or_else(|| {
            Error::Validation(format!(
                "value {v} outside binning range [{}, {}]",
                self.axis.min, self.axis.max
            ))
        })?;
        self.counts[idx] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merge by bin-wise summation; axes must match exactly.
    pub fn merge(&mut self, other: &Dos1d) {
        assert_eq!(self.axis, other.axis, "merging histograms with different axes");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// log10 of each count; empty bins yield `None`.
    pub fn log10_counts(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64).log10()))
            .collect()
    }

    /// CSV rows `bin_lo,bin_hi,count` for every bin.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (i, &c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", self.axis.bin_lo(i), self.axis.bin_hi(i), c)?;
        }
        Ok(())
    }
}

/// Exact joint density of states over (CVE, FE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dos2d {
    pub cve_axis: Axis,
    pub fe_axis: Axis,
    /// Row-major: `counts[cve_bin * fe_bins + fe_bin]`.
    pub counts: Vec<u64>,
}

impl Dos2d {
    pub fn new(cve_axis: Axis, fe_axis: Axis) -> Self {
        let counts = vec![0; cve_axis.bins * fe_axis.bins];
        Dos2d {
            cve_axis,
            fe_axis,
            counts,
        }
    }

    pub fn record(&mut self, cve: f64, fe: f64) -> Result<()> {
        let ci = self.cve_axis.bin_index(cve).ok_or_else(|| {
            Error::Validation(format!("CVE value {cve} outside binning range"))
        })?;
        let fi = self.fe_axis.bin_index(fe).ok_or_else(|| {
            Error::Validation(format!("FE value {fe} outside binning range"))
        })?;
        self.counts[ci * self.fe_axis.bins + fi] += 1;
        Ok(())
    }

    pub fn count(&self, cve_bin: usize, fe_bin: usize) -> u64 {
        self.counts[cve_bin * self.fe_axis.bins + fe_bin]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Dos2d) {
        assert_eq!(self.cve_axis, other.cve_axis);
        assert_eq!(self.fe_axis, other.fe_axis);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Marginal over FE bins: the 1D CVE histogram.
    pub fn marginal_cve(&self) -> Dos1d {
        let mut dos = Dos1d::new(self.cve_axis.clone());
        for ci in 0..self.cve_axis.bins {
            dos.counts[ci] = (0..self.fe_axis.bins).map(|fi| self.count(ci, fi)).sum();
        }
        dos
    }

    /// Marginal over CVE bins: the 1D FE histogram.
    pub fn marginal_fe(&self) -> Dos1d {
        let mut dos = Dos1d::new(self.fe_axis.clone());
        for fi in 0..self.fe_axis.bins {
            dos.counts[fi] = (0..self.cve_axis.bins).map(|ci| self.count(ci, fi)).sum();
        }
        dos
    }

    /// CSV rows `cve_lo,cve_hi,fe_lo,fe_hi,count` for occupied cells.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "cve_lo,cve_hi,fe_lo,fe_hi,count")?;
        for ci in 0..self.cve_axis.bins {
            for fi in 0..self.fe_axis.bins {
                let c = self.count(ci, fi);
                if c > 0 {
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        self.cve_axis.bin_lo(ci),
                        self.cve_axis.bin_hi(ci),
                        self.fe_axis.bin_lo(fi),
                        self.fe_axis.bin_hi(fi),
                        c
                    )?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_edge_lands_in_last_bin() {
        let axis = Axis::new(0.0, 1.0, 4).unwrap();
        assert_eq!(axis.bin_index(0.0), Some(0));
        assert_eq!(axis.bin_index(1.0), Some(3));
        assert_eq!(axis.bin_index(1.0000001), None);
        assert_eq!(axis.bin_index(-0.1), None);
    }

    #[test]
    fn covering_handles_degenerate_range() {
        let axis = Axis::covering([2.0, 2.0, 2.0], 10).unwrap();
        assert!(axis.min < 2.0 && axis.max > 2.0);
        assert_eq!(axis.bin_index(2.0).is_some(), true);
    }

    #[test]
    fn single_value_one_bin() {
        let mut dos = Dos1d::new(Axis::covering([3.7], 200).unwrap());
        dos.record(3.7).unwrap();
        assert_eq!(dos.total(), 1);
        assert_eq!(dos.counts.iter().filter(|&&c| c > 0).count(), 1);
    }
}
