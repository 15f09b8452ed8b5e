use crate::error::{Error, Result};

/// Uniform histogram over `[min, max]` of the input values.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// A constant input collapses to a single bin.
    pub fn build(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("histogram of no values".into()));
        }
        if bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value(
                "histogram input contains non-finite values".into(),
            ));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = if max > min { bins } else { 1 };
        let mut counts = vec![0; bins];
        let width = (max - min) / bins as f64;
        for &v in values {
            let idx = if width > 0.0 {
                (((v - min) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[idx] += 1;
        }
        Ok(Self { min, max, counts })
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }

    pub fn bin_center(&self, idx: usize) -> f64 {
        if self.max > self.min {
            self.min + (idx as f64 + 0.5) * self.bin_width()
        } else {
            self.min
        }
    }

    /// Index of the most populated bin; the lowest such bin on ties.
    pub fn peak_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Center of the most populated histogram bin, used as an adaptive
/// threshold.
pub fn histogram_peak(values: &[f64], bins: usize) -> Result<f64> {
    let hist = Histogram::build(values, bins)?;
    Ok(hist.bin_center(hist.peak_bin()))
}
