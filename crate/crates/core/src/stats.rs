//! Compensated sums, block jackknife and angle helpers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::types::C64;

/// Neumaier compensated sum of `f64`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated complex sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexSum {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl ComplexSum {
    pub fn add(&mut self, z: C64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn merge(&mut self, other: &ComplexSum) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re.value(), self.im.value())
    }
}

/// Principal value in `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// The representative of `angle` (mod 2π) closest to `reference`.
pub fn nearest_branch(angle: f64, reference: f64) -> f64 {
    reference + wrap_angle(angle - reference)
}

/// Continuous phase of a complex series, starting from the principal
/// value of its first element.
pub fn unwrap_args(series: &[C64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (j, z) in series.iter().enumerate() {
        if j == 0 {
            acc = z.arg();
        } else {
            acc += (z / series[j - 1]).arg();
        }
        out.push(acc);
    }
    out
}

/// Jackknife standard error from leave-one-block-out replicates.
pub fn jackknife_error(replicates: &[f64]) -> f64 {
    let b = replicates.len();
    if b < 2 {
        return 0.0;
    }
    let mean = replicates.iter().sum::<f64>() / b as f64;
    let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
    ((b as f64 - 1.0) / b as f64 * ss).sqrt()
}

/// Jackknife standard error of a complex-valued replicate set, measured as
/// the root of the summed component variances.
pub fn jackknife_error_complex(replicates: &[C64]) -> f64 {
    let b = replicates.len();
    if b < 2 {
        return 0.0;
    }
    let mean = replicates.iter().sum::<C64>() / b as f64;
    let ss: f64 = replicates.iter().map(|r| (r - mean).norm_sqr()).sum();
    ((b as f64 - 1.0) / b as f64 * ss).sqrt()
}

/// Mean and standard error of independent samples.
pub fn mean_and_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Contiguous block boundaries for `n` items split into at most `blocks` parts.
pub fn block_ranges(n: usize, blocks: usize) -> Vec<std::ops::Range<usize>> {
    let b = blocks.clamp(1, n.max(1));
    (0..b).map(|k| (k * n / b)..((k + 1) * n / b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn wrapping() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((nearest_branch(0.1, 2.0 * PI) - (2.0 * PI + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn unwrap_follows_winding() {
        let series: Vec<C64> = (0..200).map(|k| C64::from_polar(1.0, -0.05 * k as f64)).collect();
        let u = unwrap_args(&series);
        assert!((u[199] + 0.05 * 199.0).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_mean_matches_textbook_error() {
        let xs: Vec<f64> = (0..40).map(|k| ((k * 37) % 11) as f64).collect();
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let reps: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let (_, se) = mean_and_error(&xs);
        assert!((jackknife_error(&reps) - se).abs() < 1e-12);
    }

    #[test]
    fn blocks_cover_range() {
        let r = block_ranges(103, 10);
        assert_eq!(r.len(), 10);
        assert_eq!(r[0].start, 0);
        assert_eq!(r[9].end, 103);
        assert!(r.windows(2).all(|w| w[0].end == w[1].start));
        assert_eq!(block_ranges(3, 10).len(), 3);
    }
}
