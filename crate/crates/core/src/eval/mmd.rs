//! Kernel two-sample discrepancy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{sq_dist, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `exp(−‖x − y‖² / 2σ²)`
    Gaussian { sigma: f64 },
    /// `−‖x − y‖^p`, `0 < p < 2`; MMD² is then the energy distance.
    NegativeDistance { p: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => Err(
                Error::Config(format!("kernel bandwidth must be > 0, got {sigma}")),
            ),
            KernelSpec::NegativeDistance { p } if !(p > 0.0 && p < 2.0) => Err(Error::Config(
                format!("negative-distance exponent must lie in (0, 2), got {p}"),
            )),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq = sq_dist(x, y);
        match *self {
            KernelSpec::Gaussian { sigma } => (-sq / (2.0 * sigma * sigma)).exp(),
            KernelSpec::NegativeDistance { p } => -sq.powf(p / 2.0),
        }
    }

    /// Weighted mean of `k(x_i, y_j)` over both sets.
    fn cross_mean(&self, a: &PointSet, b: &PointSet) -> f64 {
        let wb = b.weight_vec();
        a.iter()
            .enumerate()
            .map(|(i, x)| {
                let row: f64 = b.iter().zip(&wb).map(|(y, w)| w * self.eval(x, y)).sum();
                a.weight(i) * row
            })
            .sum()
    }
}

/// Median pairwise distance of the set, a common Gaussian bandwidth.
pub fn median_bandwidth(points: &PointSet) -> f64 {
    let m = points.len();
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            d.push(sq_dist(points.point(i), points.point(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *med > 0.0 {
        *med
    } else {
        1.0
    }
}

fn check(a: &PointSet, b: &PointSet, kernel: &KernelSpec) -> Result<()> {
    kernel.validate()?;
    b.ensure_dim(a.dim())
}

/// Squared MMD, biased V-statistic over the (weighted) sets including the
/// diagonal, clamped at 0.
pub fn mmd(a: &PointSet, b: &PointSet, kernel: &KernelSpec) -> Result<f64> {
    check(a, b, kernel)?;
    let value = kernel.cross_mean(a, a) + kernel.cross_mean(b, b) - 2.0 * kernel.cross_mean(a, b);
    Ok(value.max(0.0))
}

/// Squared MMD, unbiased U-statistic on unweighted samples; may be negative.
pub fn mmd_unbiased(a: &PointSet, b: &PointSet, kernel: &KernelSpec) -> Result<f64> {
    check(a, b, kernel)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "unbiased MMD needs at least two points per set".into(),
        ));
    }
    let within = |s: &PointSet| {
        let m = s.len();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    total += kernel.eval(s.point(i), s.point(j));
                }
            }
        }
        total / (m * (m - 1)) as f64
    };
    let cross: f64 = a
        .iter()
        .map(|x| b.iter().map(|y| kernel.eval(x, y)).sum::<f64>())
        .sum::<f64>()
        / (a.len() * b.len()) as f64;
    Ok(within(a) + within(b) - 2.0 * cross)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_multisets_have_zero_mmd() {
        let a = PointSet::from_rows(&[[0.0, 1.0], [2.0, 3.0], [0.0, 1.0]]).unwrap();
        let k = KernelSpec::Gaussian { sigma: 0.7 };
        assert!(mmd(&a, &a, &k).unwrap() < 1e-12);
        let shuffled = PointSet::from_rows(&[[2.0, 3.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(mmd(&a, &shuffled, &k).unwrap() < 1e-12);
    }

    #[test]
    fn singleton_formula() {
        let a = PointSet::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = PointSet::from_rows(&[[1.0, 2.0]]).unwrap();
        let sigma: f64 = 1.5;
        let want = 2.0 - 2.0 * (-5.0 / (2.0 * sigma * sigma)).exp();
        let got = mmd(&a, &b, &KernelSpec::Gaussian { sigma }).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn kernel_validation() {
        let a = PointSet::from_rows(&[[0.0]]).unwrap();
        for k in [
            KernelSpec::Gaussian { sigma: 0.0 },
            KernelSpec::NegativeDistance { p: 2.0 },
            KernelSpec::NegativeDistance { p: 0.0 },
        ] {
            assert!(mmd(&a, &a, &k).is_err());
        }
    }

    #[test]
    fn energy_distance_on_the_line() {
        // 2|x−y| − |x−x| − |y−y| for singletons
        let a = PointSet::from_rows(&[[0.0]]).unwrap();
        let b = PointSet::from_rows(&[[3.0]]).unwrap();
        let got = mmd(&a, &b, &KernelSpec::NegativeDistance { p: 1.0 }).unwrap();
        assert!((got - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbiased_statistic_can_be_negative() {
        let a = PointSet::from_rows(&[[0.0], [1.0]]).unwrap();
        let u = mmd_unbiased(&a, &a, &KernelSpec::Gaussian { sigma: 1.0 }).unwrap();
        // 2k(0,1) − (1 + k(0,1)) = k(0,1) − 1
        assert!(u < 0.0);
    }
}
