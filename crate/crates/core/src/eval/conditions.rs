//! Sufficient conditions for a measure coreset: an upper bound on the
//! integral probability metric of a test-function family.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::exact::{exact_wp, SIZE_GUARD};
use crate::eval::mmd::{mmd, KernelSpec};
use crate::points::{Exponent, PointSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FunctionFamily {
    /// 1-Lipschitz functions: bounded by `W_1`.
    Lip1,
    /// Functions with `‖∇f‖²` of mean at most `M`: bounded by `√M · W_2`.
    Sobolev { m: f64 },
    /// Unit ball of an RKHS: bounded by MMD.
    Rkhs { kernel: KernelSpec },
}

impl FunctionFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionFamily::Lip1 => "lip1",
            FunctionFamily::Sobolev { .. } => "sobolev",
            FunctionFamily::Rkhs { .. } => "rkhs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub family: FunctionFamily,
    pub epsilon: f64,
    /// The bound compared against `epsilon`.
    pub bound: f64,
    pub pass: bool,
    /// `epsilon − bound`.
    pub slack: f64,
    /// Size of the `mu` subsample when the input exceeded the exact-transport
    /// guard.
    pub subsampled: Option<usize>,
}

/// Check `bound(mu, nu) ≤ epsilon` for the family. Samples of `mu` that do
/// not fit the exact-transport guard next to `nu` are uniformly subsampled
/// without replacement (fixed seed), and the subsample size is reported.
pub fn coreset_condition_check(
    mu_sample: &PointSet,
    nu: &PointSet,
    epsilon: f64,
    family: FunctionFamily,
) -> Result<ConditionVerdict> {
    nu.ensure_dim(mu_sample.dim())?;
    if !(epsilon >= 0.0) {
        return Err(Error::Config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let room = SIZE_GUARD.saturating_sub(nu.len());
    if room == 0 {
        return Err(Error::SizeGuard {
            size: nu.len() + 1,
            limit: SIZE_GUARD,
        });
    }
    let (mu, subsampled) = if mu_sample.len() > room && !matches!(family, FunctionFamily::Rkhs { .. })
    {
        let mut r = rng::named(0, "condition-subsample");
        let mut idx = sample(&mut r, mu_sample.len(), room).into_vec();
        idx.sort_unstable();
        (mu_sample.select(&idx)?.into_uniform(), Some(room))
    } else {
        (mu_sample.clone(), None)
    };
    let bound = match family {
        FunctionFamily::Lip1 => exact_wp(&mu, nu, Exponent::One)?.0,
        FunctionFamily::Sobolev { m } => {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Config(format!("Sobolev constant must be >= 0, got {m}")));
            }
            m.sqrt() * exact_wp(&mu, nu, Exponent::Two)?.0
        }
        FunctionFamily::Rkhs { kernel } => mmd(&mu, nu, &kernel)?.sqrt(),
    };
    Ok(ConditionVerdict {
        family,
        epsilon,
        bound,
        pass: bound <= epsilon,
        slack: epsilon - bound,
        subsampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_check_passes_everywhere() {
        let a = PointSet::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.3, 2.0]]).unwrap();
        for family in [
            FunctionFamily::Lip1,
            FunctionFamily::Sobolev { m: 4.0 },
            FunctionFamily::Rkhs {
                kernel: KernelSpec::Gaussian { sigma: 1.0 },
            },
        ] {
            for eps in [1e-6, 1.0] {
                assert!(coreset_condition_check(&a, &a, eps, family).unwrap().pass);
            }
        }
    }

    #[test]
    fn known_w1_threshold() {
        // W1 between {0, 1} and {0.5, 1.5} on the line is 0.5.
        let mu = PointSet::from_rows(&[[0.0], [1.0]]).unwrap();
        let nu = PointSet::from_rows(&[[0.5], [1.5]]).unwrap();
        let fail = coreset_condition_check(&mu, &nu, 0.4, FunctionFamily::Lip1).unwrap();
        let pass = coreset_condition_check(&mu, &nu, 0.6, FunctionFamily::Lip1).unwrap();
        assert!(!fail.pass && pass.pass);
        assert!((pass.slack - 0.1).abs() < 1e-12);
    }

    #[test]
    fn oversized_mu_is_subsampled() {
        let mu = PointSet::new(1, (0..1000).map(|i| i as f64 / 1000.0).collect()).unwrap();
        let nu = PointSet::from_rows(&[[0.25], [0.75]]).unwrap();
        let v = coreset_condition_check(&mu, &nu, 1.0, FunctionFamily::Lip1).unwrap();
        assert_eq!(v.subsampled, Some(510));
        // W1 of the uniform law on [0, 1] to these two points is 1/8.
        assert!((v.bound - 0.125).abs() < 0.01, "{}", v.bound);
    }
}
