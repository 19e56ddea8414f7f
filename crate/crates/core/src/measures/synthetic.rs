use std::sync::Arc;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pushforward::{PointMap, PushforwardSampler};
use super::{check_count, Sampler};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianComponent {
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Self {
        let d = mean.len();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| if i == j { sigma * sigma } else { 0.0 }).collect())
            .collect();
        GaussianComponent { mean, covariance }
    }
}

/// Synthetic distributions with exact sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticSpec {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Mixture {
        components: Vec<GaussianComponent>,
        weights: Vec<f64>,
    },
    /// Uniform on `[0, 1]^dim`.
    UniformCube { dim: usize },
    /// Standard 2-D Gaussian pushed through `(x, y) ↦ (x, x² + y)`.
    Banana,
}

/// `(x, y) ↦ (x, x² + y)`.
pub fn banana_map() -> PointMap {
    Arc::new(|p: &[f64]| vec![p[0], p[0] * p[0] + p[1]])
}

impl SyntheticSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        let c = GaussianComponent::isotropic(vec![0.0; dim], 1.0);
        SyntheticSpec::Gaussian {
            mean: c.mean,
            covariance: c.covariance,
        }
    }

    /// Equal-weight isotropic mixture.
    pub fn isotropic_mixture(means: Vec<Vec<f64>>, sigma: f64) -> Self {
        let k = means.len();
        SyntheticSpec::Mixture {
            components: means
                .into_iter()
                .map(|m| GaussianComponent::isotropic(m, sigma))
                .collect(),
            weights: vec![1.0 / k as f64; k],
        }
    }

    /// Named presets accepted on the command line: `gaussian2d`, `banana`,
    /// `uniform2d`, `mixture4`, `gaussian:<d>` and `uniform:<d>`.
    pub fn preset(name: &str) -> Option<Self> {
        let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&d| d >= 1);
        match name {
            "gaussian2d" => Some(Self::standard_gaussian(2)),
            "banana" => Some(SyntheticSpec::Banana),
            "uniform2d" => Some(SyntheticSpec::UniformCube { dim: 2 }),
            "mixture4" => Some(Self::isotropic_mixture(
                vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
                0.1,
            )),
            _ => {
                if let Some(d) = name.strip_prefix("gaussian:") {
                    parse_dim(d).map(Self::standard_gaussian)
                } else if let Some(d) = name.strip_prefix("uniform:") {
                    parse_dim(d).map(|dim| SyntheticSpec::UniformCube { dim })
                } else {
                    None
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SyntheticSpec::Gaussian { mean, .. } => mean.len(),
            SyntheticSpec::Mixture { components, .. } => {
                components.first().map_or(0, |c| c.mean.len())
            }
            SyntheticSpec::UniformCube { dim } => *dim,
            SyntheticSpec::Banana => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SyntheticSpec::Gaussian { mean, covariance } => {
                Factor::new(mean, covariance)?;
            }
            SyntheticSpec::Mixture {
                components,
                weights,
            } => {
                if components.is_empty() || components.len() != weights.len() {
                    return Err(Error::Config(
                        "mixture needs one weight per component and at least one component".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::Config("mixture weights must be >= 0 and sum to 1".into()));
                }
                let d = components[0].mean.len();
                for c in components {
                    if c.mean.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: c.mean.len(),
                        });
                    }
                    Factor::new(&c.mean, &c.covariance)?;
                }
            }
            SyntheticSpec::UniformCube { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("cube dimension must be >= 1".into()));
                }
            }
            SyntheticSpec::Banana => {}
        }
        Ok(())
    }

    /// Sampler for this distribution seeded with `seed`.
    pub fn sampler(&self, seed: u64) -> Result<Box<dyn Sampler>> {
        Ok(match self {
            SyntheticSpec::Banana => Box::new(PushforwardSampler::new(
                SyntheticSampler::new(&Self::standard_gaussian(2), seed)?,
                banana_map(),
                None,
            )?),
            other => Box::new(SyntheticSampler::new(other, seed)?),
        })
    }
}

/// `x = mean + L z` with `L Lᵀ = covariance`.
#[derive(Debug, Clone)]
struct Factor {
    mean: Vec<f64>,
    factor: Vec<f64>,
}

impl Factor {
    fn new(mean: &[f64], covariance: &[Vec<f64>]) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Config("Gaussian mean must have dimension >= 1".into()));
        }
        if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!("covariance must be {d}x{d}")));
        }
        if mean.iter().chain(covariance.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Config("Gaussian parameters must be finite".into()));
        }
        let scale = covariance
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (covariance[i][j] - covariance[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::Config("covariance is not symmetric".into()));
                }
            }
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        let l = match cov.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = cov.symmetric_eigen();
                if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
                    return Err(Error::Config("covariance is not positive semi-definite".into()));
                }
                let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        let factor = (0..d * d).map(|k| l[(k / d, k % d)]).collect();
        Ok(Factor {
            mean: mean.to_vec(),
            factor,
        })
    }

    fn sample_into(&self, rng: &mut Rng, z: &mut [f64], out: &mut Vec<f64>) {
        let d = self.mean.len();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let row = &self.factor[i * d..(i + 1) * d];
            let dot: f64 = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            out.push(self.mean[i] + dot);
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Gaussian(Factor),
    Mixture(Vec<Factor>, WeightedIndex<f64>),
    Cube(usize),
}

/// I.i.d. generator for a [`SyntheticSpec`] other than the banana, which is
/// built as a pushforward.
#[derive(Debug, Clone)]
pub struct SyntheticSampler {
    kind: Kind,
    dim: usize,
    rng: Rng,
}

impl SyntheticSampler {
    pub fn new(spec: &SyntheticSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let kind = match spec {
            SyntheticSpec::Gaussian { mean, covariance } => Kind::Gaussian(Factor::new(mean, covariance)?),
            SyntheticSpec::Mixture {
                components,
                weights,
            } => {
                let factors = components
                    .iter()
                    .map(|c| Factor::new(&c.mean, &c.covariance))
                    .collect::<Result<Vec<_>>>()?;
                let index = WeightedIndex::new(weights.iter().copied())
                    .map_err(|e| Error::Config(format!("mixture weights: {e}")))?;
                Kind::Mixture(factors, index)
            }
            SyntheticSpec::UniformCube { dim } => Kind::Cube(*dim),
            SyntheticSpec::Banana => {
                return Err(Error::Config(
                    "the banana distribution is a pushforward; use SyntheticSpec::sampler".into(),
                ))
            }
        };
        Ok(SyntheticSampler {
            kind,
            dim: spec.dim(),
            rng: rng::stream(seed, 0),
        })
    }
}

impl Sampler for SyntheticSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&mut self, count: usize) -> Result<PointSet> {
        check_count(count)?;
        let mut out = Vec::with_capacity(count * self.dim);
        let mut z = vec![0.0; self.dim];
        for _ in 0..count {
            match &self.kind {
                Kind::Gaussian(f) => f.sample_into(&mut self.rng, &mut z, &mut out),
                Kind::Mixture(fs, index) => {
                    let c = index.sample(&mut self.rng);
                    fs[c].sample_into(&mut self.rng, &mut z, &mut out);
                }
                Kind::Cube(d) => out.extend((0..*d).map(|_| self.rng.random::<f64>())),
            }
        }
        PointSet::new(self.dim, out)
    }

    fn rng_snapshot(&self) -> Option<Rng> {
        Some(self.rng.clone())
    }

    fn restore_rng(&mut self, rng: Rng) -> Result<()> {
        self.rng = rng;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::pushforward;

    fn column_mean(set: &PointSet, k: usize) -> f64 {
        set.iter().map(|p| p[k]).sum::<f64>() / set.len() as f64
    }

    #[test]
    fn standard_gaussian_mean_is_near_zero() {
        let mut s = SyntheticSpec::standard_gaussian(2).sampler(11).unwrap();
        let draws = s.draw(100_000).unwrap();
        for k in 0..2 {
            let m = column_mean(&draws, k);
            assert!(m.abs() < 0.02, "coordinate {k} mean {m}");
        }
    }

    #[test]
    fn banana_second_moment() {
        // E[x² + y] = 1 for standard normal x, y.
        let mut s = SyntheticSpec::Banana.sampler(5).unwrap();
        let draws = s.draw(100_000).unwrap();
        let m = column_mean(&draws, 1);
        assert!((m - 1.0).abs() < 0.02, "mean {m}");
    }

    #[test]
    fn banana_equals_explicit_pushforward_bitwise() {
        let mut direct = SyntheticSpec::Banana.sampler(42).unwrap();
        let base = SyntheticSampler::new(&SyntheticSpec::standard_gaussian(2), 42).unwrap();
        let mut mapped = pushforward(base, banana_map(), None).unwrap();
        for _ in 0..3 {
            assert_eq!(direct.draw(257).unwrap(), mapped.draw(257).unwrap());
        }
    }

    #[test]
    fn identity_pushforward_matches_base() {
        let spec = SyntheticSpec::UniformCube { dim: 3 };
        let mut base = SyntheticSampler::new(&spec, 1).unwrap();
        let mut mapped =
            pushforward(SyntheticSampler::new(&spec, 1).unwrap(), Arc::new(|p: &[f64]| p.to_vec()), Some(1.0))
                .unwrap();
        assert_eq!(base.draw(100).unwrap(), mapped.draw(100).unwrap());
    }

    #[test]
    fn doubling_map_doubles_range() {
        let spec = SyntheticSpec::UniformCube { dim: 1 };
        let mut mapped = pushforward(
            SyntheticSampler::new(&spec, 8).unwrap(),
            Arc::new(|p: &[f64]| vec![2.0 * p[0]]),
            Some(2.0),
        )
        .unwrap();
        let draws = mapped.draw(20_000).unwrap();
        let (lo, hi) = draws
            .coords()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(lo >= 0.0 && lo < 0.01 && hi <= 2.0 && hi > 1.99);
    }

    #[test]
    fn non_finite_map_output_is_an_error() {
        let spec = SyntheticSpec::UniformCube { dim: 1 };
        let mut mapped = pushforward(
            SyntheticSampler::new(&spec, 8).unwrap(),
            Arc::new(|p: &[f64]| vec![if p[0] > 0.5 { f64::NAN } else { 0.0 }]),
            None,
        )
        .unwrap();
        assert!(matches!(mapped.draw(100), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let asym = SyntheticSpec::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 0.5], vec![0.1, 1.0]],
        };
        assert!(asym.validate().is_err());
        let indefinite = SyntheticSpec::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(indefinite.validate().is_err());
        let bad_weights = SyntheticSpec::Mixture {
            components: vec![GaussianComponent::isotropic(vec![0.0], 1.0)],
            weights: vec![0.5],
        };
        assert!(bad_weights.validate().is_err());
    }

    #[test]
    fn degenerate_covariance_is_accepted() {
        // Rank one: all mass on the diagonal line.
        let spec = SyntheticSpec::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let draws = SyntheticSampler::new(&spec, 3).unwrap().draw(50).unwrap();
        assert!(draws.iter().all(|p| (p[0] - p[1]).abs() < 1e-6));
    }

    #[test]
    fn same_seed_same_draws() {
        let spec = SyntheticSpec::preset("mixture4").unwrap();
        let a = spec.sampler(77).unwrap().draw(64).unwrap();
        let b = spec.sampler(77).unwrap().draw(64).unwrap();
        let c = spec.sampler(78).unwrap().draw(64).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
