use std::sync::Arc;

use super::{check_count, Sampler};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::Rng;

/// A map `ℝ^d → ℝ^k` applied pointwise.
pub type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Law of `f(X)` for `X` drawn from `base`.
pub struct PushforwardSampler<S: Sampler> {
    base: S,
    map: PointMap,
    dim: usize,
    lipschitz_bound: Option<f64>,
}

/// Wrap `base` so that every draw is mapped through `map`.
pub fn pushforward<S: Sampler>(
    base: S,
    map: PointMap,
    lipschitz_bound: Option<f64>,
) -> Result<PushforwardSampler<S>> {
    PushforwardSampler::new(base, map, lipschitz_bound)
}

impl<S: Sampler> PushforwardSampler<S> {
    pub fn new(base: S, map: PointMap, lipschitz_bound: Option<f64>) -> Result<Self> {
        if let Some(l) = lipschitz_bound {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("Lipschitz bound must be positive, got {l}")));
            }
        }
        // Output dimension from the image of the origin; the map is total.
        let probe = map(&vec![0.0; base.dim()]);
        if probe.is_empty() {
            return Err(Error::InvalidInput("map produces zero-dimensional points".into()));
        }
        let dim = probe.len();
        Ok(PushforwardSampler {
            base,
            map,
            dim,
            lipschitz_bound,
        })
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn map(&self) -> &PointMap {
        &self.map
    }

    pub fn base(&self) -> &S {
        &self.base
    }
}

impl<S: Sampler> Sampler for PushforwardSampler<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&mut self, count: usize) -> Result<PointSet> {
        check_count(count)?;
        let draws = self.base.draw(count)?;
        let mut coords = Vec::with_capacity(count * self.dim);
        for (i, p) in draws.iter().enumerate() {
            let image = (self.map)(p);
            if image.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: image.len(),
                });
            }
            if let Some(column) = image.iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFinite {
                    row: i as u64 + 1,
                    column,
                });
            }
            coords.extend(image);
        }
        PointSet::new(self.dim, coords)
    }

    fn rng_snapshot(&self) -> Option<Rng> {
        self.base.rng_snapshot()
    }

    fn restore_rng(&mut self, rng: Rng) -> Result<()> {
        self.base.restore_rng(rng)
    }
}
