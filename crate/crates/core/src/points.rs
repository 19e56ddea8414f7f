use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transport cost exponent: cost `‖x − y‖^p` with `p ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Exponent {
    One,
    Two,
}

impl Exponent {
    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::One => 1.0,
            Exponent::Two => 2.0,
        }
    }

    /// `‖a − b‖^p`. The `p = 2` branch never takes a square root.
    #[inline]
    pub fn cost(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = sq_dist(a, b);
        match self {
            Exponent::One => sq.sqrt(),
            Exponent::Two => sq,
        }
    }

    /// Inverse of the p-th power, clamped at zero.
    pub fn root(self, value: f64) -> f64 {
        let value = value.max(0.0);
        match self {
            Exponent::One => value,
            Exponent::Two => value.sqrt(),
        }
    }
}

impl TryFrom<u8> for Exponent {
    type Error = String;

    fn try_from(p: u8) -> std::result::Result<Self, Self::Error> {
        match p {
            1 => Ok(Exponent::One),
            2 => Ok(Exponent::Two),
            other => Err(format!("exponent must be 1 or 2, got {other}")),
        }
    }
}

impl From<Exponent> for u8 {
    fn from(p: Exponent) -> u8 {
        match p {
            Exponent::One => 1,
            Exponent::Two => 2,
        }
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A single point of feature space with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point must have dimension >= 1".into()));
        }
        if let Some(column) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { row: 0, column });
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A nonempty finite point set, stored row-major.
///
/// Weights are optional; `None` means the uniform measure `1/n` on the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        if coords.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not fill rows of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                row: (pos / dim + 1) as u64,
                column: pos % dim,
            });
        }
        Ok(PointSet {
            dim,
            coords,
            weights: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        PointSet::new(dim, coords)
    }

    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        PointSet::from_rows(&points)
    }

    /// Attach explicit weights. They must be nonnegative and sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} points",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Drop explicit weights, returning to the uniform measure.
    pub fn into_uniform(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    /// Weight of row `i` (uniform when no weights are attached).
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    /// Weight vector, materialized.
    pub fn weight_vec(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }

    /// Weighted mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (i, p) in self.iter().enumerate() {
            let w = self.weight(i);
            for (m, x) in mean.iter_mut().zip(p) {
                *m += w * x;
            }
        }
        mean
    }

    /// Root-mean-square distance to the mean; the natural length scale of the
    /// set. Zero for a single repeated point.
    pub fn rms_radius(&self) -> f64 {
        let mean = self.mean();
        let total: f64 = self
            .iter()
            .enumerate()
            .map(|(i, p)| self.weight(i) * sq_dist(p, &mean))
            .sum();
        total.sqrt()
    }

    /// Largest per-coordinate range.
    pub fn coordinate_range(&self) -> f64 {
        (0..self.dim)
            .map(|k| {
                let (lo, hi) = self.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[k]), hi.max(p[k]))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Uniform subset by row index.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet::new(self.dim, coords)
    }

    /// Uniform concatenation of two sets of the same dimension.
    pub fn concat(&self, other: &PointSet) -> Result<Self> {
        other.ensure_dim(self.dim)?;
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        PointSet::new(self.dim, coords)
    }

    /// Apply `f` to every row, producing a uniform set in the output dimension.
    pub fn map_rows<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut rows = Vec::with_capacity(self.len());
        for p in self.iter() {
            rows.push(f(p));
        }
        let mapped = PointSet::from_rows(&rows)?;
        Ok(match &self.weights {
            Some(w) => PointSet {
                weights: Some(w.clone()),
                ..mapped
            },
            None => mapped,
        })
    }

    /// Smallest pairwise distance, `+inf` for a single point.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                best = best.min(sq_dist(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}
