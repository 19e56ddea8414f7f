use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::{check_count, Sampler};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::{self, Rng};

/// With-replacement sampling over the rows of a finite dataset, following the
/// set's weights when it has them.
#[derive(Debug, Clone)]
pub struct EmpiricalSampler {
    data: PointSet,
    index: Option<WeightedIndex<f64>>,
    rng: Rng,
}

impl EmpiricalSampler {
    pub fn new(data: PointSet, seed: u64) -> Result<Self> {
        Self::with_rng(data, rng::stream(seed, 0))
    }

    pub fn with_rng(data: PointSet, rng: Rng) -> Result<Self> {
        let index = match data.weights() {
            Some(w) => Some(
                WeightedIndex::new(w.iter().copied())
                    .map_err(|e| Error::InvalidInput(format!("weights: {e}")))?,
            ),
            None => None,
        };
        Ok(EmpiricalSampler { data, index, rng })
    }

    pub fn data(&self) -> &PointSet {
        &self.data
    }

    /// Row indices of the next `count` draws.
    pub fn draw_indices(&mut self, count: usize) -> Vec<usize> {
        let n = self.data.len();
        match &self.index {
            Some(index) => (0..count).map(|_| index.sample(&mut self.rng)).collect(),
            None => (0..count).map(|_| self.rng.random_range(0..n)).collect(),
        }
    }
}

impl Sampler for EmpiricalSampler {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn draw(&mut self, count: usize) -> Result<PointSet> {
        check_count(count)?;
        let indices = self.draw_indices(count);
        self.data.select(&indices)
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

    #[test]
    fn single_point_dataset_always_returns_it() {
        let data = PointSet::from_rows(&[[0.0, 0.0]]).unwrap();
        let mut s = EmpiricalSampler::new(data, 1).unwrap();
        let draw = s.draw(5).unwrap();
        assert!(draw.coords().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn row_frequencies_pass_chi_square() {
        let n = 5;
        let rows: Vec<[f64; 1]> = (0..n).map(|i| [i as f64]).collect();
        let mut s = EmpiricalSampler::new(PointSet::from_rows(&rows).unwrap(), 2024).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            let p = s.draw(1).unwrap();
            counts[p.point(0)[0] as usize] += 1;
        }
        let expected = draws as f64 / n as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square, 4 degrees of freedom, upper 0.001 quantile
        assert!(stat < 18.467, "chi-square statistic {stat}");
    }

    #[test]
    fn weighted_rows_follow_weights() {
        let data = PointSet::from_rows(&[[0.0], [1.0]])
            .unwrap()
            .with_weights(vec![0.0, 1.0])
            .unwrap();
        let mut s = EmpiricalSampler::new(data, 3).unwrap();
        assert!(s.draw(100).unwrap().coords().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn snapshot_restores_sequence() {
        let data = PointSet::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let mut s = EmpiricalSampler::new(data, 9).unwrap();
        s.draw(7).unwrap();
        let snap = s.rng_snapshot().unwrap();
        let a = s.draw(10).unwrap();
        s.restore_rng(snap).unwrap();
        assert_eq!(a, s.draw(10).unwrap());
    }
}
