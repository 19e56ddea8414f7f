//! Lloyd's algorithm and the relative k-means cost of a summary.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{sq_dist, PointSet};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydParams {
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative objective decrease below which a run stops.
    pub tol: f64,
}

impl Default for LloydParams {
    fn default() -> Self {
        LloydParams {
            restarts: 50,
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: PointSet,
    /// Weighted objective on the fitted set.
    pub cost: f64,
    /// Objective after seeding and after every Lloyd iteration of the best
    /// restart.
    pub history: Vec<f64>,
}

/// `Σ_x w_x min_q ‖x − q‖²` with weights scaled to the set size, so the
/// uniform case is the plain sum.
pub fn kmeans_cost(points: &PointSet, centers: &PointSet) -> f64 {
    let n = points.len() as f64;
    points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let best = centers
                .iter()
                .map(|q| sq_dist(x, q))
                .fold(f64::INFINITY, f64::min);
            n * points.weight(i) * best
        })
        .sum()
}

/// k-means++ seeding: first center by weight, then by weight × squared
/// distance to the chosen centers.
fn seed_centers(points: &PointSet, k: usize, rng: &mut Rng) -> Vec<f64> {
    let d = points.dim();
    let w = points.weight_vec();
    let first = WeightedIndex::new(&w).map_or(0, |dist| dist.sample(rng));
    let mut centers = points.point(first).to_vec();
    let mut nearest: Vec<f64> = points.iter().map(|x| sq_dist(x, points.point(first))).collect();
    for _ in 1..k {
        let scores: Vec<f64> = nearest.iter().zip(&w).map(|(a, b)| a * b).collect();
        let next = match WeightedIndex::new(&scores) {
            Ok(dist) => dist.sample(rng),
            // All mass already on centers: any point will do.
            Err(_) => rng.random_range(0..points.len()),
        };
        let c = points.point(next).to_vec();
        for (nd, x) in nearest.iter_mut().zip(points.iter()) {
            *nd = nd.min(sq_dist(x, &c));
        }
        centers.extend_from_slice(&c);
    }
    debug_assert_eq!(centers.len(), k * d);
    centers
}

fn lloyd_run(points: &PointSet, mut centers: Vec<f64>, k: usize, params: &LloydParams) -> (Vec<f64>, Vec<f64>) {
    let d = points.dim();
    let n = points.len() as f64;
    let mut history = Vec::new();
    let mut assign = vec![0usize; points.len()];
    for it in 0..=params.max_iters {
        let mut cost = 0.0;
        for (i, x) in points.iter().enumerate() {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(x, &centers[c * d..(c + 1) * d]);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assign[i] = best;
            cost += n * points.weight(i) * best_d;
        }
        let prev = history.last().copied();
        history.push(cost);
        if it == params.max_iters {
            break;
        }
        if let Some(prev) = prev {
            if prev - cost <= params.tol * prev.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let mut sums = vec![0.0; k * d];
        let mut mass = vec![0.0; k];
        for (i, x) in points.iter().enumerate() {
            let c = assign[i];
            let w = points.weight(i);
            mass[c] += w;
            for (s, xk) in sums[c * d..(c + 1) * d].iter_mut().zip(x) {
                *s += w * xk;
            }
        }
        for c in 0..k {
            // Empty clusters keep their center.
            if mass[c] > 0.0 {
                for (ctr, s) in centers[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *ctr = s / mass[c];
                }
            }
        }
    }
    (centers, history)
}

/// Best of `params.restarts` seeded Lloyd runs.
pub fn lloyd(points: &PointSet, k: usize, params: &LloydParams, seed: u64) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} must lie in 1..={}",
            points.len()
        )));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..params.restarts.max(1) {
        let mut rng = rng::stream(seed, r as u64);
        let init = seed_centers(points, k, &mut rng);
        let (centers, history) = lloyd_run(points, init, k, params);
        let centers = PointSet::new(points.dim(), centers)?;
        let cost = kmeans_cost(points, &centers);
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(KMeansFit {
                centers,
                cost,
                history,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Full-data optimum `Q*` and its cost, computed once and shared by every
/// summary compared against the same data.
#[derive(Debug, Clone)]
pub struct KMeansReference {
    pub k: usize,
    pub centers: PointSet,
    pub cost: f64,
}

impl KMeansReference {
    pub fn fit(full: &PointSet, k: usize, params: &LloydParams, seed: u64) -> Result<Self> {
        let fit = lloyd(full, k, params, seed)?;
        Ok(KMeansReference {
            k,
            cost: fit.cost,
            centers: fit.centers,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOutcome {
    /// `|1 − J(Q_c) / J(Q*)|`, both evaluated on the full data.
    pub relative_cost: f64,
    pub summary_cost: f64,
    pub full_cost: f64,
}

/// Relative cost of centers learned on `summary` against the reference.
pub fn kmeans_relative(
    full: &PointSet,
    summary: &PointSet,
    reference: &KMeansReference,
    params: &LloydParams,
    seed: u64,
) -> Result<KMeansOutcome> {
    summary.ensure_dim(full.dim())?;
    let fit = lloyd(summary, reference.k, params, seed)?;
    let summary_cost = kmeans_cost(full, &fit.centers);
    let relative_cost = if reference.cost > 0.0 {
        (1.0 - summary_cost / reference.cost).abs()
    } else if summary_cost == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(KMeansOutcome {
        relative_cost,
        summary_cost,
        full_cost: reference.cost,
    })
}

/// One-shot version of [`kmeans_relative`] that fits the reference too.
pub fn kmeans_task(full: &PointSet, summary: &PointSet, k: usize, seed: u64) -> Result<KMeansOutcome> {
    if k > summary.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds summary size {}",
            summary.len()
        )));
    }
    let params = LloydParams::default();
    let reference = KMeansReference::fit(full, k, &params, rng::derive_seed(seed, "kmeans-full"))?;
    kmeans_relative(full, summary, &reference, &params, rng::derive_seed(seed, "kmeans-summary"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> PointSet {
        let mut rows = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (5.0, 5.0), (-5.0, 5.0)] {
            for i in 0..10 {
                let t = i as f64 * 0.6;
                rows.push([cx + 0.3 * t.cos(), cy + 0.3 * t.sin()]);
            }
        }
        PointSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn summary_equal_to_full_costs_nothing() {
        let data = blobs();
        let out = kmeans_task(&data, &data, 3, 5).unwrap();
        assert!(out.relative_cost < 1e-12, "{out:?}");
    }

    #[test]
    fn single_center_is_the_mean() {
        let data = blobs();
        let fit = lloyd(&data, 1, &LloydParams::default(), 0).unwrap();
        let mean = data.mean();
        for (c, m) in fit.centers.point(0).iter().zip(&mean) {
            assert!((c - m).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_never_increases() {
        let data = blobs();
        for seed in 0..5 {
            let fit = lloyd(&data, 4, &LloydParams { restarts: 1, ..Default::default() }, seed).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.history);
            }
        }
    }

    #[test]
    fn k_larger_than_summary() {
        let data = blobs();
        let small = PointSet::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(kmeans_task(&data, &small, 2, 0).is_err());
    }
}
