//! Comparison summaries: uniform subsampling and kernel herding.

use crate::error::{Error, Result};
use crate::eval::mmd::KernelSpec;
use crate::measures::{EmpiricalSampler, Sampler};
use crate::points::PointSet;

/// `n` i.i.d. draws from the sampler.
pub fn uniform_baseline(sampler: &mut dyn Sampler, n: usize) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::Config("baseline size must be >= 1".into()));
    }
    sampler.draw(n)
}

/// `n` draws with replacement from the rows of `pool`.
pub fn uniform_from_pool(pool: &PointSet, n: usize, seed: u64) -> Result<PointSet> {
    uniform_baseline(&mut EmpiricalSampler::new(pool.clone(), seed)?, n)
}

/// Greedy kernel herding over `pool`, without replacement. Step `t` picks
/// the unselected point maximizing
///
/// ```text
/// mean_j k(x, p_j) − (1/(t+1)) Σ_{s selected} k(x, s)
/// ```
///
/// with ties to the lowest index. Returns the selection in pick order and
/// the picked pool indices.
pub fn herding_baseline(
    pool: &PointSet,
    n: usize,
    kernel: &KernelSpec,
) -> Result<(PointSet, Vec<usize>)> {
    kernel.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n == 0 || n > pool.len() {
        return Err(Error::Config(format!(
            "herding size {n} must lie in 1..={}",
            pool.len()
        )));
    }
    let m = pool.len();
    let w = pool.weight_vec();
    let affinity: Vec<f64> = (0..m)
        .map(|i| {
            let x = pool.point(i);
            pool.iter().zip(&w).map(|(y, wj)| wj * kernel.eval(x, y)).sum()
        })
        .collect();
    let mut to_selected = vec![0.0; m];
    let mut taken = vec![false; m];
    let mut picks = Vec::with_capacity(n);
    for t in 0..n {
        let penalty = 1.0 / (t + 1) as f64;
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            let score = affinity[i] - penalty * to_selected[i];
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let pick = best.expect("unselected points remain");
        taken[pick] = true;
        picks.push(pick);
        let x = pool.point(pick);
        for (i, acc) in to_selected.iter_mut().enumerate() {
            *acc += kernel.eval(pool.point(i), x);
        }
    }
    Ok((pool.select(&picks)?.into_uniform(), picks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> PointSet {
        PointSet::from_rows(&[[0.0, 0.0], [0.1, 0.0], [3.0, 0.0], [0.0, 0.2], [-2.0, 1.0]]).unwrap()
    }

    #[test]
    fn first_pick_is_the_kernel_medoid() {
        let k = KernelSpec::Gaussian { sigma: 1.0 };
        let p = pool();
        let (_, picks) = herding_baseline(&p, 1, &k).unwrap();
        let mean_sim = |i: usize| p.iter().map(|y| k.eval(p.point(i), y)).sum::<f64>();
        let medoid = (0..p.len())
            .max_by(|&a, &b| mean_sim(a).total_cmp(&mean_sim(b)).then(b.cmp(&a)))
            .unwrap();
        assert_eq!(picks, vec![medoid]);
    }

    #[test]
    fn exhausting_the_pool_gives_a_permutation() {
        let (_, mut picks) = herding_baseline(&pool(), 5, &KernelSpec::Gaussian { sigma: 0.5 }).unwrap();
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn uniform_is_reproducible() {
        let a = uniform_from_pool(&pool(), 7, 11).unwrap();
        let b = uniform_from_pool(&pool(), 7, 11).unwrap();
        assert_eq!(a, b);
        let dirac = PointSet::from_rows(&[[4.0, 2.0]]).unwrap();
        assert_eq!(uniform_from_pool(&dirac, 1, 0).unwrap().point(0), &[4.0, 2.0]);
    }

    #[test]
    fn bad_sizes() {
        let k = KernelSpec::Gaussian { sigma: 1.0 };
        assert!(herding_baseline(&pool(), 6, &k).is_err());
        assert!(herding_baseline(&pool(), 0, &k).is_err());
    }
}
