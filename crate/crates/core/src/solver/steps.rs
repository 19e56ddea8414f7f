//! Site updates for one outer iteration.

use crate::error::Result;
use crate::points::{sq_dist, Exponent, PointSet};
use crate::semidiscrete::{evaluate, CellAssignment, DualState, SiteSet};

/// Points whose distance to their site is below this are skipped in the
/// `W_1` direction average.
pub const COINCIDENT: f64 = 1e-12;

/// Result of moving sites: the new positions (possibly coincident) and the
/// displacement length of every site.
#[derive(Debug, Clone)]
pub struct SiteUpdate {
    pub points: PointSet,
    pub displacement: Vec<f64>,
}

impl SiteUpdate {
    pub fn max_displacement(&self) -> f64 {
        self.displacement.iter().copied().fold(0.0, f64::max)
    }

    /// Frobenius norm of the displacement field.
    pub fn norm(&self) -> f64 {
        self.displacement.iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    /// Site set with coincident points nudged apart at `scale`.
    pub fn into_sites(self, scale: f64) -> SiteSet {
        SiteSet::separated(self.points, scale)
    }
}

fn displacement(old: &SiteSet, new: &PointSet) -> Vec<f64> {
    (0..old.n())
        .map(|i| sq_dist(old.site(i), new.point(i)).sqrt())
        .collect()
}

/// `x_i ← x_i + (γ/√k) · mean_{y ∈ V_i} (y − x_i)/‖y − x_i‖`, the descent step
/// on `W_1`. Points within [`COINCIDENT`] of `x_i` contribute a zero
/// direction; sites with empty cells stay put.
pub fn w1_update(
    sites: &SiteSet,
    minibatch: &PointSet,
    cells: &CellAssignment,
    gamma: f64,
    k: usize,
) -> SiteUpdate {
    let d = sites.dim();
    let mut dir = vec![0.0; sites.n() * d];
    for (y, &i) in minibatch.iter().zip(&cells.indices) {
        let x = sites.site(i);
        let dist = sq_dist(y, x).sqrt();
        if dist < COINCIDENT {
            continue;
        }
        for (acc, (yk, xk)) in dir[i * d..(i + 1) * d].iter_mut().zip(y.iter().zip(x)) {
            *acc += (yk - xk) / dist;
        }
    }
    let step = gamma / (k as f64).sqrt();
    let mut points = sites.points().clone();
    for i in 0..sites.n() {
        let count = cells.counts[i];
        if count == 0 {
            continue;
        }
        let scale = step / count as f64;
        for (x, g) in points.point_mut(i).iter_mut().zip(&dir[i * d..(i + 1) * d]) {
            *x += scale * g;
        }
    }
    let displacement = displacement(sites, &points);
    SiteUpdate {
        points,
        displacement,
    }
}

/// `x_i ← mean_{y ∈ V_i} y`, the fixed-point step on `W_2`. Sites with empty
/// cells stay put.
pub fn w2_update(sites: &SiteSet, minibatch: &PointSet, cells: &CellAssignment) -> SiteUpdate {
    let d = sites.dim();
    let mut sums = vec![0.0; sites.n() * d];
    for (y, &i) in minibatch.iter().zip(&cells.indices) {
        for (acc, yk) in sums[i * d..(i + 1) * d].iter_mut().zip(y) {
            *acc += yk;
        }
    }
    let mut points = sites.points().clone();
    for i in 0..sites.n() {
        let count = cells.counts[i];
        if count == 0 {
            continue;
        }
        for (x, s) in points.point_mut(i).iter_mut().zip(&sums[i * d..(i + 1) * d]) {
            *x = s / count as f64;
        }
    }
    let displacement = displacement(sites, &points);
    SiteUpdate {
        points,
        displacement,
    }
}

/// One `W_1` step using the `p = 1` power cells at `dual.v_avg`.
pub fn w1_step(
    sites: &SiteSet,
    dual: &DualState,
    minibatch: &PointSet,
    gamma: f64,
    k: usize,
) -> Result<SiteSet> {
    let cells = evaluate(minibatch, sites, &dual.v_avg, Exponent::One)?.assignment;
    let scale = minibatch.rms_radius();
    Ok(w1_update(sites, minibatch, &cells, gamma, k.max(1)).into_sites(scale))
}

/// One `W_2` fixed-point step using the `p = 2` power cells at `dual.v_avg`.
pub fn w2_step(sites: &SiteSet, dual: &DualState, minibatch: &PointSet) -> Result<SiteSet> {
    let cells = evaluate(minibatch, sites, &dual.v_avg, Exponent::Two)?.assignment;
    let scale = minibatch.rms_radius();
    Ok(w2_update(sites, minibatch, &cells).into_sites(scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semidiscrete::DualWeights;

    fn set(rows: &[[f64; 2]]) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    fn sites(rows: &[[f64; 2]]) -> SiteSet {
        SiteSet::new(set(rows)).unwrap()
    }

    fn dual(n: usize) -> DualState {
        DualState::new(n)
    }

    #[test]
    fn w1_coincident_points_are_skipped() {
        let s = sites(&[[1.0, 1.0]]);
        let out = w1_step(&s, &dual(1), &set(&[[1.0, 1.0], [1.0, 1.0]]), 1.0, 1).unwrap();
        assert_eq!(out.points().to_rows(), vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn w1_opposite_directions_cancel() {
        let s = sites(&[[0.0, 0.0]]);
        let out = w1_step(&s, &dual(1), &set(&[[1.0, 0.0], [-1.0, 0.0]]), 1.0, 1).unwrap();
        assert_eq!(out.points().to_rows(), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn w1_moves_toward_the_sample() {
        let s = sites(&[[0.0, 0.0]]);
        let out = w1_step(&s, &dual(1), &set(&[[1.0, 0.0]]), 0.5, 1).unwrap();
        assert_eq!(out.points().to_rows(), vec![vec![0.5, 0.0]]);
    }

    #[test]
    fn w1_displacement_is_bounded_by_step() {
        let s = sites(&[[0.0, 0.0], [5.0, 5.0]]);
        let batch = set(&[[1.0, 3.0], [0.2, -0.1], [6.0, 5.0], [4.0, 4.5], [-2.0, 1.0]]);
        let cells = evaluate(&batch, &s, &DualWeights::zeros(2), Exponent::One)
            .unwrap()
            .assignment;
        for k in 1..6 {
            let up = w1_update(&s, &batch, &cells, 0.7, k);
            assert!(up.max_displacement() <= 0.7 / (k as f64).sqrt() + 1e-15);
        }
    }

    #[test]
    fn w2_single_cell_is_the_mean() {
        let s = sites(&[[0.0, 0.0]]);
        let out = w2_step(&s, &dual(1), &set(&[[1.0, 2.0], [3.0, 0.0], [2.0, 1.0]])).unwrap();
        assert_eq!(out.points().to_rows(), vec![vec![2.0, 1.0]]);
    }

    #[test]
    fn w2_cells_split_by_power_distance() {
        let s = sites(&[[0.0, 0.0], [10.0, 0.0]]);
        let out = w2_step(&s, &dual(2), &set(&[[1.0, 0.0], [2.0, 0.0], [9.0, 0.0]])).unwrap();
        assert_eq!(out.points().to_rows(), vec![vec![1.5, 0.0], vec![9.0, 0.0]]);
    }

    #[test]
    fn w2_barycenters_are_a_fixed_point() {
        let s = sites(&[[0.0, 0.0], [4.0, 0.0]]);
        let batch = set(&[[-1.0, 0.0], [1.0, 0.0], [3.0, 1.0], [5.0, -1.0]]);
        let cells = evaluate(&batch, &s, &DualWeights::zeros(2), Exponent::Two)
            .unwrap()
            .assignment;
        let up = w2_update(&s, &batch, &cells);
        assert_eq!(up.max_displacement(), 0.0);
    }

    #[test]
    fn empty_cells_leave_sites_unchanged() {
        let s = sites(&[[0.0, 0.0], [100.0, 0.0]]);
        let batch = set(&[[1.0, 0.0], [2.0, 0.0]]);
        let out = w2_step(&s, &dual(2), &batch).unwrap();
        assert_eq!(out.site(1), &[100.0, 0.0]);
        let out = w1_step(&s, &dual(2), &batch, 1.0, 1).unwrap();
        assert_eq!(out.site(1), &[100.0, 0.0]);
    }
}
