//! Exact discrete optimal transport by the transportation simplex.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{Exponent, PointSet};

/// Largest combined support accepted by [`exact_wp`].
pub const SIZE_GUARD: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major coupling.
    pub coupling: Vec<f64>,
    /// `Σ π_ij ‖a_i − b_j‖^p`.
    pub cost: f64,
}

impl TransportPlan {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }

    pub fn transposed(&self) -> Self {
        let mut coupling = Vec::with_capacity(self.coupling.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                coupling.push(self.at(i, j));
            }
        }
        TransportPlan {
            rows: self.cols,
            cols: self.rows,
            coupling,
            cost: self.cost,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.coupling
            .chunks_exact(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.coupling.chunks_exact(self.cols) {
            for (o, x) in out.iter_mut().zip(r) {
                *o += x;
            }
        }
        out
    }
}

/// `W_p(a, b)` and an optimal plan.
pub fn exact_wp(a: &PointSet, b: &PointSet, p: Exponent) -> Result<(f64, TransportPlan)> {
    b.ensure_dim(a.dim())?;
    let size = a.len() + b.len();
    if size > SIZE_GUARD {
        return Err(Error::SizeGuard {
            size,
            limit: SIZE_GUARD,
        });
    }
    // Solve (a, b) and (b, a) as one problem so the distance is exactly
    // symmetric.
    if precedes(b, a) {
        let (w, plan) = solve(b, a, p)?;
        return Ok((w, plan.transposed()));
    }
    solve(a, b, p)
}

fn compare_values(x: &[f64], y: &[f64]) -> Ordering {
    x.iter()
        .zip(y)
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| x.len().cmp(&y.len()))
}

/// Strict total order on weighted point sets.
fn precedes(a: &PointSet, b: &PointSet) -> bool {
    a.len()
        .cmp(&b.len())
        .then_with(|| compare_values(a.coords(), b.coords()))
        .then_with(|| compare_values(&a.weight_vec(), &b.weight_vec()))
        .is_lt()
}

fn solve(a: &PointSet, b: &PointSet, p: Exponent) -> Result<(f64, TransportPlan)> {
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for x in a.iter() {
        for y in b.iter() {
            cost.push(p.cost(x, y));
        }
    }
    let plan = transport(&cost, &a.weight_vec(), &b.weight_vec())?;
    Ok((p.root(plan.cost.max(0.0)), plan))
}

/// Largest size accepted by [`permutation_wp`].
pub const PERMUTATION_GUARD: usize = 8;

/// `W_p` between two uniform sets of equal size by enumerating every
/// matching; for uniform equal-size sets some optimal plan is a permutation.
/// Meant as an independent oracle on tiny instances.
pub fn permutation_wp(a: &PointSet, b: &PointSet, p: Exponent) -> Result<f64> {
    b.ensure_dim(a.dim())?;
    let n = a.len();
    if n != b.len() || !a.is_uniform() || !b.is_uniform() {
        return Err(Error::InvalidInput(
            "permutation oracle needs uniform sets of equal size".into(),
        ));
    }
    if n > PERMUTATION_GUARD {
        return Err(Error::SizeGuard {
            size: n,
            limit: PERMUTATION_GUARD,
        });
    }
    let cost: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| p.cost(x, y)))
        .collect();
    // Heap's algorithm over column orders.
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum() };
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(p.root((best / n as f64).max(0.0)))
}

/// Minimum-cost transport between `supply` and `demand` for a row-major cost
/// matrix. Both weight vectors must be nonnegative with equal totals.
pub fn transport(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<TransportPlan> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::InvalidInput("transport problem has no support".into()));
    }
    if supply.iter().chain(demand).any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("degenerate weights".into()));
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if sa <= 0.0 || (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return Err(Error::InvalidInput(format!(
            "degenerate weights: totals {sa} and {sb} differ"
        )));
    }
    Simplex::new(cost, supply, demand).solve()
}

/// Basis of `m + n − 1` cells forming a spanning tree of the bipartite
/// row/column graph.
struct Simplex<'a> {
    cost: &'a [f64],
    m: usize,
    n: usize,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cells per row and per column.
    row_cells: Vec<Vec<usize>>,
    col_cells: Vec<Vec<usize>>,
    tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a [f64], supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let max_cost = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let mut s = Simplex {
            cost,
            m,
            n,
            flow: vec![0.0; m * n],
            basic: vec![false; m * n],
            row_cells: vec![Vec::new(); m],
            col_cells: vec![Vec::new(); n],
            tol: 1e-12 * max_cost.max(1e-300),
        };
        // Northwest corner: each step fills one cell and retires exactly one
        // row or column, so the basis is a tree of m + n − 1 cells.
        let (mut a, mut b) = (supply.to_vec(), demand.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]);
            s.add_basic(i * n + j, x);
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && a[i] <= b[j]) {
                b[j] -= x;
                a[i] = 0.0;
                i += 1;
            } else {
                a[i] -= x;
                b[j] = 0.0;
                j += 1;
            }
        }
        s
    }

    fn add_basic(&mut self, cell: usize, x: f64) {
        self.flow[cell] = x;
        self.basic[cell] = true;
        self.row_cells[cell / self.n].push(cell);
        self.col_cells[cell % self.n].push(cell);
    }

    fn remove_basic(&mut self, cell: usize) {
        self.flow[cell] = 0.0;
        self.basic[cell] = false;
        self.row_cells[cell / self.n].retain(|&c| c != cell);
        self.col_cells[cell % self.n].retain(|&c| c != cell);
    }

    /// Potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        // Nodes 0..m are rows, m..m+n columns.
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if node < m {
                for &cell in &self.row_cells[node] {
                    let j = cell % n;
                    if v[j].is_nan() {
                        v[j] = self.cost[cell] - u[node];
                        stack.push(m + j);
                    }
                }
            } else {
                let j = node - m;
                for &cell in &self.col_cells[j] {
                    let i = cell / n;
                    if u[i].is_nan() {
                        u[i] = self.cost[cell] - v[j];
                        stack.push(i);
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path of basic cells from column `j` to row `i`.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let (m, n) = (self.m, self.n);
        // Parent cell used to reach each node in a search from column j.
        let mut via = vec![usize::MAX; m + n];
        let mut seen = vec![false; m + n];
        seen[m + j] = true;
        let mut stack = vec![m + j];
        while let Some(node) = stack.pop() {
            if node == i {
                break;
            }
            let cells = if node < m {
                &self.row_cells[node]
            } else {
                &self.col_cells[node - m]
            };
            for &cell in cells {
                let next = if node < m { m + cell % n } else { cell / n };
                if !seen[next] {
                    seen[next] = true;
                    via[next] = cell;
                    stack.push(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = i;
        while node != m + j {
            let cell = via[node];
            out.push(cell);
            node = if node < m { m + cell % n } else { cell / n };
        }
        out.reverse();
        out
    }

    fn solve(mut self) -> Result<TransportPlan> {
        let (m, n) = (self.m, self.n);
        let limit = 50 * m * n + 1000;
        for _ in 0..limit {
            let (u, v) = self.potentials();
            // Bland: first improving cell in row-major order enters.
            let entering = (0..m * n).find(|&cell| {
                !self.basic[cell] && self.cost[cell] - u[cell / n] - v[cell % n] < -self.tol
            });
            let Some(enter) = entering else {
                return Ok(self.into_plan());
            };
            let (ei, ej) = (enter / n, enter % n);
            // Cycle: enter (+), then the path from column ej back to row ei
            // alternates −, +, −, ...
            let path = self.path(ei, ej);
            let minus: Vec<usize> = path.iter().copied().step_by(2).collect();
            let theta = minus
                .iter()
                .map(|&c| self.flow[c])
                .fold(f64::INFINITY, f64::min);
            // Bland: lowest-index cell among the blocking ones leaves.
            let leave = *minus
                .iter()
                .filter(|&&c| self.flow[c] == theta)
                .min()
                .expect("cycle has a minus cell");
            for (k, &cell) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[cell] -= theta;
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.remove_basic(leave);
            self.add_basic(enter, theta);
            for &c in &minus {
                if self.flow[c] < 0.0 {
                    self.flow[c] = 0.0;
                }
            }
        }
        Err(Error::Numerical(format!(
            "transportation simplex did not terminate in {limit} pivots"
        )))
    }

    fn into_plan(self) -> TransportPlan {
        let cost = self
            .flow
            .iter()
            .zip(self.cost)
            .map(|(x, c)| x * c)
            .sum();
        TransportPlan {
            rows: self.m,
            cols: self.n,
            coupling: self.flow,
            cost,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_cost_nothing() {
        let a = PointSet::from_rows(&[[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]]).unwrap();
        let (w, plan) = exact_wp(&a, &a, Exponent::Two).unwrap();
        assert_eq!(w, 0.0);
        for i in 0..3 {
            assert!((plan.at(i, i) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_pair_distance() {
        let a = PointSet::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = PointSet::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(exact_wp(&a, &b, Exponent::Two).unwrap().0, 5.0);
        assert_eq!(exact_wp(&a, &b, Exponent::One).unwrap().0, 5.0);
    }

    #[test]
    fn unequal_sizes_respect_marginals() {
        let a = PointSet::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let b = PointSet::from_rows(&[[0.5], [1.5]]).unwrap();
        let (w, plan) = exact_wp(&a, &b, Exponent::One).unwrap();
        for r in plan.row_sums() {
            assert!((r - 1.0 / 3.0).abs() < 1e-12);
        }
        for c in plan.col_sums() {
            assert!((c - 0.5).abs() < 1e-12);
        }
        // Monotone matching on the line: 1/3·0.5 + 1/6·0.5 + 1/6·0.5 + 1/3·0.5
        assert!((w - 0.5).abs() < 1e-12, "{w}");
    }

    #[test]
    fn permutation_oracle_on_the_line() {
        let a = PointSet::from_rows(&[[0.0], [1.0], [5.0]]).unwrap();
        let b = PointSet::from_rows(&[[4.0], [0.5], [2.0]]).unwrap();
        // Sorted matching: |0−0.5| + |1−2| + |5−4|
        let w = permutation_wp(&a, &b, Exponent::One).unwrap();
        assert!((w - 2.5 / 3.0).abs() < 1e-15);
        assert!((exact_wp(&a, &b, Exponent::One).unwrap().0 - w).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let a = PointSet::new(1, (0..300).map(f64::from).collect()).unwrap();
        assert!(matches!(
            exact_wp(&a, &a, Exponent::One),
            Err(Error::SizeGuard { size: 600, .. })
        ));
    }
}
