//! Entropic transport between two finite measures, solved in the log domain,
//! and the debiased Sinkhorn divergence with site gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{sq_dist, Exponent, PointSet};

const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornParams {
    pub eta: f64,
    pub max_iters: usize,
    /// L1 marginal residual accepted as converged.
    pub tol: f64,
}

impl SinkhornParams {
    pub fn new(eta: f64, max_iters: usize) -> Self {
        SinkhornParams {
            eta,
            max_iters,
            tol: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("Sinkhorn needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Converged (or budget-limited) entropic plan.
#[derive(Debug, Clone)]
pub struct SinkhornPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major coupling.
    pub coupling: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// `⟨π, C⟩ + η KL(π ‖ a ⊗ b)`.
    pub cost: f64,
    /// `⟨π, C⟩`.
    pub transport_cost: f64,
    /// L1 violation of the row marginal; columns are exact after the last
    /// half-step.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SinkhornPlan {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }
}

fn cost_matrix(a: &PointSet, b: &PointSet, p: Exponent) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for x in a.iter() {
        for y in b.iter() {
            c.push(p.cost(x, y));
        }
    }
    c
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `f_i = −η log Σ_j b_j exp((g_j − C_ij)/η)`
fn update_rows(cost: &[f64], log_b: &[f64], g: &[f64], eta: f64, rows: usize) -> Vec<f64> {
    let cols = g.len();
    let row = |i: usize| {
        let c = &cost[i * cols..(i + 1) * cols];
        -eta * log_sum_exp((0..cols).map(|j| log_b[j] + (g[j] - c[j]) / eta))
    };
    if rows * cols >= PAR_THRESHOLD {
        (0..rows).into_par_iter().map(row).collect()
    } else {
        (0..rows).map(row).collect()
    }
}

/// `g_j = −η log Σ_i a_i exp((f_i − C_ij)/η)`
fn update_cols(cost: &[f64], log_a: &[f64], f: &[f64], eta: f64, cols: usize) -> Vec<f64> {
    let rows = f.len();
    let col = |j: usize| {
        -eta * log_sum_exp((0..rows).map(|i| log_a[i] + (f[i] - cost[i * cols + j]) / eta))
    };
    if rows * cols >= PAR_THRESHOLD {
        (0..cols).into_par_iter().map(col).collect()
    } else {
        (0..cols).map(col).collect()
    }
}

/// Entropic optimal transport between the (weighted) sets `a` and `b` with
/// cost `‖x − y‖^p`.
pub fn sinkhorn_plan(
    a: &PointSet,
    b: &PointSet,
    p: Exponent,
    params: SinkhornParams,
) -> Result<SinkhornPlan> {
    params.validate()?;
    b.ensure_dim(a.dim())?;
    let cost = cost_matrix(a, b, p);
    let wa = a.weight_vec();
    let wb = b.weight_vec();
    solve(&cost, &wa, &wb, params)
}

fn solve(cost: &[f64], wa: &[f64], wb: &[f64], params: SinkhornParams) -> Result<SinkhornPlan> {
    let (rows, cols) = (wa.len(), wb.len());
    let eta = params.eta;
    let log_a: Vec<f64> = wa.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = wb.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; rows];
    let mut g = vec![0.0; cols];
    let row_residual = |f: &[f64], f_next: &[f64]| -> f64 {
        // Row sums of the current plan are a_i · exp((f_i − f_next_i)/η).
        wa.iter()
            .zip(f.iter().zip(f_next))
            .map(|(a, (fi, fn_))| a * (((fi - fn_) / eta).exp() - 1.0).abs())
            .sum()
    };
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iters {
        let f_next = update_rows(cost, &log_b, &g, eta, rows);
        if it > 1 {
            residual = row_residual(&f, &f_next);
            if residual <= params.tol {
                converged = true;
                break;
            }
        }
        f = f_next;
        g = update_cols(cost, &log_a, &f, eta, cols);
        iterations = it;
    }
    if !converged {
        let f_next = update_rows(cost, &log_b, &g, eta, rows);
        residual = row_residual(&f, &f_next);
        converged = residual <= params.tol;
    }
    if f.iter().chain(&g).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("Sinkhorn potentials are not finite".into()));
    }
    let mut coupling = Vec::with_capacity(rows * cols);
    let (mut transport_cost, mut kl) = (0.0, 0.0);
    for i in 0..rows {
        for j in 0..cols {
            let c = cost[i * cols + j];
            let log_ratio = (f[i] + g[j] - c) / eta;
            let pi = wa[i] * wb[j] * log_ratio.exp();
            coupling.push(pi);
            if pi > 0.0 {
                transport_cost += pi * c;
                kl += pi * log_ratio;
            }
        }
    }
    Ok(SinkhornPlan {
        rows,
        cols,
        coupling,
        f,
        g,
        cost: transport_cost + eta * kl,
        transport_cost,
        residual,
        iterations,
        converged,
    })
}

/// `∇_x ‖x − y‖^p`; zero at `x = y`.
fn cost_gradient(p: Exponent, x: &[f64], y: &[f64], out: &mut [f64], weight: f64) {
    match p {
        Exponent::Two => {
            for ((o, xk), yk) in out.iter_mut().zip(x).zip(y) {
                *o += weight * 2.0 * (xk - yk);
            }
        }
        Exponent::One => {
            let dist = sq_dist(x, y).sqrt();
            if dist > 0.0 {
                for ((o, xk), yk) in out.iter_mut().zip(x).zip(y) {
                    *o += weight * (xk - yk) / dist;
                }
            }
        }
    }
}

/// Debiased divergence between the uniform measure on `sites` and the
/// minibatch, with its gradient in the site positions.
#[derive(Debug, Clone)]
pub struct SinkhornDivergence {
    /// `W(sites, batch) − ½ (W(sites, sites) + W(batch, batch))`, entropic
    /// costs.
    pub value: f64,
    /// Row-major `n × d` gradient w.r.t. the sites.
    pub gradient: Vec<f64>,
    pub cross_cost: f64,
    pub sites_cost: f64,
    pub batch_cost: f64,
    /// Largest marginal residual over the three plans.
    pub residual: f64,
    pub converged: bool,
}

/// Sinkhorn divergence and its site gradient. Gradients follow from the
/// envelope theorem at the converged couplings: the cross term contributes
/// `Σ_j π_ij ∇c(x_i, y_j)` and the sites self-term `−½ Σ_k (π_ik + π_ki)
/// ∇c(x_i, x_k)`; the batch self-term does not depend on the sites.
pub fn sinkhorn_divergence(
    minibatch: &PointSet,
    sites: &PointSet,
    p: Exponent,
    params: SinkhornParams,
) -> Result<SinkhornDivergence> {
    let batch_plan = sinkhorn_plan(minibatch, minibatch, p, params)?;
    sinkhorn_divergence_with_batch_cost(minibatch, sites, p, params, batch_plan.cost, batch_plan.residual)
}

/// As [`sinkhorn_divergence`], reusing a known batch self-cost.
pub(crate) fn sinkhorn_divergence_with_batch_cost(
    minibatch: &PointSet,
    sites: &PointSet,
    p: Exponent,
    params: SinkhornParams,
    batch_cost: f64,
    batch_residual: f64,
) -> Result<SinkhornDivergence> {
    minibatch.ensure_dim(sites.dim())?;
    let sites_u = sites.clone().into_uniform();
    let cross = sinkhorn_plan(&sites_u, minibatch, p, params)?;
    let own = sinkhorn_plan(&sites_u, &sites_u, p, params)?;
    let (n, d) = (sites_u.len(), sites_u.dim());
    let mut gradient = vec![0.0; n * d];
    for i in 0..n {
        let x = sites_u.point(i);
        let out = &mut gradient[i * d..(i + 1) * d];
        for (j, y) in minibatch.iter().enumerate() {
            cost_gradient(p, x, y, out, cross.at(i, j));
        }
        for k in 0..n {
            let w = -0.5 * (own.at(i, k) + own.at(k, i));
            cost_gradient(p, x, sites_u.point(k), out, w);
        }
    }
    let residual = cross.residual.max(own.residual).max(batch_residual);
    Ok(SinkhornDivergence {
        value: cross.cost - 0.5 * (own.cost + batch_cost),
        gradient,
        cross_cost: cross.cost,
        sites_cost: own.cost,
        batch_cost,
        residual,
        converged: residual <= params.tol,
    })
}

/// Median pairwise cost `‖y_i − y_j‖^p` over distinct pairs of the batch.
pub fn median_pair_cost(batch: &PointSet, p: Exponent) -> f64 {
    let m = batch.len();
    let mut costs = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            costs.push(p.cost(batch.point(i), batch.point(j)));
        }
    }
    if costs.is_empty() {
        return 0.0;
    }
    let mid = costs.len() / 2;
    let (_, median, _) = costs.select_nth_unstable_by(mid, f64::total_cmp);
    *median
}
