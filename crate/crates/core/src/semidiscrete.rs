//! Semi-discrete optimal transport between a finite site set and a sampled
//! measure.
//!
//! For uniform sites `x_1..x_n` and dual weights `v`, the transport cost is
//! the maximum over `v` of
//!
//! ```text
//! E_y[ min_i (‖y − x_i‖^p − v_i) ] + (1/n) Σ_i v_i
//! ```
//!
//! The inner minimizer defines the power cell of each sample. The objective is
//! concave and piecewise linear in `v`; its supergradient is `1/n` minus the
//! cell occupancy fractions, so balanced cells are stationary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Sampler;
use crate::points::{sq_dist, Exponent, PointSet};

/// Below this many distance evaluations the assignment stays sequential.
const PAR_THRESHOLD: usize = 1 << 15;

/// Coreset support: uniform weights, pairwise-distinct points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointSet", into = "PointSet")]
pub struct SiteSet {
    points: PointSet,
}

impl SiteSet {
    pub fn new(points: PointSet) -> Result<Self> {
        let points = points.into_uniform();
        if points.len() > 1 && points.min_pairwise_distance() <= 0.0 {
            return Err(Error::InvalidInput("sites must be pairwise distinct".into()));
        }
        Ok(SiteSet { points })
    }

    /// Build from possibly coincident points, nudging later duplicates by
    /// `1e-9 · scale` along a coordinate axis until all sites are distinct.
    /// Deterministic.
    pub fn separated(points: PointSet, scale: f64) -> Self {
        let mut points = points.into_uniform();
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let d = points.dim();
        for j in 1..points.len() {
            let mut attempt = 0usize;
            while (0..j).any(|i| sq_dist(points.point(i), points.point(j)) == 0.0) {
                attempt += 1;
                let axis = (j + attempt) % d;
                points.point_mut(j)[axis] += 1e-9 * scale * attempt as f64;
            }
        }
        SiteSet { points }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn site(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn into_points(self) -> PointSet {
        self.points
    }
}

impl TryFrom<PointSet> for SiteSet {
    type Error = Error;

    fn try_from(points: PointSet) -> Result<Self> {
        SiteSet::new(points)
    }
}

impl From<SiteSet> for PointSet {
    fn from(s: SiteSet) -> PointSet {
        s.points
    }
}

/// Kantorovich dual vector, one entry per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualWeights(pub Vec<f64>);

impl DualWeights {
    pub fn zeros(n: usize) -> Self {
        DualWeights(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Representative with zero mean; the objective does not see constant
    /// shifts.
    pub fn gauge_fixed(&self) -> Self {
        let m = self.mean();
        DualWeights(self.0.iter().map(|v| v - m).collect())
    }

    pub fn shifted(&self, c: f64) -> Self {
        DualWeights(self.0.iter().map(|v| v + c).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Power-cell membership of a set of query points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAssignment {
    /// Zero-based site index per query.
    pub indices: Vec<usize>,
    /// Occupancy histogram over sites.
    pub counts: Vec<usize>,
}

impl CellAssignment {
    pub fn queries(&self) -> usize {
        self.indices.len()
    }

    /// Occupancy fractions.
    pub fn fractions(&self) -> Vec<f64> {
        let m = self.indices.len() as f64;
        self.counts.iter().map(|&c| c as f64 / m).collect()
    }

    /// `max_i |count_i / m − 1/n|`.
    pub fn imbalance(&self) -> f64 {
        let n = self.counts.len() as f64;
        self.fractions()
            .into_iter()
            .map(|f| (f - 1.0 / n).abs())
            .fold(0.0, f64::max)
    }

    /// Supergradient of the dual objective: `1/n − count_i / m`.
    pub fn dual_gradient(&self) -> Vec<f64> {
        let n = self.counts.len() as f64;
        self.fractions().into_iter().map(|f| 1.0 / n - f).collect()
    }
}

/// One pass over a minibatch: assignment plus the per-query minimum shifted
/// cost `min_i (‖y − x_i‖^p − v_i)`.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub assignment: CellAssignment,
    pub shifted_costs: Vec<f64>,
    pub objective: f64,
}

impl DualEvaluation {
    pub fn gradient(&self) -> Vec<f64> {
        self.assignment.dual_gradient()
    }
}

fn check_inputs(queries: &PointSet, sites: &SiteSet, v: &DualWeights) -> Result<()> {
    queries.ensure_dim(sites.dim())?;
    if v.len() != sites.n() {
        return Err(Error::DimensionMismatch {
            expected: sites.n(),
            found: v.len(),
        });
    }
    Ok(())
}

#[inline]
fn nearest(y: &[f64], sites: &SiteSet, v: &[f64], p: Exponent) -> (usize, f64) {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, vi) in v.iter().enumerate() {
        let sq = sq_dist(y, sites.site(i));
        let c = match p {
            Exponent::Two => sq,
            Exponent::One => sq.sqrt(),
        } - vi;
        // Strict comparison: ties go to the lowest index.
        if c < best_cost {
            best_cost = c;
            best = i;
        }
    }
    (best, best_cost)
}

/// Assignment and shifted costs; the single code path behind [`assign`],
/// [`dual_objective`] and [`dual_gradient_v`].
pub fn evaluate(
    queries: &PointSet,
    sites: &SiteSet,
    v: &DualWeights,
    p: Exponent,
) -> Result<DualEvaluation> {
    check_inputs(queries, sites, v)?;
    let m = queries.len();
    let pairs: Vec<(usize, f64)> = if m * sites.n() * sites.dim() >= PAR_THRESHOLD {
        queries
            .coords()
            .par_chunks_exact(queries.dim())
            .with_min_len(64)
            .map(|y| nearest(y, sites, &v.0, p))
            .collect()
    } else {
        queries.iter().map(|y| nearest(y, sites, &v.0, p)).collect()
    };
    let mut counts = vec![0usize; sites.n()];
    let mut indices = Vec::with_capacity(m);
    let mut shifted_costs = Vec::with_capacity(m);
    for (i, c) in pairs {
        counts[i] += 1;
        indices.push(i);
        shifted_costs.push(c);
    }
    let objective = shifted_costs.iter().sum::<f64>() / m as f64 + v.mean();
    Ok(DualEvaluation {
        assignment: CellAssignment { indices, counts },
        shifted_costs,
        objective,
    })
}

/// Power-cell index of every query, ties to the lowest index.
pub fn assign(
    queries: &PointSet,
    sites: &SiteSet,
    v: &DualWeights,
    p: Exponent,
) -> Result<CellAssignment> {
    Ok(evaluate(queries, sites, v, p)?.assignment)
}

/// Unbiased minibatch estimate of the dual objective at `v`.
pub fn dual_objective(
    minibatch: &PointSet,
    sites: &SiteSet,
    v: &DualWeights,
    p: Exponent,
) -> Result<f64> {
    Ok(evaluate(minibatch, sites, v, p)?.objective)
}

/// Stochastic supergradient of the dual objective in `v`.
pub fn dual_gradient_v(
    minibatch: &PointSet,
    sites: &SiteSet,
    v: &DualWeights,
    p: Exponent,
) -> Result<Vec<f64>> {
    Ok(evaluate(minibatch, sites, v, p)?.gradient())
}

/// Costs `‖y_k − x_i‖^p` of a fixed query set against fixed sites. While the
/// sites do not move, repeated dual evaluations only need this matrix.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    m: usize,
    n: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(queries: &PointSet, sites: &SiteSet, p: Exponent) -> Result<Self> {
        queries.ensure_dim(sites.dim())?;
        if queries.is_empty() {
            return Err(Error::EmptyInput);
        }
        let row = |y: &[f64]| -> Vec<f64> {
            (0..sites.n())
                .map(|i| {
                    let sq = sq_dist(y, sites.site(i));
                    match p {
                        Exponent::Two => sq,
                        Exponent::One => sq.sqrt(),
                    }
                })
                .collect()
        };
        let costs: Vec<f64> = if queries.len() * sites.n() * sites.dim() >= PAR_THRESHOLD {
            queries
                .coords()
                .par_chunks_exact(queries.dim())
                .with_min_len(64)
                .flat_map_iter(row)
                .collect()
        } else {
            queries.iter().flat_map(row).collect()
        };
        Ok(CostMatrix {
            m: queries.len(),
            n: sites.n(),
            costs,
        })
    }

    pub fn queries(&self) -> usize {
        self.m
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    /// Same result, bit for bit, as [`evaluate`] on the original sets.
    pub fn evaluate(&self, v: &DualWeights) -> Result<DualEvaluation> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        let mut counts = vec![0usize; self.n];
        let mut indices = Vec::with_capacity(self.m);
        let mut shifted_costs = Vec::with_capacity(self.m);
        for row in self.costs.chunks_exact(self.n) {
            let mut best = 0;
            let mut best_cost = f64::INFINITY;
            for (i, (c, vi)) in row.iter().zip(&v.0).enumerate() {
                let c = c - vi;
                if c < best_cost {
                    best_cost = c;
                    best = i;
                }
            }
            counts[best] += 1;
            indices.push(best);
            shifted_costs.push(best_cost);
        }
        let objective = shifted_costs.iter().sum::<f64>() / self.m as f64 + v.mean();
        Ok(DualEvaluation {
            assignment: CellAssignment { indices, counts },
            shifted_costs,
            objective,
        })
    }
}

/// Step size `alpha · scale / √k` for the averaged dual ascent.
///
/// `scale` carries the units of the cost. When unset it is taken as
/// `n · c̄`, with `c̄` the mean nearest-site cost of the first minibatch at
/// `v = 0`; a unit `alpha` then moves a cell boundary by a fraction of a cell
/// per step regardless of the data's units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub alpha: f64,
    #[serde(default)]
    pub cost_scale: Option<f64>,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            alpha: 1.0,
            cost_scale: None,
        }
    }
}

/// Iterate, Polyak average and diagnostics of the dual ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub v: DualWeights,
    pub v_avg: DualWeights,
    pub step_count: usize,
    #[serde(default)]
    pub objective_trace: Vec<f64>,
}

impl DualState {
    pub fn new(n: usize) -> Self {
        DualState {
            v: DualWeights::zeros(n),
            v_avg: DualWeights::zeros(n),
            step_count: 0,
            objective_trace: Vec::new(),
        }
    }

    /// Working estimate of the optimal dual vector.
    pub fn estimate(&self) -> &DualWeights {
        &self.v_avg
    }
}

/// Averaged stochastic ascent on the dual, starting from `warm_start` (zero
/// when `None`). Each of the `steps` iterations draws a fresh minibatch of
/// size `batch` from `sampler`. The returned iterate and average are
/// gauge-fixed to mean zero.
pub fn solve_dual(
    sampler: &mut dyn Sampler,
    sites: &SiteSet,
    p: Exponent,
    batch: usize,
    steps: usize,
    schedule: StepSchedule,
    warm_start: Option<&DualWeights>,
) -> Result<DualState> {
    if batch == 0 {
        return Err(Error::Config("dual minibatch size must be >= 1".into()));
    }
    ascend(sites.n(), steps, schedule, warm_start, |k| {
        let minibatch = sampler.draw(batch).map_err(|e| {
            if e.is_exhausted() {
                Error::DualInterrupted {
                    completed: k - 1,
                    requested: steps,
                }
            } else {
                e
            }
        })?;
        CostMatrix::new(&minibatch, sites, p)
    })
}

/// [`solve_dual`] against the empirical measure of one fixed query set:
/// every step uses the exact supergradient on `costs`.
pub fn solve_dual_fixed(
    costs: &CostMatrix,
    steps: usize,
    schedule: StepSchedule,
    warm_start: Option<&DualWeights>,
) -> Result<DualState> {
    ascend(costs.sites(), steps, schedule, warm_start, |_| Ok(costs))
}

fn ascend<C: std::borrow::Borrow<CostMatrix>>(
    n: usize,
    steps: usize,
    schedule: StepSchedule,
    warm_start: Option<&DualWeights>,
    mut next: impl FnMut(usize) -> Result<C>,
) -> Result<DualState> {
    if steps == 0 {
        return Err(Error::Config("dual ascent needs at least one step".into()));
    }
    if !(schedule.alpha.is_finite() && schedule.alpha >= 0.0) {
        return Err(Error::Config("dual step alpha must be finite and >= 0".into()));
    }
    let mut state = DualState::new(n);
    if let Some(w) = warm_start {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            });
        }
        state.v = w.clone();
    }
    let mut sum = vec![0.0; n];
    let mut scale = schedule.cost_scale;
    for k in 1..=steps {
        let costs = next(k)?;
        let costs = costs.borrow();
        let eval = costs.evaluate(&state.v)?;
        let scale = *scale.get_or_insert_with(|| {
            let zero = DualWeights::zeros(n);
            let mean_cost = costs.evaluate(&zero).map(|e| e.objective).unwrap_or(0.0);
            n as f64 * mean_cost
        });
        let step = schedule.alpha * scale / (k as f64).sqrt();
        for (vi, g) in state.v.0.iter_mut().zip(eval.gradient()) {
            *vi += step * g;
        }
        for (s, vi) in sum.iter_mut().zip(&state.v.0) {
            *s += vi;
        }
        state.objective_trace.push(eval.objective);
        state.step_count = k;
    }
    let avg = DualWeights(sum.into_iter().map(|s| s / steps as f64).collect());
    state.v = state.v.gauge_fixed();
    state.v_avg = avg.gauge_fixed();
    Ok(state)
}

/// Monte Carlo transport cost estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpEstimate {
    /// `W_p`, the p-th root of `cost`.
    pub value: f64,
    /// Estimated `W_p^p` (the dual objective).
    pub cost: f64,
    /// Standard error of `cost`.
    pub cost_std_error: f64,
    /// Standard error of `value`, by the delta method, capped by `√se` for
    /// `p = 2` near zero.
    pub std_error: f64,
    pub samples: usize,
}

/// Dual objective at `dual.v_avg` over `samples` fresh draws, rooted.
pub fn estimate_wp(
    sampler: &mut dyn Sampler,
    sites: &SiteSet,
    dual: &DualState,
    p: Exponent,
    samples: usize,
) -> Result<WpEstimate> {
    if samples < 30 {
        return Err(Error::Config(format!(
            "W_p estimate needs at least 30 samples, got {samples}"
        )));
    }
    const CHUNK: usize = 8192;
    let v = &dual.v_avg;
    let v_mean = v.mean();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut left = samples;
    while left > 0 {
        let take = left.min(CHUNK);
        let draws = sampler.draw(take)?;
        let eval = evaluate(&draws, sites, v, p)?;
        for h in eval.shifted_costs {
            let h = h + v_mean;
            sum += h;
            sum_sq += h * h;
        }
        left -= take;
    }
    let m = samples as f64;
    let cost = sum / m;
    let var = ((sum_sq - m * cost * cost) / (m - 1.0)).max(0.0);
    let cost_std_error = (var / m).sqrt();
    let value = p.root(cost);
    let std_error = match p {
        Exponent::One => cost_std_error,
        Exponent::Two => {
            let cap = cost_std_error.sqrt();
            if value > 0.0 {
                (cost_std_error / (2.0 * value)).min(cap)
            } else {
                cap
            }
        }
    };
    Ok(WpEstimate {
        value,
        cost,
        cost_std_error,
        std_error,
        samples,
    })
}

/// Settings for [`estimate_to_sampler`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub dual_steps: usize,
    /// Dual minibatch size; `None` means `max(512, 8n)`.
    pub dual_batch: Option<usize>,
    pub samples: usize,
    pub schedule: StepSchedule,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            dual_steps: 1000,
            dual_batch: None,
            samples: 100_000,
            schedule: StepSchedule::default(),
        }
    }
}

/// Cold-started dual solve followed by a fresh-sample estimate: `Ŵ_p` of the
/// uniform measure on `sites` against the sampler's distribution.
pub fn estimate_to_sampler(
    sampler: &mut dyn Sampler,
    sites: &SiteSet,
    p: Exponent,
    opts: EstimateOptions,
) -> Result<(WpEstimate, DualState)> {
    let batch = opts.dual_batch.unwrap_or_else(|| (8 * sites.n()).max(512));
    let dual = solve_dual(sampler, sites, p, batch, opts.dual_steps, opts.schedule, None)?;
    let est = estimate_wp(sampler, sites, &dual, p, opts.samples)?;
    Ok((est, dual))
}
