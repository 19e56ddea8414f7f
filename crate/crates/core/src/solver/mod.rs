//! Online coreset construction: the outer loop over site positions.
//!
//! Each outer iteration `k` draws a minibatch, then either
//!
//! - refreshes the dual weights on that minibatch (warm-started) and applies
//!   the `W_1` step or the `W_2` fixed point in the resulting power cells, or
//! - computes the Sinkhorn divergence between the sites and the minibatch and
//!   takes a `γ/√k` gradient step.

mod sinkhorn;
mod steps;

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use sinkhorn::{
    median_pair_cost, sinkhorn_divergence, sinkhorn_plan, SinkhornDivergence, SinkhornParams,
    SinkhornPlan,
};
pub use steps::{w1_step, w1_update, w2_step, w2_update, SiteUpdate, COINCIDENT};

use crate::error::{Error, Result};
use crate::measures::Sampler;
use crate::points::{Exponent, PointSet};
use crate::rng::{self, Rng};
use crate::semidiscrete::{
    evaluate, solve_dual_fixed, CostMatrix, DualState, DualWeights, SiteSet, StepSchedule,
};

/// Entropic regularization of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eta {
    /// Unregularized semi-discrete path.
    Off,
    Fixed(f64),
    /// `factor ×` the median pairwise cost `‖y − y'‖^p` of the first
    /// minibatch.
    Adaptive(f64),
}

impl Eta {
    pub const DEFAULT_FACTOR: f64 = 0.05;

    pub fn is_off(self) -> bool {
        matches!(self, Eta::Off) || self == Eta::Fixed(0.0)
    }
}

/// Which site update the configuration selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    W1,
    W2,
    Sinkhorn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    pub p: Exponent,
    pub eta: Eta,
    /// Minibatch size `m`; `None` means `max(256, 4n)`.
    pub minibatch: Option<usize>,
    pub gamma: f64,
    pub outer_iters: usize,
    /// Dual ascent steps per outer iteration.
    pub dual_steps: usize,
    pub dual_alpha: f64,
    pub sinkhorn_iters: usize,
    pub seed: u64,
    /// `None` means `1e-4 ×` the RMS radius of the first minibatch.
    pub grad_tolerance: Option<f64>,
    pub grad_window: usize,
    /// Consecutive empty-cell iterations before a site is reseeded.
    pub empty_patience: usize,
}

impl SolverConfig {
    pub fn new(n: usize, p: Exponent) -> Self {
        SolverConfig {
            n,
            p,
            eta: Eta::Off,
            minibatch: None,
            gamma: 1.0,
            outer_iters: 100,
            dual_steps: 200,
            dual_alpha: 1.0,
            sinkhorn_iters: 100,
            seed: 0,
            grad_tolerance: None,
            grad_window: 10,
            empty_patience: 20,
        }
    }

    pub fn w1(n: usize) -> Self {
        Self::new(n, Exponent::One)
    }

    pub fn w2(n: usize) -> Self {
        Self::new(n, Exponent::Two)
    }

    /// Sinkhorn divergence with the adaptive `η`.
    pub fn sinkhorn(n: usize, p: Exponent) -> Self {
        SolverConfig {
            eta: Eta::Adaptive(Eta::DEFAULT_FACTOR),
            ..Self::new(n, p)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn method(&self) -> Method {
        match (self.eta.is_off(), self.p) {
            (false, _) => Method::Sinkhorn,
            (true, Exponent::One) => Method::W1,
            (true, Exponent::Two) => Method::W2,
        }
    }

    pub fn minibatch_size(&self) -> usize {
        self.minibatch.unwrap_or_else(|| (4 * self.n).max(256))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return fail("coreset size n must be >= 1".into());
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return fail(format!("step size gamma must be > 0, got {}", self.gamma));
        }
        if self.minibatch == Some(0) {
            return fail("minibatch size must be >= 1".into());
        }
        match self.eta {
            Eta::Fixed(e) if !(e.is_finite() && e >= 0.0) => {
                return fail(format!("eta must be >= 0, got {e}"))
            }
            Eta::Adaptive(f) if !(f.is_finite() && f > 0.0) => {
                return fail(format!("adaptive eta factor must be > 0, got {f}"))
            }
            _ => {}
        }
        if self.method() == Method::Sinkhorn && self.sinkhorn_iters == 0 {
            return fail("sinkhorn_iters must be >= 1".into());
        }
        if self.method() != Method::Sinkhorn && self.dual_steps == 0 {
            return fail("dual_steps must be >= 1".into());
        }
        if !(self.dual_alpha.is_finite() && self.dual_alpha > 0.0) {
            return fail(format!("dual_alpha must be > 0, got {}", self.dual_alpha));
        }
        if let Some(t) = self.grad_tolerance {
            if !(t >= 0.0) {
                return fail(format!("grad_tolerance must be >= 0, got {t}"));
            }
        }
        if self.grad_window == 0 {
            return fail("grad_window must be >= 1".into());
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.minibatch_size() < self.n {
            out.push(format!(
                "minibatch size {} is smaller than n = {}; some cells are always empty",
                self.minibatch_size(),
                self.n
            ));
        }
        out
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `W_p` (or `SD^{1/p}`) between the sites entering this iteration and
    /// the fresh minibatch.
    pub wp_estimate: f64,
    /// Minibatch dual objective at the averaged weights (Sinkhorn path: the
    /// divergence value).
    pub dual_objective: f64,
    pub occupancy: Vec<usize>,
    pub max_displacement: f64,
    /// Norm of the displacement field divided by the step factor.
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinkhorn_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reseeded: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminatedBy {
    IterBudget,
    GradTolerance,
    StreamEnd,
}

/// Values left open by the configuration and fixed on the first minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Resolved {
    pub minibatch: usize,
    pub eta: Option<f64>,
    pub grad_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoresetResult {
    pub sites: SiteSet,
    pub trace: Vec<TraceEntry>,
    pub config: SolverConfig,
    pub resolved: Resolved,
    pub terminated_by: TerminatedBy,
    /// Final averaged dual weights (zeros on the Sinkhorn path).
    pub dual: DualWeights,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Sidecar written next to the coreset: everything but the sites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    pub config: SolverConfig,
    pub resolved: Resolved,
    pub terminated_by: TerminatedBy,
    pub iterations: usize,
    pub dual: DualWeights,
    pub warnings: Vec<String>,
    pub trace: Vec<TraceEntry>,
}

impl CoresetResult {
    pub fn trace_file(&self) -> TraceFile {
        TraceFile {
            config: self.config.clone(),
            resolved: self.resolved,
            terminated_by: self.terminated_by,
            iterations: self.trace.len(),
            dual: self.dual.clone(),
            warnings: self.warnings.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// `n` draws from the sampler, nudged apart by `1e-9 ×` the coordinate range
/// if any coincide.
pub fn init_sites(sampler: &mut dyn Sampler, n: usize) -> Result<SiteSet> {
    if n == 0 {
        return Err(Error::Config("coreset size n must be >= 1".into()));
    }
    let draw = sampler.draw(n)?;
    let scale = draw.coordinate_range();
    Ok(SiteSet::separated(draw, scale))
}

/// Serialized solver state for checkpoint and resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SolverConfig,
    pub resolved: Resolved,
    pub sites: SiteSet,
    pub dual: DualState,
    pub iteration: usize,
    pub empty_streak: Vec<usize>,
    pub trace: Vec<TraceEntry>,
    pub terminated_by: Option<TerminatedBy>,
    pub sampler_rng: Option<Rng>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Stateful outer loop. [`build_coreset`] runs it to completion; use the
/// builder directly to step, checkpoint or resume.
pub struct CoresetBuilder<'a> {
    sampler: &'a mut dyn Sampler,
    config: SolverConfig,
    resolved: Resolved,
    sites: SiteSet,
    dual: DualState,
    iteration: usize,
    empty_streak: Vec<usize>,
    trace: Vec<TraceEntry>,
    terminated_by: Option<TerminatedBy>,
}

impl<'a> CoresetBuilder<'a> {
    pub fn new(sampler: &'a mut dyn Sampler, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let sites = init_sites(sampler, config.n)?;
        let n = config.n;
        Ok(CoresetBuilder {
            sampler,
            resolved: Resolved {
                minibatch: config.minibatch_size(),
                ..Resolved::default()
            },
            config,
            sites,
            dual: DualState::new(n),
            iteration: 0,
            empty_streak: vec![0; n],
            trace: Vec::new(),
            terminated_by: None,
        })
    }

    /// Continue from a checkpoint. The sampler must be the same source; its
    /// generator is restored when the checkpoint carries one.
    pub fn resume(sampler: &'a mut dyn Sampler, checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.config.validate()?;
        if checkpoint.sites.n() != checkpoint.config.n {
            return Err(Error::InvalidInput(
                "checkpoint site count does not match its config".into(),
            ));
        }
        checkpoint.sites.points().ensure_dim(sampler.dim())?;
        if let Some(rng) = checkpoint.sampler_rng {
            sampler.restore_rng(rng)?;
        }
        Ok(CoresetBuilder {
            sampler,
            config: checkpoint.config,
            resolved: checkpoint.resolved,
            sites: checkpoint.sites,
            dual: checkpoint.dual,
            iteration: checkpoint.iteration,
            empty_streak: checkpoint.empty_streak,
            trace: checkpoint.trace,
            terminated_by: checkpoint.terminated_by,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            resolved: self.resolved,
            sites: self.sites.clone(),
            dual: self.dual.clone(),
            iteration: self.iteration,
            empty_streak: self.empty_streak.clone(),
            trace: self.trace.clone(),
            terminated_by: self.terminated_by,
            sampler_rng: self.sampler.rng_snapshot(),
        }
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn terminated_by(&self) -> Option<TerminatedBy> {
        self.terminated_by
    }

    /// One outer iteration. Returns the termination cause once the run is
    /// over; further calls are no-ops.
    pub fn step(&mut self) -> Result<Option<TerminatedBy>> {
        if let Some(t) = self.terminated_by {
            return Ok(Some(t));
        }
        if self.iteration >= self.config.outer_iters {
            return Ok(self.stop(TerminatedBy::IterBudget));
        }
        let minibatch = match self.sampler.draw(self.resolved.minibatch) {
            Ok(b) => b,
            Err(e) if e.is_exhausted() => return Ok(self.stop(TerminatedBy::StreamEnd)),
            Err(e) => return Err(e),
        };
        minibatch.ensure_dim(self.sites.dim())?;
        let k = self.iteration + 1;
        if self.resolved.grad_tolerance.is_none() {
            let scale = minibatch.rms_radius();
            self.resolved.grad_tolerance = Some(
                self.config
                    .grad_tolerance
                    .unwrap_or(1e-4 * if scale > 0.0 { scale } else { 1.0 }),
            );
        }
        let entry = match self.config.method() {
            Method::Sinkhorn => self.sinkhorn_iteration(&minibatch, k)?,
            _ => self.semidiscrete_iteration(&minibatch, k)?,
        };
        self.iteration = k;
        self.trace.push(entry);
        let window = self.config.grad_window;
        if self.trace.len() >= window {
            let recent = &self.trace[self.trace.len() - window..];
            let mean = recent.iter().map(|t| t.grad_norm).sum::<f64>() / window as f64;
            if mean <= self.resolved.grad_tolerance.unwrap_or(0.0) {
                return Ok(self.stop(TerminatedBy::GradTolerance));
            }
        }
        if self.iteration >= self.config.outer_iters {
            return Ok(self.stop(TerminatedBy::IterBudget));
        }
        Ok(None)
    }

    fn stop(&mut self, why: TerminatedBy) -> Option<TerminatedBy> {
        self.terminated_by = Some(why);
        Some(why)
    }

    fn semidiscrete_iteration(&mut self, minibatch: &PointSet, k: usize) -> Result<TraceEntry> {
        let p = self.config.p;
        let schedule = StepSchedule {
            alpha: self.config.dual_alpha,
            cost_scale: None,
        };
        // The dual is solved against the minibatch's empirical measure, with
        // exact supergradients; the sites do not move meanwhile.
        let costs = CostMatrix::new(minibatch, &self.sites, p)?;
        let warm = self.dual.v.clone();
        let state = solve_dual_fixed(&costs, self.config.dual_steps, schedule, Some(&warm))?;
        let step_count = self.dual.step_count + state.step_count;
        self.dual = DualState {
            step_count,
            ..state
        };
        let eval = costs.evaluate(&self.dual.v_avg)?;
        let cells = &eval.assignment;
        let (update, step) = match p {
            Exponent::One => {
                let u = w1_update(&self.sites, minibatch, cells, self.config.gamma, k);
                (u, self.config.gamma / (k as f64).sqrt())
            }
            Exponent::Two => (w2_update(&self.sites, minibatch, cells), 1.0),
        };
        let max_displacement = update.max_displacement();
        let grad_norm = update.norm() / step;
        let mut points = update.points;
        let reseeded = self.reseed_empty(&cells.counts, minibatch, &mut points, k);
        self.sites = SiteSet::separated(points, minibatch.rms_radius());
        Ok(TraceEntry {
            iteration: k,
            wp_estimate: p.root(eval.objective.max(0.0)),
            dual_objective: eval.objective,
            occupancy: eval.assignment.counts.clone(),
            max_displacement,
            grad_norm,
            sinkhorn_residual: None,
            reseeded,
        })
    }

    /// Moves sites whose cell stayed empty for `empty_patience` iterations
    /// onto random minibatch points.
    fn reseed_empty(
        &mut self,
        counts: &[usize],
        minibatch: &PointSet,
        points: &mut PointSet,
        k: usize,
    ) -> Vec<usize> {
        let mut reseeded = Vec::new();
        let mut rng = None;
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                self.empty_streak[i] = 0;
                continue;
            }
            self.empty_streak[i] += 1;
            if self.config.empty_patience > 0 && self.empty_streak[i] >= self.config.empty_patience {
                let rng = rng.get_or_insert_with(|| {
                    rng::stream(rng::derive_seed(self.config.seed, "reseed"), k as u64)
                });
                let j = rng.random_range(0..minibatch.len());
                points.point_mut(i).copy_from_slice(minibatch.point(j));
                self.dual.v.0[i] = 0.0;
                self.dual.v_avg.0[i] = 0.0;
                self.empty_streak[i] = 0;
                reseeded.push(i);
            }
        }
        if !reseeded.is_empty() {
            self.dual.v = self.dual.v.gauge_fixed();
            self.dual.v_avg = self.dual.v_avg.gauge_fixed();
        }
        reseeded
    }

    fn sinkhorn_iteration(&mut self, minibatch: &PointSet, k: usize) -> Result<TraceEntry> {
        let p = self.config.p;
        let eta = match self.resolved.eta {
            Some(e) => e,
            None => {
                let e = match self.config.eta {
                    Eta::Fixed(e) => e,
                    Eta::Adaptive(factor) => {
                        let med = median_pair_cost(minibatch, p);
                        factor * if med > 0.0 { med } else { 1.0 }
                    }
                    Eta::Off => unreachable!("Sinkhorn path requires eta > 0"),
                };
                self.resolved.eta = Some(e);
                e
            }
        };
        let params = SinkhornParams::new(eta, self.config.sinkhorn_iters);
        let sd = sinkhorn_divergence(minibatch, self.sites.points(), p, params)?;
        let n = self.sites.n();
        let d = self.sites.dim();
        let step = self.config.gamma / (k as f64).sqrt();
        let precondition = n as f64 / p.as_f64();
        let mut points = self.sites.points().clone();
        let mut displacement = Vec::with_capacity(n);
        for i in 0..n {
            let g = &sd.gradient[i * d..(i + 1) * d];
            let mut sq = 0.0;
            for (x, gk) in points.point_mut(i).iter_mut().zip(g) {
                let delta = step * precondition * gk;
                *x -= delta;
                sq += delta * delta;
            }
            displacement.push(sq.sqrt());
        }
        if points.coords().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("Sinkhorn step produced non-finite sites".into()));
        }
        let occupancy = evaluate(minibatch, &self.sites, &DualWeights::zeros(n), p)?
            .assignment
            .counts;
        let update = SiteUpdate {
            points,
            displacement,
        };
        let max_displacement = update.max_displacement();
        let grad_norm = update.norm() / step;
        self.sites = update.into_sites(minibatch.rms_radius());
        Ok(TraceEntry {
            iteration: k,
            wp_estimate: p.root(sd.value.max(0.0)),
            dual_objective: sd.value,
            occupancy,
            max_displacement,
            grad_norm,
            sinkhorn_residual: Some(sd.residual),
            reseeded: Vec::new(),
        })
    }

    /// Step until termination.
    pub fn run(mut self) -> Result<CoresetResult> {
        while self.step()?.is_none() {}
        Ok(self.finish())
    }

    /// Run at most `iters` further iterations; `true` once terminated.
    pub fn run_for(&mut self, iters: usize) -> Result<bool> {
        for _ in 0..iters {
            if self.step()?.is_some() {
                return Ok(true);
            }
        }
        Ok(self.terminated_by.is_some())
    }

    pub fn finish(self) -> CoresetResult {
        let warnings = self.config.warnings();
        CoresetResult {
            sites: self.sites,
            trace: self.trace,
            resolved: self.resolved,
            terminated_by: self.terminated_by.unwrap_or(TerminatedBy::IterBudget),
            dual: self.dual.v_avg,
            config: self.config,
            warnings,
        }
    }
}

/// Run the online construction to completion.
pub fn build_coreset(sampler: &mut dyn Sampler, config: SolverConfig) -> Result<CoresetResult> {
    CoresetBuilder::new(sampler, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::EmpiricalSampler;

    fn empirical(rows: &[[f64; 2]], seed: u64) -> EmpiricalSampler {
        EmpiricalSampler::new(PointSet::from_rows(rows).unwrap(), seed).unwrap()
    }

    #[test]
    fn zero_iterations_returns_initial_sites() {
        let mut s = empirical(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], 3);
        let mut probe = empirical(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], 3);
        let init = init_sites(&mut probe, 2).unwrap();
        let cfg = SolverConfig {
            outer_iters: 0,
            ..SolverConfig::w2(2)
        };
        let res = build_coreset(&mut s, cfg).unwrap();
        assert_eq!(res.terminated_by, TerminatedBy::IterBudget);
        assert!(res.trace.is_empty());
        assert_eq!(res.sites, init);
    }

    #[test]
    fn init_on_a_dirac_separates_sites() {
        let mut s = empirical(&[[0.0, 0.0]], 1);
        let sites = init_sites(&mut s, 2).unwrap();
        assert!(sites.points().min_pairwise_distance() > 0.0);
        assert!(sites.points().min_pairwise_distance() < 1e-8);
    }

    #[test]
    fn single_site_is_first_draw() {
        let mut a = empirical(&[[0.0, 0.0], [5.0, 1.0], [2.0, 3.0]], 9);
        let mut b = empirical(&[[0.0, 0.0], [5.0, 1.0], [2.0, 3.0]], 9);
        let sites = init_sites(&mut a, 1).unwrap();
        assert_eq!(sites.site(0), b.draw(1).unwrap().point(0));
    }

    #[test]
    fn two_distant_points_are_recovered() {
        let rows = [[0.0, 0.0], [10.0, 0.0]];
        // W2 lands on the points; W1 keeps oscillating at the last step size.
        for (cfg, tol) in [
            (SolverConfig::w2(2), 1e-3),
            (SolverConfig::w1(2), 0.1 + 1e-9),
        ] {
            let mut s = empirical(&rows, 4);
            let res = build_coreset(&mut s, cfg.with_seed(4)).unwrap();
            let mut got = res.sites.points().to_rows();
            got.sort_by(|a, b| a[0].total_cmp(&b[0]));
            for (g, want) in got.iter().zip(rows) {
                let err = ((g[0] - want[0]).powi(2) + (g[1] - want[1]).powi(2)).sqrt();
                assert!(err <= tol, "{:?}: {got:?}", res.config.method());
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut s = empirical(&[[0.0, 0.0]], 1);
        for cfg in [
            SolverConfig::w2(0),
            SolverConfig {
                gamma: 0.0,
                ..SolverConfig::w2(1)
            },
            SolverConfig {
                eta: Eta::Fixed(-1.0),
                ..SolverConfig::w2(1)
            },
            SolverConfig {
                minibatch: Some(0),
                ..SolverConfig::w2(1)
            },
        ] {
            assert!(matches!(build_coreset(&mut s, cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn eta_zero_selects_unregularized_path() {
        let cfg = SolverConfig {
            eta: Eta::Fixed(0.0),
            ..SolverConfig::w2(3)
        };
        assert_eq!(cfg.method(), Method::W2);
        assert_eq!(SolverConfig::sinkhorn(3, Exponent::Two).method(), Method::Sinkhorn);
        assert_eq!(SolverConfig::w1(10).minibatch_size(), 256);
        assert_eq!(SolverConfig::w1(100).minibatch_size(), 400);
    }
}
