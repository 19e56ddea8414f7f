//! Method × size × repeat grids comparing summaries on a downstream task.
//!
//! Every repeat gets its own seed, shared by all methods and sizes of that
//! repeat (paired runs). Each method then draws from a named sub-stream of
//! the repeat seed, so adding a method leaves the others' draws unchanged.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    herding_baseline, kmeans_relative, laplace_posterior, logreg_relative, median_bandwidth,
    signed_features, svm_relative, uniform_from_pool, GaussianPosterior, KMeansReference, KernelSpec, LaplaceParams,
    LloydParams, SummaryMethod, SvmParams, SvmReference, Task, TaskReport,
};
use crate::measures::EmpiricalSampler;
use crate::points::{Exponent, PointSet};
use crate::rng;
use crate::solver::{build_coreset, Eta, SolverConfig};

/// A dataset with optional integer labels aligned by row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub points: PointSet,
    pub labels: Option<Vec<i64>>,
}

impl LabeledData {
    pub fn unlabeled(points: PointSet) -> Self {
        LabeledData {
            points,
            labels: None,
        }
    }

    pub fn labeled(points: PointSet, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: labels.len(),
            });
        }
        Ok(LabeledData {
            points,
            labels: Some(labels),
        })
    }

    /// Sorted distinct labels with the row indices of each.
    pub fn classes(&self) -> Result<Vec<(i64, Vec<usize>)>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("task needs labeled data".into()))?;
        let mut out: Vec<(i64, Vec<usize>)> = Vec::new();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| (labels[i], i));
        for i in order {
            match out.last_mut() {
                Some((l, rows)) if *l == labels[i] => rows.push(i),
                _ => out.push((labels[i], vec![i])),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub methods: Vec<SummaryMethod>,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    /// Template for coreset builds; `n`, `p`, `seed` and (except for the
    /// Sinkhorn method) `eta` are set per cell.
    pub solver: SolverConfig,
    /// Number of k-means centers; defaults to the smallest size.
    pub k: Option<usize>,
    pub svm: SvmParams,
    pub laplace: LaplaceParams,
    pub lloyd: LloydParams,
    /// Herding selects from a uniform subsample of at most this many rows
    /// per class.
    pub herding_pool: usize,
    /// Keep every emitted summary in the outcome.
    pub keep_summaries: bool,
}

impl ExperimentConfig {
    pub fn new(task: Task, methods: Vec<SummaryMethod>, sizes: Vec<usize>) -> Self {
        ExperimentConfig {
            task,
            methods,
            sizes,
            repeats: 20,
            seed: 0,
            solver: SolverConfig::w2(1),
            k: None,
            svm: SvmParams::default(),
            laplace: LaplaceParams::default(),
            lloyd: LloydParams::default(),
            herding_pool: 2000,
            keep_summaries: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return fail("no methods selected".into());
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return fail("sizes must be a nonempty list of positive integers".into());
        }
        if self.repeats == 0 {
            return fail("repeats must be >= 1".into());
        }
        if self.herding_pool == 0 {
            return fail("herding pool must be >= 1".into());
        }
        match self.task {
            Task::Kmeans => {
                let k = self.kmeans_k();
                if k == 0 || self.sizes.iter().any(|&s| s < k) {
                    return fail(format!("k = {k} must lie in 1..=min(sizes)"));
                }
            }
            Task::Svm => {
                if let Some(s) = self.sizes.iter().find(|&&s| s % 2 == 1) {
                    return fail(format!(
                        "svm summaries are split evenly over two classes; size {s} is odd"
                    ));
                }
            }
            Task::LogregPosterior => {}
            Task::Distance => return fail("distance is not a grid task".into()),
        }
        let mut probe = self.solver.clone();
        probe.n = 1;
        probe.validate()
    }

    pub fn kmeans_k(&self) -> usize {
        self.k
            .unwrap_or_else(|| self.sizes.iter().copied().min().unwrap_or(1))
    }

    /// Seed of repeat `r`, shared by every method and size.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        rng::derive_seed(self.seed, &format!("repeat/{r}"))
    }

    fn metric_name(&self) -> &'static str {
        match self.task {
            Task::Kmeans => "relative-cost",
            Task::Svm => "relative-accuracy",
            Task::LogregPosterior => "kl",
            Task::Distance => "distance",
        }
    }
}

/// One emitted summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedSummary {
    pub method: SummaryMethod,
    pub size: usize,
    pub repeat: usize,
    pub seed: u64,
    pub points: PointSet,
    pub labels: Option<Vec<i64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: TaskReport,
    pub summaries: Vec<EmittedSummary>,
    pub repeat_seeds: Vec<u64>,
}

enum Reference {
    Kmeans(KMeansReference),
    Svm(SvmReference),
    Logreg(GaussianPosterior),
}

/// Per-class row counts for a summary of `size`: an equal split.
pub fn class_allocation(classes: usize, size: usize) -> Result<Vec<usize>> {
    if classes == 0 {
        return Err(Error::EmptyInput);
    }
    if !size.is_multiple_of(classes) {
        return Err(Error::Config(format!(
            "size {size} does not split evenly over {classes} classes"
        )));
    }
    Ok(vec![size / classes; classes])
}

/// Summary of `size` rows of `data` by `method`.
///
/// For SVM the classes are summarized separately and merged, every row of a
/// class summary carrying the class label. For logistic regression the
/// summary is taken of [`signed_features`] and every row carries the positive
/// label. Other tasks ignore labels.
pub fn summarize(
    data: &LabeledData,
    method: SummaryMethod,
    size: usize,
    task: Task,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(PointSet, Option<Vec<i64>>)> {
    let stream = |tag: &str| rng::derive_seed(seed, &format!("{}/{size}/{tag}", method.name()));
    match (task, &data.labels) {
        (Task::Svm, _) => {}
        (Task::LogregPosterior, Some(labels)) => {
            let (signed, positive) = signed_features(&data.points, labels)?;
            let pts = summarize_one(&signed, method, size, config, stream("signed"))?;
            let n = pts.len();
            return Ok((pts, Some(vec![positive; n])));
        }
        _ => {
            let pts = summarize_one(&data.points, method, size, config, stream("all"))?;
            return Ok((pts, None));
        }
    }
    let classes = data.classes()?;
    let alloc = class_allocation(classes.len(), size)?;
    let mut merged: Option<PointSet> = None;
    let mut labels = Vec::with_capacity(size);
    for ((label, rows), n) in classes.iter().zip(alloc) {
        let part = data.points.select(rows)?.into_uniform();
        let s = summarize_one(&part, method, n, config, stream(&format!("class-{label}")))?;
        labels.extend(std::iter::repeat_n(*label, s.len()));
        merged = Some(match merged {
            None => s,
            Some(m) => m.concat(&s)?,
        });
    }
    let merged = merged.ok_or(Error::EmptyInput)?.into_uniform();
    Ok((merged, Some(labels)))
}

fn summarize_one(
    data: &PointSet,
    method: SummaryMethod,
    n: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<PointSet> {
    let coreset = |p: Exponent, eta: Eta| -> Result<PointSet> {
        let mut sampler = EmpiricalSampler::new(data.clone(), seed)?;
        let cfg = SolverConfig {
            n,
            p,
            eta,
            seed,
            ..config.solver.clone()
        };
        Ok(build_coreset(&mut sampler, cfg)?.sites.into_points())
    };
    match method {
        SummaryMethod::CoresetW1 => coreset(Exponent::One, Eta::Off),
        SummaryMethod::CoresetW2 => coreset(Exponent::Two, Eta::Off),
        SummaryMethod::CoresetSd => {
            let eta = if config.solver.eta.is_off() {
                Eta::Adaptive(Eta::DEFAULT_FACTOR)
            } else {
                config.solver.eta
            };
            coreset(config.solver.p, eta)
        }
        SummaryMethod::Uniform => uniform_from_pool(data, n, seed),
        SummaryMethod::Herding => {
            let pool = if data.len() > config.herding_pool {
                let mut r = rng::named(seed, "herding-pool");
                let mut idx = sample(&mut r, data.len(), config.herding_pool).into_vec();
                idx.sort_unstable();
                data.select(&idx)?.into_uniform()
            } else {
                data.clone()
            };
            if n > pool.len() {
                return Err(Error::Config(format!(
                    "herding size {n} exceeds its pool of {}",
                    pool.len()
                )));
            }
            let kernel = KernelSpec::Gaussian {
                sigma: median_bandwidth(&pool),
            };
            Ok(herding_baseline(&pool, n, &kernel)?.0)
        }
    }
}

fn fit_reference(data: &LabeledData, config: &ExperimentConfig) -> Result<Reference> {
    let seed = rng::derive_seed(config.seed, "reference");
    Ok(match config.task {
        Task::Kmeans => Reference::Kmeans(KMeansReference::fit(
            &data.points,
            config.kmeans_k(),
            &config.lloyd,
            seed,
        )?),
        Task::Svm => Reference::Svm(SvmReference::fit(
            &data.points,
            labels_of(data)?,
            &config.svm,
        )?),
        Task::LogregPosterior => Reference::Logreg(laplace_posterior(
            &data.points,
            labels_of(data)?,
            1.0,
            &config.laplace,
        )?),
        Task::Distance => return Err(Error::Config("distance is not a grid task".into())),
    })
}

fn labels_of(data: &LabeledData) -> Result<&[i64]> {
    data.labels
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("task needs labeled data".into()))
}

fn score(
    data: &LabeledData,
    reference: &Reference,
    summary: &PointSet,
    labels: Option<&[i64]>,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<f64> {
    let missing = || Error::InvalidInput("summary lacks labels".into());
    match reference {
        Reference::Kmeans(r) => Ok(kmeans_relative(&data.points, summary, r, &config.lloyd, seed)?
            .relative_cost),
        Reference::Svm(r) => Ok(svm_relative(
            &data.points,
            labels_of(data)?,
            summary,
            labels.ok_or_else(missing)?,
            r,
            &config.svm,
        )?
        .relative_accuracy),
        Reference::Logreg(post) => {
            let (_, positive) = crate::eval::svm::binary_labels(labels_of(data)?)?;
            let outcomes: Vec<bool> = labels
                .ok_or_else(missing)?
                .iter()
                .map(|&l| l == positive)
                .collect();
            logreg_relative(data.points.len(), post, summary, &outcomes, &config.laplace)
        }
    }
}

/// Run the full grid. Cells run on the current rayon pool; results are
/// ordered by (method, size, repeat) regardless of scheduling.
pub fn run_experiment(data: &LabeledData, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    if matches!(config.task, Task::Svm | Task::LogregPosterior) {
        let classes = data.classes()?;
        if classes.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "{} needs exactly two labels, found {}",
                config.task,
                classes.len()
            )));
        }
    }
    let reference = fit_reference(data, config)?;
    let mut cells = Vec::new();
    for &method in &config.methods {
        for &size in &config.sizes {
            for r in 0..config.repeats {
                cells.push((method, size, r));
            }
        }
    }
    let metric = config.metric_name();
    let results: Vec<Result<(f64, EmittedSummary)>> = cells
        .par_iter()
        .with_max_len(1)
        .map(|&(method, size, r)| {
            let seed = config.repeat_seed(r);
            let (points, labels) = summarize(data, method, size, config.task, config, seed)?;
            let eval_seed = rng::derive_seed(seed, &format!("eval/{size}"));
            let value = score(data, &reference, &points, labels.as_deref(), config, eval_seed)?;
            Ok((
                value,
                EmittedSummary {
                    method,
                    size,
                    repeat: r,
                    seed,
                    points,
                    labels,
                },
            ))
        })
        .collect();
    let mut report = TaskReport::default();
    let mut summaries = Vec::new();
    for res in results {
        let (value, s) = res?;
        report.push(config.task.name(), s.method.name(), s.size, s.seed, metric, value);
        if config.keep_summaries {
            summaries.push(s);
        }
    }
    Ok(ExperimentOutcome {
        report,
        summaries,
        repeat_seeds: (0..config.repeats).map(|r| config.repeat_seed(r)).collect(),
    })
}

/// Two Gaussian blobs (unit variance) with centers `±separation/2` on the
/// first axis, labels 0 and 1, and a fraction `flip` of labels flipped.
pub fn noisy_blobs(size: usize, dim: usize, separation: f64, flip: f64, seed: u64) -> Result<LabeledData> {
    if size == 0 || dim == 0 || !(0.0..=1.0).contains(&flip) {
        return Err(Error::Config("blobs need size, dim >= 1 and flip in [0, 1]".into()));
    }
    let mut r = rng::named(seed, "blobs");
    let mut coords = Vec::with_capacity(size * dim);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let class = (i % 2) as i64;
        let center = if class == 0 { -separation / 2.0 } else { separation / 2.0 };
        for j in 0..dim {
            let z: f64 = r.sample(StandardNormal);
            coords.push(z + if j == 0 { center } else { 0.0 });
        }
        let noisy = r.random::<f64>() < flip;
        labels.push(if noisy { 1 - class } else { class });
    }
    LabeledData::labeled(PointSet::new(dim, coords)?, labels)
}

/// `clusters` isotropic Gaussians (std `sigma`) with centers drawn from
/// `N(0, center_sd² I)`, equal weights.
pub fn cluster_mixture(
    clusters: usize,
    dim: usize,
    size: usize,
    center_sd: f64,
    sigma: f64,
    seed: u64,
) -> Result<PointSet> {
    if clusters == 0 || dim == 0 || size == 0 {
        return Err(Error::Config("mixture needs clusters, dim, size >= 1".into()));
    }
    let mut r = rng::named(seed, "mixture-centers");
    let centers: Vec<f64> = (0..clusters * dim)
        .map(|_| center_sd * r.sample::<f64, _>(StandardNormal))
        .collect();
    let mut r = rng::named(seed, "mixture-points");
    let mut coords = Vec::with_capacity(size * dim);
    for _ in 0..size {
        let c = r.random_range(0..clusters);
        for j in 0..dim {
            let z: f64 = r.sample(StandardNormal);
            coords.push(centers[c * dim + j] + sigma * z);
        }
    }
    PointSet::new(dim, coords)
}
