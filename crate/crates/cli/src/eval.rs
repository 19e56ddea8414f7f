//! `wcoreset eval`

use std::io::Read as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde_json::json;
use wcoreset::eval::{
    coreset_condition_check, exact_wp, kmeans_task, logreg_posterior_task, median_bandwidth, mmd,
    svm_task, uniform_from_pool, FunctionFamily, KernelSpec, SvmParams, TaskReport, SIZE_GUARD,
};
use wcoreset::measures::{parse_csv, EmpiricalSampler, Sampler};
use wcoreset::rng;
use wcoreset::semidiscrete::{estimate_to_sampler, EstimateOptions, SiteSet};
use wcoreset::{Error, Exponent, PointSet, Result};

use crate::input::{read_coreset, Source};
use crate::output::{sha256_hex, Artifact, Manifest, OutDir};
use crate::InputArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMetric {
    W1,
    W2,
    Mmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    Kmeans,
    Svm,
    Logreg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Coreset CSV (headerless, as written by `build`).
    #[arg(long)]
    pub coreset: PathBuf,
    /// Zero-based label column of the coreset file.
    #[arg(long)]
    pub coreset_labels_col: Option<usize>,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "w1,w2,mmd")]
    pub metrics: Vec<EvalMetric>,
    /// Monte Carlo samples for stochastic W_p estimates.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Dual ascent steps for stochastic W_p estimates.
    #[arg(long, default_value_t = 1000)]
    pub dual_steps: usize,
    /// Rows drawn from a synthetic input for MMD, conditions and tasks.
    #[arg(long, default_value_t = 2000)]
    pub reference_size: usize,
    /// Coreset condition: lip1, sobolev:<M> or rkhs (Gaussian kernel, median
    /// bandwidth).
    #[arg(long, requires = "epsilon")]
    pub condition: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub task: Option<EvalTask>,
    /// k-means centers; defaults to the coreset size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Row label for the report's method column.
    #[arg(long, default_value = "coreset")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_condition(s: &str, reference: &PointSet) -> Result<FunctionFamily> {
    match s {
        "lip1" => Ok(FunctionFamily::Lip1),
        "rkhs" => Ok(FunctionFamily::Rkhs {
            kernel: KernelSpec::Gaussian {
                sigma: median_bandwidth(reference),
            },
        }),
        _ => {
            let m = s
                .strip_prefix("sobolev:")
                .and_then(|m| m.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown condition {s:?}; expected lip1, sobolev:<M> or rkhs"
                    ))
                })?;
            Ok(FunctionFamily::Sobolev { m })
        }
    }
}

pub fn run(args: EvalArgs, argv: &[String]) -> Result<ExitCode> {
    let start = Instant::now();
    if args.metrics.is_empty() && args.condition.is_none() && args.task.is_none() {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    let mut out = OutDir::new(&args.out)?;
    let (coreset, coreset_labels, coreset_origin) =
        read_coreset(&args.coreset, args.coreset_labels_col)?;
    let source = match Source::resolve(&args.input)? {
        // Evaluation needs the whole dataset; stdin is read in full.
        Source::Stdin => {
            let mut bytes = Vec::new();
            std::io::stdin().read_to_end(&mut bytes)?;
            let (points, labels) =
                parse_csv(bytes.as_slice(), args.input.header, args.input.labels_col)?;
            Source::Dataset {
                points,
                labels,
                origin: Artifact {
                    path: "-".into(),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len(),
                },
            }
        }
        s => s,
    };
    let eval_seed = rng::derive_seed(args.seed, "eval");
    let mut manifest = Manifest::new(
        "eval",
        argv,
        json!({
            "input": source.describe(),
            "coreset": args.coreset,
            "metrics": args.metrics.iter().map(|m| format!("{m:?}").to_lowercase()).collect::<Vec<_>>(),
            "samples": args.samples,
            "dual_steps": args.dual_steps,
            "condition": args.condition,
            "epsilon": args.epsilon,
            "task": args.task.map(|t| format!("{t:?}").to_lowercase()),
            "k": args.k,
        }),
    );
    manifest.inputs = source.artifacts();
    manifest.inputs.push(coreset_origin);
    manifest.seed("seed", args.seed);
    manifest.seed("eval", eval_seed);

    // A finite reference sample for MMD, conditions and tasks.
    let (reference, reference_labels) = match &source {
        Source::Dataset { points, labels, .. } => (points.clone(), labels.clone()),
        Source::Synthetic { spec, .. } => {
            let mut s = spec.sampler(rng::derive_seed(eval_seed, "reference"))?;
            (s.draw(args.reference_size)?, None)
        }
        Source::Stdin => unreachable!("stdin was read in full above"),
    };
    coreset.ensure_dim(reference.dim())?;

    let n = coreset.len();
    let mut report = TaskReport::default();
    let mut details = serde_json::Map::new();
    let mut push = |metric: &str, value: f64| {
        report.push("distance", &args.method, n, args.seed, metric, value);
    };
    for &metric in &args.metrics {
        match metric {
            EvalMetric::W1 | EvalMetric::W2 => {
                let (p, name) = match metric {
                    EvalMetric::W1 => (Exponent::One, "w1"),
                    _ => (Exponent::Two, "w2"),
                };
                let exact_fits = matches!(source, Source::Dataset { .. })
                    && reference.len() + n <= SIZE_GUARD;
                if exact_fits {
                    let (w, _) = exact_wp(&reference, &coreset, p)?;
                    push(name, w);
                    details.insert(name.into(), json!({ "estimator": "exact" }));
                } else {
                    let sites = SiteSet::separated(coreset.clone().into_uniform(), coreset.coordinate_range());
                    let seed = rng::derive_seed(eval_seed, name);
                    let mut sampler: Box<dyn Sampler> = match &source {
                        Source::Dataset { points, .. } => Box::new(EmpiricalSampler::new(points.clone(), seed)?),
                        Source::Synthetic { spec, .. } => spec.sampler(seed)?,
                        Source::Stdin => unreachable!("stdin was read in full above"),
                    };
                    let opts = EstimateOptions {
                        dual_steps: args.dual_steps,
                        samples: args.samples,
                        ..EstimateOptions::default()
                    };
                    let (est, _) = estimate_to_sampler(sampler.as_mut(), &sites, p, opts)?;
                    push(name, est.value);
                    push(&format!("{name}-se"), est.std_error);
                    details.insert(
                        name.into(),
                        json!({ "estimator": "stochastic", "samples": est.samples, "cost": est.cost, "cost_std_error": est.cost_std_error }),
                    );
                }
            }
            EvalMetric::Mmd => {
                let pool = if reference.len() > args.reference_size {
                    uniform_from_pool(&reference, args.reference_size, rng::derive_seed(eval_seed, "mmd"))?
                } else {
                    reference.clone()
                };
                let sigma = median_bandwidth(&pool);
                let value = mmd(&pool, &coreset, &KernelSpec::Gaussian { sigma })?.sqrt();
                push("mmd", value);
                details.insert("mmd".into(), json!({ "kernel": "gaussian", "sigma": sigma, "reference_rows": pool.len() }));
            }
        }
    }
    if let Some(cond) = &args.condition {
        let family = parse_condition(cond, &reference)?;
        let epsilon = args.epsilon.expect("clap requires epsilon with condition");
        let verdict = coreset_condition_check(&reference, &coreset, epsilon, family)?;
        let tag = format!("condition-{}", family.name());
        push(&format!("{tag}-bound"), verdict.bound);
        push(&format!("{tag}-slack"), verdict.slack);
        push(&format!("{tag}-pass"), f64::from(u8::from(verdict.pass)));
        details.insert("condition".into(), serde_json::to_value(verdict)?);
    }
    if let Some(task) = args.task {
        let value = match task {
            EvalTask::Kmeans => {
                let k = args.k.unwrap_or(n);
                (kmeans_task(&reference, &coreset, k, eval_seed)?.relative_cost, "relative-cost")
            }
            EvalTask::Svm | EvalTask::Logreg => {
                let full_labels = reference_labels
                    .as_deref()
                    .ok_or_else(|| Error::Config("task needs --labels-col on a dataset input".into()))?;
                let summary_labels = coreset_labels
                    .as_deref()
                    .ok_or_else(|| Error::Config("task needs --coreset-labels-col".into()))?;
                if task == EvalTask::Svm {
                    let params = SvmParams::default();
                    let r = svm_task(&reference, full_labels, &coreset, summary_labels, &params)?;
                    (r.relative_accuracy, "relative-accuracy")
                } else {
                    (logreg_posterior_task(&reference, full_labels, &coreset, summary_labels)?, "kl")
                }
            }
        };
        push(value.1, value.0);
    }
    report.sort();
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("report.csv", &csv)?;
    out.write_json("report.json", &json!({ "rows": report.rows, "details": details }))?;
    manifest.time("total", start);
    out.finish(manifest)?;
    Ok(ExitCode::SUCCESS)
}
