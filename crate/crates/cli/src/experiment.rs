//! `wcoreset experiment`

use std::io::Read as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde_json::json;
use wcoreset::eval::{synthetic_logreg, SummaryMethod, Task};
use wcoreset::experiment::{cluster_mixture, noisy_blobs, run_experiment, ExperimentConfig, LabeledData};
use wcoreset::measures::{parse_csv, write_csv, Standardizer};
use wcoreset::rng;
use wcoreset::{Error, Result};

use crate::input::Source;
use crate::output::{sha256_hex, Artifact, Manifest, OutDir};
use crate::{InputArgs, Metric, SolverArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Kmeans,
    Svm,
    Logreg,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Kmeans => Task::Kmeans,
            TaskArg::Svm => Task::Svm,
            TaskArg::Logreg => Task::LogregPosterior,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Besides the usual inputs, the generators `logreg-synthetic`
    /// (x ~ N(0, I), y ~ Bern(σ(xᵀθ)), θ ~ N(0, I)), `blobs` (two unit
    /// Gaussians, 10% label noise) and `clusters` (10 Gaussians in ℝ^16) are
    /// accepted; they are regenerated from the run seed.
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Comma-separated subset of coreset-w1, coreset-w2, coreset-sd, uniform,
    /// herding.
    #[arg(long, value_delimiter = ',', default_value = "coreset-w1,coreset-w2,uniform,herding")]
    pub methods: Vec<String>,
    /// k-means centers; defaults to the smallest size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Rows to generate for generator and synthetic inputs.
    #[arg(long)]
    pub data_size: Option<usize>,
    /// Dimension for the `logreg-synthetic` and `blobs` generators.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Herding selects from a uniform subsample of at most this many rows.
    #[arg(long, default_value_t = 2000)]
    pub herding_pool: usize,
    /// Lloyd restarts for k-means fits.
    #[arg(long)]
    pub lloyd_restarts: Option<usize>,
    /// SVM training epochs.
    #[arg(long)]
    pub svm_epochs: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Z-score each column of the data first; emitted summaries are written
    /// in the original units.
    #[arg(long)]
    pub standardize: bool,
    /// Write every summary to summaries/<method>-n<size>-r<repeat>.csv, with
    /// a trailing label column for labeled tasks.
    #[arg(long)]
    pub emit_summaries: bool,
}

/// Dataset for the run and its manifest entry.
fn load(args: &ExperimentArgs) -> Result<(LabeledData, Artifact)> {
    let generated = |data: LabeledData, name: &str| -> Result<(LabeledData, Artifact)> {
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &data.points, data.labels.as_deref())?;
        let origin = Artifact {
            path: format!("generated:{name}"),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        };
        Ok((data, origin))
    };
    let seed = args.seed;
    match args.input.input.as_str() {
        "logreg-synthetic" => {
            let (x, y, _) = synthetic_logreg(args.data_size.unwrap_or(20_000), args.dim.unwrap_or(5), seed)?;
            return generated(LabeledData::labeled(x, y)?, "logreg-synthetic");
        }
        "blobs" => {
            let data = noisy_blobs(args.data_size.unwrap_or(2000), args.dim.unwrap_or(2), 3.0, 0.1, seed)?;
            return generated(data, "blobs");
        }
        "clusters" => {
            let x = cluster_mixture(10, args.dim.unwrap_or(16), args.data_size.unwrap_or(5000), 4.0, 1.0, seed)?;
            return generated(LabeledData::unlabeled(x), "clusters");
        }
        _ => {}
    }
    match Source::resolve(&args.input)? {
        Source::Dataset { points, labels, origin } => {
            let data = match labels {
                Some(l) => LabeledData::labeled(points, l)?,
                None => LabeledData::unlabeled(points),
            };
            Ok((data, origin))
        }
        Source::Synthetic { name, spec } => {
            let mut s = spec.sampler(rng::derive_seed(seed, "data"))?;
            let x = s.draw(args.data_size.unwrap_or(5000))?;
            generated(LabeledData::unlabeled(x), &name)
        }
        Source::Stdin => {
            let mut bytes = Vec::new();
            std::io::stdin().read_to_end(&mut bytes)?;
            let (points, labels) = parse_csv(bytes.as_slice(), args.input.header, args.input.labels_col)?;
            let data = match labels {
                Some(l) => LabeledData::labeled(points, l)?,
                None => LabeledData::unlabeled(points),
            };
            let origin = Artifact {
                path: "-".into(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len(),
            };
            Ok((data, origin))
        }
    }
}

pub fn run(args: ExperimentArgs, argv: &[String]) -> Result<ExitCode> {
    let start = Instant::now();
    let methods = args
        .methods
        .iter()
        .map(|m| {
            SummaryMethod::parse(m).ok_or_else(|| Error::Config(format!("unknown method {m:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = ExperimentConfig::new(args.task.into(), methods, args.sizes.clone());
    config.repeats = args.repeats;
    config.seed = args.seed;
    config.solver = args.solver.config(Metric::W2, 1, args.seed);
    config.k = args.k;
    config.herding_pool = args.herding_pool;
    config.keep_summaries = args.emit_summaries;
    if let Some(r) = args.lloyd_restarts {
        config.lloyd.restarts = r;
    }
    if let Some(e) = args.svm_epochs {
        config.svm.epochs = e;
    }
    config.validate()?;
    let mut out = OutDir::new(&args.out)?;

    let (data, origin) = load(&args)?;
    let (data, standardizer) = if args.standardize {
        let s = Standardizer::fit(&data.points);
        let points = s.transform(&data.points)?;
        (LabeledData { points, ..data }, Some(s))
    } else {
        (data, None)
    };
    let mut manifest = Manifest::new(
        "experiment",
        argv,
        json!({
            "experiment": config,
            "input": args.input.input,
            "rows": data.points.len(),
            "dim": data.points.dim(),
            "standardize": args.standardize,
        }),
    );
    manifest.inputs = vec![origin];
    manifest.seed("seed", args.seed);

    let grid_start = Instant::now();
    let outcome = run_experiment(&data, &config)?;
    manifest.time("grid", grid_start);
    for (r, s) in outcome.repeat_seeds.iter().enumerate() {
        manifest.seed(&format!("repeat/{r}"), *s);
    }

    let mut csv = Vec::new();
    outcome.report.write_csv(&mut csv)?;
    out.write("report.csv", &csv)?;
    out.write_json("report.json", &outcome.report.summary_json())?;
    // Logistic-regression summaries are sign-flipped rows, which have no
    // original-unit form; they stay standardized.
    let invert = standardizer.as_ref().filter(|_| config.task != Task::LogregPosterior);
    manifest.stats.insert(
        "summary_units".into(),
        (if standardizer.is_some() && invert.is_none() { "standardized" } else { "original" }).into(),
    );
    for s in &outcome.summaries {
        let points = match invert {
            Some(st) => st.inverse(&s.points)?,
            None => s.points.clone(),
        };
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &points, s.labels.as_deref())?;
        let name = format!("summaries/{}-n{}-r{}.csv", s.method.name(), s.size, s.repeat);
        out.write(&name, &bytes)?;
    }
    manifest.time("total", start);
    out.finish(manifest)?;
    Ok(ExitCode::SUCCESS)
}
