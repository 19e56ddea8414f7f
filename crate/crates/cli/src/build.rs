//! `wcoreset build`

use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Args;
use wcoreset::measures::{write_csv, EmpiricalSampler, Sampler, Standardizer, StreamSampler};
use wcoreset::rng;
use wcoreset::solver::{Checkpoint, CoresetBuilder};
use wcoreset::{Error, Result};

use crate::input::Source;
use crate::output::{Manifest, OutDir};
use crate::{InputArgs, Metric, SolverArgs};

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "w2")]
    pub metric: Metric,
    /// Coreset size.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for coreset.csv, trace.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Z-score each column before building; the coreset is written in the
    /// original units. Dataset inputs only.
    #[arg(long)]
    pub standardize: bool,
    /// Checkpoint file; resumed from when it exists.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Outer iterations between checkpoint writes.
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: usize,
}

pub fn run(args: BuildArgs, argv: &[String]) -> Result<ExitCode> {
    let start = Instant::now();
    let config = args.solver.config(args.metric, args.n, args.seed);
    config.validate()?;
    if args.checkpoint_every == 0 {
        return Err(Error::Config("checkpoint interval must be >= 1".into()));
    }
    let mut out = OutDir::new(&args.out)?;
    let source = Source::resolve(&args.input)?;
    let is_dataset = matches!(source, Source::Dataset { .. });
    if args.standardize && !is_dataset {
        return Err(Error::Config("--standardize needs a CSV dataset input".into()));
    }
    if args.checkpoint.is_some() && matches!(source, Source::Stdin) {
        return Err(Error::Config(
            "checkpointing needs a dataset or synthetic input; a stream cannot be rewound".into(),
        ));
    }
    let sampler_seed = rng::derive_seed(args.seed, "sampler");
    let mut manifest = Manifest::new(
        "build",
        argv,
        serde_json::json!({
            "solver": config,
            "input": source.describe(),
            "standardize": args.standardize,
            "checkpoint": args.checkpoint,
        }),
    );
    manifest.inputs = source.artifacts();
    manifest.seed("seed", args.seed);
    manifest.seed("sampler", sampler_seed);

    let mut standardizer = None;
    let mut stream = None;
    let mut boxed: Box<dyn Sampler>;
    let sampler: &mut dyn Sampler = match source {
        Source::Dataset { points, .. } => {
            let points = if args.standardize {
                let s = Standardizer::fit(&points);
                let t = s.transform(&points)?;
                standardizer = Some(s);
                t
            } else {
                points
            };
            boxed = Box::new(EmpiricalSampler::new(points, sampler_seed)?);
            &mut boxed
        }
        Source::Synthetic { spec, .. } => {
            boxed = spec.sampler(sampler_seed)?;
            &mut boxed
        }
        Source::Stdin => {
            let reader = BufReader::new(std::io::stdin());
            stream = Some(StreamSampler::new(reader, args.input.header, args.input.labels_col)?);
            stream.as_mut().expect("just set")
        }
    };

    let build_start = Instant::now();
    let mut builder = match &args.checkpoint {
        Some(path) if path.exists() => {
            let ck = Checkpoint::load(path)?;
            if ck.config != config {
                return Err(Error::Config(format!(
                    "checkpoint {} was written for a different configuration",
                    path.display()
                )));
            }
            CoresetBuilder::resume(sampler, ck)?
        }
        _ => CoresetBuilder::new(sampler, config)?,
    };
    if let Some(path) = &args.checkpoint {
        loop {
            let done = builder.run_for(args.checkpoint_every)?;
            builder.checkpoint().save(path).map_err(|e| {
                Error::Config(format!("cannot write checkpoint {}: {e}", path.display()))
            })?;
            if done {
                break;
            }
        }
    } else {
        while builder.step()?.is_none() {}
    }
    let result = builder.finish();
    manifest.time("build", build_start);
    if let Some(s) = &stream {
        manifest.stats.insert("stream_rows_read".into(), s.consumed().into());
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let sites = result.sites.points();
    if sites.coords().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("coreset sites are not finite".into()));
    }
    let sites = match &standardizer {
        Some(s) => s.inverse(sites)?,
        None => sites.clone(),
    };
    let mut csv = Vec::new();
    write_csv(&mut csv, &sites, None)?;
    out.write("coreset.csv", &csv)?;
    out.write_json("trace.json", &result.trace_file())?;
    manifest
        .stats
        .insert("terminated_by".into(), serde_json::to_value(result.terminated_by)?);
    manifest.time("total", start);
    out.finish(manifest)?;
    Ok(ExitCode::SUCCESS)
}
