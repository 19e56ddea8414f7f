//! Resolution of `--input`.

use std::path::Path;

use wcoreset::measures::{parse_csv, SyntheticSpec};
use wcoreset::{Error, PointSet, Result};

use crate::output::{sha256_hex, Artifact};
use crate::InputArgs;

pub enum Source {
    /// A CSV file read in full.
    Dataset {
        points: PointSet,
        labels: Option<Vec<i64>>,
        origin: Artifact,
    },
    Synthetic { name: String, spec: SyntheticSpec },
    /// Rows on standard input, read on demand.
    Stdin,
}

impl Source {
    pub fn resolve(args: &InputArgs) -> Result<Source> {
        let name = args.input.as_str();
        if name == "-" {
            return Ok(Source::Stdin);
        }
        if let Some(spec) = SyntheticSpec::preset(name) {
            return Ok(Source::Synthetic {
                name: name.into(),
                spec,
            });
        }
        let path = Path::new(name);
        if path.extension().is_some_and(|e| e == "json") {
            let bytes = std::fs::read(path)?;
            let spec: SyntheticSpec = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Config(format!("{name}: not a synthetic spec: {e}")))?;
            spec.validate()?;
            return Ok(Source::Synthetic {
                name: name.into(),
                spec,
            });
        }
        let bytes = std::fs::read(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read {name}: {e}"))
        })?;
        let (points, labels) = parse_csv(bytes.as_slice(), args.header, args.labels_col)?;
        Ok(Source::Dataset {
            points,
            labels,
            origin: Artifact {
                path: name.into(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len(),
            },
        })
    }

    /// Input entries for the manifest.
    pub fn artifacts(&self) -> Vec<Artifact> {
        match self {
            Source::Dataset { origin, .. } => vec![origin.clone()],
            _ => Vec::new(),
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        match self {
            Source::Dataset { origin, points, .. } => serde_json::json!({
                "kind": "dataset", "path": origin.path, "rows": points.len(), "dim": points.dim(),
            }),
            Source::Synthetic { name, spec } => serde_json::json!({
                "kind": "synthetic", "name": name, "spec": spec,
            }),
            Source::Stdin => serde_json::json!({ "kind": "stdin" }),
        }
    }
}

/// Parse a coreset CSV: headerless numeric rows, optional label column.
pub fn read_coreset(path: &Path, label_column: Option<usize>) -> Result<(PointSet, Option<Vec<i64>>, Artifact)> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read {}: {e}", path.display()))
    })?;
    let (points, labels) = parse_csv(bytes.as_slice(), false, label_column)?;
    let origin = Artifact {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len(),
    };
    Ok((points, labels, origin))
}
