use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Load a comma-separated dataset. Rows are numbered from 1 by file line in
/// error messages; the label column, when given, is returned separately.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<(PointSet, Option<Vec<i64>>)> {
    let file = File::open(path.as_ref())?;
    parse_csv(file, has_header, label_column)
}

/// [`load_csv`] over any reader.
pub fn parse_csv<R: Read>(
    reader: R,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<(PointSet, Option<Vec<i64>>)> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(reader);
    let mut coords = Vec::new();
    let mut labels = label_column.map(|_| Vec::new());
    let mut arity = None;
    let mut record = StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let row = record.position().map_or(0, |p| p.line());
        let expected = *arity.get_or_insert(record.len());
        let label = parse_record(&record, row, expected, label_column, &mut coords)?;
        if let (Some(labels), Some(label)) = (labels.as_mut(), label) {
            labels.push(label);
        }
    }
    let arity = arity.ok_or(Error::EmptyInput)?;
    let dim = arity - usize::from(label_column.is_some());
    if dim == 0 {
        return Err(Error::InvalidInput("no feature columns".into()));
    }
    Ok((PointSet::new(dim, coords)?, labels))
}

/// Parse one record into `coords`, returning its label if a label column is
/// configured.
pub(crate) fn parse_record(
    record: &StringRecord,
    row: u64,
    expected: usize,
    label_column: Option<usize>,
    coords: &mut Vec<f64>,
) -> Result<Option<i64>> {
    if record.len() != expected {
        return Err(Error::Arity {
            row,
            expected,
            found: record.len(),
        });
    }
    if let Some(lc) = label_column {
        if lc >= expected {
            return Err(Error::Parse {
                row,
                message: format!("label column {lc} out of range for {expected} fields"),
            });
        }
    }
    let mut label = None;
    for (column, field) in record.iter().enumerate() {
        if Some(column) == label_column {
            label = Some(parse_label(field).ok_or_else(|| Error::Parse {
                row,
                message: format!("column {column}: label {field:?} is not an integer"),
            })?);
            continue;
        }
        let value: f64 = field.parse().map_err(|_| Error::Parse {
            row,
            message: format!("column {column}: cannot parse {field:?} as a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite { row, column });
        }
        coords.push(value);
    }
    Ok(label)
}

fn parse_label(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Write `points` as headerless CSV, one row per point, with an optional
/// trailing label column. Values use the shortest round-trip representation.
pub fn write_csv<W: Write>(out: W, points: &PointSet, labels: Option<&[i64]>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut fields = Vec::with_capacity(points.dim() + 1);
    for (i, p) in points.iter().enumerate() {
        fields.clear();
        fields.extend(p.iter().map(|x| x.to_string()));
        if let Some(labels) = labels {
            fields.push(labels[i].to_string());
        }
        wtr.write_record(&fields)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-column z-scoring. Constant columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &PointSet) -> Self {
        let mean = data.mean();
        let mut var = vec![0.0; data.dim()];
        for (i, p) in data.iter().enumerate() {
            let w = data.weight(i);
            for k in 0..p.len() {
                var[k] += w * (p[k] - mean[k]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, data: &PointSet) -> Result<PointSet> {
        data.ensure_dim(self.mean.len())?;
        data.map_rows(|p| {
            p.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(x, (m, s))| (x - m) / s)
                .collect()
        })
    }

    pub fn inverse(&self, data: &PointSet) -> Result<PointSet> {
        data.ensure_dim(self.mean.len())?;
        data.map_rows(|p| {
            p.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(x, (m, s))| x * s + m)
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_uniform() {
        let (set, labels) = parse_csv("0,0\n1,0\n0,1".as_bytes(), false, None).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.dim(), 2);
        assert!(set.is_uniform());
        assert_eq!(set.weight(2), 1.0 / 3.0);
        assert!(labels.is_none());
    }

    #[test]
    fn header_is_skipped() {
        let (set, _) = parse_csv("x,y\n1,0".as_bytes(), true, None).unwrap();
        assert_eq!(set.to_rows(), vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn bad_field_names_row() {
        let err = parse_csv("1,2,a".as_bytes(), false, None).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn arity_nonfinite_and_empty() {
        assert!(matches!(
            parse_csv("1,2\n3".as_bytes(), false, None),
            Err(Error::Arity { row: 2, expected: 2, found: 1 })
        ));
        assert!(matches!(
            parse_csv("1,inf".as_bytes(), false, None),
            Err(Error::NonFinite { row: 1, column: 1 })
        ));
        assert!(matches!(parse_csv("".as_bytes(), false, None), Err(Error::EmptyInput)));
        assert!(matches!(parse_csv("a,b\n".as_bytes(), true, None), Err(Error::EmptyInput)));
    }

    #[test]
    fn labels_are_split_off() {
        let (set, labels) = parse_csv("1.5,1,2\n2.5,0,3".as_bytes(), false, Some(1)).unwrap();
        assert_eq!(set.to_rows(), vec![vec![1.5, 2.0], vec![2.5, 3.0]]);
        assert_eq!(labels.unwrap(), vec![1, 0]);
        assert!(parse_csv("1,x".as_bytes(), false, Some(1)).is_err());
    }

    #[test]
    fn write_then_read_back() {
        let set = PointSet::from_rows(&[[0.1, -2.5e-7], [1.0 / 3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &set, Some(&[1, -1])).unwrap();
        let (back, labels) = parse_csv(buf.as_slice(), false, Some(2)).unwrap();
        assert_eq!(back, set);
        assert_eq!(labels.unwrap(), vec![1, -1]);
    }

    #[test]
    fn standardizer_inverts() {
        let set = PointSet::from_rows(&[[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
        let st = Standardizer::fit(&set);
        assert_eq!(st.scale[1], 1.0);
        let z = st.transform(&set).unwrap();
        assert!(z.mean().iter().all(|m| m.abs() < 1e-15));
        let back = st.inverse(&z).unwrap();
        for (a, b) in back.coords().iter().zip(set.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
