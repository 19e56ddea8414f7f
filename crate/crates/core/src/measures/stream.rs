use std::io::BufRead;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::csv_io::parse_record;
use super::{check_count, Sampler};
use crate::error::{Error, Result};
use crate::points::PointSet;

/// Single pass over newline-delimited rows, in order.
///
/// Holds at most one request's worth of rows. A request that cannot be filled
/// fails with [`Error::Exhausted`]; the partial rows are dropped.
pub struct StreamSampler<R: BufRead + Send> {
    reader: csv::Reader<R>,
    dim: usize,
    arity: usize,
    skip_column: Option<usize>,
    pending: Option<Vec<f64>>,
    delivered: u64,
    consumed: u64,
    finished: bool,
}

impl<R: BufRead + Send> StreamSampler<R> {
    /// Opens the stream and reads the first row to learn the dimension. That
    /// row is returned by the first draw.
    pub fn new(reader: R, has_header: bool, skip_column: Option<usize>) -> Result<Self> {
        let reader = ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(Trim::All)
            .from_reader(reader);
        let mut stream = StreamSampler {
            reader,
            dim: 0,
            arity: 0,
            skip_column,
            pending: None,
            delivered: 0,
            consumed: 0,
            finished: false,
        };
        let mut record = StringRecord::new();
        if !stream.read(&mut record)? {
            return Err(Error::EmptyInput);
        }
        stream.arity = record.len();
        let mut first = Vec::new();
        let row = record.position().map_or(1, |p| p.line());
        parse_record(&record, row, stream.arity, skip_column, &mut first)?;
        if first.is_empty() {
            return Err(Error::InvalidInput("stream rows have no feature columns".into()));
        }
        stream.dim = first.len();
        stream.pending = Some(first);
        Ok(stream)
    }

    /// Rows handed out so far.
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Rows read from the underlying reader so far.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    fn read(&mut self, record: &mut StringRecord) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        let more = self.reader.read_record(record).map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if more {
            self.consumed += 1;
        } else {
            self.finished = true;
        }
        Ok(more)
    }
}

impl<R: BufRead + Send> Sampler for StreamSampler<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&mut self, count: usize) -> Result<PointSet> {
        check_count(count)?;
        let mut coords = Vec::with_capacity(count * self.dim);
        let mut rows = 0;
        if let Some(first) = self.pending.take() {
            coords.extend(first);
            rows += 1;
        }
        let mut record = StringRecord::new();
        while rows < count {
            if !self.read(&mut record)? {
                return Err(Error::Exhausted {
                    delivered: self.delivered,
                });
            }
            let row = record.position().map_or(self.consumed, |p| p.line());
            parse_record(&record, row, self.arity, self.skip_column, &mut coords)?;
            rows += 1;
        }
        self.delivered += rows as u64;
        PointSet::new(self.dim, coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consumes_in_order_then_signals_end() {
        let text = "0,0\n1,1\n2,2\n3,3\n4,4\n";
        let mut s = StreamSampler::new(text.as_bytes(), false, None).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.draw(2).unwrap().to_rows(), vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(s.draw(2).unwrap().to_rows(), vec![vec![2.0, 2.0], vec![3.0, 3.0]]);
        let err = s.draw(2).unwrap_err();
        assert!(err.is_exhausted());
        assert!(matches!(err, Error::Exhausted { delivered: 4 }));
        assert_eq!(s.consumed(), 5);
    }

    #[test]
    fn malformed_row_is_not_exhaustion() {
        let mut s = StreamSampler::new("0,0\n1,x\n".as_bytes(), false, None).unwrap();
        let err = s.draw(2).unwrap_err();
        assert!(!err.is_exhausted());
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn label_column_is_skipped() {
        let mut s = StreamSampler::new("1,0,2\n3,1,4\n".as_bytes(), false, Some(1)).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.draw(2).unwrap().to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
