//! Long-format metric tables and their per-cell summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Kmeans,
    Svm,
    LogregPosterior,
    /// Direct distances between a summary and the data.
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryMethod {
    CoresetW1,
    CoresetW2,
    CoresetSd,
    Uniform,
    Herding,
}

impl SummaryMethod {
    pub const ALL: [SummaryMethod; 5] = [
        SummaryMethod::CoresetW1,
        SummaryMethod::CoresetW2,
        SummaryMethod::CoresetSd,
        SummaryMethod::Uniform,
        SummaryMethod::Herding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SummaryMethod::CoresetW1 => "coreset-w1",
            SummaryMethod::CoresetW2 => "coreset-w2",
            SummaryMethod::CoresetSd => "coreset-sd",
            SummaryMethod::Uniform => "uniform",
            SummaryMethod::Herding => "herding",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for SummaryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Kmeans => "kmeans",
            Task::Svm => "svm",
            Task::LogregPosterior => "logreg-posterior",
            Task::Distance => "distance",
        }
    }

    /// Accepts `logreg` as a short form.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kmeans" => Some(Task::Kmeans),
            "svm" => Some(Task::Svm),
            "logreg" | "logreg-posterior" => Some(Task::LogregPosterior),
            "distance" => Some(Task::Distance),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One measurement. `method` is free text so that evaluation runs can label
/// rows (e.g. "coreset").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub method: String,
    pub size: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub task: String,
    pub method: String,
    pub size: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; absent with fewer than two repeats.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub rows: Vec<ReportRow>,
}

impl TaskReport {
    pub fn push(
        &mut self,
        task: &str,
        method: &str,
        size: usize,
        seed: u64,
        metric: &str,
        value: f64,
    ) {
        self.rows.push(ReportRow {
            task: task.into(),
            method: method.into(),
            size,
            seed,
            metric: metric.into(),
            value,
        });
    }

    pub fn extend(&mut self, other: TaskReport) {
        self.rows.extend(other.rows);
    }

    /// Rows ordered by (task, method, size, seed, metric).
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.task, &a.method, a.size, a.seed, &a.metric)
                .cmp(&(&b.task, &b.method, b.size, b.seed, &b.metric))
        });
    }

    pub fn values(&self, method: &str, size: usize, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.size == size && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn summary(&self) -> Vec<CellSummary> {
        let mut cells: BTreeMap<(&str, &str, usize, &str), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            cells
                .entry((&r.task, &r.method, r.size, &r.metric))
                .or_default()
                .push(r.value);
        }
        cells
            .into_iter()
            .map(|((task, method, size, metric), v)| {
                let (mean, std) = mean_std(&v);
                CellSummary {
                    task: task.into(),
                    method: method.into(),
                    size,
                    metric: metric.into(),
                    count: v.len(),
                    mean,
                    std,
                }
            })
            .collect()
    }

    pub fn mean(&self, method: &str, size: usize, metric: &str) -> Option<f64> {
        let v = self.values(method, size, metric);
        (!v.is_empty()).then(|| mean_std(&v).0)
    }

    /// Header `task,method,size,seed,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "method", "size", "seed", "metric", "value"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.task.clone(),
                r.method.clone(),
                r.size.to_string(),
                r.seed.to_string(),
                r.metric.clone(),
                r.value.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "cells": self.summary() })
    }
}

/// Mean and sample standard deviation (`n − 1`).
pub fn mean_std(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() >= 2).then(|| {
        let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_groups_by_cell() {
        let mut r = TaskReport::default();
        r.push("kmeans", "uniform", 4, 0, "relative-cost", 1.0);
        r.push("kmeans", "uniform", 4, 1, "relative-cost", 3.0);
        r.push("kmeans", "coreset-w2", 4, 0, "relative-cost", 0.5);
        let s = r.summary();
        assert_eq!(s.len(), 2);
        let u = s.iter().find(|c| c.method == "uniform").unwrap();
        assert_eq!((u.count, u.mean), (2, 2.0));
        assert!((u.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let c = s.iter().find(|c| c.method == "coreset-w2").unwrap();
        assert_eq!(c.std, None);
    }

    #[test]
    fn csv_layout() {
        let mut r = TaskReport::default();
        r.push("svm", "herding", 8, 3, "relative-accuracy", 0.25);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "task,method,size,seed,metric,value\nsvm,herding,8,3,relative-accuracy,0.25\n"
        );
    }

    #[test]
    fn names_round_trip() {
        for m in SummaryMethod::ALL {
            assert_eq!(SummaryMethod::parse(m.name()), Some(m));
        }
        assert_eq!(Task::parse("logreg"), Some(Task::LogregPosterior));
    }
}
