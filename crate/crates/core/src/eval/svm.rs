//! Linear soft-margin SVM trained by deterministic projected subgradient
//! descent, and the relative accuracy of a summary-trained model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-2,
            epochs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
    /// Label mapped to `+1`; the other label maps to `−1`.
    pub positive: i64,
    pub negative: i64,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    pub fn predict(&self, x: &[f64]) -> i64 {
        if self.decision(x) >= 0.0 {
            self.positive
        } else {
            self.negative
        }
    }

    pub fn accuracy(&self, points: &PointSet, labels: &[i64]) -> f64 {
        let hits = points
            .iter()
            .zip(labels)
            .filter(|(x, &y)| self.predict(x) == y)
            .count();
        hits as f64 / labels.len() as f64
    }
}

/// The two labels, smaller first. Errors unless exactly two are present.
pub fn binary_labels(labels: &[i64]) -> Result<(i64, i64)> {
    let mut distinct: Vec<i64> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    match distinct[..] {
        [a, b] => Ok((a, b)),
        [_] => Err(Error::InvalidInput("single-class labels".into())),
        _ => Err(Error::InvalidInput(format!(
            "expected two labels, found {}",
            distinct.len()
        ))),
    }
}

/// Bias minimizing `Σ_i w_i max(0, 1 − y_i (s_i + b))` over `b`; the loss is
/// convex piecewise linear with kinks at `b = y_i − s_i`. A flat minimum
/// resolves to its point closest to zero.
fn best_bias(scores: &[f64], ys: &[f64], weights: &[f64]) -> f64 {
    let mut kinks: Vec<(f64, f64)> = scores
        .iter()
        .zip(ys)
        .zip(weights)
        .map(|((s, y), w)| (y - s, *w))
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Slope at b → −∞: positives are active (slope −w), negatives inactive.
    let mut slope: f64 = -ys
        .iter()
        .zip(weights)
        .filter(|(y, _)| **y > 0.0)
        .map(|(_, w)| w)
        .sum::<f64>();
    let mut best = None;
    for (k, &(b, w)) in kinks.iter().enumerate() {
        // Crossing a positive kink deactivates it, a negative one activates
        // it; either way the slope grows by w.
        slope += w;
        if slope >= 0.0 {
            // Minimum set is [b, next kink] when slope is exactly 0.
            let hi = if slope == 0.0 {
                kinks.get(k + 1).map_or(b, |n| n.0)
            } else {
                b
            };
            best = Some(0.0f64.clamp(b, hi));
            break;
        }
    }
    best.unwrap_or_else(|| kinks.last().map_or(0.0, |k| k.0))
}

/// Pegasos-style training on the full (weighted) set: step `1/(λt)`,
/// projection onto `‖w‖ ≤ 1/√λ`, bias re-optimized exactly after each epoch.
pub fn train_svm(points: &PointSet, labels: &[i64], params: &SvmParams) -> Result<LinearSvm> {
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    if !(params.lambda.is_finite() && params.lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be > 0, got {}", params.lambda)));
    }
    let (negative, positive) = binary_labels(labels)?;
    let ys: Vec<f64> = labels
        .iter()
        .map(|&l| if l == positive { 1.0 } else { -1.0 })
        .collect();
    let weights = points.weight_vec();
    let d = points.dim();
    let radius = 1.0 / params.lambda.sqrt();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut scores = vec![0.0; points.len()];
    for t in 1..=params.epochs {
        let mut g = vec![0.0; d];
        for ((x, y), wt) in points.iter().zip(&ys).zip(&weights) {
            let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            if y * (s + b) < 1.0 {
                for (gk, xk) in g.iter_mut().zip(x) {
                    *gk += wt * y * xk;
                }
            }
        }
        let eta = 1.0 / (params.lambda * t as f64);
        let shrink = 1.0 - eta * params.lambda;
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk = shrink * *wk + eta * gk;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > radius {
            for wk in &mut w {
                *wk *= radius / norm;
            }
        }
        for (s, x) in scores.iter_mut().zip(points.iter()) {
            *s = w.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        b = best_bias(&scores, &ys, &weights);
    }
    Ok(LinearSvm {
        w,
        b,
        positive,
        negative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOutcome {
    /// `accuracy(summary-trained) / accuracy(full-trained)` on the full data.
    pub relative_accuracy: f64,
    pub summary_accuracy: f64,
    pub full_accuracy: f64,
}

/// Full-data model, trained once per dataset.
#[derive(Debug, Clone)]
pub struct SvmReference {
    pub model: LinearSvm,
    pub accuracy: f64,
}

impl SvmReference {
    pub fn fit(full: &PointSet, labels: &[i64], params: &SvmParams) -> Result<Self> {
        let model = train_svm(full, labels, params)?;
        let accuracy = model.accuracy(full, labels);
        Ok(SvmReference { model, accuracy })
    }
}

pub fn svm_relative(
    full: &PointSet,
    full_labels: &[i64],
    summary: &PointSet,
    summary_labels: &[i64],
    reference: &SvmReference,
    params: &SvmParams,
) -> Result<SvmOutcome> {
    summary.ensure_dim(full.dim())?;
    let model = train_svm(summary, summary_labels, params)?;
    let summary_accuracy = model.accuracy(full, full_labels);
    Ok(SvmOutcome {
        relative_accuracy: summary_accuracy / reference.accuracy,
        summary_accuracy,
        full_accuracy: reference.accuracy,
    })
}

pub fn svm_task(
    full: &PointSet,
    full_labels: &[i64],
    summary: &PointSet,
    summary_labels: &[i64],
    params: &SvmParams,
) -> Result<SvmOutcome> {
    let reference = SvmReference::fit(full, full_labels, params)?;
    svm_relative(full, full_labels, summary, summary_labels, &reference, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (PointSet, Vec<i64>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.37;
            rows.push([-3.0 + 0.5 * t.sin(), 0.5 * t.cos()]);
            labels.push(0);
            rows.push([3.0 + 0.5 * t.cos(), 0.5 * t.sin()]);
            labels.push(1);
        }
        (PointSet::from_rows(&rows).unwrap(), labels)
    }

    fn quick() -> SvmParams {
        SvmParams {
            lambda: 1e-2,
            epochs: 500,
        }
    }

    #[test]
    fn summary_equal_to_full() {
        let (x, y) = separable();
        let out = svm_task(&x, &y, &x, &y, &quick()).unwrap();
        assert_eq!(out.relative_accuracy, 1.0);
        assert_eq!(out.full_accuracy, 1.0);
    }

    #[test]
    fn one_point_per_blob_suffices() {
        let (x, y) = separable();
        let s = PointSet::from_rows(&[[-3.0, 0.0], [3.0, 0.0]]).unwrap();
        let out = svm_task(&x, &y, &s, &[0, 1], &quick()).unwrap();
        assert_eq!(out.relative_accuracy, 1.0);
    }

    #[test]
    fn heavy_regularization_predicts_the_majority() {
        let rows: Vec<[f64; 1]> = (0..10).map(|i| [i as f64]).collect();
        let x = PointSet::from_rows(&rows).unwrap();
        let y = vec![0, 1, 1, 1, 1, 1, 1, 1, 0, 1];
        let p = SvmParams {
            lambda: 1e12,
            epochs: 100,
        };
        let model = train_svm(&x, &y, &p).unwrap();
        assert!((model.accuracy(&x, &y) - 0.8).abs() < 1e-12);
        let out = svm_task(&x, &y, &x.select(&[0, 1, 2]).unwrap(), &[0, 1, 1], &p).unwrap();
        assert!((out.relative_accuracy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_summary_is_rejected() {
        let (x, y) = separable();
        let s = PointSet::from_rows(&[[-3.0, 0.0]]).unwrap();
        assert!(svm_task(&x, &y, &s, &[0], &quick()).is_err());
    }

    #[test]
    fn bias_minimizes_hinge() {
        let scores = [0.0, 0.0, 0.0];
        let ys = [1.0, 1.0, -1.0];
        let w = [1.0, 1.0, 1.0];
        let b = best_bias(&scores, &ys, &w);
        let loss = |b: f64| -> f64 {
            scores
                .iter()
                .zip(&ys)
                .map(|(s, y)| (1.0 - y * (s + b)).max(0.0))
                .sum()
        };
        for probe in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            assert!(loss(b) <= loss(probe) + 1e-12);
        }
    }
}
