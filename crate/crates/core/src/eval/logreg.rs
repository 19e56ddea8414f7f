//! Laplace approximation of the Bayesian logistic-regression posterior and
//! the Gaussian KL divergence between two such approximations.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::svm::binary_labels;
use crate::points::PointSet;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub max_iters: usize,
    /// Newton step norm accepted as converged.
    pub tol: f64,
}

impl Default for LaplaceParams {
    fn default() -> Self {
        LaplaceParams {
            max_iters: 50,
            tol: 1e-10,
        }
    }
}

/// Gaussian `N(mean, cov)` approximating the posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub iterations: usize,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    x: &'a PointSet,
    y: Vec<f64>,
    scale: f64,
}

impl Problem<'_> {
    /// Log posterior up to a constant: `−½‖θ‖² + s Σ [y z − log(1 + e^z)]`.
    fn log_post(&self, theta: &DVector<f64>) -> f64 {
        let mut ll = 0.0;
        for (x, y) in self.x.iter().zip(&self.y) {
            let z: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            ll += y * z - log1p_exp(z);
        }
        -0.5 * theta.norm_squared() + self.scale * ll
    }

    /// Gradient and negative Hessian of the log posterior.
    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = theta.len();
        let mut grad = -theta.clone();
        let mut prec = DMatrix::identity(d, d);
        for (x, y) in self.x.iter().zip(&self.y) {
            let z: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let s = sigmoid(z);
            let r = self.scale * (y - s);
            let c = self.scale * s * (1.0 - s);
            for a in 0..d {
                grad[a] += r * x[a];
                for b in 0..d {
                    prec[(a, b)] += c * x[a] * x[b];
                }
            }
        }
        (grad, prec)
    }
}

/// MAP by damped Newton ascent under the prior `N(0, I)`, covariance from
/// the inverse negative Hessian at the mode. The log-likelihood is multiplied
/// by `likelihood_scale`. Labels must take exactly two values; the larger
/// one is the positive class.
pub fn laplace_posterior(
    points: &PointSet,
    labels: &[i64],
    likelihood_scale: f64,
    params: &LaplaceParams,
) -> Result<GaussianPosterior> {
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    let (_, positive) = binary_labels(labels)?;
    let outcomes: Vec<bool> = labels.iter().map(|&l| l == positive).collect();
    laplace_posterior_outcomes(points, &outcomes, likelihood_scale, params)
}

/// [`laplace_posterior`] with outcomes given directly (`true` = positive);
/// a single outcome class is allowed.
pub fn laplace_posterior_outcomes(
    points: &PointSet,
    outcomes: &[bool],
    likelihood_scale: f64,
    params: &LaplaceParams,
) -> Result<GaussianPosterior> {
    if outcomes.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: outcomes.len(),
        });
    }
    let problem = Problem {
        x: points,
        y: outcomes.iter().map(|&o| f64::from(u8::from(o))).collect(),
        scale: likelihood_scale,
    };
    let d = points.dim();
    let mut theta = DVector::zeros(d);
    let mut value = problem.log_post(&theta);
    let mut iterations = 0;
    for it in 1..=params.max_iters {
        iterations = it;
        let (grad, prec) = problem.derivatives(&theta);
        let chol = Cholesky::new(prec).ok_or_else(|| {
            Error::Numerical("posterior Hessian is not negative definite".into())
        })?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &theta + &step * t;
            let v = problem.log_post(&cand);
            if v >= value {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step.norm() * t <= params.tol {
            break;
        }
    }
    let (_, prec) = problem.derivatives(&theta);
    let cov = Cholesky::new(prec)
        .ok_or_else(|| Error::Numerical("posterior Hessian is not negative definite".into()))?
        .inverse();
    Ok(GaussianPosterior {
        mean: theta,
        cov,
        iterations,
    })
}

/// `KL(N(m1, S1) ‖ N(m2, S2))`.
pub fn gaussian_kl(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let d = m1.len();
    if m2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m2.len(),
        });
    }
    let c1 = Cholesky::new(s1.clone())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let c2 = Cholesky::new(s2.clone())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let logdet = |c: &Cholesky<f64, nalgebra::Dyn>| {
        2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
    };
    let trace = c2.solve(s1).trace();
    let diff = m2 - m1;
    let maha = diff.dot(&c2.solve(&diff));
    Ok(0.5 * (trace + maha - d as f64 + logdet(&c2) - logdet(&c1)).max(0.0))
}

impl GaussianPosterior {
    /// `KL(self ‖ other)`.
    pub fn kl_to(&self, other: &GaussianPosterior) -> Result<f64> {
        gaussian_kl(&self.mean, &self.cov, &other.mean, &other.cov)
    }
}

/// KL of the summary posterior to a precomputed full-data posterior. The
/// summary likelihood is scaled by `full_size / |summary|`.
pub fn logreg_relative(
    full_size: usize,
    reference: &GaussianPosterior,
    summary: &PointSet,
    outcomes: &[bool],
    params: &LaplaceParams,
) -> Result<f64> {
    let scale = full_size as f64 / summary.len() as f64;
    laplace_posterior_outcomes(summary, outcomes, scale, params)?.kl_to(reference)
}

/// Rows with the negative label negated. Since `1 − σ(z) = σ(−z)`, a row
/// `(x, negative)` has the same likelihood as `(−x, positive)`, so the
/// returned set with every outcome positive carries the full likelihood.
/// Also returns the positive label.
pub fn signed_features(points: &PointSet, labels: &[i64]) -> Result<(PointSet, i64)> {
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    let (_, positive) = binary_labels(labels)?;
    let mut coords = Vec::with_capacity(points.len() * points.dim());
    for (x, &l) in points.iter().zip(labels) {
        let s = if l == positive { 1.0 } else { -1.0 };
        coords.extend(x.iter().map(|v| s * v));
    }
    Ok((PointSet::new(points.dim(), coords)?, positive))
}

pub fn logreg_posterior_task(
    full: &PointSet,
    full_labels: &[i64],
    summary: &PointSet,
    summary_labels: &[i64],
) -> Result<f64> {
    summary.ensure_dim(full.dim())?;
    let params = LaplaceParams::default();
    if summary_labels.len() != summary.len() {
        return Err(Error::DimensionMismatch {
            expected: summary.len(),
            found: summary_labels.len(),
        });
    }
    let (_, positive) = binary_labels(full_labels)?;
    let reference = laplace_posterior(full, full_labels, 1.0, &params)?;
    let outcomes: Vec<bool> = summary_labels.iter().map(|&l| l == positive).collect();
    logreg_relative(full.len(), &reference, summary, &outcomes, &params)
}

/// Synthetic data: `x ~ N(0, I_d)`, `θ ~ N(0, I_d)`, `y ~ Bern(σ(xᵀθ))`.
pub fn synthetic_logreg(size: usize, dim: usize, seed: u64) -> Result<(PointSet, Vec<i64>, Vec<f64>)> {
    if size == 0 || dim == 0 {
        return Err(Error::Config("synthetic logistic data needs size, dim >= 1".into()));
    }
    let mut r = rng::named(seed, "logreg-theta");
    let theta: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
    let mut r = rng::named(seed, "logreg-data");
    let mut coords = Vec::with_capacity(size * dim);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let x: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let z: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
        labels.push(i64::from(r.random::<f64>() < sigmoid(z)));
        coords.extend(x);
    }
    Ok((PointSet::new(dim, coords)?, labels, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_of_shifted_standard_gaussians() {
        let d = 3;
        let id = DMatrix::identity(d, d);
        let m2 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let kl = gaussian_kl(&DVector::zeros(d), &id, &m2, &id).unwrap();
        assert!((kl - m2.norm_squared() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn summary_equal_to_full_has_zero_kl() {
        let (x, y, _) = synthetic_logreg(500, 3, 1).unwrap();
        let kl = logreg_posterior_task(&x, &y, &x, &y).unwrap();
        assert!(kl.abs() < 1e-10, "{kl}");
    }

    #[test]
    fn map_is_a_stationary_point() {
        let (x, y, _) = synthetic_logreg(300, 2, 4).unwrap();
        let post = laplace_posterior(&x, &y, 1.0, &LaplaceParams::default()).unwrap();
        let problem = Problem {
            x: &x,
            y: y.iter().map(|&l| l as f64).collect(),
            scale: 1.0,
        };
        let (grad, _) = problem.derivatives(&post.mean);
        assert!(grad.norm() < 1e-8, "{}", grad.norm());
    }

    #[test]
    fn signed_features_keep_the_posterior() {
        let (x, y, _) = synthetic_logreg(400, 3, 2).unwrap();
        let (z, positive) = signed_features(&x, &y).unwrap();
        assert_eq!(positive, 1);
        let p = LaplaceParams::default();
        let a = laplace_posterior(&x, &y, 1.0, &p).unwrap();
        let b = laplace_posterior_outcomes(&z, &vec![true; z.len()], 1.0, &p).unwrap();
        assert!((a.mean - b.mean).norm() < 1e-10);
        assert!((a.cov - b.cov).norm() < 1e-10);
        let ones = vec![1; z.len()];
        assert!(logreg_posterior_task(&x, &y, &z, &ones).unwrap() < 1e-10);
    }

    #[test]
    fn synthetic_labels_follow_the_model() {
        let (x, y, theta) = synthetic_logreg(20_000, 5, 7).unwrap();
        let post = laplace_posterior(&x, &y, 1.0, &LaplaceParams::default()).unwrap();
        for (est, t) in post.mean.iter().zip(&theta) {
            assert!((est - t).abs() < 0.15, "{est} vs {t}");
        }
    }
}
