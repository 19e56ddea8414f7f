//! `wcoreset check`: the fast invariant suite, one `CHECK <name> PASS|FAIL`
//! line per check. Failure details go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use nalgebra::{DMatrix, DVector};
use wcoreset::eval::{
    exact_wp, gaussian_kl, lloyd, mmd, permutation_wp, KernelSpec, LloydParams,
};
use wcoreset::measures::{EmpiricalSampler, Sampler, SyntheticSpec};
use wcoreset::semidiscrete::{dual_gradient_v, dual_objective, DualWeights, SiteSet};
use wcoreset::solver::{
    build_coreset, sinkhorn_divergence, sinkhorn_plan, Checkpoint, CoresetBuilder, SinkhornParams,
    SolverConfig,
};
use wcoreset::{Exponent, PointSet};

use crate::input::read_coreset;

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Also validate this coreset file.
    #[arg(long)]
    pub coreset: Option<PathBuf>,
    /// Expected dimension of `--coreset`.
    #[arg(long, requires = "coreset")]
    pub dim: Option<usize>,
    /// Run only the named checks.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
}

type Outcome = Result<(), String>;

fn fail<T>(msg: impl Into<String>) -> Result<T, String> {
    Err(msg.into())
}

fn err(e: wcoreset::Error) -> String {
    e.to_string()
}

fn gaussian(n: usize, d: usize, seed: u64) -> Result<PointSet, String> {
    SyntheticSpec::standard_gaussian(d)
        .sampler(seed)
        .and_then(|mut s| s.draw(n))
        .map_err(err)
}

fn exponents() -> [Exponent; 2] {
    [Exponent::One, Exponent::Two]
}

fn exact_vs_permutation() -> Outcome {
    for i in 0..40u64 {
        let (n, d) = (1 + (i % 5) as usize, 1 + (i % 3) as usize);
        let a = gaussian(n, d, 2 * i)?;
        let b = gaussian(n, d, 2 * i + 1)?;
        for p in exponents() {
            let w = exact_wp(&a, &b, p).map_err(err)?.0;
            let o = permutation_wp(&a, &b, p).map_err(err)?;
            if (w - o).abs() > 1e-9 {
                return fail(format!("instance {i}, p = {p:?}: simplex {w}, oracle {o}"));
            }
        }
    }
    Ok(())
}

fn transport_marginals() -> Outcome {
    for (i, (m, n)) in [(3, 5), (6, 2), (4, 4), (1, 7)].into_iter().enumerate() {
        let a = gaussian(m, 2, 100 + i as u64)?;
        let b = gaussian(n, 2, 200 + i as u64)?;
        let (_, plan) = exact_wp(&a, &b, Exponent::Two).map_err(err)?;
        let rows = plan.row_sums().iter().all(|r| (r - 1.0 / m as f64).abs() <= 1e-9);
        let cols = plan.col_sums().iter().all(|c| (c - 1.0 / n as f64).abs() <= 1e-9);
        let nonneg = plan.coupling.iter().all(|&x| x >= 0.0);
        if !(rows && cols && nonneg) {
            return fail(format!("{m} × {n} plan violates its marginals"));
        }
    }
    Ok(())
}

fn metric_axioms() -> Outcome {
    for i in 0..15u64 {
        let a = gaussian(4, 2, 300 + 3 * i)?;
        let b = gaussian(4, 2, 301 + 3 * i)?;
        let c = gaussian(4, 2, 302 + 3 * i)?;
        for p in exponents() {
            let w = |x: &PointSet, y: &PointSet| exact_wp(x, y, p).map(|r| r.0).map_err(err);
            let (ab, ba, bc, ac) = (w(&a, &b)?, w(&b, &a)?, w(&b, &c)?, w(&a, &c)?);
            if (ab - ba).abs() > 1e-12 {
                return fail(format!("asymmetric: {ab} vs {ba}"));
            }
            if ac > ab + bc + 1e-9 {
                return fail(format!("triangle inequality: {ac} > {ab} + {bc}"));
            }
            if w(&a, &a)? != 0.0 {
                return fail("W_p(a, a) is not zero");
            }
        }
    }
    Ok(())
}

fn w1_le_w2() -> Outcome {
    for i in 0..30u64 {
        let a = gaussian(1 + (i % 6) as usize, 3, 400 + 2 * i)?;
        let b = gaussian(1 + (i % 4) as usize, 3, 401 + 2 * i)?;
        let w1 = exact_wp(&a, &b, Exponent::One).map_err(err)?.0;
        let w2 = exact_wp(&a, &b, Exponent::Two).map_err(err)?.0;
        if w1 > w2 + 1e-9 {
            return fail(format!("instance {i}: W1 {w1} > W2 {w2}"));
        }
    }
    Ok(())
}

fn sinkhorn_upper_bound() -> Outcome {
    for i in 0..10u64 {
        let a = gaussian(5, 2, 500 + 2 * i)?;
        let b = gaussian(4, 2, 501 + 2 * i)?;
        for p in exponents() {
            let exact = exact_wp(&a, &b, p).map_err(err)?.1.cost;
            for eta in [0.05, 0.5, 5.0] {
                let plan = sinkhorn_plan(&a, &b, p, SinkhornParams::new(eta, 5000)).map_err(err)?;
                if plan.cost < exact - 1e-9 {
                    return fail(format!("η = {eta}: entropic cost {} < exact {exact}", plan.cost));
                }
            }
        }
    }
    Ok(())
}

fn sd_self_zero() -> Outcome {
    for i in 0..5u64 {
        let x = gaussian(6, 2, 600 + i)?;
        let sd = sinkhorn_divergence(&x, &x, Exponent::Two, SinkhornParams::new(0.3, 500)).map_err(err)?;
        if sd.value.abs() > 1e-8 {
            return fail(format!("SD(x, x) = {}", sd.value));
        }
    }
    Ok(())
}

fn dual_instance(i: u64) -> Result<(PointSet, SiteSet, DualWeights), String> {
    let batch = gaussian(40, 2, 700 + 3 * i)?;
    let sites = SiteSet::new(gaussian(5, 2, 701 + 3 * i)?).map_err(err)?;
    let v = DualWeights(gaussian(5, 1, 702 + 3 * i)?.coords().iter().map(|x| 0.3 * x).collect());
    Ok((batch, sites, v))
}

fn dual_shift_invariance() -> Outcome {
    for i in 0..10u64 {
        let (batch, sites, v) = dual_instance(i)?;
        for p in exponents() {
            let f0 = dual_objective(&batch, &sites, &v, p).map_err(err)?;
            for c in [-3.0, 0.5, 17.0] {
                let f1 = dual_objective(&batch, &sites, &v.shifted(c), p).map_err(err)?;
                if (f0 - f1).abs() > 1e-12 * f0.abs().max(1.0) {
                    return fail(format!("shift {c}: {f0} vs {f1}"));
                }
            }
        }
    }
    Ok(())
}

fn dual_concavity() -> Outcome {
    for i in 0..10u64 {
        let (batch, sites, va) = dual_instance(i)?;
        let (_, _, vb) = dual_instance(i + 100)?;
        let mid = DualWeights(va.0.iter().zip(&vb.0).map(|(a, b)| 0.5 * (a + b)).collect());
        for p in exponents() {
            let f = |v: &DualWeights| dual_objective(&batch, &sites, v, p).map_err(err);
            let (fa, fb, fm) = (f(&va)?, f(&vb)?, f(&mid)?);
            if fm < 0.5 * (fa + fb) - 1e-12 {
                return fail(format!("midpoint {fm} below chord {}", 0.5 * (fa + fb)));
            }
        }
    }
    Ok(())
}

fn dual_gradient_fd() -> Outcome {
    let h = 1e-7;
    for i in 0..20u64 {
        let (batch, sites, v) = dual_instance(i)?;
        for p in exponents() {
            let g = dual_gradient_v(&batch, &sites, &v, p).map_err(err)?;
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for k in 0..v.len() {
                let mut up = v.clone();
                up.0[k] += h;
                let mut down = v.clone();
                down.0[k] -= h;
                let fd = (dual_objective(&batch, &sites, &up, p).map_err(err)?
                    - dual_objective(&batch, &sites, &down, p).map_err(err)?)
                    / (2.0 * h);
                num = num.max((fd - g[k]).abs());
                den = den.max(g[k].abs());
            }
            if num > 1e-6 * den.max(1e-3) {
                return fail(format!("instance {i}, p = {p:?}: gradient error {num}"));
            }
        }
    }
    Ok(())
}

fn sd_gradient_fd() -> Outcome {
    let params = SinkhornParams {
        tol: 1e-14,
        ..SinkhornParams::new(0.5, 20_000)
    };
    let h = 1e-5;
    for i in 0..5u64 {
        let batch = gaussian(6, 2, 800 + 2 * i)?;
        let sites = gaussian(3, 2, 801 + 2 * i)?;
        for p in exponents() {
            let sd = sinkhorn_divergence(&batch, &sites, p, params).map_err(err)?;
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for k in 0..sites.coords().len() {
                let nudge = |delta: f64| -> Result<f64, String> {
                    let mut c = sites.coords().to_vec();
                    c[k] += delta;
                    let s = PointSet::new(2, c).map_err(err)?;
                    Ok(sinkhorn_divergence(&batch, &s, p, params).map_err(err)?.value)
                };
                let fd = (nudge(h)? - nudge(-h)?) / (2.0 * h);
                num = num.max((fd - sd.gradient[k]).abs());
                den = den.max(sd.gradient[k].abs());
            }
            if num > 1e-4 * den.max(1e-3) {
                return fail(format!("instance {i}, p = {p:?}: gradient error {num} (scale {den})"));
            }
        }
    }
    Ok(())
}

fn w2_recovery() -> Outcome {
    let data = gaussian(8, 2, 900)?;
    let scale = data.coordinate_range();
    let mut sampler = EmpiricalSampler::new(data.clone(), 1).map_err(err)?;
    let res = build_coreset(&mut sampler, SolverConfig::w2(8).with_seed(1)).map_err(err)?;
    let w = exact_wp(&data, res.sites.points(), Exponent::Two).map_err(err)?.0;
    if w > 1e-3 * scale {
        return fail(format!("W2 {w} after recovery, scale {scale}"));
    }
    Ok(())
}

fn scaling_pushforward() -> Outcome {
    for i in 0..10u64 {
        let a = gaussian(5, 2, 1000 + 2 * i)?;
        let b = gaussian(3, 2, 1001 + 2 * i)?;
        let triple = |s: &PointSet| s.map_rows(|r| r.iter().map(|x| 3.0 * x).collect()).map_err(err);
        for p in exponents() {
            let w = exact_wp(&a, &b, p).map_err(err)?.0;
            let w3 = exact_wp(&triple(&a)?, &triple(&b)?, p).map_err(err)?.0;
            if (w3 - 3.0 * w).abs() > 1e-9 {
                return fail(format!("W_p(3a, 3b) = {w3}, 3 W_p(a, b) = {}", 3.0 * w));
            }
        }
    }
    Ok(())
}

fn gaussian_kl_identities() -> Outcome {
    let d = 3;
    let id = DMatrix::<f64>::identity(d, d);
    let m2 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let kl = gaussian_kl(&DVector::zeros(d), &id, &m2, &id).map_err(err)?;
    if (kl - m2.norm_squared() / 2.0).abs() > 1e-12 {
        return fail(format!("shifted standard Gaussians: {kl}"));
    }
    let m1 = DVector::from_vec(vec![0.3, 0.1, -0.7]);
    let s1 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
    let s2 = DMatrix::from_row_slice(3, 3, &[1.0, -0.1, 0.0, -0.1, 1.5, 0.4, 0.0, 0.4, 0.8]);
    if gaussian_kl(&m1, &s1, &m1, &s1).map_err(err)?.abs() > 1e-12 {
        return fail("KL of a Gaussian to itself is not zero");
    }
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
    let base = gaussian_kl(&m1, &s1, &m2, &s2).map_err(err)?;
    let rot = gaussian_kl(&(&r * &m1), &(&r * &s1 * r.transpose()), &(&r * &m2), &(&r * &s2 * r.transpose()))
        .map_err(err)?;
    if (base - rot).abs() > 1e-10 {
        return fail(format!("rotation changed KL: {base} vs {rot}"));
    }
    Ok(())
}

fn mmd_self_zero() -> Outcome {
    let x = gaussian(30, 3, 1100)?;
    let v = mmd(&x, &x, &KernelSpec::Gaussian { sigma: 1.3 }).map_err(err)?;
    if v > 1e-12 {
        return fail(format!("MMD²(x, x) = {v}"));
    }
    Ok(())
}

fn lloyd_monotone() -> Outcome {
    let x = gaussian(200, 2, 1200)?;
    for seed in 0..5 {
        let params = LloydParams {
            restarts: 1,
            ..LloydParams::default()
        };
        let fit = lloyd(&x, 6, &params, seed).map_err(err)?;
        if fit.history.windows(2).any(|w| w[1] > w[0] + 1e-12 * w[0]) {
            return fail(format!("objective increased: {:?}", fit.history));
        }
    }
    Ok(())
}

fn small_config() -> SolverConfig {
    SolverConfig {
        outer_iters: 8,
        dual_steps: 50,
        ..SolverConfig::w2(6).with_seed(3)
    }
}

fn build_determinism() -> Outcome {
    let run = || -> Result<Vec<f64>, String> {
        let mut s = SyntheticSpec::standard_gaussian(2).sampler(5).map_err(err)?;
        let res = build_coreset(s.as_mut(), small_config()).map_err(err)?;
        Ok(res.sites.points().coords().to_vec())
    };
    let (a, b) = (run()?, run()?);
    if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
        return fail("two runs with equal seeds differ");
    }
    Ok(())
}

fn checkpoint_resume() -> Outcome {
    let spec = SyntheticSpec::standard_gaussian(2);
    let mut s = spec.sampler(5).map_err(err)?;
    let straight = build_coreset(s.as_mut(), small_config()).map_err(err)?;

    let mut s = spec.sampler(5).map_err(err)?;
    let mut builder = CoresetBuilder::new(s.as_mut(), small_config()).map_err(err)?;
    builder.run_for(3).map_err(err)?;
    let json = serde_json::to_string(&builder.checkpoint()).map_err(|e| e.to_string())?;
    drop(builder);
    let ck: Checkpoint = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let mut fresh = spec.sampler(5).map_err(err)?;
    let resumed = CoresetBuilder::resume(fresh.as_mut(), ck)
        .and_then(|b| b.run())
        .map_err(err)?;
    let same = straight
        .sites
        .points()
        .coords()
        .iter()
        .zip(resumed.sites.points().coords())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    if !same {
        return fail("resumed run differs from the uninterrupted run");
    }
    Ok(())
}

fn coreset_file(path: &Path, dim: Option<usize>) -> Outcome {
    let (points, _, _) = read_coreset(path, None).map_err(err)?;
    if let Some(d) = dim {
        if points.dim() != d {
            return fail(format!("expected {d} columns, found {}", points.dim()));
        }
    }
    Ok(())
}

const CHECKS: &[(&str, fn() -> Outcome)] = &[
    ("exact-vs-permutation", exact_vs_permutation),
    ("transport-marginals", transport_marginals),
    ("metric-axioms", metric_axioms),
    ("w1-le-w2", w1_le_w2),
    ("sinkhorn-upper-bound", sinkhorn_upper_bound),
    ("sd-self-zero", sd_self_zero),
    ("dual-shift-invariance", dual_shift_invariance),
    ("dual-concavity", dual_concavity),
    ("dual-gradient-fd", dual_gradient_fd),
    ("sd-gradient-fd", sd_gradient_fd),
    ("w2-recovery", w2_recovery),
    ("scaling-pushforward", scaling_pushforward),
    ("gaussian-kl", gaussian_kl_identities),
    ("mmd-self-zero", mmd_self_zero),
    ("lloyd-monotone", lloyd_monotone),
    ("build-determinism", build_determinism),
    ("checkpoint-resume", checkpoint_resume),
];

pub fn run(args: CheckArgs) -> ExitCode {
    let wanted = |name: &str| args.only.is_empty() || args.only.iter().any(|o| o == name);
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match outcome {
            Ok(()) => println!("CHECK {name} PASS"),
            Err(detail) => {
                failed += 1;
                println!("CHECK {name} FAIL");
                eprintln!("{name}: {detail}");
            }
        }
    };
    for (name, check) in CHECKS {
        if wanted(name) {
            report(name, check());
        }
    }
    if let Some(path) = &args.coreset {
        if wanted("coreset-file") {
            report("coreset-file", coreset_file(path, args.dim));
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
