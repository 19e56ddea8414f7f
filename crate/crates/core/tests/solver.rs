use std::io::Cursor;

use rand::Rng as _;
use wcoreset::eval::exact_wp;
use wcoreset::measures::{EmpiricalSampler, Sampler, StreamSampler, SyntheticSpec};
use wcoreset::rng;
use wcoreset::solver::{build_coreset, Checkpoint, CoresetBuilder, SolverConfig, TerminatedBy};
use wcoreset::{Exponent, PointSet};

/// Exact `W_p` to a held-out sample at the initial sites and after each of
/// the last ten outer iterations.
fn held_out_path(sampler: &mut dyn Sampler, held_out: &PointSet, config: SolverConfig) -> (f64, Vec<f64>) {
    let (p, iters) = (config.p, config.outer_iters);
    let mut builder = CoresetBuilder::new(sampler, config).unwrap();
    let start = exact_wp(held_out, builder.sites().points(), p).unwrap().0;
    let mut tail = Vec::new();
    loop {
        let done = builder.step().unwrap().is_some();
        if builder.iteration() + 10 > iters {
            tail.push(exact_wp(held_out, builder.sites().points(), p).unwrap().0);
        }
        if done {
            break;
        }
    }
    (start, tail)
}

#[test]
fn held_out_distance_ends_below_its_start() {
    let cases: [(&str, usize, Exponent); 5] = [
        ("uniform2d", 16, Exponent::Two),
        ("mixture4", 4, Exponent::Two),
        ("gaussian2d", 50, Exponent::Two),
        ("banana", 20, Exponent::Two),
        ("gaussian2d", 10, Exponent::One),
    ];
    for (seed, (name, n, p)) in cases.into_iter().enumerate() {
        let spec = SyntheticSpec::preset(name).unwrap();
        let held_out = spec.sampler(1000 + seed as u64).unwrap().draw(450).unwrap();
        let mut s = spec.sampler(seed as u64).unwrap();
        let config = SolverConfig { outer_iters: 60, ..SolverConfig::new(n, p).with_seed(seed as u64) };
        let (start, tail) = held_out_path(s.as_mut(), &held_out, config);
        assert_eq!(tail.len(), 10);
        let late = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(late <= start, "{name} n={n}: start {start} late {late}");
    }
}

#[test]
fn w2_sites_stay_inside_the_data_hull() {
    // Data in the triangle x, y >= 0, x + y <= 1.
    let mut r = rng::named(1, "triangle");
    let mut coords = Vec::new();
    while coords.len() < 2 * 3000 {
        let (x, y): (f64, f64) = (r.random(), r.random());
        if x + y <= 1.0 {
            coords.extend([x, y]);
        }
    }
    let data = PointSet::new(2, coords).unwrap();
    let mut s = EmpiricalSampler::new(data, 2).unwrap();
    let config = SolverConfig { outer_iters: 40, ..SolverConfig::w2(12).with_seed(2) };
    let mut builder = CoresetBuilder::new(&mut s, config).unwrap();
    loop {
        for x in builder.sites().points().iter() {
            assert!(x[0] >= -1e-8 && x[1] >= -1e-8 && x[0] + x[1] <= 1.0 + 1e-8, "site {x:?} left the hull");
        }
        if builder.step().unwrap().is_some() {
            break;
        }
    }
}

#[test]
fn checkpoint_file_round_trip_resumes_bitwise() {
    let data = SyntheticSpec::preset("mixture4").unwrap().sampler(0).unwrap().draw(2000).unwrap();
    let config = SolverConfig { outer_iters: 20, ..SolverConfig::w2(6).with_seed(8) };
    let mut straight = EmpiricalSampler::new(data.clone(), 8).unwrap();
    let expected = build_coreset(&mut straight, config.clone()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let mut first = EmpiricalSampler::new(data.clone(), 8).unwrap();
    let mut builder = CoresetBuilder::new(&mut first, config).unwrap();
    builder.run_for(7).unwrap();
    builder.checkpoint().save(&path).unwrap();
    drop(builder);

    // A fresh process: new sampler, state from disk only.
    let mut second = EmpiricalSampler::new(data, 12345).unwrap();
    let resumed = CoresetBuilder::resume(&mut second, Checkpoint::load(&path).unwrap()).unwrap().run().unwrap();
    assert_eq!(resumed.sites, expected.sites);
    assert_eq!(resumed.trace, expected.trace);
}

fn rows(count: usize) -> String {
    (0..count)
        .map(|i| {
            let t = i as f64;
            format!("{},{}\n", (t * 0.61).sin(), (t * 0.37).cos())
        })
        .collect()
}

#[test]
fn stream_build_reads_within_its_budget() {
    let (n, m, iters) = (4, 50, 6);
    let mut stream = StreamSampler::new(Cursor::new(rows(10_000)), false, None).unwrap();
    let config = SolverConfig { minibatch: Some(m), outer_iters: iters, ..SolverConfig::w2(n) };
    let res = build_coreset(&mut stream, config).unwrap();
    assert_eq!(res.terminated_by, TerminatedBy::IterBudget);
    assert!(stream.consumed() as usize <= m * iters + n, "read {}", stream.consumed());
}

#[test]
fn exhausted_stream_ends_the_run() {
    let mut stream = StreamSampler::new(Cursor::new(rows(130)), false, None).unwrap();
    let config = SolverConfig { minibatch: Some(50), outer_iters: 100, ..SolverConfig::w1(3) };
    let res = build_coreset(&mut stream, config).unwrap();
    assert_eq!(res.terminated_by, TerminatedBy::StreamEnd);
    assert_eq!(res.trace.len(), 2);
    assert_eq!(res.sites.n(), 3);
}
