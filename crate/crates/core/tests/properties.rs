use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use wcoreset::eval::{exact_wp, gaussian_kl, lloyd, LloydParams};
use wcoreset::measures::{pushforward, EmpiricalSampler, PointMap, Sampler, SyntheticSpec};
use wcoreset::semidiscrete::{
    assign, dual_gradient_v, dual_objective, evaluate, solve_dual_fixed, CostMatrix, DualState, DualWeights, SiteSet,
    StepSchedule,
};
use wcoreset::solver::{
    sinkhorn_divergence, sinkhorn_plan, w1_update, w2_update, SinkhornParams,
};
use wcoreset::{Exponent, PointSet};

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![Just(Exponent::One), Just(Exponent::Two)]
}

fn points(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = PointSet> {
    n.prop_flat_map(move |n| prop::collection::vec(-5.0..5.0f64, n * d))
        .prop_map(move |c| PointSet::new(d, c).unwrap())
}

fn distinct(set: PointSet) -> SiteSet {
    let scale = set.coordinate_range().max(1.0);
    SiteSet::separated(set, scale)
}

/// Minibatch, sites and dual weights of a common dimension.
fn dual_instance() -> impl Strategy<Value = (PointSet, SiteSet, DualWeights)> {
    (1usize..=3).prop_flat_map(|d| {
        (points(5..=40, d), points(1..=6, d)).prop_flat_map(|(batch, sites)| {
            let n = sites.len();
            (Just(batch), Just(distinct(sites)), prop::collection::vec(-2.0..2.0f64, n).prop_map(DualWeights))
        })
    })
}

fn spd(entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(3, 3, entries);
    &a * a.transpose() + DMatrix::identity(3, 3) * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_wp_is_a_metric(
        (a, b, c) in (1usize..=3).prop_flat_map(|d| (points(1..=5, d), points(1..=5, d), points(1..=5, d))),
        p in exponent(),
    ) {
        let w = |x: &PointSet, y: &PointSet| exact_wp(x, y, p).unwrap().0;
        prop_assert_eq!(w(&a, &b), w(&b, &a));
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-9);
        prop_assert!(w(&a, &a).abs() <= 1e-12);
    }

    #[test]
    fn exact_wp_vanishes_only_on_equal_multisets(a in points(2..=6, 2), shift in 0.01..1.0f64, p in exponent()) {
        let mut rows = a.to_rows();
        rows.reverse();
        let reordered = PointSet::from_rows(&rows).unwrap();
        prop_assert!(exact_wp(&a, &reordered, p).unwrap().0 <= 1e-12);
        rows[0][0] += shift;
        let moved = PointSet::from_rows(&rows).unwrap();
        prop_assert!(exact_wp(&a, &moved, p).unwrap().0 > 0.0);
    }

    #[test]
    fn w1_never_exceeds_w2((a, b) in (1usize..=3).prop_flat_map(|d| (points(1..=6, d), points(1..=6, d)))) {
        let w1 = exact_wp(&a, &b, Exponent::One).unwrap().0;
        let w2 = exact_wp(&a, &b, Exponent::Two).unwrap().0;
        prop_assert!(w1 <= w2 + 1e-9, "W1 {} > W2 {}", w1, w2);
    }

    #[test]
    fn entropic_cost_bounds_exact_cost(
        (a, b) in (1usize..=2).prop_flat_map(|d| (points(1..=5, d), points(1..=5, d))),
        p in exponent(),
        eta in 0.05..5.0f64,
    ) {
        let exact = exact_wp(&a, &b, p).unwrap().1.cost;
        let params = SinkhornParams { tol: 1e-12, ..SinkhornParams::new(eta, 20_000) };
        let plan = sinkhorn_plan(&a, &b, p, params).unwrap();
        prop_assert!(plan.cost >= exact - 1e-9, "entropic {} < exact {}", plan.cost, exact);
    }

    #[test]
    fn affine_maps_contract_by_their_lipschitz_constant(
        (a, b) in (points(1..=5, 2), points(1..=5, 2)),
        m in prop::collection::vec(-2.0..2.0f64, 4),
        t in prop::collection::vec(-3.0..3.0f64, 2),
        p in exponent(),
    ) {
        let mat = DMatrix::from_row_slice(2, 2, &m);
        let lip = mat.clone().svd(false, false).singular_values.max();
        let f = |s: &PointSet| {
            s.map_rows(|r| vec![m[0] * r[0] + m[1] * r[1] + t[0], m[2] * r[0] + m[3] * r[1] + t[1]]).unwrap()
        };
        let w = exact_wp(&a, &b, p).unwrap().0;
        let wf = exact_wp(&f(&a), &f(&b), p).unwrap().0;
        prop_assert!(wf <= lip * w + 1e-9, "{} > {} x {}", wf, lip, w);
    }

    #[test]
    fn scalings_multiply_the_distance(
        (a, b) in (points(1..=5, 2), points(1..=5, 2)),
        c in 0.1..5.0f64,
        p in exponent(),
    ) {
        let f = |s: &PointSet| s.map_rows(|r| r.iter().map(|x| c * x).collect()).unwrap();
        let w = exact_wp(&a, &b, p).unwrap().0;
        let wf = exact_wp(&f(&a), &f(&b), p).unwrap().0;
        prop_assert!((wf - c * w).abs() <= 1e-9);
    }

    #[test]
    fn sinkhorn_divergence_of_a_set_to_itself_is_zero(a in points(1..=6, 2), eta in 0.1..3.0f64, p in exponent()) {
        let sd = sinkhorn_divergence(&a, &a, p, SinkhornParams::new(eta, 2000)).unwrap();
        prop_assert!(sd.value.abs() <= 1e-8);
    }

    #[test]
    fn dual_objective_ignores_constant_shifts((batch, sites, v) in dual_instance(), c in -50.0..50.0f64, p in exponent()) {
        let f0 = dual_objective(&batch, &sites, &v, p).unwrap();
        let f1 = dual_objective(&batch, &sites, &v.shifted(c), p).unwrap();
        prop_assert!((f0 - f1).abs() <= 1e-12 * (f0.abs() + c.abs()).max(1.0));
    }

    #[test]
    fn dual_objective_is_concave(
        (batch, sites, va, vb) in dual_instance().prop_flat_map(|(b, s, v)| {
            let n = v.len();
            (Just(b), Just(s), Just(v), prop::collection::vec(-2.0..2.0f64, n).prop_map(DualWeights))
        }),
        t in 0.0..1.0f64,
        p in exponent(),
    ) {
        let mix = DualWeights(va.0.iter().zip(&vb.0).map(|(a, b)| (1.0 - t) * a + t * b).collect());
        let f = |v: &DualWeights| dual_objective(&batch, &sites, v, p).unwrap();
        prop_assert!(f(&mix) >= (1.0 - t) * f(&va) + t * f(&vb) - 1e-12);
    }

    #[test]
    fn dual_gradient_matches_central_differences((batch, sites, v) in dual_instance(), p in exponent()) {
        let g = dual_gradient_v(&batch, &sites, &v, p).unwrap();
        let h = 1e-7;
        let eval = evaluate(&batch, &sites, &v, p).unwrap();
        // Skip instances with a kink inside the difference window.
        let mut margins = Vec::new();
        for (k, y) in batch.iter().enumerate() {
            let own = eval.shifted_costs[k];
            for i in 0..sites.n() {
                if i != eval.assignment.indices[k] {
                    margins.push(p.cost(y, sites.site(i)) - v.0[i] - own);
                }
            }
        }
        prop_assume!(margins.iter().all(|&m| m > 4.0 * h));
        for k in 0..v.len() {
            let (mut up, mut down) = (v.clone(), v.clone());
            up.0[k] += h;
            down.0[k] -= h;
            let fd = (dual_objective(&batch, &sites, &up, p).unwrap() - dual_objective(&batch, &sites, &down, p).unwrap())
                / (2.0 * h);
            // Gradient entries are on the scale of 1/n.
            let scale = g.iter().fold(1.0 / v.len() as f64, |m, x| m.max(x.abs()));
            prop_assert!((fd - g[k]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn gradient_and_assignment_share_counts((batch, sites, v) in dual_instance(), p in exponent()) {
        let cells = assign(&batch, &sites, &v, p).unwrap();
        let g = dual_gradient_v(&batch, &sites, &v, p).unwrap();
        let n = sites.n() as f64;
        let m = batch.len() as f64;
        for (gi, &c) in g.iter().zip(&cells.counts) {
            prop_assert_eq!(*gi, 1.0 / n - c as f64 / m);
        }
        prop_assert_eq!(cells.counts.iter().sum::<usize>(), batch.len());
    }

    #[test]
    fn dual_objective_averages_over_disjoint_batches(
        (batch, sites, v) in dual_instance(),
        parts in 2usize..=4,
        p in exponent(),
    ) {
        let per = batch.len() / parts;
        prop_assume!(per >= 1);
        let chunks: Vec<PointSet> = (0..parts)
            .map(|k| batch.select(&(k * per..(k + 1) * per).collect::<Vec<_>>()).unwrap())
            .collect();
        let union = batch.select(&(0..parts * per).collect::<Vec<_>>()).unwrap();
        let avg = chunks.iter().map(|c| dual_objective(c, &sites, &v, p).unwrap()).sum::<f64>() / parts as f64;
        let whole = dual_objective(&union, &sites, &v, p).unwrap();
        prop_assert!((avg - whole).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn w1_step_moves_each_site_at_most_gamma_over_root_k(
        (batch, sites, v) in dual_instance(),
        gamma in 0.01..3.0f64,
        k in 1usize..200,
    ) {
        let cells = assign(&batch, &sites, &v, Exponent::One).unwrap();
        let update = w1_update(&sites, &batch, &cells, gamma, k);
        let bound = gamma / (k as f64).sqrt();
        prop_assert!(update.max_displacement() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn w2_step_keeps_sites_at_cell_barycenters(
        centers in prop::collection::vec((-3i32..3, -3i32..3), 1..5),
        offsets in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..6),
    ) {
        // Sites on a coarse grid; each cell holds a symmetric cloud around its site.
        let mut centers = centers;
        centers.sort_unstable();
        centers.dedup();
        let sites = PointSet::from_rows(
            &centers.iter().map(|&(x, y)| [10.0 * x as f64, 10.0 * y as f64]).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut rows = Vec::new();
        for s in sites.iter() {
            for &(dx, dy) in &offsets {
                rows.push([s[0] + dx, s[1] + dy]);
                rows.push([s[0] - dx, s[1] - dy]);
            }
        }
        let batch = PointSet::from_rows(&rows).unwrap();
        let sites = SiteSet::new(sites).unwrap();
        let v = DualWeights::zeros(sites.n());
        let cells = assign(&batch, &sites, &v, Exponent::Two).unwrap();
        prop_assert!(cells.counts.iter().all(|&c| c == 2 * offsets.len()));
        let update = w2_update(&sites, &batch, &cells);
        prop_assert!(update.max_displacement() <= 1e-12);
    }

    #[test]
    fn gaussian_kl_is_rotation_invariant(
        m1 in prop::collection::vec(-2.0..2.0f64, 3),
        m2 in prop::collection::vec(-2.0..2.0f64, 3),
        a in prop::collection::vec(-1.0..1.0f64, 9),
        b in prop::collection::vec(-1.0..1.0f64, 9),
        axis in prop::collection::vec(-1.0..1.0f64, 3),
        angle in 0.0..6.3f64,
    ) {
        let axis = DVector::from_vec(axis);
        prop_assume!(axis.norm() > 0.1);
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(nalgebra::Vector3::new(axis[0], axis[1], axis[2])), angle);
        let r = DMatrix::from_iterator(3, 3, rot.matrix().iter().copied());
        let (m1, m2) = (DVector::from_vec(m1), DVector::from_vec(m2));
        let (s1, s2) = (spd(&a), spd(&b));
        let base = gaussian_kl(&m1, &s1, &m2, &s2).unwrap();
        let turned = gaussian_kl(&(&r * &m1), &(&r * &s1 * r.transpose()), &(&r * &m2), &(&r * &s2 * r.transpose())).unwrap();
        prop_assert!((base - turned).abs() <= 1e-10 * base.max(1.0));
        prop_assert!(gaussian_kl(&m1, &s1, &m1, &s1).unwrap().abs() <= 1e-12);
        if (&m1 - &m2).norm() > 1e-3 {
            prop_assert!(gaussian_kl(&m1, &s1, &m2, &s1).unwrap() > 0.0);
        }
    }

    #[test]
    fn lloyd_objective_never_increases(x in points(20..=60, 2), k in 1usize..6, seed in 0u64..1000) {
        let params = LloydParams { restarts: 1, ..LloydParams::default() };
        let fit = lloyd(&x, k, &params, seed).unwrap();
        for w in fit.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", fit.history);
        }
    }
}

#[test]
fn samplers_repeat_their_draws_for_equal_seeds() {
    for name in ["gaussian2d", "banana", "uniform2d", "mixture4"] {
        let spec = SyntheticSpec::preset(name).unwrap();
        let a = spec.sampler(5).unwrap().draw(300).unwrap();
        let b = spec.sampler(5).unwrap().draw(300).unwrap();
        let c = spec.sampler(6).unwrap().draw(300).unwrap();
        assert_eq!(a, b, "{name}");
        assert_ne!(a, c, "{name}");
    }
    let data = SyntheticSpec::standard_gaussian(3).sampler(1).unwrap().draw(50).unwrap();
    let draw = |seed| EmpiricalSampler::new(data.clone(), seed).unwrap().draw(200).unwrap();
    assert_eq!(draw(9), draw(9));
}

#[test]
fn empirical_sampler_is_uniform_over_rows() {
    let rows = 10;
    let data = PointSet::new(1, (0..rows).map(|i| i as f64).collect()).unwrap();
    let mut s = EmpiricalSampler::new(data, 42).unwrap();
    let n = 100_000;
    let mut counts = vec![0usize; rows];
    for _ in 0..n {
        counts[s.draw(1).unwrap().point(0)[0] as usize] += 1;
    }
    let expected = n as f64 / rows as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Upper 0.001 quantile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.877, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn pushforward_draws_equal_mapped_base_draws() {
    let map: PointMap = std::sync::Arc::new(|r: &[f64]| vec![r[0], r[0] * r[0] + r[1]]);
    let spec = SyntheticSpec::standard_gaussian(2);
    let mut pf = pushforward(spec.sampler(11).unwrap(), map.clone(), None).unwrap();
    let mut base = spec.sampler(11).unwrap();
    let g = |r: &[f64]| r[0].sin() + r[1] * r[1];
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for _ in 0..5 {
        for y in pf.draw(1000).unwrap().iter() {
            lhs += g(y);
        }
        for x in base.draw(1000).unwrap().iter() {
            rhs += g(&map(x));
        }
    }
    assert_eq!(lhs / 5000.0, rhs / 5000.0);
}

#[test]
fn converged_dual_balances_the_cells() {
    let data = SyntheticSpec::preset("mixture4").unwrap().sampler(3).unwrap().draw(400).unwrap();
    let sites = SiteSet::new(SyntheticSpec::standard_gaussian(2).sampler(4).unwrap().draw(5).unwrap()).unwrap();
    for p in [Exponent::One, Exponent::Two] {
        let costs = CostMatrix::new(&data, &sites, p).unwrap();
        let before = assign(&data, &sites, &DualWeights::zeros(5), p).unwrap().imbalance();
        let state: DualState = solve_dual_fixed(&costs, 20_000, StepSchedule::default(), None).unwrap();
        let after = assign(&data, &sites, state.estimate(), p).unwrap().imbalance();
        assert!(after <= 0.1 / 5.0, "{p:?}: imbalance {before} -> {after}");
    }
}
