use spherefit::analysis::{make_target, TargetSpec};
use spherefit::distributed::{dc_fit, max_partitions, DcConfig, DcModel, StrictBound};
use spherefit::estimator::{evaluate, fit_wsfa, DataSet};
use spherefit::filters::FilterFamily;
use spherefit::geometry::{fibonacci_points, random_uniform_points, PointSet};
use spherefit::kernel::KernelSpec;
use spherefit::quadrature::compute_weights;

fn kernel() -> KernelSpec {
    KernelSpec::new(2, 1.5, 1.0, 128).unwrap()
}

fn smooth(p: &[f64; 3]) -> f64 {
    (2.0 * p[0]).sin() + p[1] * p[2] + 0.5 * p[2] * p[2]
}

fn values(ps: &PointSet) -> Vec<f64> {
    ps.points().iter().map(smooth).collect()
}

#[test]
fn one_block_matches_the_full_fit_exactly() {
    let k = kernel();
    let ps = fibonacci_points(300).unwrap();
    let y = values(&ps);
    let cfg = DcConfig::new(1, FilterFamily::Tikhonov, 1e-3);
    let model = DcModel::from_blocks(&ps, vec![(0..300).collect()], &cfg, &k).unwrap();
    let dc = model.fit(&y).unwrap();

    let rule = compute_weights(&ps, cfg.degree_for(300, 2), cfg.quad_tol).unwrap();
    let data = DataSet::new(ps.clone(), y.clone()).unwrap();
    let filter = FilterFamily::Tikhonov.at(1e-3).unwrap();
    let full = fit_wsfa(&data, &rule, &k, &filter).unwrap();
    assert_eq!(dc.coeffs(), full.coeffs());
    assert_eq!(dc.centers(), full.centers());

    let (auto, reports) = dc_fit(&data, &cfg, &k).unwrap();
    assert_eq!(reports.len(), 1);
    let queries = random_uniform_points(50, 1).unwrap();
    for (a, b) in evaluate(&auto, &queries)
        .iter()
        .zip(evaluate(&full, &queries))
    {
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn mirrored_blocks_give_a_mirror_symmetric_fit() {
    let k = kernel();
    let upper: Vec<[f64; 3]> = random_uniform_points(240, 4)
        .unwrap()
        .points()
        .iter()
        .filter(|p| p[2] > 0.05)
        .copied()
        .collect();
    let m = upper.len();
    let lower: Vec<[f64; 3]> = upper.iter().map(|p| [p[0], p[1], -p[2]]).collect();
    let ps = PointSet::new(upper.into_iter().chain(lower).collect(), "mirror").unwrap();
    let y: Vec<f64> = ps
        .points()
        .iter()
        .map(|p| (2.0 * p[0]).sin() + p[1] + 0.5 * p[2] * p[2])
        .collect();
    let cfg = DcConfig::new(2, FilterFamily::Tikhonov, 1e-2);
    let model =
        DcModel::from_blocks(&ps, vec![(0..m).collect(), (m..2 * m).collect()], &cfg, &k).unwrap();
    let fit = model.fit(&y).unwrap();
    let queries = random_uniform_points(40, 8).unwrap();
    let mirrored = PointSet::new(
        queries
            .points()
            .iter()
            .map(|p| [p[0], p[1], -p[2]])
            .collect(),
        "q",
    )
    .unwrap();
    for (a, b) in evaluate(&fit, &queries)
        .iter()
        .zip(evaluate(&fit, &mirrored))
    {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn global_fit_is_the_size_weighted_average_of_blocks() {
    let k = kernel();
    let ps = fibonacci_points(400).unwrap();
    let y = values(&ps);
    let cfg = DcConfig::new(5, FilterFamily::IteratedTikhonov(2), 1e-3);
    let model = DcModel::new(&ps, &cfg, &k).unwrap();
    let fit = model.fit(&y).unwrap();
    let locals = model.local_fits(&y).unwrap();
    let reports = model.reports();
    assert_eq!(reports.iter().map(|r| r.size).sum::<usize>(), 400);
    let queries = random_uniform_points(60, 2).unwrap();
    let global = evaluate(&fit, &queries);
    let mut combined = vec![0.0; 60];
    for (f, r) in locals.iter().zip(&reports) {
        for (c, v) in combined.iter_mut().zip(evaluate(f, &queries)) {
            *c += r.size as f64 / 400.0 * v;
        }
    }
    for (g, c) in global.iter().zip(&combined) {
        assert!((g - c).abs() < 1e-12 * (1.0 + c.abs()));
    }

    let mut sorted = model.order().to_vec();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..400).collect::<Vec<_>>());
    let by_input = model.coefficients_in_input_order(&y).unwrap();
    for (c, &i) in fit.coeffs().iter().zip(model.order()) {
        assert_eq!(*c, by_input[i]);
    }
}

#[test]
fn fit_is_linear_in_the_data() {
    let k = kernel();
    let ps = fibonacci_points(250).unwrap();
    let y1 = values(&ps);
    let y2: Vec<f64> = ps.points().iter().map(|p| p[0] - p[1] * p[1]).collect();
    let model = DcModel::new(&ps, &DcConfig::new(4, FilterFamily::Tikhonov, 1e-3), &k).unwrap();
    assert!(model
        .fit(&vec![0.0; 250])
        .unwrap()
        .coeffs()
        .iter()
        .all(|c| *c == 0.0));
    let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
    let a1 = model.fit(&y1).unwrap();
    let a2 = model.fit(&y2).unwrap();
    let ac = model.fit(&combo).unwrap();
    for ((c, x), y) in ac.coeffs().iter().zip(a1.coeffs()).zip(a2.coeffs()) {
        assert!((c - (2.0 * x - 3.0 * y)).abs() < 1e-9 * (1.0 + c.abs()));
    }
    assert!(model.fit(&y1[..10]).is_err());
}

#[test]
fn block_reports_describe_certified_rules() {
    let k = kernel();
    let ps = fibonacci_points(600).unwrap();
    let model = DcModel::new(&ps, &DcConfig::new(6, FilterFamily::Tikhonov, 1e-3), &k).unwrap();
    for r in model.reports() {
        assert!(r.size >= 90 && r.size <= 110, "{r:?}");
        assert!(r.mesh_ratio >= 1.0 && r.mesh_ratio < 6.0, "{r:?}");
        assert_eq!(r.degree, (0.7 * (r.size as f64).sqrt()).round() as usize);
        assert!(!r.fallback && r.is_dtype && r.residual <= 1e-18, "{r:?}");
        assert!(r.local_error.is_none());
    }

    let target = make_target(&TargetSpec::random_kernel_combo(1.0, 4, 3).unwrap(), &k).unwrap();
    let y = target.evaluate(&ps).unwrap();
    let with_errors = model.reports_with_errors(&y, &target, 0.0).unwrap();
    assert!(with_errors
        .iter()
        .all(|r| r.local_error.unwrap() < target.norm(0.0).unwrap()));
}

#[test]
fn strict_bound_and_bad_partitions_are_rejected() {
    let k = kernel();
    let ps = fibonacci_points(64).unwrap();
    let cap = max_partitions(64, 1.5, 1.0, 2, 1.0).unwrap();
    assert_eq!(cap, 12);
    let mut cfg = DcConfig::new(cap + 1, FilterFamily::Tikhonov, 1e-2);
    cfg.strict = Some(StrictBound {
        alpha: 1.0,
        c_bound: 1.0,
    });
    assert!(DcModel::new(&ps, &cfg, &k).is_err());
    cfg.parts = cap;
    assert!(DcModel::new(&ps, &cfg, &k).is_ok());

    let cfg = DcConfig::new(2, FilterFamily::Tikhonov, 1e-2);
    assert!(
        DcModel::from_blocks(&ps, vec![(0..30).collect(), (30..63).collect()], &cfg, &k).is_err()
    );
    assert!(
        DcModel::from_blocks(&ps, vec![(0..40).collect(), (30..64).collect()], &cfg, &k).is_err()
    );
    assert!(DcModel::from_blocks(&ps, vec![(0..64).collect(), vec![]], &cfg, &k).is_err());
    assert!(max_partitions(10, 0.0, 1.0, 2, 1.0).is_err());
}
