use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spherefit::analysis::{derive_seed, make_target, NoiseKind, NormEvaluator, Target, TargetSpec};
use spherefit::estimator::{DataSet, WeightedSpectrum};
use spherefit::filters::FilterFamily;
use spherefit::geometry::{fibonacci_points, PointSet};
use spherefit::kernel::KernelSpec;
use spherefit::quadrature::{compute_weights, QuadratureRule};
use spherefit::selection::{
    calibrate_kappa, default_kappa_candidates, lambda_grid, lepskii_select, lepskii_select_with,
    oracle_best_lambda, LepskiiConfig, LepskiiPath, ScanRule,
};
use spherefit::Error;

struct Setup {
    rule: QuadratureRule,
    spectrum: WeightedSpectrum,
    target: Target,
    clean: Vec<f64>,
    evaluator: NormEvaluator,
}

fn setup(n: usize, alpha: f64) -> Setup {
    let kernel = KernelSpec::new(2, 1.5, 1.0, 256).unwrap();
    let ps = fibonacci_points(n).unwrap();
    let degree = (0.7 * (n as f64).sqrt()).round() as usize;
    let rule = compute_weights(&ps, degree, 1e-18).unwrap();
    let spectrum = WeightedSpectrum::new(&rule, &kernel).unwrap();
    let target = make_target(
        &TargetSpec::random_kernel_combo(alpha, 8, 5).unwrap(),
        &kernel,
    )
    .unwrap()
    .normalized()
    .unwrap();
    let clean = target.evaluate(&ps).unwrap();
    let evaluator = NormEvaluator::new(&ps, &target, 1.0 / 3.0).unwrap();
    Setup {
        rule,
        spectrum,
        target,
        clean,
        evaluator,
    }
}

fn noisy(clean: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = NoiseKind::Gaussian { sigma }
        .sample(clean.len(), &mut rng)
        .unwrap();
    clean.iter().zip(e).map(|(c, e)| c + e).collect()
}

#[test]
fn grid_example() {
    let cfg = LepskiiConfig {
        q: 0.5,
        q0: 1.0,
        ..Default::default()
    };
    let grid = lambda_grid(&cfg, 1.5, 10).unwrap();
    assert_eq!(grid.len(), 9);
    for (k, l) in grid.iter().enumerate() {
        assert_eq!(*l, 0.5f64.powi(k as i32 + 1));
    }
    assert!(lambda_grid(&LepskiiConfig { q: 1.0, ..cfg }, 1.5, 10).is_err());
    assert!(matches!(
        lambda_grid(&LepskiiConfig { q0: 1e-4, ..cfg }, 1.5, 10),
        Err(Error::EmptyGrid { .. })
    ));
}

#[test]
fn trace_covers_every_comparison() {
    let s = setup(200, 1.0);
    let y = noisy(&s.clean, 0.1, 1);
    let cfg = LepskiiConfig::default();
    let out = lepskii_select_with(&s.spectrum, &y, &FilterFamily::Tikhonov, &cfg).unwrap();
    assert_eq!(out.trace.len(), out.grid.len() - 1);
    assert_eq!(out.trace[0].k, out.grid.len());
    assert_eq!(out.trace.last().unwrap().k, 2);
    assert!(out
        .trace
        .iter()
        .all(|r| r.statistic >= 0.0 && r.threshold > 0.0));
    assert_eq!(out.lambda_hat, out.grid[out.k_hat - 1]);

    let data = DataSet::new(s.rule.points().clone(), y).unwrap();
    let again = lepskii_select(
        &data,
        &s.rule,
        s.spectrum.kernel(),
        &FilterFamily::Tikhonov,
        &cfg,
    )
    .unwrap();
    assert_eq!(again, out);

    let other = DataSet::new(fibonacci_points(199).unwrap(), vec![0.0; 199]).unwrap();
    assert!(lepskii_select(
        &other,
        &s.rule,
        s.spectrum.kernel(),
        &FilterFamily::Tikhonov,
        &cfg
    )
    .is_err());
}

#[test]
fn literal_scan_stops_at_the_grid_floor() {
    // The statistic/threshold ratio shrinks toward small λ, so the first test
    // passing from K downward is the one at K itself.
    let s = setup(400, 1.0);
    let cfg = LepskiiConfig::default();
    for trial in 0..5 {
        let y = noisy(&s.clean, 0.1, derive_seed(3, &[trial]));
        let path = LepskiiPath::new(&s.spectrum, &y, &FilterFamily::Tikhonov, &cfg).unwrap();
        for kappa in [0.01, 1.0, 100.0] {
            assert_eq!(path.select(kappa, ScanRule::FirstAccepted), path.len());
        }
    }
}

#[test]
fn balancing_scan_lands_within_q_squared_of_the_oracle() {
    let s = setup(800, 1.0);
    let base = LepskiiConfig {
        rule: ScanRule::Balancing,
        ..Default::default()
    };
    let paths = |offset: u64, count: u64| -> Vec<(LepskiiPath, Vec<f64>)> {
        (0..count)
            .map(|t| {
                let y = noisy(&s.clean, 0.1, derive_seed(11, &[offset + t]));
                let path =
                    LepskiiPath::new(&s.spectrum, &y, &FilterFamily::Tikhonov, &base).unwrap();
                let errors = path.errors(&s.evaluator).unwrap();
                (path, errors)
            })
            .collect()
    };
    let calibration = calibrate_kappa(
        &paths(0, 20),
        &default_kappa_candidates(),
        ScanRule::Balancing,
        3.0,
    )
    .unwrap();
    assert!(calibration.agreement >= 0.8);

    let q2 = base.q * base.q;
    let evaluation = paths(1000, 30);
    let hits = evaluation
        .iter()
        .filter(|(path, errors)| {
            let k_hat = path.select(calibration.kappa, ScanRule::Balancing);
            let best = errors
                .iter()
                .enumerate()
                .fold(0, |b, (i, e)| if *e < errors[b] { i } else { b });
            let ratio = path.grid()[k_hat - 1] / path.grid()[best];
            (q2..=1.0 / q2).contains(&ratio)
        })
        .count();
    assert!(hits as f64 >= 0.8 * evaluation.len() as f64, "{hits}/30");
}

#[test]
fn oracle_picks_the_smallest_grid_error() {
    let s = setup(300, 1.0);
    let y = noisy(&s.clean, 0.05, 7);
    let grid = lambda_grid(&LepskiiConfig::default(), 1.5, s.rule.degree()).unwrap();
    let (lambda, idx, errors) = oracle_best_lambda(
        &s.spectrum,
        &y,
        &FilterFamily::Tikhonov,
        &grid,
        &s.evaluator,
    )
    .unwrap();
    assert_eq!(errors.len(), grid.len());
    assert_eq!(lambda, grid[idx]);
    assert!(errors.iter().all(|e| *e >= errors[idx]));
    assert!(
        oracle_best_lambda(&s.spectrum, &y, &FilterFamily::Tikhonov, &[], &s.evaluator).is_err()
    );

    let (_, clean_idx, _) = oracle_best_lambda(
        &s.spectrum,
        &s.clean,
        &FilterFamily::Tikhonov,
        &grid,
        &s.evaluator,
    )
    .unwrap();
    assert!(clean_idx >= idx);
    assert!(s.target.norm(1.0 / 3.0).unwrap() > errors[idx]);
}

#[test]
fn selection_ignores_site_order() {
    let s = setup(150, 1.0);
    let y = noisy(&s.clean, 0.1, 2);
    let n = y.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 47 + 3) % n).collect();
    let pts = PointSet::new(
        perm.iter().map(|&i| s.rule.points().points()[i]).collect(),
        "perm",
    )
    .unwrap();
    let weights = perm.iter().map(|&i| s.rule.weights()[i]).collect();
    let rule = QuadratureRule::new(pts, weights, s.rule.degree(), 1e-16).unwrap();
    let spectrum = WeightedSpectrum::new(&rule, s.spectrum.kernel()).unwrap();
    let y_perm: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    for scan in [ScanRule::FirstAccepted, ScanRule::Balancing] {
        let cfg = LepskiiConfig {
            rule: scan,
            ..Default::default()
        };
        let a = lepskii_select_with(&s.spectrum, &y, &FilterFamily::Tikhonov, &cfg).unwrap();
        let b = lepskii_select_with(&spectrum, &y_perm, &FilterFamily::Tikhonov, &cfg).unwrap();
        assert_eq!(a.k_hat, b.k_hat);
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert!((ra.statistic - rb.statistic).abs() <= 1e-9 * ra.statistic.max(1e-12));
        }
        for (j, &i) in perm.iter().enumerate() {
            assert!((b.coeffs[j] - a.coeffs[i]).abs() < 1e-8 * (1.0 + a.coeffs[i].abs()));
        }
    }
}

#[test]
fn config_parsing() {
    let cfg: LepskiiConfig = serde_json::from_str(r#"{"q": 0.5, "q0": 1.0}"#).unwrap();
    assert_eq!(cfg, LepskiiConfig::default());
    let cfg: LepskiiConfig =
        serde_json::from_str(r#"{"q": 0.7, "q0": 2.0, "rule": "balancing"}"#).unwrap();
    assert_eq!(cfg.rule, ScanRule::Balancing);
    assert!(serde_json::from_str::<LepskiiConfig>(r#"{"q": 0.5, "q0": 1.0, "kappa": 2}"#).is_err());
    assert!(LepskiiConfig {
        delta: 1.5,
        ..Default::default()
    }
    .validate()
    .is_err());
}
