use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use spherefit::analysis::{
    make_target, sample_noise, NoiseKind, NoiseSpec, NormEvaluator, TargetSpec,
};
use spherefit::estimator::{fit_wsfa, DataSet};
use spherefit::filters::{apply_filter, residual_factor, FilterSpec};
use spherefit::geometry::{fibonacci_points, random_uniform_points, PointSet};
use spherefit::harmonics::gegenbauer;
use spherefit::kernel::{kernel_matrix, KernelSpec};
use spherefit::quadrature::compute_weights;
use spherefit::selection::{lambda_floor, lambda_grid, LepskiiConfig};

/// Legendre polynomials by Bonnet's recursion, the `d = 2` oracle.
fn legendre(k: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if k == 0 {
        return p0;
    }
    for j in 1..k {
        let p2 = ((2 * j + 1) as f64 * t * p1 - j as f64 * p0) / (j + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn filter_strategy() -> impl Strategy<Value = FilterSpec> {
    prop_oneof![
        (-6.0..0.0f64).prop_map(|e| FilterSpec::tikhonov(10f64.powf(e)).unwrap()),
        (1u32..5, -6.0..0.0f64)
            .prop_map(|(v, e)| FilterSpec::iterated_tikhonov(v, 10f64.powf(e)).unwrap()),
        (-6.0..0.0f64).prop_map(|e| FilterSpec::cut_off(10f64.powf(e)).unwrap()),
        (0.1..1.0f64, 1u64..5000).prop_map(|(tau, t)| FilterSpec::landweber(tau, t).unwrap()),
    ]
}

fn unit_vector() -> impl Strategy<Value = [f64; 3]> {
    (-1.0..1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(z, phi): (f64, f64)| {
        let r = (1.0 - z * z).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    })
}

proptest! {
    #[test]
    fn gegenbauer_bounds_parity_and_legendre(k in 0usize..80, t in -1.0..=1.0f64, d in 2usize..6) {
        let p = gegenbauer(d, k, t).unwrap();
        prop_assert!(p.abs() <= 1.0 + 1e-12);
        prop_assert!((gegenbauer(d, k, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((gegenbauer(d, k, -t).unwrap() - sign * p).abs() < 1e-12);
        if d == 2 {
            prop_assert!((p - legendre(k, t)).abs() < 1e-11);
        }
    }

    #[test]
    fn filters_satisfy_their_bounds(spec in filter_strategy(), sigma in 0.0..=1.0f64, v_frac in 0.0..=1.0f64) {
        let lambda = spec.lambda();
        let g = apply_filter(sigma, &spec).unwrap();
        let b = spec.b();
        prop_assert!(g >= 0.0);
        prop_assert!(sigma * g <= b * (1.0 + 1e-12));
        prop_assert!(g <= b / lambda * (1.0 + 1e-12));
        let r = residual_factor(sigma, &spec).unwrap();
        prop_assert!((r - (1.0 - sigma * g)).abs() < 1e-9);
        let v = v_frac * spec.qualification().min(4.0);
        prop_assert!(r.abs() * sigma.powf(v) <= spec.residual_constant(v) * lambda.powf(v) * (1.0 + 1e-9) + 1e-300);
    }

    #[test]
    fn lambda_grid_is_geometric_and_admissible(q in 0.05..0.95f64, q0 in 0.01..10.0f64, s in 1usize..60) {
        let cfg = LepskiiConfig { q, q0, ..Default::default() };
        let floor = lambda_floor(1.5, s);
        match lambda_grid(&cfg, 1.5, s) {
            Ok(grid) => {
                prop_assert!(grid.windows(2).all(|w| w[1] < w[0] && (w[1] / w[0] - q).abs() < 1e-12));
                prop_assert!(grid.iter().all(|l| *l >= floor));
                prop_assert!(grid.last().unwrap() * q < floor);
            }
            Err(_) => prop_assert!(q0 * q < floor),
        }
    }

    #[test]
    fn bounded_noise_stays_bounded(m in 0.0..10.0f64, seed in any::<u64>()) {
        let e = sample_noise(&NoiseSpec { kind: NoiseKind::UniformBounded { m }, seed }, 200).unwrap();
        prop_assert!(e.iter().all(|x| x.abs() <= m));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_gram_is_positive_semidefinite(pts in prop::collection::vec(unit_vector(), 2..30), power in 0.2..2.0f64) {
        let k = KernelSpec::new(2, 1.5, power, 64).unwrap();
        let ps = PointSet::new(pts, "p").unwrap();
        let m = kernel_matrix(&k, &ps);
        let eig = SymmetricEigen::new(m.clone());
        let top = eig.eigenvalues.max();
        prop_assert!(eig.eigenvalues.min() >= -1e-10 * top);
        prop_assert!((m.clone() - m.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn fits_are_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000, lam in -4.0..-1.0f64) {
        let k = KernelSpec::new(2, 1.5, 1.0, 64).unwrap();
        let ps = fibonacci_points(80).unwrap();
        let rule = compute_weights(&ps, 6, 1e-18).unwrap();
        let y1 = sample_noise(&NoiseSpec { kind: NoiseKind::Gaussian { sigma: 1.0 }, seed }, 80).unwrap();
        let y2: Vec<f64> = ps.points().iter().map(|p| p[0] * p[1] + p[2]).collect();
        let filter = FilterSpec::tikhonov(10f64.powf(lam)).unwrap();
        let fit = |y: Vec<f64>| fit_wsfa(&DataSet::new(ps.clone(), y).unwrap(), &rule, &k, &filter).unwrap();
        let combo = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let (f1, f2, fc) = (fit(y1), fit(y2), fit(combo));
        for ((c, x), y) in fc.coeffs().iter().zip(f1.coeffs()).zip(f2.coeffs()) {
            prop_assert!((c - (a * x + b * y)).abs() <= 1e-8 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn error_norms_nest_and_obey_the_triangle_inequality(
        seed in 0u64..10_000,
        ca in prop::collection::vec(-1.0..1.0f64, 12),
        cb in prop::collection::vec(-1.0..1.0f64, 12),
    ) {
        let k = KernelSpec::new(2, 1.5, 1.0, 64).unwrap();
        let centers = random_uniform_points(12, seed).unwrap();
        let target = make_target(&TargetSpec::random_kernel_combo(1.0, 5, seed + 1).unwrap(), &k).unwrap();
        let zero = make_target(&TargetSpec::KernelCombo { alpha: 1.0, centers: centers.clone(), b: vec![0.0; 12] }, &k).unwrap();
        let mut previous = 0.0;
        for beta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let ev = NormEvaluator::new(&centers, &target, beta).unwrap();
            let diff: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x - y).collect();
            let gap = NormEvaluator::new(&centers, &zero, beta).unwrap().error(&diff).unwrap();
            let (ea, eb) = (ev.error(&ca).unwrap(), ev.error(&cb).unwrap());
            prop_assert!(ea <= eb + gap + 1e-9 * (1.0 + ea));
            prop_assert!(ea >= previous - 1e-9 * (1.0 + ea));
            previous = ea;
        }
    }
}
