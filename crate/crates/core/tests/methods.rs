use volmatte::annotate::{calibrate_foreground, Label};
use volmatte::laplacian::{build_matting_laplacian, MattingWindowConfig};
use volmatte::phantom::{self, PhantomCase, PhantomShape, PhantomSpec};
use volmatte::solver::{self, run_method, solve_constrained, Method, MethodConfig, SolveConfig};
use volmatte::{metrics, AlphaMatte, Dims};

fn sphere_case(n: usize, sigma: f64) -> PhantomCase {
    let mut spec = PhantomSpec::sphere(n, 4.0, 8.0);
    spec.noise_sigma_hu = sigma;
    spec.seed = 11;
    phantom::generate(&spec).unwrap()
}

fn shell_spec(sigma: f64) -> PhantomSpec {
    let mut spec = PhantomSpec::sphere(24, 5.0, 9.0);
    spec.shape = PhantomShape::Shell;
    spec.fg_hu = 400.0;
    spec.fg_shell_hu = Some(120.0);
    spec.noise_sigma_hu = sigma;
    spec.seed = 5;
    spec
}

fn permute(a: &AlphaMatte, f: impl Fn(usize, usize, usize) -> (usize, usize, usize)) -> Vec<f64> {
    let d = a.dims();
    (0..d.len())
        .map(|i| {
            let (x, y, z) = d.coords(i);
            let (px, py, pz) = f(x, y, z);
            a.get(px, py, pz)
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn cf_recovers_sphere_and_beats_indicator() {
    let case = sphere_case(24, 10.0);
    let (a, report) = solver::cf3d(&case.volume, &case.gt_trimap, &Default::default(), &Default::default()).unwrap();
    assert!(report.final_relative_residual <= 1e-6);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(metrics::mse(&a, &case.gt_alpha).unwrap() <= 5e-3);
    let indicator = AlphaMatte::new(
        a.dims(),
        a.spacing(),
        case.gt_trimap.labels().iter().map(|&l| if l == Label::Foreground { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap();
    assert!(metrics::sad(&a, &case.gt_alpha).unwrap() < metrics::sad(&indicator, &case.gt_alpha).unwrap());
}

#[test]
fn knn_recovers_sphere() {
    let case = sphere_case(24, 10.0);
    let (a, _) = solver::knn3d(&case.volume, &case.gt_trimap, &Default::default(), &Default::default()).unwrap();
    assert!(metrics::mse(&a, &case.gt_alpha).unwrap() <= 2e-2);
}

#[test]
fn cf_is_symmetric_under_axis_permutation() {
    let case = sphere_case(20, 0.0);
    let (a, _) = solver::cf3d(&case.volume, &case.gt_trimap, &Default::default(), &Default::default()).unwrap();
    assert!(max_diff(a.data(), &permute(&a, |x, y, z| (y, x, z))) <= 1e-6);
    assert!(max_diff(a.data(), &permute(&a, |x, y, z| (z, y, x))) <= 1e-6);
    let n = a.dims().nx - 1;
    assert!(max_diff(a.data(), &permute(&a, |x, y, z| (n - x, y, z))) <= 1e-6);
}

#[test]
fn knn_is_symmetric_across_twin_blobs() {
    let mut spec = PhantomSpec::sphere(25, 2.0, 5.0);
    spec.dims = Dims::new(25, 13, 13);
    spec.shape = PhantomShape::TwoSpheres;
    let case = phantom::generate(&spec).unwrap();
    let (a, _) = solver::knn3d(&case.volume, &case.gt_trimap, &Default::default(), &Default::default()).unwrap();
    let n = a.dims().nx - 1;
    assert!(max_diff(a.data(), &permute(&a, |x, y, z| (n - x, y, z))) <= 1e-6);
}

#[test]
fn calibration_improves_shell_and_matches_q() {
    let spec = shell_spec(0.0);
    let case = phantom::generate(&spec).unwrap();
    let cfg = MethodConfig::default();
    let (cf, _) = run_method(Method::Cf, &case.volume, &case.gt_trimap, &cfg).unwrap();
    let (cfp, _) = run_method(Method::CfPlus, &case.volume, &case.gt_trimap, &cfg).unwrap();
    assert!(metrics::mse(&cfp, &case.gt_alpha).unwrap() < metrics::mse(&cf, &case.gt_alpha).unwrap());

    let cal = &cfg.calibration;
    let mut shell_voxels = 0;
    for (i, &l) in case.gt_trimap.labels().iter().enumerate() {
        if l == Label::Foreground {
            let q = cal.foreground_alpha(case.volume.data()[i]);
            if q < 1.0 {
                shell_voxels += 1;
            }
            assert!((cfp.data()[i] - q).abs() <= 1e-2);
        }
    }
    assert!(shell_voxels > 0);
}

#[test]
fn calibration_is_inert_when_foreground_is_bright() {
    let case = sphere_case(17, 0.0);
    let mut cfg = MethodConfig::default();
    // Foreground voxels sit at α ≥ 0.7, i.e. at least -230 HU.
    cfg.calibration.l_low = -300.0;
    let c = calibrate_foreground(&case.volume, &case.gt_trimap, &cfg.calibration, cfg.solver.lambda).unwrap();
    assert!(c.s.iter().all(|&s| s == 0.0 || s == 1.0));
    let (cf, _) = run_method(Method::Cf, &case.volume, &case.gt_trimap, &cfg).unwrap();
    let (cfp, _) = run_method(Method::CfPlus, &case.volume, &case.gt_trimap, &cfg).unwrap();
    assert_eq!(cf.data(), cfp.data());
}

#[test]
fn larger_lambda_tightens_constraints() {
    let case = sphere_case(17, 10.0);
    let l = build_matting_laplacian(&case.volume, &MattingWindowConfig::default()).unwrap();
    let mut prev = f64::INFINITY;
    for lambda in [10.0, 100.0, 1000.0, 10000.0] {
        let c = volmatte::annotate::binarize_constraints(&case.gt_trimap, lambda).unwrap();
        let cfg = SolveConfig { lambda, tol: 1e-9, max_iters: 20000, ..Default::default() };
        let (a, _) = solve_constrained(&l, &c, &cfg, &case.volume).unwrap();
        let dev = (0..c.len())
            .filter(|&i| c.d[i])
            .map(|i| (a.data()[i] - c.s[i]).abs())
            .fold(0.0, f64::max);
        assert!(dev <= prev + 1e-12, "λ={lambda}: {dev} > {prev}");
        prev = dev;
    }
}

#[test]
fn solves_are_deterministic_across_thread_counts() {
    let case = sphere_case(24, 10.0);
    let cfg = MethodConfig::default();
    for method in [Method::Cf, Method::Knn] {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_method(method, &case.volume, &case.gt_trimap, &cfg).unwrap())
        };
        let (a1, r1) = run(1);
        let (a1b, _) = run(1);
        let (a4, r4) = run(4);
        assert_eq!(a1.data(), a1b.data());
        assert!(max_diff(a1.data(), a4.data()) <= 1e-10);
        assert_eq!(r1.iterations, r4.iterations);
    }
}
