//! Constrained matting solve `(L + λD) α = λ D S` and the four matting methods.

use serde::{Deserialize, Serialize};

use crate::annotate::{binarize_constraints, calibrate_foreground, CalibrationConfig, ConstraintSet, Trimap};
use crate::error::{MatteError, Result};
use crate::laplacian::{build_knn_laplacian, build_matting_laplacian, KnnConfig, MattingWindowConfig, SparseSymMatrix};
use crate::volume::{check_same_dims, AlphaMatte, Volume3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub lambda: f64,
    /// Relative residual `‖M⁻¹(b − Ax)‖ / ‖M⁻¹b‖` at which PCG stops, with `M`
    /// the preconditioner (identity for `None`).
    pub tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            lambda: 100.0,
            tol: 1e-6,
            max_iters: 2000,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(MatteError::Argument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(MatteError::Argument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(MatteError::Argument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    /// Fraction of voxels whose raw solution left `[0, 1]`.
    pub clamped_fraction: f64,
}

/// `L + λ·diag(d)` applied without materialising the sum.
struct ConstrainedSystem<'a> {
    l: &'a SparseSymMatrix,
    penalty: Vec<f64>,
}

impl ConstrainedSystem<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.l.mul_vec_into(x, y)?;
        for ((yi, &w), &xi) in y.iter_mut().zip(&self.penalty).zip(x) {
            *yi += w * xi;
        }
        Ok(())
    }

    fn diagonal(&self) -> Vec<f64> {
        self.l
            .diagonal()
            .into_iter()
            .zip(&self.penalty)
            .map(|(a, w)| a + w)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct PcgOutcome {
    x: Vec<f64>,
    iterations: usize,
    relative_residual: f64,
    converged: bool,
}

fn pcg(system: &ConstrainedSystem, b: &[f64], mut x: Vec<f64>, cfg: &SolveConfig) -> Result<PcgOutcome> {
    let n = b.len();
    if norm(b) == 0.0 {
        return Ok(PcgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Jacobi => system
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let precondition = |r: &[f64], z: &mut [f64]| {
        for ((zi, &ri), &m) in z.iter_mut().zip(r).zip(&inv_diag) {
            *zi = ri * m;
        }
    };
    // Residuals are measured in the preconditioned norm ‖M⁻¹r‖ / ‖M⁻¹b‖, which
    // is in units of α and does not loosen on free voxels as λ grows.
    let scaled_norm = |r: &[f64]| r.iter().zip(&inv_diag).map(|(ri, m)| (ri * m).powi(2)).sum::<f64>().sqrt();
    let b_norm = scaled_norm(b);

    let mut ap = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut iterations = 0;
    let mut broke_down = false;

    // Each pass starts from the true residual, so recurrence drift triggers a restart.
    loop {
        system.apply(&x, &mut ap)?;
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let rel = scaled_norm(&r) / b_norm;
        if rel <= cfg.tol || iterations >= cfg.max_iters || broke_down {
            return Ok(PcgOutcome {
                x,
                iterations,
                relative_residual: rel,
                converged: rel <= cfg.tol,
            });
        }
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < cfg.max_iters {
            system.apply(&p, &mut ap)?;
            let pap = dot(&p, &ap);
            if pap.is_nan() || pap <= 0.0 {
                // Only a singular direction remains.
                broke_down = true;
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if scaled_norm(&r) / b_norm <= cfg.tol {
                break;
            }
            precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

fn check_problem(l: &SparseSymMatrix, c: &ConstraintSet, cfg: &SolveConfig) -> Result<()> {
    cfg.validate()?;
    if c.s.len() != l.n() || c.d.len() != l.n() {
        return Err(MatteError::Shape(format!(
            "constraints cover {} voxels, Laplacian has {}",
            c.s.len(),
            l.n()
        )));
    }
    if !(c.lambda.is_finite() && c.lambda > 0.0) {
        return Err(MatteError::Argument(format!("lambda must be positive, got {}", c.lambda)));
    }
    if !c.d.iter().any(|&d| d) {
        return Err(MatteError::Singular(
            "no constrained voxels; (L + λD) has the constant vector in its null space".into(),
        ));
    }
    Ok(())
}

/// Unclamped PCG solution of `(L + λD) x = λ D S`, using `c.lambda`.
///
/// Returns the raw solution and a report whose `clamped_fraction` is the
/// share of entries outside `[0, 1]`.
pub fn solve_constrained_raw(
    l: &SparseSymMatrix,
    c: &ConstraintSet,
    cfg: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    check_problem(l, c, cfg)?;
    let penalty: Vec<f64> = c.d.iter().map(|&d| if d { c.lambda } else { 0.0 }).collect();
    let b: Vec<f64> = c.s.iter().zip(&penalty).map(|(s, w)| s * w).collect();
    let x0: Vec<f64> = c.s.iter().zip(&c.d).map(|(&s, &d)| if d { s } else { 0.5 }).collect();
    let system = ConstrainedSystem { l, penalty };
    let out = pcg(&system, &b, x0, cfg)?;
    if !out.converged {
        return Err(MatteError::Convergence {
            iterations: out.iterations,
            residual: out.relative_residual,
        });
    }
    let clamped = out.x.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    let report = SolveReport {
        iterations: out.iterations,
        final_relative_residual: out.relative_residual,
        clamped_fraction: clamped as f64 / out.x.len() as f64,
    };
    Ok((out.x, report))
}

/// Solves the constrained system and clamps the result into `[0, 1]`.
///
/// The returned matte has the geometry of `template`.
pub fn solve_constrained(
    l: &SparseSymMatrix,
    c: &ConstraintSet,
    cfg: &SolveConfig,
    template: &Volume3,
) -> Result<(AlphaMatte, SolveReport)> {
    if template.len() != l.n() {
        return Err(MatteError::Shape("template volume does not match Laplacian".into()));
    }
    let (x, report) = solve_constrained_raw(l, c, cfg)?;
    let alpha = AlphaMatte::from_clamped(template.dims(), template.spacing(), x)?;
    Ok((alpha, report))
}

/// 3D closed-form matting with binary trimap constraints.
pub fn cf3d(
    v: &Volume3,
    t: &Trimap,
    wcfg: &MattingWindowConfig,
    scfg: &SolveConfig,
) -> Result<(AlphaMatte, SolveReport)> {
    check_same_dims(v.dims(), t.dims(), "volume and trimap")?;
    let l = build_matting_laplacian(v, wcfg)?;
    let c = binarize_constraints(t, scfg.lambda)?;
    solve_constrained(&l, &c, scfg, v)
}

/// 3D closed-form matting with HU-calibrated foreground constraints.
pub fn cf3d_plus(
    v: &Volume3,
    t: &Trimap,
    cal: &CalibrationConfig,
    wcfg: &MattingWindowConfig,
    scfg: &SolveConfig,
) -> Result<(AlphaMatte, SolveReport)> {
    check_same_dims(v.dims(), t.dims(), "volume and trimap")?;
    let l = build_matting_laplacian(v, wcfg)?;
    let c = calibrate_foreground(v, t, cal, scfg.lambda)?;
    solve_constrained(&l, &c, scfg, v)
}

/// 3D KNN matting with binary trimap constraints.
pub fn knn3d(
    v: &Volume3,
    t: &Trimap,
    kcfg: &KnnConfig,
    scfg: &SolveConfig,
) -> Result<(AlphaMatte, SolveReport)> {
    check_same_dims(v.dims(), t.dims(), "volume and trimap")?;
    let l = build_knn_laplacian(v, kcfg)?;
    let c = binarize_constraints(t, scfg.lambda)?;
    solve_constrained(&l, &c, scfg, v)
}

/// 3D KNN matting with HU-calibrated foreground constraints.
pub fn knn3d_plus(
    v: &Volume3,
    t: &Trimap,
    cal: &CalibrationConfig,
    kcfg: &KnnConfig,
    scfg: &SolveConfig,
) -> Result<(AlphaMatte, SolveReport)> {
    check_same_dims(v.dims(), t.dims(), "volume and trimap")?;
    let l = build_knn_laplacian(v, kcfg)?;
    let c = calibrate_foreground(v, t, cal, scfg.lambda)?;
    solve_constrained(&l, &c, scfg, v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Cf,
    CfPlus,
    Knn,
    KnnPlus,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cf, Method::CfPlus, Method::Knn, Method::KnnPlus];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cf => "CF",
            Method::CfPlus => "CF_PLUS",
            Method::Knn => "KNN",
            Method::KnnPlus => "KNN_PLUS",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = MatteError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "CF" => Ok(Method::Cf),
            "CF_PLUS" | "CF+" => Ok(Method::CfPlus),
            "KNN" => Ok(Method::Knn),
            "KNN_PLUS" | "KNN+" => Ok(Method::KnnPlus),
            _ => Err(MatteError::UnsupportedMethod(s.to_string())),
        }
    }
}

/// Every configuration a matting job can use; unused parts are ignored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub window: MattingWindowConfig,
    pub knn: KnnConfig,
    pub calibration: CalibrationConfig,
    pub solver: SolveConfig,
}

/// Laplacian used by `method`.
pub fn method_laplacian(method: Method, v: &Volume3, cfg: &MethodConfig) -> Result<SparseSymMatrix> {
    match method {
        Method::Cf | Method::CfPlus => build_matting_laplacian(v, &cfg.window),
        Method::Knn | Method::KnnPlus => build_knn_laplacian(v, &cfg.knn),
    }
}

/// Constraint set used by `method`, weighted by `cfg.solver.lambda`.
pub fn method_constraints(method: Method, v: &Volume3, t: &Trimap, cfg: &MethodConfig) -> Result<ConstraintSet> {
    check_same_dims(v.dims(), t.dims(), "volume and trimap")?;
    match method {
        Method::Cf | Method::Knn => binarize_constraints(t, cfg.solver.lambda),
        Method::CfPlus | Method::KnnPlus => calibrate_foreground(v, t, &cfg.calibration, cfg.solver.lambda),
    }
}

pub fn run_method(
    method: Method,
    v: &Volume3,
    t: &Trimap,
    cfg: &MethodConfig,
) -> Result<(AlphaMatte, SolveReport)> {
    match method {
        Method::Cf => cf3d(v, t, &cfg.window, &cfg.solver),
        Method::CfPlus => cf3d_plus(v, t, &cfg.calibration, &cfg.window, &cfg.solver),
        Method::Knn => knn3d(v, t, &cfg.knn, &cfg.solver),
        Method::KnnPlus => knn3d_plus(v, t, &cfg.calibration, &cfg.knn, &cfg.solver),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Label;
    use crate::volume::{Dims, Spacing, Unit};
    use rand::{Rng, SeedableRng};

    fn random_volume(d: Dims, seed: u64) -> Volume3 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Volume3::new(d, Spacing::default(), Unit::Normalized, (0..d.len()).map(|_| rng.random()).collect())
            .unwrap()
    }

    #[test]
    fn fully_constrained_tracks_s() {
        let d = Dims::cube(5);
        let v = random_volume(d, 3);
        let l = build_matting_laplacian(&v, &MattingWindowConfig::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..d.len()).map(|_| rng.random()).collect();
        let ls = l.mul_vec(&s).unwrap();
        let ls_norm = ls.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut prev = f64::INFINITY;
        for lambda in [100.0, 1000.0, 10000.0] {
            let c = ConstraintSet { s: s.clone(), d: vec![true; d.len()], lambda };
            let cfg = SolveConfig { lambda, tol: 1e-10, ..Default::default() };
            let (a, _) = solve_constrained(&l, &c, &cfg, &v).unwrap();
            let dev = a.data().iter().zip(&s).map(|(a, s)| (a - s).powi(2)).sum::<f64>().sqrt();
            // (L + λI)(α − s) = −Ls and L is PSD
            assert!(dev <= ls_norm / lambda + 1e-9, "deviation {dev} bound {}", ls_norm / lambda);
            assert!(dev <= prev);
            prev = dev;
        }
    }

    #[test]
    fn fully_constrained_affine_target_is_reproduced() {
        let d = Dims::cube(5);
        let v = random_volume(d, 4);
        let l = build_matting_laplacian(&v, &MattingWindowConfig::default()).unwrap();
        let s: Vec<f64> = v.data().iter().map(|x| 0.7 * x + 0.1).collect();
        let c = ConstraintSet { s: s.clone(), d: vec![true; d.len()], lambda: 100.0 };
        let (a, _) = solve_constrained(&l, &c, &SolveConfig::default(), &v).unwrap();
        for (ai, si) in a.data().iter().zip(&s) {
            assert!((ai - si).abs() <= 1e-2);
        }
    }

    #[test]
    fn unconstrained_is_singular() {
        let d = Dims::cube(3);
        let v = random_volume(d, 1);
        let l = build_matting_laplacian(&v, &MattingWindowConfig::default()).unwrap();
        let c = ConstraintSet { s: vec![0.0; 27], d: vec![false; 27], lambda: 100.0 };
        assert!(matches!(
            solve_constrained(&l, &c, &SolveConfig::default(), &v),
            Err(MatteError::Singular(_))
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let d = Dims::cube(6);
        let v = random_volume(d, 2);
        let l = build_matting_laplacian(&v, &MattingWindowConfig::default()).unwrap();
        let labels = (0..d.len())
            .map(|i| match i % 7 {
                0 => Label::Foreground,
                1 => Label::Background,
                _ => Label::Unknown,
            })
            .collect();
        let t = Trimap::new(d, Spacing::default(), labels).unwrap();
        let c = binarize_constraints(&t, 100.0).unwrap();
        let cfg = SolveConfig { max_iters: 1, tol: 1e-12, ..Default::default() };
        match solve_constrained(&l, &c, &cfg, &v) {
            Err(MatteError::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-12);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn empty_unknown_reproduces_trimap() {
        let d = Dims::cube(6);
        let v = Volume3::from_fn(d, Spacing::default(), Unit::Normalized, |x, _, _| if x < 3 { 1.0 } else { 0.0 }).unwrap();
        let labels = (0..d.len())
            .map(|i| if d.coords(i).0 < 3 { Label::Foreground } else { Label::Background })
            .collect();
        let t = Trimap::new(d, Spacing::default(), labels).unwrap();
        let (a, r) = cf3d(&v, &t, &MattingWindowConfig::default(), &SolveConfig::default()).unwrap();
        for (i, &ai) in a.data().iter().enumerate() {
            let expect = if d.coords(i).0 < 3 { 1.0 } else { 0.0 };
            assert!((ai - expect).abs() <= 1e-2);
        }
        assert!(r.final_relative_residual <= 1e-6);
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("cf+".parse::<Method>().unwrap(), Method::CfPlus);
        for bad in ["IF", "LB", "x"] {
            let err = bad.parse::<Method>().unwrap_err();
            assert_eq!(err.exit_code(), 2);
            assert!(err.to_string().contains("CF, CF_PLUS, KNN, KNN_PLUS"));
        }
    }
}
