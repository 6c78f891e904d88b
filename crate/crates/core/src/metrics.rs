//! Matting error metrics on volumes: SAD, MSE, gradient error and
//! connectivity error.

use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::volume::{check_same_dims, AlphaMatte, Dims};

fn same_shape(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<()> {
    check_same_dims(pred.dims(), gt.dims(), "predicted and ground-truth mattes")
}

/// Sum of absolute differences.
pub fn sad(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    same_shape(pred, gt)?;
    Ok(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).sum())
}

/// Mean squared difference over all voxels.
pub fn mse(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    same_shape(pred, gt)?;
    let sum: f64 = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / pred.len() as f64)
}

/// Central difference along one axis, one-sided at the ends.
#[inline]
fn axis_diff(data: &[f64], i: usize, coord: usize, n: usize, stride: usize) -> f64 {
    if coord == 0 {
        data[i + stride] - data[i]
    } else if coord == n - 1 {
        data[i] - data[i - stride]
    } else {
        0.5 * (data[i + stride] - data[i - stride])
    }
}

fn gradient(data: &[f64], dims: Dims, i: usize) -> [f64; 3] {
    let (x, y, z) = dims.coords(i);
    [
        axis_diff(data, i, x, dims.nx, 1),
        axis_diff(data, i, y, dims.ny, dims.nx),
        axis_diff(data, i, z, dims.nz, dims.nx * dims.ny),
    ]
}

/// `Σ_i ‖∇pred_i − ∇gt_i‖²` with central-difference gradients.
pub fn grad_error(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    same_shape(pred, gt)?;
    let dims = pred.dims();
    if dims.nx < 3 || dims.ny < 3 || dims.nz < 3 {
        return Err(MatteError::Shape(format!(
            "gradient error needs every dimension >= 3, got {dims}"
        )));
    }
    Ok((0..dims.len())
        .map(|i| {
            let gp = gradient(pred.data(), dims, i);
            let gg = gradient(gt.data(), dims, i);
            gp.iter().zip(&gg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnParams {
    /// Threshold step; `1 / step` must be an integer.
    pub step: f64,
    /// Differences below this count as fully connected.
    pub theta_floor: f64,
}

impl Default for ConnParams {
    fn default() -> Self {
        ConnParams {
            step: 0.1,
            theta_floor: 0.15,
        }
    }
}

impl ConnParams {
    fn levels(&self) -> Result<usize> {
        let n = 1.0 / self.step;
        let rounded = n.round();
        if !(self.step > 0.0 && self.step <= 1.0) || (n - rounded).abs() > 1e-9 {
            return Err(MatteError::Argument(format!(
                "connectivity step must divide 1 evenly, got {}",
                self.step
            )));
        }
        Ok(rounded as usize)
    }
}

const FULL_OPACITY_EPS: f64 = 1e-6;

/// Voxels of the largest 6-connected component of `keep`; ties go to the
/// component holding the lowest linear index.
pub(crate) fn largest_component(keep: &[bool], dims: Dims) -> Vec<bool> {
    let mut label = vec![usize::MAX; keep.len()];
    let mut best: Option<(usize, usize)> = None;
    let mut queue = VecDeque::new();
    let mut next_label = 0;
    for seed in 0..keep.len() {
        if !keep[seed] || label[seed] != usize::MAX {
            continue;
        }
        let id = next_label;
        next_label += 1;
        label[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            dims.for_each_neighbor6(i, |j| {
                if keep[j] && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            });
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    match best {
        Some((id, _)) => label.iter().map(|&l| l == id).collect(),
        None => vec![false; keep.len()],
    }
}

/// For each voxel the best achievable minimum opacity along a 6-connected
/// path from the source region (widest-path search).
fn bottleneck_from_source(alpha: &[f64], source: &[bool], dims: Dims) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0).then_with(|| o.1.cmp(&self.1))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }

    let mut best = vec![f64::NEG_INFINITY; alpha.len()];
    let mut heap = BinaryHeap::new();
    for (i, &s) in source.iter().enumerate() {
        if s {
            best[i] = alpha[i];
            heap.push(Entry(alpha[i], i));
        }
    }
    while let Some(Entry(b, i)) = heap.pop() {
        if b < best[i] {
            continue;
        }
        dims.for_each_neighbor6(i, |j| {
            let cand = b.min(alpha[j]);
            if cand > best[j] {
                best[j] = cand;
                heap.push(Entry(cand, j));
            }
        });
    }
    best
}

fn connectivity_degree(alpha: &[f64], source: &[bool], dims: Dims, levels: usize, theta: f64) -> Vec<f64> {
    let bottleneck = bottleneck_from_source(alpha, source, dims);
    alpha
        .iter()
        .zip(&bottleneck)
        .map(|(&a, &b)| {
            // Largest t = k / levels with t <= b.
            let mut k = if b > 0.0 { ((b * levels as f64).floor() as usize).min(levels) } else { 0 };
            while k < levels && (k + 1) as f64 / levels as f64 <= b {
                k += 1;
            }
            while k > 0 && k as f64 / levels as f64 > b {
                k -= 1;
            }
            let l = k as f64 / levels as f64;
            let d = a - l;
            if d >= theta {
                1.0 - d
            } else {
                1.0
            }
        })
        .collect()
}

/// Connectivity error: `Σ_i |φ(pred)_i − φ(gt)_i|` where `φ` measures how
/// far each voxel's opacity exceeds the level at which it stays connected
/// to the jointly opaque source region.
pub fn conn_error(pred: &AlphaMatte, gt: &AlphaMatte, params: ConnParams) -> Result<f64> {
    same_shape(pred, gt)?;
    let levels = params.levels()?;
    let dims = pred.dims();
    let opaque: Vec<bool> = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| p >= 1.0 - FULL_OPACITY_EPS && g >= 1.0 - FULL_OPACITY_EPS)
        .collect();
    let source = largest_component(&opaque, dims);
    let phi_pred = connectivity_degree(pred.data(), &source, dims, levels, params.theta_floor);
    let phi_gt = connectivity_degree(gt.data(), &source, dims, levels, params.theta_floor);
    Ok(phi_pred.iter().zip(&phi_gt).map(|(a, b)| (a - b).abs()).sum())
}

/// Which values carry the conventional table scaling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledFlags {
    pub sad: bool,
    pub mse: bool,
    pub grad: bool,
    pub conn: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
    pub scaled: ScaledFlags,
}

impl MetricsReport {
    /// MSE × 10³; SAD, Grad. and Conn. × 10⁻². Idempotent.
    pub fn paper_scaled(&self) -> MetricsReport {
        if self.scaled == (ScaledFlags { sad: true, mse: true, grad: true, conn: true }) {
            return *self;
        }
        let raw = self.raw();
        MetricsReport {
            sad: raw.sad / 100.0,
            mse: raw.mse * 1000.0,
            grad: raw.grad / 100.0,
            conn: raw.conn / 100.0,
            scaled: ScaledFlags { sad: true, mse: true, grad: true, conn: true },
        }
    }

    pub fn raw(&self) -> MetricsReport {
        let hundredths = |v: f64, flag: bool| if flag { v * 100.0 } else { v };
        MetricsReport {
            sad: hundredths(self.sad, self.scaled.sad),
            mse: if self.scaled.mse { self.mse / 1000.0 } else { self.mse },
            grad: hundredths(self.grad, self.scaled.grad),
            conn: hundredths(self.conn, self.scaled.conn),
            scaled: ScaledFlags::default(),
        }
    }
}

/// All four metrics, optionally with table scaling applied.
pub fn report(pred: &AlphaMatte, gt: &AlphaMatte, paper_scaling: bool) -> Result<MetricsReport> {
    let raw = MetricsReport {
        sad: sad(pred, gt)?,
        mse: mse(pred, gt)?,
        grad: grad_error(pred, gt)?,
        conn: conn_error(pred, gt, ConnParams::default())?,
        scaled: ScaledFlags::default(),
    };
    Ok(if paper_scaling { raw.paper_scaled() } else { raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn matte(d: Dims, data: Vec<f64>) -> AlphaMatte {
        AlphaMatte::new(d, Spacing::default(), data).unwrap()
    }

    #[test]
    fn basic_values() {
        let d = Dims::cube(4);
        let ones = matte(d, vec![1.0; 64]);
        let zeros = matte(d, vec![0.0; 64]);
        let half = matte(d, vec![0.5; 64]);
        assert_eq!(sad(&ones, &zeros).unwrap(), 64.0);
        assert_eq!(mse(&half, &zeros).unwrap(), 0.25);
        assert_eq!(grad_error(&half, &zeros).unwrap(), 0.0);
        assert_eq!(conn_error(&ones, &ones, ConnParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_has_no_gradient_error() {
        let d = Dims::new(4, 5, 3);
        let gt: Vec<f64> = (0..d.len()).map(|i| (i % 9) as f64 / 10.0).collect();
        let pred: Vec<f64> = gt.iter().map(|v| v + 0.1).collect();
        let e = grad_error(&matte(d, pred), &matte(d, gt)).unwrap();
        assert!(e < 1e-25);
    }

    #[test]
    fn shape_errors() {
        let a = matte(Dims::cube(3), vec![0.0; 27]);
        let b = matte(Dims::new(3, 3, 4), vec![0.0; 36]);
        assert!(matches!(sad(&a, &b), Err(MatteError::Shape(_))));
        assert!(matches!(mse(&a, &b), Err(MatteError::Shape(_))));
        assert!(matches!(conn_error(&a, &b, ConnParams::default()), Err(MatteError::Shape(_))));
        let thin = matte(Dims::new(2, 3, 3), vec![0.0; 18]);
        assert!(matches!(grad_error(&thin, &thin), Err(MatteError::Shape(_))));
        assert!(conn_error(&a, &a, ConnParams { step: 0.3, ..Default::default() }).is_err());
    }

    #[test]
    fn empty_source_region_is_total() {
        let d = Dims::cube(3);
        let a = matte(d, vec![0.4; 27]);
        let b = matte(d, vec![0.2; 27]);
        // no source: l = 0, d = alpha, phi = 1 - alpha where alpha >= 0.15
        let e = conn_error(&a, &b, ConnParams::default()).unwrap();
        assert!((e - 27.0 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn largest_component_tie_breaks_on_lowest_index() {
        let d = Dims::new(5, 1, 1);
        let keep = vec![true, false, true, false, false];
        assert_eq!(largest_component(&keep, d), vec![true, false, false, false, false]);
        let keep = vec![true, false, true, true, false];
        assert_eq!(largest_component(&keep, d), vec![false, false, true, true, false]);
    }

    #[test]
    fn table_scaling() {
        let r = MetricsReport {
            sad: 15262.0,
            mse: 0.00043,
            grad: 1496.0,
            conn: 13239.0,
            scaled: ScaledFlags::default(),
        };
        let s = r.paper_scaled();
        assert_eq!(s.mse, 0.43);
        assert_eq!(s.sad, 152.62);
        assert_eq!(s.grad, 14.96);
        assert_eq!(s.conn, 132.39);
        assert_eq!(s.paper_scaled(), s);
        assert!((s.raw().mse - 0.00043).abs() < 1e-18);
    }
}
