//! Closed-form matting Laplacian over `k×k×k` voxel windows.
//!
//! For every window `w` that fits entirely inside the grid, with mean `μ`
//! and variance `σ²` of its `k³` intensities, each pair `(i, j)` of voxels
//! in `w` receives
//!
//! ```text
//! δ_ij − (1/k³) · (1 + (V_i − μ)(V_j − μ) / (σ² + ε/k³))
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::SparseSymMatrix;
use crate::error::{MatteError, Result};
use crate::volume::{Dims, HuWindow, Volume3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MattingWindowConfig {
    /// Window edge length; odd and at least 3.
    pub k: usize,
    pub epsilon: f64,
    /// Applied to HU volumes before assembly.
    pub window: HuWindow,
}

impl Default for MattingWindowConfig {
    fn default() -> Self {
        MattingWindowConfig {
            k: 3,
            epsilon: 1e-7,
            window: HuWindow::default(),
        }
    }
}

impl MattingWindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.k.is_multiple_of(2) {
            return Err(MatteError::Argument(format!(
                "window edge k must be odd and >= 3, got {}",
                self.k
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(MatteError::Argument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-window mean and `1 / (σ² + ε/k³)`, indexed by the window centre.
struct WindowStats {
    mean: Vec<f64>,
    inv_var: Vec<f64>,
}

fn window_stats(intensity: &[f64], dims: Dims, k: usize, epsilon: f64) -> WindowStats {
    let r = k / 2;
    let k3 = (k * k * k) as f64;
    let n = dims.len();
    let mut mean = vec![0.0; n];
    let mut inv_var = vec![0.0; n];
    let plane = dims.nx * dims.ny;
    mean.par_chunks_mut(plane)
        .zip(inv_var.par_chunks_mut(plane))
        .enumerate()
        .filter(|(cz, _)| *cz >= r && *cz + r < dims.nz)
        .for_each(|(cz, (mean, inv_var))| {
            let mut samples = Vec::with_capacity(k * k * k);
            for cy in r..dims.ny - r {
                for cx in r..dims.nx - r {
                    samples.clear();
                    for z in cz - r..=cz + r {
                        for y in cy - r..=cy + r {
                            for x in cx - r..=cx + r {
                                samples.push(intensity[dims.index(x, y, z)]);
                            }
                        }
                    }
                    let mu = samples.iter().sum::<f64>() / k3;
                    let var = samples.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / k3;
                    let c = cx + dims.nx * cy;
                    mean[c] = mu;
                    inv_var[c] = 1.0 / (var + epsilon / k3);
                }
            }
        });
    WindowStats { mean, inv_var }
}

/// Assembles the matting Laplacian of `v`. HU volumes are first normalised
/// through `cfg.window`; other units are used as stored.
pub fn build_matting_laplacian(v: &Volume3, cfg: &MattingWindowConfig) -> Result<SparseSymMatrix> {
    cfg.validate()?;
    let dims = v.dims();
    let k = cfg.k;
    if dims.nx < k || dims.ny < k || dims.nz < k {
        return Err(MatteError::Shape(format!(
            "every dimension must be at least the window size {k}, got {dims}"
        )));
    }
    let intensity = cfg.window.intensities(v)?;
    let stats = window_stats(&intensity, dims, k, cfg.epsilon);
    let r = k / 2;
    let k3 = (k * k * k) as f64;
    let span = 2 * k - 1;

    // Index ranges of window centres covering coordinate `p` along an axis of length `n`.
    let centres = |p: usize, n: usize| p.saturating_sub(r).max(r)..=(p + r).min(n - 1 - r);

    let slabs: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)> = (0..dims.nz)
        .into_par_iter()
        .map(|pz| {
            let mut row_len = Vec::with_capacity(dims.nx * dims.ny);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            let mut acc = vec![0.0; span * span * span];
            let mut touched = vec![false; span * span * span];
            for py in 0..dims.ny {
                for px in 0..dims.nx {
                    let p = dims.index(px, py, pz);
                    let ip = intensity[p];
                    acc.fill(0.0);
                    touched.fill(false);
                    for cz in centres(pz, dims.nz) {
                        for cy in centres(py, dims.ny) {
                            for cx in centres(px, dims.nx) {
                                let c = dims.index(cx, cy, cz);
                                let mu = stats.mean[c];
                                let inv = stats.inv_var[c];
                                let dp = ip - mu;
                                for qz in cz - r..=cz + r {
                                    for qy in cy - r..=cy + r {
                                        for qx in cx - r..=cx + r {
                                            let q = dims.index(qx, qy, qz);
                                            let dq = intensity[q] - mu;
                                            let delta = if q == p { 1.0 } else { 0.0 };
                                            let slot = ((qz + k - 1 - pz) * span + (qy + k - 1 - py))
                                                * span
                                                + (qx + k - 1 - px);
                                            acc[slot] += delta - (1.0 + dp * dq * inv) / k3;
                                            touched[slot] = true;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let before = cols.len();
                    for (slot, (&t, &a)) in touched.iter().zip(&acc).enumerate() {
                        if t {
                            let ox = slot % span;
                            let oy = (slot / span) % span;
                            let oz = slot / (span * span);
                            let q = dims.index(px + ox - (k - 1), py + oy - (k - 1), pz + oz - (k - 1));
                            cols.push(q);
                            vals.push(a);
                        }
                    }
                    row_len.push(cols.len() - before);
                }
            }
            (row_len, cols, vals)
        })
        .collect();

    let nnz = slabs.iter().map(|s| s.1.len()).sum();
    let mut row_offsets = Vec::with_capacity(dims.len() + 1);
    let mut col_indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_offsets.push(0);
    for (lens, cols, vals) in slabs {
        let mut off = *row_offsets.last().unwrap();
        for l in lens {
            off += l;
            row_offsets.push(off);
        }
        col_indices.extend(cols);
        values.extend(vals);
    }
    SparseSymMatrix::from_csr_unchecked(dims.len(), row_offsets, col_indices, values)
}
