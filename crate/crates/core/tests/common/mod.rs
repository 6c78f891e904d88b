//! Brute-force reference implementations shared by the integration tests.
//! Each one is written from the defining formula, without reusing library
//! internals.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volmatte::{AlphaMatte, Dims, Spacing, Unit, Volume3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(d: Dims, seed: u64) -> Volume3 {
    let mut r = rng(seed);
    let data = (0..d.len()).map(|_| r.random::<f64>()).collect();
    Volume3::new(d, Spacing::default(), Unit::Normalized, data).unwrap()
}

pub fn random_matte(d: Dims, seed: u64) -> AlphaMatte {
    let mut r = rng(seed);
    let data = (0..d.len())
        .map(|_| match r.random_range(0..4) {
            0 => 1.0,
            1 => 0.0,
            _ => r.random::<f64>(),
        })
        .collect();
    AlphaMatte::new(d, Spacing::default(), data).unwrap()
}

fn idx(d: Dims, x: usize, y: usize, z: usize) -> usize {
    x + d.nx * (y + d.ny * z)
}

/// Dense matting Laplacian accumulated window by window.
pub fn matting_dense(values: &[f64], d: Dims, k: usize, eps: f64) -> Vec<Vec<f64>> {
    let n = d.len();
    let m = (k * k * k) as f64;
    let mut out = vec![vec![0.0; n]; n];
    for z0 in 0..=d.nz - k {
        for y0 in 0..=d.ny - k {
            for x0 in 0..=d.nx - k {
                let mut members = Vec::new();
                for dz in 0..k {
                    for dy in 0..k {
                        for dx in 0..k {
                            members.push(idx(d, x0 + dx, y0 + dy, z0 + dz));
                        }
                    }
                }
                let mean = members.iter().map(|&i| values[i]).sum::<f64>() / m;
                let var = members.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / m;
                for &i in &members {
                    for &j in &members {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        out[i][j] += delta
                            - (1.0 + (values[i] - mean) * (values[j] - mean) / (var + eps / m)) / m;
                    }
                }
            }
        }
    }
    out
}

/// Dense KNN Laplacian from an exhaustive neighbour search.
pub fn knn_dense(values: &[f64], d: Dims, k: usize, spatial_weight: f64) -> Vec<Vec<f64>> {
    let n = d.len();
    let feat = |i: usize| {
        let x = i % d.nx;
        let y = (i / d.nx) % d.ny;
        let z = i / (d.nx * d.ny);
        let s = |c: usize, len: usize| if len > 1 { spatial_weight * c as f64 / (len - 1) as f64 } else { 0.0 };
        [values[i], s(x, d.nx), s(y, d.ny), s(z, d.nz)]
    };
    let diameter = (1.0 + 3.0 * spatial_weight * spatial_weight).sqrt();
    let mut a = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        let fi = feat(i);
        let mut cands: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let fj = feat(j);
                (fi.iter().zip(&fj).map(|(p, q)| (p - q) * (p - q)).sum::<f64>(), j)
            })
            .collect();
        cands.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        let kth = cands[k - 1].0;
        for &(d2, j) in cands.iter().take_while(|c| c.0 <= kth) {
            let w = (1.0 - d2.sqrt() / diameter).max(0.0);
            a[i][j] = a[i][j].max(w);
            a[j][i] = a[j][i].max(w);
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                l[i][j] = -a[i][j];
                l[i][i] += a[i][j];
            }
        }
    }
    l
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn naive_sad(p: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - g[i]).abs();
    }
    s
}

pub fn naive_mse(p: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - g[i]) * (p[i] - g[i]);
    }
    s / p.len() as f64
}

fn sample(a: &[f64], d: Dims, x: usize, y: usize, z: usize) -> f64 {
    a[idx(d, x, y, z)]
}

fn derivative(a: &[f64], d: Dims, x: usize, y: usize, z: usize, axis: usize) -> f64 {
    let c = [x, y, z];
    let len = [d.nx, d.ny, d.nz][axis];
    let at = |off: isize| {
        let mut q = c;
        q[axis] = (c[axis] as isize + off) as usize;
        sample(a, d, q[0], q[1], q[2])
    };
    if c[axis] == 0 {
        at(1) - at(0)
    } else if c[axis] == len - 1 {
        at(0) - at(-1)
    } else {
        (at(1) - at(-1)) / 2.0
    }
}

pub fn naive_grad(p: &[f64], g: &[f64], d: Dims) -> f64 {
    let mut s = 0.0;
    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                for axis in 0..3 {
                    let diff = derivative(p, d, x, y, z, axis) - derivative(g, d, x, y, z, axis);
                    s += diff * diff;
                }
            }
        }
    }
    s
}

fn neighbours(d: Dims, i: usize) -> Vec<usize> {
    let x = i % d.nx;
    let y = (i / d.nx) % d.ny;
    let z = i / (d.nx * d.ny);
    let mut out = Vec::new();
    if x > 0 {
        out.push(i - 1);
    }
    if x + 1 < d.nx {
        out.push(i + 1);
    }
    if y > 0 {
        out.push(i - d.nx);
    }
    if y + 1 < d.ny {
        out.push(i + d.nx);
    }
    if z > 0 {
        out.push(i - d.nx * d.ny);
    }
    if z + 1 < d.nz {
        out.push(i + d.nx * d.ny);
    }
    out
}

fn flood(keep: &[bool], seeds: &[usize], d: Dims) -> Vec<bool> {
    let mut seen = vec![false; keep.len()];
    let mut stack: Vec<usize> = seeds.iter().copied().filter(|&s| keep[s]).collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(i) = stack.pop() {
        for j in neighbours(d, i) {
            if keep[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Connectivity error by one flood fill per threshold level.
pub fn naive_conn(p: &[f64], g: &[f64], d: Dims, step: f64, theta: f64) -> f64 {
    let n = p.len();
    let both: Vec<bool> = (0..n).map(|i| p[i] >= 1.0 - 1e-6 && g[i] >= 1.0 - 1e-6).collect();
    // Largest component; ties keep the first one met in index order.
    let mut taken = vec![false; n];
    let mut source: Vec<usize> = Vec::new();
    for s in 0..n {
        if both[s] && !taken[s] {
            let comp = flood(&both, &[s], d);
            let members: Vec<usize> = (0..n).filter(|&i| comp[i]).collect();
            for &m in &members {
                taken[m] = true;
            }
            if members.len() > source.len() {
                source = members;
            }
        }
    }
    let levels = (1.0 / step).round() as usize;
    let phi = |a: &[f64]| -> Vec<f64> {
        let mut l = vec![0.0; n];
        for k in 0..=levels {
            let t = k as f64 / levels as f64;
            let keep: Vec<bool> = a.iter().map(|&v| v >= t).collect();
            let reached = flood(&keep, &source, d);
            for i in 0..n {
                if reached[i] {
                    l[i] = t;
                }
            }
        }
        (0..n)
            .map(|i| {
                let diff = a[i] - l[i];
                if diff >= theta {
                    1.0 - diff
                } else {
                    1.0
                }
            })
            .collect()
    };
    let fp = phi(p);
    let fg = phi(g);
    (0..n).map(|i| (fp[i] - fg[i]).abs()).sum()
}

pub fn max_abs_diff_dense(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
