//! Signed distance by fast sweeping with the Godunov upwind update.
//!
//! Nodes adjacent to a sign change are initialized from the linear crossing
//! points of `ψ` and frozen; every other node is relaxed by alternating
//! Gauss-Seidel sweeps (two orderings in 1D, four in 2D) until the largest
//! update falls below [`SWEEP_TOL`].

use super::LevelSetField;

const SWEEP_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 200;

pub(super) fn signed_distance_1d(nodes: &[f64], psi: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut d = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    for i in 0..n - 1 {
        let (a, b) = (psi[i], psi[i + 1]);
        if (a < 0.0) != (b < 0.0) {
            let x = nodes[i] + a / (a - b) * (nodes[i + 1] - nodes[i]);
            d[i] = d[i].min((x - nodes[i]).abs());
            d[i + 1] = d[i + 1].min((nodes[i + 1] - x).abs());
            frozen[i] = true;
            frozen[i + 1] = true;
        }
    }
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for i in 1..n {
            if !frozen[i] {
                let cand = d[i - 1] + (nodes[i] - nodes[i - 1]);
                if cand < d[i] {
                    change = change.max(if d[i].is_finite() { d[i] - cand } else { f64::INFINITY });
                    d[i] = cand;
                }
            }
        }
        for i in (0..n - 1).rev() {
            if !frozen[i] {
                let cand = d[i + 1] + (nodes[i + 1] - nodes[i]);
                if cand < d[i] {
                    change = change.max(if d[i].is_finite() { d[i] - cand } else { f64::INFINITY });
                    d[i] = cand;
                }
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    d.iter()
        .zip(psi)
        .map(|(&dist, &p)| if p < 0.0 { -dist } else { dist })
        .collect()
}

pub(super) fn signed_distance_2d(m: usize, psi: &[f64]) -> Vec<f64> {
    let h = 1.0 / m as f64;
    let idx = |ix: usize, iy: usize| iy * m + ix;
    let mut d = vec![f64::INFINITY; m * m];
    let mut frozen = vec![false; m * m];

    // Axis crossings of the bilinear interpolant, combined as if the
    // interface were locally straight.
    for iy in 0..m {
        for ix in 0..m {
            let p = psi[idx(ix, iy)];
            let neg = p < 0.0;
            let axis = |q: f64| {
                if (q < 0.0) != neg {
                    Some(h * p / (p - q))
                } else {
                    None
                }
            };
            let mut dx: Option<f64> = None;
            let mut dy: Option<f64> = None;
            let take = |slot: &mut Option<f64>, v: Option<f64>| {
                if let Some(v) = v {
                    *slot = Some(slot.map_or(v, |s| s.min(v)));
                }
            };
            if ix > 0 {
                take(&mut dx, axis(psi[idx(ix - 1, iy)]));
            }
            if ix + 1 < m {
                take(&mut dx, axis(psi[idx(ix + 1, iy)]));
            }
            if iy > 0 {
                take(&mut dy, axis(psi[idx(ix, iy - 1)]));
            }
            if iy + 1 < m {
                take(&mut dy, axis(psi[idx(ix, iy + 1)]));
            }
            let dist = match (dx, dy) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => a * b / (a * a + b * b).sqrt(),
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => continue,
            };
            d[idx(ix, iy)] = dist.abs();
            frozen[idx(ix, iy)] = true;
        }
    }

    let orders: [(bool, bool); 4] = [(true, true), (false, true), (false, false), (true, false)];
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for &(fwd_x, fwd_y) in &orders {
            for sy in 0..m {
                let iy = if fwd_y { sy } else { m - 1 - sy };
                for sx in 0..m {
                    let ix = if fwd_x { sx } else { m - 1 - sx };
                    let k = idx(ix, iy);
                    if frozen[k] {
                        continue;
                    }
                    let a = neighbor_min(&d, m, ix, iy, true);
                    let b = neighbor_min(&d, m, ix, iy, false);
                    let cand = godunov(a, b, h);
                    if cand < d[k] {
                        change = change.max(if d[k].is_finite() { d[k] - cand } else { f64::INFINITY });
                        d[k] = cand;
                    }
                }
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    d.iter()
        .zip(psi)
        .map(|(&dist, &p)| if p < 0.0 { -dist } else { dist })
        .collect()
}

fn neighbor_min(d: &[f64], m: usize, ix: usize, iy: usize, along_x: bool) -> f64 {
    let mut best = f64::INFINITY;
    if along_x {
        if ix > 0 {
            best = best.min(d[iy * m + ix - 1]);
        }
        if ix + 1 < m {
            best = best.min(d[iy * m + ix + 1]);
        }
    } else {
        if iy > 0 {
            best = best.min(d[(iy - 1) * m + ix]);
        }
        if iy + 1 < m {
            best = best.min(d[(iy + 1) * m + ix]);
        }
    }
    best
}

/// Solves `((u−a)₊/h)² + ((u−b)₊/h)² = 1` for the largest admissible `u`.
fn godunov(a: f64, b: f64, h: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if !lo.is_finite() {
        return f64::INFINITY;
    }
    if hi - lo >= h {
        lo + h
    } else {
        0.5 * (a + b + (2.0 * h * h - (a - b) * (a - b)).sqrt())
    }
}

/// Discrete upwind `|∇|ψ||` at every node, the quantity the sweeping update
/// drives to one away from the interface.
pub fn upwind_gradient_norm(field: &LevelSetField) -> Vec<f64> {
    match field {
        LevelSetField::Nodes1d { nodes, psi } => {
            let n = nodes.len();
            (0..n)
                .map(|i| {
                    let u = psi[i].abs();
                    let mut best: f64 = 0.0;
                    if i > 0 {
                        best = best.max((u - psi[i - 1].abs()) / (nodes[i] - nodes[i - 1]));
                    }
                    if i + 1 < n {
                        best = best.max((u - psi[i + 1].abs()) / (nodes[i + 1] - nodes[i]));
                    }
                    best
                })
                .collect()
        }
        LevelSetField::Grid2d { m, psi } => {
            let m = *m;
            let h = 1.0 / m as f64;
            let abs: Vec<f64> = psi.iter().map(|v| v.abs()).collect();
            (0..m * m)
                .map(|k| {
                    let (ix, iy) = (k % m, k / m);
                    let u = abs[k];
                    let gx = (u - neighbor_min(&abs, m, ix, iy, true)).max(0.0) / h;
                    let gy = (u - neighbor_min(&abs, m, ix, iy, false)).max(0.0) / h;
                    (gx * gx + gy * gy).sqrt()
                })
                .collect()
        }
    }
}
