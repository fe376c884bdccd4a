//! Method-of-lines assembly of `M ẏ = −S y + B̂ u`.
//!
//! Two bases are supported: piecewise linear hat functions on a uniform mesh
//! of `(0,1)` with homogeneous Dirichlet nodes removed, and the `L₂`-orthonormal
//! Dirichlet eigenfunctions `2 sin(kπx) sin(lπy)` of the unit square. In 2D all
//! pointwise work (actuator loads, projections, level sets) happens on a
//! uniform lattice of `m × m` cell centers.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ActuatorShape, LevelSetField};

/// Default resolution of the 2D evaluation lattice.
pub const DEFAULT_EVAL_GRID: usize = 128;

/// Which finite-dimensional space the coefficient vectors live in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasisDescriptor {
    /// P1 elements; `nodes` includes both boundary nodes, `diffusion[e]` is
    /// the coefficient used on element `e`.
    Fem1d { nodes: Vec<f64>, diffusion: Vec<f64> },
    /// Laplacian eigenfunctions, ordered by eigenvalue, ties by smaller `k`.
    Spectral2d {
        modes: Vec<(u32, u32)>,
        sigma: f64,
        grid: usize,
    },
}

impl BasisDescriptor {
    /// Spatial dimension of the domain.
    pub fn dim(&self) -> usize {
        match self {
            BasisDescriptor::Fem1d { .. } => 1,
            BasisDescriptor::Spectral2d { .. } => 2,
        }
    }

    /// Number of degrees of freedom.
    pub fn n_dofs(&self) -> usize {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => nodes.len() - 2,
            BasisDescriptor::Spectral2d { modes, .. } => modes.len(),
        }
    }

    /// Points carrying level-set and sensitivity values: all mesh nodes in
    /// 1D, cell centers (row-major in `y`, then `x`) in 2D.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => nodes.iter().map(|&x| vec![x]).collect(),
            BasisDescriptor::Spectral2d { grid, .. } => {
                let m = *grid;
                let mut pts = Vec::with_capacity(m * m);
                for iy in 0..m {
                    for ix in 0..m {
                        pts.push(vec![cell_center(ix, m), cell_center(iy, m)]);
                    }
                }
                pts
            }
        }
    }

    /// Quadrature weights of the grid points (lumped mass in 1D, cell area in 2D).
    pub fn grid_weights(&self) -> Vec<f64> {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => {
                let n = nodes.len();
                let mut w = vec![0.0; n];
                for e in 0..n - 1 {
                    let h = nodes[e + 1] - nodes[e];
                    w[e] += 0.5 * h;
                    w[e + 1] += 0.5 * h;
                }
                w
            }
            BasisDescriptor::Spectral2d { grid, .. } => {
                let m = *grid;
                vec![1.0 / (m * m) as f64; m * m]
            }
        }
    }

    /// Values of the function with coefficients `coeffs` at every grid point.
    pub fn grid_values(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => {
                let mut v = vec![0.0; nodes.len()];
                v[1..nodes.len() - 1].copy_from_slice(coeffs.as_slice());
                v
            }
            BasisDescriptor::Spectral2d { modes, grid, .. } => {
                let m = *grid;
                let table = SineTable::new(modes, m);
                let mut out = vec![0.0; m * m];
                for (j, &(k, l)) in modes.iter().enumerate() {
                    let c = 2.0 * coeffs[j];
                    if c == 0.0 {
                        continue;
                    }
                    let sx = table.row(k);
                    let sy = table.row(l);
                    for iy in 0..m {
                        let cy = c * sy[iy];
                        let row = &mut out[iy * m..(iy + 1) * m];
                        for (o, s) in row.iter_mut().zip(sx) {
                            *o += cy * s;
                        }
                    }
                }
                out
            }
        }
    }

    /// Level-set field on this basis' grid carrying `values`.
    pub fn levelset_field(&self, values: Vec<f64>) -> LevelSetField {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => LevelSetField::Nodes1d {
                nodes: nodes.clone(),
                psi: values,
            },
            BasisDescriptor::Spectral2d { grid, .. } => LevelSetField::Grid2d { m: *grid, psi: values },
        }
    }

    /// Spacing of the level-set grid.
    pub fn cell_size(&self) -> f64 {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => 1.0 / (nodes.len() - 1) as f64,
            BasisDescriptor::Spectral2d { grid, .. } => 1.0 / *grid as f64,
        }
    }

    /// Pointwise evaluation: linear interpolation in 1D, modal summation in 2D.
    pub fn eval_point(&self, coeffs: &DVector<f64>, point: &[f64]) -> f64 {
        match self {
            BasisDescriptor::Fem1d { nodes, .. } => {
                let x = point[0];
                let n = nodes.len();
                if x <= nodes[0] || x >= nodes[n - 1] {
                    return 0.0;
                }
                let e = locate_element(nodes, x);
                let value = |i: usize| if i == 0 || i == n - 1 { 0.0 } else { coeffs[i - 1] };
                let t = (x - nodes[e]) / (nodes[e + 1] - nodes[e]);
                (1.0 - t) * value(e) + t * value(e + 1)
            }
            BasisDescriptor::Spectral2d { modes, .. } => modes
                .iter()
                .zip(coeffs.iter())
                .map(|(&(k, l), c)| c * mode_value(k, l, point[0], point[1]))
                .sum(),
        }
    }
}

/// Discrete mass and stiffness operators together with their basis.
#[derive(Clone, Debug)]
pub struct SystemMatrices {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub basis: BasisDescriptor,
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    /// The state matrix `A = −M⁻¹S`.
    pub fn state_matrix(&self) -> Result<DMatrix<f64>> {
        let chol = self
            .mass
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("mass matrix"))?;
        Ok(-chol.solve(&self.stiffness))
    }
}

/// Uniform P1 assembly on `(0,1)` with `n_elements` elements. The diffusion
/// coefficient is sampled at element midpoints.
pub fn assemble_fem_1d(n_elements: usize, diffusion: impl Fn(f64) -> f64) -> Result<SystemMatrices> {
    if n_elements < 2 {
        return Err(Error::Size(format!(
            "need at least 2 elements, got {n_elements}"
        )));
    }
    let h = 1.0 / n_elements as f64;
    let nodes: Vec<f64> = (0..=n_elements).map(|i| i as f64 * h).collect();
    let mut sigma = Vec::with_capacity(n_elements);
    for e in 0..n_elements {
        let mid = 0.5 * (nodes[e] + nodes[e + 1]);
        let s = diffusion(mid);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!(
                "diffusion must be positive, got {s} at x = {mid}"
            )));
        }
        sigma.push(s);
    }

    let n = n_elements - 1;
    let mut mass = DMatrix::zeros(n, n);
    let mut stiffness = DMatrix::zeros(n, n);
    let m_loc = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    for (e, &s) in sigma.iter().enumerate() {
        let k_loc = [[s / h, -s / h], [-s / h, s / h]];
        let global = [e, e + 1];
        for a in 0..2 {
            // node indices 0 and n_elements are Dirichlet and dropped
            let ga = global[a];
            if ga == 0 || ga == n_elements {
                continue;
            }
            for b in 0..2 {
                let gb = global[b];
                if gb == 0 || gb == n_elements {
                    continue;
                }
                mass[(ga - 1, gb - 1)] += m_loc[a][b];
                stiffness[(ga - 1, gb - 1)] += k_loc[a][b];
            }
        }
    }
    Ok(SystemMatrices {
        mass,
        stiffness,
        basis: BasisDescriptor::Fem1d {
            nodes,
            diffusion: sigma,
        },
    })
}

/// First `n_modes` Dirichlet eigenpairs `(k,l)` ordered by `k²+l²`, ties by `k`.
pub fn spectral_modes(n_modes: usize) -> Vec<(u32, u32)> {
    let kmax = n_modes as u32;
    let mut all: Vec<(u32, u32)> = (1..=kmax)
        .flat_map(|k| (1..=kmax).map(move |l| (k, l)))
        .collect();
    all.sort_by_key(|&(k, l)| (k * k + l * l, k));
    all.truncate(n_modes);
    all
}

/// Galerkin system in the orthonormal Laplacian eigenbasis of `(0,1)²`.
pub fn assemble_spectral_2d(n_modes: usize, sigma: f64, eval_grid_size: usize) -> Result<SystemMatrices> {
    if n_modes < 1 {
        return Err(Error::Size("need at least one mode".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("diffusion must be positive, got {sigma}")));
    }
    let modes = spectral_modes(n_modes);
    let kmax = modes.iter().map(|&(k, l)| k.max(l)).max().unwrap_or(1) as usize;
    if eval_grid_size < 2 * kmax {
        return Err(Error::InvalidParameter {
            name: "eval_grid_size",
            reason: format!("{eval_grid_size} cells cannot resolve mode index {kmax}"),
        });
    }
    let stiffness = DMatrix::from_diagonal(&DVector::from_iterator(
        n_modes,
        modes
            .iter()
            .map(|&(k, l)| sigma * PI * PI * f64::from(k * k + l * l)),
    ));
    Ok(SystemMatrices {
        mass: DMatrix::identity(n_modes, n_modes),
        stiffness,
        basis: BasisDescriptor::Spectral2d {
            modes,
            sigma,
            grid: eval_grid_size,
        },
    })
}

/// Load vector `B̂_j = ∫_ω φ_j`. Exact in 1D; cell-center quadrature in 2D.
pub fn actuator_load(shape: &ActuatorShape, basis: &BasisDescriptor) -> Result<DVector<f64>> {
    match (shape, basis) {
        (ActuatorShape::Intervals(intervals), BasisDescriptor::Fem1d { nodes, .. }) => {
            let n = nodes.len();
            let mut load = DVector::zeros(n - 2);
            for iv in intervals {
                let (lo, hi) = (iv.lo.max(nodes[0]), iv.hi.min(nodes[n - 1]));
                if hi <= lo {
                    continue;
                }
                let first = locate_element(nodes, lo);
                let last = locate_element(nodes, hi);
                for e in first..=last.min(n - 2) {
                    let (xl, xr) = (nodes[e], nodes[e + 1]);
                    let p = lo.max(xl);
                    let q = hi.min(xr);
                    if q <= p {
                        continue;
                    }
                    let h = xr - xl;
                    // rising hat of node e+1 and falling hat of node e on [xl, xr]
                    let rising = ((q - xl).powi(2) - (p - xl).powi(2)) / (2.0 * h);
                    let falling = ((xr - p).powi(2) - (xr - q).powi(2)) / (2.0 * h);
                    if e >= 1 {
                        load[e - 1] += falling;
                    }
                    if e < n - 2 {
                        load[e] += rising;
                    }
                }
            }
            Ok(load)
        }
        (ActuatorShape::Grid(mask), BasisDescriptor::Spectral2d { modes, grid, .. }) => {
            let m = *grid;
            if mask.m != m {
                return Err(Error::GridMismatch(format!(
                    "actuator mask is {}x{}, basis grid is {m}x{m}",
                    mask.m, mask.m
                )));
            }
            let table = SineTable::new(modes, m);
            let area = 1.0 / (m * m) as f64;
            let mut load = DVector::zeros(modes.len());
            for (j, &(k, l)) in modes.iter().enumerate() {
                let sx = table.row(k);
                let sy = table.row(l);
                let mut acc = 0.0;
                for (iy, row) in mask.cells.chunks(m).enumerate() {
                    let mut s = 0.0;
                    for (ix, &inside) in row.iter().enumerate() {
                        if inside {
                            s += sx[ix];
                        }
                    }
                    acc += s * sy[iy];
                }
                load[j] = 2.0 * acc * area;
            }
            Ok(load)
        }
        _ => Err(Error::GridMismatch(
            "actuator shape and basis have different dimensions".into(),
        )),
    }
}

/// `L₂` projection `f_h = M⁻¹ f̂` with `f̂_j = (f, φ_j)`.
pub fn project_initial_condition(f: impl Fn(&[f64]) -> f64, sys: &SystemMatrices) -> Result<DVector<f64>> {
    let rhs = match &sys.basis {
        BasisDescriptor::Fem1d { nodes, .. } => {
            let n = nodes.len();
            let gauss = [
                (-(0.6f64).sqrt(), 5.0 / 9.0),
                (0.0, 8.0 / 9.0),
                ((0.6f64).sqrt(), 5.0 / 9.0),
            ];
            let mut rhs = DVector::zeros(n - 2);
            for e in 0..n - 1 {
                let (xl, xr) = (nodes[e], nodes[e + 1]);
                let half = 0.5 * (xr - xl);
                for &(t, w) in &gauss {
                    let x = xl + half * (1.0 + t);
                    let fx = f(&[x]) * w * half;
                    let rising = (x - xl) / (xr - xl);
                    if e >= 1 {
                        rhs[e - 1] += fx * (1.0 - rising);
                    }
                    if e < n - 2 {
                        rhs[e] += fx * rising;
                    }
                }
            }
            rhs
        }
        BasisDescriptor::Spectral2d { modes, grid, .. } => {
            let m = *grid;
            let table = SineTable::new(modes, m);
            let area = 1.0 / (m * m) as f64;
            let values: Vec<f64> = (0..m * m)
                .map(|idx| f(&[cell_center(idx % m, m), cell_center(idx / m, m)]))
                .collect();
            DVector::from_iterator(
                modes.len(),
                modes.iter().map(|&(k, l)| {
                    let sx = table.row(k);
                    let sy = table.row(l);
                    let mut acc = 0.0;
                    for iy in 0..m {
                        let row = &values[iy * m..(iy + 1) * m];
                        let s: f64 = row.iter().zip(sx).map(|(v, s)| v * s).sum();
                        acc += s * sy[iy];
                    }
                    2.0 * acc * area
                }),
            )
        }
    };
    let chol = sys
        .mass
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("mass matrix"))?;
    Ok(chol.solve(&rhs))
}

/// Center of cell `i` on a uniform `m`-cell partition of `(0,1)`.
pub fn cell_center(i: usize, m: usize) -> f64 {
    (i as f64 + 0.5) / m as f64
}

/// `2 sin(kπx) sin(lπy)`.
pub fn mode_value(k: u32, l: u32, x: f64, y: f64) -> f64 {
    2.0 * (f64::from(k) * PI * x).sin() * (f64::from(l) * PI * y).sin()
}

/// Index `e` with `nodes[e] <= x < nodes[e+1]`, clamped to the last element.
pub(crate) fn locate_element(nodes: &[f64], x: f64) -> usize {
    let n = nodes.len();
    match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// `sin(kπ x_i)` on cell centers for every frequency that appears in `modes`.
struct SineTable {
    m: usize,
    rows: Vec<f64>,
}

impl SineTable {
    fn new(modes: &[(u32, u32)], m: usize) -> Self {
        let kmax = modes.iter().map(|&(k, l)| k.max(l)).max().unwrap_or(0) as usize;
        let mut rows = vec![0.0; (kmax + 1) * m];
        for k in 1..=kmax {
            for i in 0..m {
                rows[k * m + i] = (k as f64 * PI * cell_center(i, m)).sin();
            }
        }
        SineTable { m, rows }
    }

    fn row(&self, k: u32) -> &[f64] {
        let k = k as usize;
        &self.rows[k * self.m..(k + 1) * self.m]
    }
}
