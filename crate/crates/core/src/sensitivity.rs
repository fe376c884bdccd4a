//! Shape and topological sensitivities of `J₁` with finite-difference oracles.
//!
//! Both sensitivities need the time integral `Q(ζ) = ∫₀ᵀ u(t) p(ζ, t) dt`,
//! where `p` is the adjoint as a function on the domain. In modal coordinates
//! `p(t) = −2 V P w(t)`, so `Q = −2 V P h` with `h = ∫ u w dt`. The default
//! [`QuadratureMethod::Gramian`] evaluates `h = −W k` through the closed-loop
//! Gramian `F W + W Fᵀ + w₀w₀ᵀ = 0`, `F = −Λ − b kᵀ`, i.e. the integral over
//! `[0, ∞)`; [`QuadratureMethod::Trajectory`] integrates the RK4 trajectory
//! on `[0, T]` with the trapezoidal rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretization::BasisDescriptor;
use crate::error::{Error, Result};
use crate::geometry::{
    grid_components, grid_csv, measure, translate, ActuatorShape, GridMask, LevelSetField,
};
use crate::lqr::{simulate_closed_loop, total_cost, ClosedLoop, LqrModel, SimulationOptions};
use crate::riccati::solve_lyapunov_modal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    Gramian,
    Trajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub horizon: f64,
    pub dt: f64,
    pub method: QuadratureMethod,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            horizon: 1000.0,
            dt: 0.01,
            method: QuadratureMethod::Gramian,
        }
    }
}

/// Coefficients of `ζ ↦ ∫ u(t) p(ζ, t) dt` in the state basis.
pub fn adjoint_moment(
    model: &LqrModel,
    cl: &ClosedLoop,
    f: &DVector<f64>,
    quad: &Quadrature,
) -> Result<DVector<f64>> {
    let k = &cl.riccati.gain;
    let h = match quad.method {
        QuadratureMethod::Gramian => {
            let w0 = model.to_modal(f);
            let gram = solve_lyapunov_modal(model.rates(), k, &cl.b, &(&w0 * w0.transpose()))?;
            -(gram * k)
        }
        QuadratureMethod::Trajectory => {
            let opts = SimulationOptions {
                horizon: quad.horizon,
                dt: quad.dt,
                state_stride: 0,
            };
            simulate_closed_loop(model, cl, f, &opts)?.control_moment
        }
    };
    Ok(model.from_modal(&(&cl.riccati.p * h)) * -2.0)
}

/// One boundary point (1D) or facet (2D) and its share of `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTerm {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub contribution: Vec<f64>,
}

/// Translation direction along which `J₁` decreases to first order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeGradient {
    pub b: Vec<f64>,
    pub per_boundary_terms: Vec<BoundaryTerm>,
    /// Some boundary touches `∂Ω`; those parts contributed zero.
    pub clamped: bool,
}

impl ShapeGradient {
    pub fn norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `b = ∫_{∂ω} Q ν ds`, the negated derivative of `J₁` under rigid
/// translations. The volume penalty is translation invariant and drops out.
pub fn shape_gradient(
    shape: &ActuatorShape,
    f: &DVector<f64>,
    model: &LqrModel,
    quad: &Quadrature,
) -> Result<ShapeGradient> {
    let cl = model.closed_loop(shape)?;
    let q = adjoint_moment(model, &cl, f, quad)?;
    Ok(gradient_from_moment(shape, &q, &model.system().basis))
}

pub fn gradient_from_moment(shape: &ActuatorShape, q: &DVector<f64>, basis: &BasisDescriptor) -> ShapeGradient {
    let dim = basis.dim();
    let mut terms = Vec::new();
    let mut clamped = false;
    let mut push = |point: Vec<f64>, normal: Vec<f64>, weight: f64, terms: &mut Vec<BoundaryTerm>| {
        let touches = point.iter().any(|&c| c <= 0.0 || c >= 1.0);
        let value = if touches { 0.0 } else { basis.eval_point(q, &point) * weight };
        clamped |= touches;
        let contribution = normal.iter().map(|n| n * value).collect();
        terms.push(BoundaryTerm {
            point,
            normal,
            contribution,
        });
    };
    match shape {
        ActuatorShape::Intervals(iv) => {
            for i in iv {
                push(vec![i.lo], vec![-1.0], 1.0, &mut terms);
                push(vec![i.hi], vec![1.0], 1.0, &mut terms);
            }
        }
        ActuatorShape::Grid(mask) => {
            let m = mask.m;
            let h = 1.0 / m as f64;
            for iy in 0..m {
                for ix in 0..m {
                    if !mask.get(ix, iy) {
                        continue;
                    }
                    let (x0, y0) = (ix as f64 * h, iy as f64 * h);
                    let facets: [(bool, [f64; 2], [f64; 2]); 4] = [
                        (ix == 0 || !mask.get(ix - 1, iy), [x0, y0 + 0.5 * h], [-1.0, 0.0]),
                        (ix + 1 == m || !mask.get(ix + 1, iy), [x0 + h, y0 + 0.5 * h], [1.0, 0.0]),
                        (iy == 0 || !mask.get(ix, iy - 1), [x0 + 0.5 * h, y0], [0.0, -1.0]),
                        (iy + 1 == m || !mask.get(ix, iy + 1), [x0 + 0.5 * h, y0 + h], [0.0, 1.0]),
                    ];
                    for (exposed, point, normal) in facets {
                        if exposed {
                            push(point.to_vec(), normal.to_vec(), h, &mut terms);
                        }
                    }
                }
            }
        }
    }
    let mut b = vec![0.0; dim];
    for t in &terms {
        for (acc, c) in b.iter_mut().zip(&t.contribution) {
            *acc += c;
        }
    }
    ShapeGradient {
        b,
        per_boundary_terms: terms,
        clamped,
    }
}

/// `g(ζ) = −Q(ζ) + 2α(|ω| − c)` on the level-set grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityField {
    pub g: Vec<f64>,
    pub alpha: f64,
    pub c: f64,
    pub size: f64,
    pub layout: LevelSetField,
}

impl SensitivityField {
    /// CSV in the level-set layout with value column `g`.
    pub fn to_csv(&self) -> String {
        grid_csv(&self.layout, "g", &self.g)
    }

    /// Grid-weighted L² norm.
    pub fn l2_norm(&self, basis: &BasisDescriptor) -> f64 {
        basis
            .grid_weights()
            .iter()
            .zip(&self.g)
            .map(|(w, g)| w * g * g)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn topological_field(
    shape: &ActuatorShape,
    f: &DVector<f64>,
    model: &LqrModel,
    alpha: f64,
    c: f64,
    quad: &Quadrature,
) -> Result<SensitivityField> {
    let cl = model.closed_loop(shape)?;
    let q = adjoint_moment(model, &cl, f, quad)?;
    Ok(field_from_moment(&q, &model.system().basis, measure(shape), alpha, c))
}

pub fn field_from_moment(q: &DVector<f64>, basis: &BasisDescriptor, size: f64, alpha: f64, c: f64) -> SensitivityField {
    let shift = 2.0 * alpha * (size - c);
    let g = basis.grid_values(q).into_iter().map(|v| shift - v).collect();
    SensitivityField {
        g,
        alpha,
        c,
        size,
        layout: basis.levelset_field(Vec::new()),
    }
}

/// Central differences of `J₁` under translations along each axis.
///
/// In 2D shapes translate by whole cells, so `delta` is rounded accordingly.
pub fn fd_shape_oracle(
    shape: &ActuatorShape,
    f: &DVector<f64>,
    model: &LqrModel,
    alpha: f64,
    c: f64,
    delta: f64,
) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("must be positive, got {delta}"),
        });
    }
    let dim = model.system().basis.dim();
    let mut grad = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut step = vec![0.0; dim];
        step[axis] = delta;
        let plus = translate(shape, &step).shape;
        step[axis] = -delta;
        let minus = translate(shape, &step).shape;
        let jp = total_cost(&plus, f, alpha, c, model)?.total;
        let jm = total_cost(&minus, f, alpha, c, model)?.total;
        grad.push((jp - jm) / (2.0 * delta));
    }
    Ok(grad)
}

/// Difference quotient of `J₁` for inserting (`η₀ ∉ ω`) or removing
/// (`η₀ ∈ ω`) a ball of radius `eps`, divided by the measure it changes.
///
/// Inside `ω` the quotient approximates `−g(η₀)`, outside `+g(η₀)`.
pub fn fd_topo_oracle(
    shape: &ActuatorShape,
    f: &DVector<f64>,
    model: &LqrModel,
    eta0: &[f64],
    eps: f64,
    alpha: f64,
    c: f64,
) -> Result<f64> {
    let basis = &model.system().basis;
    let cell = basis.cell_size();
    if eps < 2.0 * cell * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("ball radius {eps} is below two grid cells ({})", 2.0 * cell),
        });
    }
    let gap = distance_to_boundary(shape, eta0);
    if gap < cell {
        return Err(Error::NearInterface(gap));
    }
    let inside = shape.contains(eta0);
    let changed = shape.with_ball(eta0, eps, !inside);
    let volume = (measure(&changed) - measure(shape)).abs();
    if volume == 0.0 {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "ball does not change the actuator".into(),
        });
    }
    let j0 = total_cost(shape, f, alpha, c, model)?.total;
    let j1 = total_cost(&changed, f, alpha, c, model)?.total;
    Ok((j1 - j0) / volume)
}

/// Distance from `point` to `∂ω`.
pub fn distance_to_boundary(shape: &ActuatorShape, point: &[f64]) -> f64 {
    match shape {
        ActuatorShape::Intervals(iv) => iv
            .iter()
            .flat_map(|i| [i.lo, i.hi])
            .map(|e| (e - point[0]).abs())
            .fold(f64::INFINITY, f64::min),
        ActuatorShape::Grid(mask) => grid_boundary_distance(mask, point),
    }
}

fn grid_boundary_distance(mask: &GridMask, point: &[f64]) -> f64 {
    let m = mask.m;
    let h = 1.0 / m as f64;
    let mut best = f64::INFINITY;
    if grid_components(mask).is_empty() {
        return best;
    }
    for iy in 0..m {
        for ix in 0..m {
            if !mask.get(ix, iy) {
                continue;
            }
            let (x0, y0) = (ix as f64 * h, iy as f64 * h);
            let mut check = |ax: f64, ay: f64, bx: f64, by: f64| {
                let (dx, dy) = (bx - ax, by - ay);
                let t = (((point[0] - ax) * dx + (point[1] - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                let (px, py) = (ax + t * dx - point[0], ay + t * dy - point[1]);
                best = best.min((px * px + py * py).sqrt());
            };
            if ix == 0 || !mask.get(ix - 1, iy) {
                check(x0, y0, x0, y0 + h);
            }
            if ix + 1 == m || !mask.get(ix + 1, iy) {
                check(x0 + h, y0, x0 + h, y0 + h);
            }
            if iy == 0 || !mask.get(ix, iy - 1) {
                check(x0, y0, x0 + h, y0);
            }
            if iy + 1 == m || !mask.get(ix, iy + 1) {
                check(x0, y0 + h, x0 + h, y0 + h);
            }
        }
    }
    best
}

/// Dense `W` with `F W + W Fᵀ + w₀w₀ᵀ = 0`, exposed for cross-checks.
pub fn closed_loop_gramian(model: &LqrModel, cl: &ClosedLoop, f: &DVector<f64>) -> Result<DMatrix<f64>> {
    let w0 = model.to_modal(f);
    solve_lyapunov_modal(model.rates(), &cl.riccati.gain, &cl.b, &(&w0 * w0.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_fem_1d, project_initial_condition};
    use crate::geometry::Interval;
    use std::f64::consts::PI;

    fn model(n: usize) -> LqrModel {
        LqrModel::new(assemble_fem_1d(n, |_| 0.01).unwrap(), 1e-3).unwrap()
    }

    fn interval(lo: f64, hi: f64) -> ActuatorShape {
        ActuatorShape::Intervals(vec![Interval::new(lo, hi)])
    }

    fn sine(model: &LqrModel) -> DVector<f64> {
        project_initial_condition(|p| (PI * p[0]).sin(), model.system()).unwrap()
    }

    #[test]
    fn gramian_matches_time_integral() {
        let model = model(30);
        let cl = model.closed_loop(&interval(0.6, 0.8)).unwrap();
        let f = sine(&model);
        let gram = closed_loop_gramian(&model, &cl, &f).unwrap();
        let w0 = model.to_modal(&f);
        // trace identity: ∫ wᵀw dt = tr W, and ∫ wᵀw + γu² dt = w₀ᵀPw₀
        let k = &cl.riccati.gain;
        let cost = gram.trace() + model.gamma() * k.dot(&(&gram * k));
        let expect = w0.dot(&(&cl.riccati.p * &w0));
        assert!((cost - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn symmetric_configuration_has_zero_gradient() {
        let model = model(50);
        let f = sine(&model);
        let g = shape_gradient(&interval(0.4, 0.6), &f, &model, &Quadrature::default()).unwrap();
        assert!(g.b[0].abs() < 1e-6, "{}", g.b[0]);
        assert!(!g.clamped);
    }

    #[test]
    fn off_center_gradient_points_inward() {
        let model = model(50);
        let f = sine(&model);
        let g = shape_gradient(&interval(0.7, 0.9), &f, &model, &Quadrature::default()).unwrap();
        assert!(g.b[0] < 0.0);
    }

    #[test]
    fn boundary_contact_is_clamped() {
        let model = model(50);
        let f = sine(&model);
        let g = shape_gradient(&interval(0.0, 0.2), &f, &model, &Quadrature::default()).unwrap();
        assert!(g.clamped);
        assert_eq!(g.per_boundary_terms[0].contribution, vec![0.0]);
        assert!(g.b[0] > 0.0);
    }

    #[test]
    fn zero_state_gives_constant_penalty_field() {
        let model = model(20);
        let f = DVector::zeros(19);
        let field = topological_field(&interval(0.2, 0.7), &f, &model, 3.0, 0.2, &Quadrature::default()).unwrap();
        for v in &field.g {
            assert!((v - 2.0 * 3.0 * 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn field_and_gradient_are_even_in_f() {
        let model = model(40);
        let f = sine(&model).map(|v| v + 0.1);
        let quad = Quadrature::default();
        let shape = interval(0.3, 0.45);
        let a = topological_field(&shape, &f, &model, 1.0, 0.2, &quad).unwrap();
        let b = topological_field(&shape, &-&f, &model, 1.0, 0.2, &quad).unwrap();
        for (x, y) in a.g.iter().zip(&b.g) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-12));
        }
        let ga = shape_gradient(&shape, &f, &model, &quad).unwrap();
        let gb = shape_gradient(&shape, &-&f, &model, &quad).unwrap();
        assert!((ga.b[0] - gb.b[0]).abs() <= 1e-10 * ga.b[0].abs());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = model(60);
        let f = sine(&model);
        let shape = interval(0.65, 0.85);
        let g = shape_gradient(&shape, &f, &model, &Quadrature::default()).unwrap();
        let fd = fd_shape_oracle(&shape, &f, &model, 0.0, 0.2, 1e-3).unwrap();
        assert!((g.b[0] + fd[0]).abs() < 0.02 * fd[0].abs(), "{} vs {}", g.b[0], -fd[0]);
    }

    #[test]
    fn topo_oracle_rejects_points_near_interface() {
        let model = model(40);
        let f = sine(&model);
        let err = fd_topo_oracle(&interval(0.4, 0.6), &f, &model, &[0.41], 0.05, 0.0, 0.2);
        assert!(matches!(err, Err(Error::NearInterface(_))));
        let err = fd_topo_oracle(&interval(0.4, 0.6), &f, &model, &[0.2], 0.01, 0.0, 0.2);
        assert!(matches!(err, Err(Error::InvalidParameter { name: "eps", .. })));
    }

    #[test]
    fn pure_penalty_quotient() {
        let model = model(40);
        let f = DVector::zeros(39);
        let eps = 0.05;
        let q = fd_topo_oracle(&interval(0.4, 0.7), &f, &model, &[0.2], eps, 2.0, 0.2).unwrap();
        // exact: 2α(|ω|−c) + α|B|
        assert!((q - (2.0 * 2.0 * 0.1 + 2.0 * 2.0 * eps)).abs() < 1e-12);
    }

    #[test]
    fn insertion_and_removal_have_opposite_signs() {
        let model = model(200);
        let f = sine(&model);
        let shape = interval(0.4, 0.6);
        let field = topological_field(&shape, &f, &model, 0.0, 0.2, &Quadrature::default()).unwrap();
        let g_at = |x: f64| field.g[(x * 200.0).round() as usize];
        // g has the same sign at both points; insertion follows g, removal −g
        assert!(g_at(0.225) < 0.0 && g_at(0.43) < 0.0);
        let outside = fd_topo_oracle(&shape, &f, &model, &[0.225], 0.01, 0.0, 0.2).unwrap();
        let inside = fd_topo_oracle(&shape, &f, &model, &[0.43], 0.01, 0.0, 0.2).unwrap();
        assert!(outside < 0.0 && inside > 0.0);
    }

    #[test]
    fn topo_quotient_converges_to_field() {
        let model = model(400);
        let f = sine(&model);
        let shape = interval(0.3, 0.7);
        let field = topological_field(&shape, &f, &model, 0.0, 0.2, &Quadrature::default()).unwrap();
        let g = field.g[60];
        let err = |eps: f64| (fd_topo_oracle(&shape, &f, &model, &[0.15], eps, 0.0, 0.2).unwrap() - g).abs();
        let (e1, e2, e3) = (err(0.02), err(0.01), err(0.005));
        assert!(e2 < 0.6 * e1 && e3 < 0.6 * e2, "{e1} {e2} {e3}");
        assert!(e3 < 0.1 * g.abs());
    }

    #[test]
    fn trajectory_quadrature_agrees_with_gramian() {
        let model = model(30);
        let f = sine(&model);
        let cl = model.closed_loop(&interval(0.6, 0.8)).unwrap();
        let gram = adjoint_moment(&model, &cl, &f, &Quadrature::default()).unwrap();
        let run = |dt: f64| {
            let quad = Quadrature {
                horizon: 200.0,
                dt,
                method: QuadratureMethod::Trajectory,
            };
            adjoint_moment(&model, &cl, &f, &quad).unwrap()
        };
        let coarse = run(0.01);
        let fine = run(0.005);
        assert!((&gram - &coarse).amax() < 5e-3 * gram.amax());
        assert!((&fine - &coarse).amax() < 5e-3 * gram.amax());
        assert!((&gram - &fine).amax() < (&gram - &coarse).amax());
    }

    #[test]
    fn field_csv_layout() {
        let model = model(4);
        let f = DVector::zeros(3);
        let field = topological_field(&interval(0.2, 0.7), &f, &model, 0.0, 0.2, &Quadrature::default()).unwrap();
        let csv = field.to_csv();
        assert!(csv.starts_with("x,g\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
